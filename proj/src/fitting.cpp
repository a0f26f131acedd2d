/*
 * Copyright 2026 The dmogpm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "dmo/fitting.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "dmo/errors.hpp"
#include "dmo/metrics.hpp"

namespace dmo {

std::string to_string(ObservationType type) {
  switch (type) {
    case ObservationType::None: return "none";
    case ObservationType::Full: return "full";
    case ObservationType::Partial: return "partial";
    case ObservationType::Landmarks: return "landmarks";
  }
  return "none";
}

ObservationType parse_observation_type(const std::string& text) {
  if (text == "none") return ObservationType::None;
  if (text == "full") return ObservationType::Full;
  if (text == "partial") return ObservationType::Partial;
  if (text == "landmarks") return ObservationType::Landmarks;
  throw InvalidParams("unknown observation type '" + text + "'");
}

ObjectObservation ObjectObservation::full(PointSet points) {
  ObjectObservation o;
  o.type = ObservationType::Full;
  o.points = std::move(points);
  return o;
}

ObjectObservation ObjectObservation::partial(TriangleMesh fragment) {
  ObjectObservation o;
  o.type = ObservationType::Partial;
  o.fragment = std::move(fragment);
  return o;
}

ObjectObservation ObjectObservation::from_landmarks(std::vector<Landmark> landmarks) {
  ObjectObservation o;
  o.type = ObservationType::Landmarks;
  o.landmarks = std::move(landmarks);
  return o;
}

bool ObservationSpec::any_observed() const {
  for (const auto& o : objects)
    if (o.type != ObservationType::None) return true;
  return false;
}

void ObservationSpec::validate(const ReferenceJoint& reference) const {
  if (objects.size() != reference.object_count()) {
    throw InvalidParams("observation lists " + std::to_string(objects.size()) + " objects, model has " +
                        std::to_string(reference.object_count()));
  }
  for (std::size_t j = 0; j < objects.size(); ++j) {
    const auto& o = objects[j];
    const Eigen::Index n = reference.object(j).shape.cols();
    switch (o.type) {
      case ObservationType::None: break;
      case ObservationType::Full:
        if (o.points.cols() != n) throw InvalidParams("full observation is not in correspondence");
        if (!o.points.allFinite()) throw InvalidParams("non-finite observation");
        break;
      case ObservationType::Partial:
        if (o.fragment.vertex_count() == 0) throw EmptyMesh("empty partial observation");
        validate_mesh(o.fragment);
        break;
      case ObservationType::Landmarks:
        if (o.landmarks.empty()) throw InvalidParams("landmark observation without landmarks");
        for (const auto& l : o.landmarks)
          if (l.vertex < 0 || l.vertex >= n) throw InvalidParams("landmark vertex out of range");
        break;
    }
  }
}

void FitConfig::validate(Eigen::Index rank) const {
  if (burn_in < 0 || chain_length <= burn_in) throw InvalidParams("need chain_length > burn_in >= 0");
  if (!(sigma_obs > 0.0)) throw InvalidParams("sigma_obs must be positive");
  if (!(partial_cutoff > 0.0)) throw InvalidParams("partial cutoff must be positive");
  if (proposal_stddev.size() != 1 && static_cast<Eigen::Index>(proposal_stddev.size()) != rank) {
    throw InvalidParams("proposal stddev needs 1 or rank entries");
  }
  for (double s : proposal_stddev)
    if (!(s > 0.0)) throw InvalidParams("proposal stddevs must be positive");
  if (proposal_scales.empty()) throw InvalidParams("no proposal scales");
  for (double s : proposal_scales)
    if (!(s > 0.0)) throw InvalidParams("proposal scales must be positive");
}

double log_normal_3d(double d2, double sigma) {
  return -1.5 * std::log(2.0 * std::numbers::pi * sigma * sigma) - d2 / (2.0 * sigma * sigma);
}

double local_log_likelihood(const ObjectInstance& instance, const ObjectObservation& obs,
                            double sigma_obs, const Eigen::Matrix3Xi& faces, double partial_cutoff) {
  double sum = 0.0;
  switch (obs.type) {
    case ObservationType::None: break;
    case ObservationType::Full:
      for (Eigen::Index i = 0; i < obs.points.cols(); ++i)
        sum += log_normal_3d((instance.posed_shape.col(i) - obs.points.col(i)).squaredNorm(), sigma_obs);
      break;
    case ObservationType::Landmarks:
      for (const auto& l : obs.landmarks)
        sum += log_normal_3d((instance.posed_shape.col(l.vertex) - l.position).squaredNorm(), sigma_obs);
      break;
    case ObservationType::Partial: {
      const MeshIndex surface(TriangleMesh{instance.posed_shape, faces});
      const double cutoff2 = partial_cutoff * partial_cutoff;
      for (Eigen::Index i = 0; i < obs.fragment.vertex_count(); ++i) {
        const double d2 = surface.closest(obs.fragment.vertices.col(i)).squared_distance;
        if (d2 <= cutoff2) sum += log_normal_3d(d2, sigma_obs);
      }
      break;
    }
  }
  return sum;
}

double global_log_likelihood(const JointInstance& instance, const ObservationSpec& obs,
                             double sigma_obs, const ReferenceJoint& reference, double partial_cutoff) {
  double sum = 0.0;
  for (std::size_t j = 0; j < obs.objects.size(); ++j) {
    sum += local_log_likelihood(instance.objects.at(j), obs.objects[j], sigma_obs,
                                reference.object(j).faces, partial_cutoff);
  }
  return sum;
}

double log_prior(const Eigen::Ref<const Eigen::VectorXd>& alpha) { return -0.5 * alpha.squaredNorm(); }

double ChainState::global() const {
  double sum = 0.0;
  for (double l : local) sum += l;
  return sum;
}

ChainState make_state(const DmoGpModel& model, const ObservationSpec& obs, const FitConfig& config,
                      Eigen::VectorXd alpha) {
  ChainState s;
  s.instance = sample_joint(model, alpha);
  s.alpha = std::move(alpha);
  s.prior = log_prior(s.alpha);
  s.local.assign(obs.objects.size(), 0.0);
  for (std::size_t j = 0; j < obs.objects.size(); ++j) {
    if (obs.objects[j].type == ObservationType::None) continue;
    s.local[j] = local_log_likelihood(s.instance.objects[j], obs.objects[j], config.sigma_obs,
                                      model.reference().object(j).faces, config.partial_cutoff);
  }
  return s;
}

StepDecision metropolis_step(ChainState& state, const DmoGpModel& model, const ObservationSpec& obs,
                             const FitConfig& config, CounterRng& rng) {
  const Eigen::Index rank = state.alpha.size();
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t pick = std::min(
      config.proposal_scales.size() - 1,
      static_cast<std::size_t>(rng.uniform() * static_cast<double>(config.proposal_scales.size())));
  const double scale = config.proposal_scales[pick];
  Eigen::VectorXd proposal = state.alpha;
  for (Eigen::Index m = 0; m < rank; ++m) {
    const double sd = config.proposal_stddev.size() == 1 ? config.proposal_stddev[0]
                                                          : config.proposal_stddev[static_cast<std::size_t>(m)];
    proposal(m) += scale * sd * normal(rng);
  }

  StepDecision d;
  d.tested.assign(obs.objects.size(), 0);
  d.passed.assign(obs.objects.size(), 0);
  ChainState next = make_state(model, obs, config, std::move(proposal));

  // Log ratio of the previous filter's target, divided out under delayed
  // acceptance.
  double previous = 0.0;
  auto passes = [&](double target_ratio) {
    const double log_ratio = config.delayed_acceptance ? target_ratio - previous : target_ratio;
    previous = target_ratio;
    if (log_ratio >= 0.0) return true;
    return std::log(rng.uniform()) < log_ratio;
  };

  for (std::size_t j = 0; j < obs.objects.size(); ++j) {
    if (obs.objects[j].type == ObservationType::None) continue;
    d.tested[j] = 1;
    if (!passes((next.local[j] + next.prior) - (state.local[j] + state.prior))) {
      d.rejected_by_object = static_cast<int>(j);
      return d;
    }
    d.passed[j] = 1;
  }
  if (!passes(next.log_posterior() - state.log_posterior())) {
    d.global_rejected = true;
    return d;
  }
  d.accepted = true;
  state = std::move(next);
  return d;
}

FitResult fit(const DmoGpModel& model, const ObservationSpec& obs, const FitConfig& config) {
  const Eigen::Index rank = model.rank();
  config.validate(rank);
  obs.validate(model.reference());
  CounterRng rng(config.seed);

  ChainState state = make_state(model, obs, config, Eigen::VectorXd::Zero(rank));
  FitResult out;
  out.map_alpha = state.alpha;
  out.map_log_posterior = state.log_posterior();

  const std::size_t objects = obs.objects.size();
  std::vector<long> tested(objects, 0), passed(objects, 0);
  long reached_global = 0, accepted = 0;
  const int kept = config.chain_length - config.burn_in;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(rank), sum_sq = Eigen::VectorXd::Zero(rank);
  if (config.record_chain) {
    out.samples.resize(rank, kept);
    out.best_trace.reserve(static_cast<std::size_t>(config.chain_length));
  }

  for (int step = 0; step < config.chain_length; ++step) {
    const auto d = metropolis_step(state, model, obs, config, rng);
    for (std::size_t j = 0; j < objects; ++j) {
      tested[j] += d.tested[j];
      passed[j] += d.passed[j];
    }
    if (d.rejected_by_object < 0) ++reached_global;
    if (d.accepted) {
      ++accepted;
      const double lp = state.log_posterior();
      if (lp > out.map_log_posterior) {
        out.map_log_posterior = lp;
        out.map_alpha = state.alpha;
      }
    }
    if (step >= config.burn_in) {
      sum += state.alpha;
      sum_sq += state.alpha.cwiseProduct(state.alpha);
      if (config.record_chain) out.samples.col(step - config.burn_in) = state.alpha;
    }
    if (config.record_chain) out.best_trace.push_back(out.map_log_posterior);
  }

  out.posterior_mean = sum / kept;
  out.posterior_stddev =
      (sum_sq / kept - out.posterior_mean.cwiseProduct(out.posterior_mean)).cwiseMax(0.0).cwiseSqrt();
  for (std::size_t j = 0; j < objects; ++j) {
    out.local_acceptance.push_back(tested[j] > 0 ? static_cast<double>(passed[j]) / tested[j]
                                                 : std::numeric_limits<double>::quiet_NaN());
  }
  out.global_acceptance = reached_global > 0 ? static_cast<double>(accepted) / reached_global : 0.0;
  out.acceptance_rate = static_cast<double>(accepted) / config.chain_length;
  out.map_instance = sample_joint(model, out.map_alpha);
  return out;
}

std::vector<ObjectResiduals> evaluate_instance(const DmoGpModel& model, const JointInstance& instance,
                                               const MultiObjectExample& truth) {
  if (truth.objects.size() != instance.objects.size()) throw DomainMismatch("truth object count");
  std::vector<ObjectResiduals> out;
  for (std::size_t j = 0; j < truth.objects.size(); ++j) {
    const auto& faces = model.reference().object(j).faces;
    const TriangleMesh pred{instance.objects[j].posed_shape, faces};
    const TriangleMesh real{apply(truth.objects[j].pose, truth.objects[j].shape), faces};
    const MeshIndex pred_index(pred), real_index(real);
    ObjectResiduals r;
    r.rms = rms_distance(pred, real_index);
    r.hausdorff = hausdorff_distance(pred, pred_index, real, real_index);
    r.angle = pose_angle_error(instance.objects[j].pose, truth.objects[j].pose);
    out.push_back(r);
  }
  return out;
}

Prediction predict_missing(const DmoGpModel& model, const ObservationSpec& obs, const FitConfig& config,
                           const std::optional<MultiObjectExample>& truth) {
  if (!obs.any_observed()) throw InvalidParams("prediction needs at least one observed object");
  Prediction p;
  for (std::size_t j = 0; j < obs.objects.size(); ++j)
    if (obs.objects[j].type == ObservationType::None) p.missing.push_back(j);
  p.fit = fit(model, obs, config);
  if (truth) p.residuals = evaluate_instance(model, p.fit.map_instance, *truth);
  return p;
}

}  // namespace dmo
