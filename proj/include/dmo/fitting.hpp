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

// Posterior shape-and-pose prediction by Metropolis-Hastings sampling of the
// model coefficients. Each step proposes a Gaussian random walk and passes it
// through a sequence of acceptance filters: one per observed object (its own
// likelihood with the prior), then one on the joint likelihood.

#pragma once

#include <optional>
#include <vector>

#include "dmo/mesh.hpp"
#include "dmo/model.hpp"
#include "dmo/rng.hpp"

namespace dmo {

enum class ObservationType { None, Full, Partial, Landmarks };

std::string to_string(ObservationType type);
ObservationType parse_observation_type(const std::string& text);

struct Landmark {
  Eigen::Index vertex = 0;  // reference vertex index
  Vec3 position = Vec3::Zero();
};

/// Observation of one object, in the joint's coordinate frame.
struct ObjectObservation {
  ObservationType type = ObservationType::None;
  /// Full: one point per reference vertex, in correspondence.
  PointSet points;
  /// Partial: a surface fragment without correspondence.
  TriangleMesh fragment;
  /// Landmarks: reference vertex index and observed position.
  std::vector<Landmark> landmarks;

  static ObjectObservation none() { return {}; }
  static ObjectObservation full(PointSet points);
  static ObjectObservation partial(TriangleMesh fragment);
  static ObjectObservation from_landmarks(std::vector<Landmark> landmarks);
};

struct ObservationSpec {
  std::vector<ObjectObservation> objects;

  bool any_observed() const;
  /// Throws InvalidParams when the object count or point counts do not match
  /// the reference, or a landmark index is out of range.
  void validate(const ReferenceJoint& reference) const;
};

struct FitConfig {
  int chain_length = 20000;
  int burn_in = 2000;
  /// Random-walk stddev per coefficient; a single value is broadcast.
  std::vector<double> proposal_stddev{0.1};
  /// Each step multiplies the proposal by one of these, chosen uniformly
  /// (keeps the proposal symmetric). {1} is a plain random walk.
  std::vector<double> proposal_scales{1.0};
  double sigma_obs = 1.0;        // mm
  double partial_cutoff = 10.0;  // mm; farther partial matches are ignored
  std::uint64_t seed = 0;
  /// Correct each filter for the previous one (delayed acceptance) so that
  /// the chain targets the joint posterior exactly. Off: every filter uses
  /// its plain posterior ratio.
  bool delayed_acceptance = false;
  /// Keep the post-burn-in coefficient samples and the running-best trace.
  bool record_chain = false;

  /// Throws InvalidParams.
  void validate(Eigen::Index rank) const;
};

/// log of an isotropic 3D Gaussian density at distance^2 `d2`.
double log_normal_3d(double d2, double sigma);

/// Log likelihood of one object's observation given its instance. `faces`
/// is the reference topology used for partial matching (point cloud if empty).
double local_log_likelihood(const ObjectInstance& instance, const ObjectObservation& obs,
                            double sigma_obs, const Eigen::Matrix3Xi& faces = {},
                            double partial_cutoff = 10.0);

/// Sum of the local log likelihoods over all observed objects.
double global_log_likelihood(const JointInstance& instance, const ObservationSpec& obs,
                             double sigma_obs, const ReferenceJoint& reference,
                             double partial_cutoff = 10.0);

/// -|alpha|^2 / 2.
double log_prior(const Eigen::Ref<const Eigen::VectorXd>& alpha);

/// Cached chain state.
struct ChainState {
  Eigen::VectorXd alpha;
  JointInstance instance;
  std::vector<double> local;  // per object; 0 for unobserved
  double prior = 0.0;

  double global() const;
  double log_posterior() const { return global() + prior; }
};

ChainState make_state(const DmoGpModel& model, const ObservationSpec& obs, const FitConfig& config,
                      Eigen::VectorXd alpha);

struct StepDecision {
  bool accepted = false;
  /// Object whose local filter rejected, or -1; `global_rejected` for the
  /// final filter.
  int rejected_by_object = -1;
  bool global_rejected = false;
  /// Per-object filters that were evaluated / passed.
  std::vector<int> tested;
  std::vector<int> passed;
};

/// One proposal through the filter sequence; `state` changes only when every
/// filter accepts.
StepDecision metropolis_step(ChainState& state, const DmoGpModel& model, const ObservationSpec& obs,
                             const FitConfig& config, CounterRng& rng);

struct FitResult {
  Eigen::VectorXd map_alpha;
  double map_log_posterior = 0.0;
  JointInstance map_instance;
  Eigen::VectorXd posterior_mean;
  Eigen::VectorXd posterior_stddev;
  /// Pass rate of each object's local filter (NaN if never tested).
  std::vector<double> local_acceptance;
  /// Pass rate of the global filter among proposals that reached it.
  double global_acceptance = 0.0;
  /// Fraction of proposals that became the new state.
  double acceptance_rate = 0.0;
  /// Recorded only with record_chain.
  Eigen::MatrixXd samples;  // rank x (chain_length - burn_in)
  std::vector<double> best_trace;
};

/// Runs the chain from alpha = 0. Deterministic for a given seed.
FitResult fit(const DmoGpModel& model, const ObservationSpec& obs, const FitConfig& config);

struct ObjectResiduals {
  double rms = 0.0;        // predicted -> truth, mm
  double hausdorff = 0.0;  // symmetric, mm
  double angle = 0.0;      // rad
};

/// Posed-surface residuals of each object of `instance` against the truth
/// joint (shapes in the object frame, posed by the truth poses).
std::vector<ObjectResiduals> evaluate_instance(const DmoGpModel& model, const JointInstance& instance,
                                               const MultiObjectExample& truth);

struct Prediction {
  FitResult fit;
  /// Objects without an observation.
  std::vector<std::size_t> missing;
  /// Filled when a ground truth is supplied.
  std::vector<ObjectResiduals> residuals;
};

/// Fits with at least one observed object and reports the unobserved ones.
Prediction predict_missing(const DmoGpModel& model, const ObservationSpec& obs, const FitConfig& config,
                           const std::optional<MultiObjectExample>& truth = std::nullopt);

}  // namespace dmo
