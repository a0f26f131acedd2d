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

#include "dmo/model.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "dmo/errors.hpp"

namespace dmo {

ReferenceJoint::ReferenceJoint(std::vector<ReferenceObject> objects) : objects_(std::move(objects)) {
  if (objects_.empty()) throw InvalidParams("reference joint needs at least one object");
  for (const auto& o : objects_) {
    if (o.shape.cols() < 3) throw InvalidParams("reference shape needs at least 3 points");
    std::set<Eigen::Index> seen;
    for (auto i : o.pose_indices) {
      if (i < 0 || i >= o.shape.cols()) throw InvalidParams("pose landmark index out of range");
      if (!seen.insert(i).second) throw InvalidParams("duplicate pose landmark index");
    }
    require_non_degenerate(o.pose_points());
    if (o.faces.size() > 0 && (o.faces.minCoeff() < 0 || o.faces.maxCoeff() >= o.shape.cols())) {
      throw InvalidParams("reference face references a missing vertex");
    }
  }
}

ReferenceJoint make_reference(const MultiObjectExample& example, Eigen::Index pose_points,
                              const std::vector<Eigen::Matrix3Xi>& faces) {
  if (!faces.empty() && faces.size() != example.objects.size()) {
    throw InvalidParams("one face list per object expected");
  }
  std::vector<ReferenceObject> objects;
  for (std::size_t j = 0; j < example.objects.size(); ++j) {
    ReferenceObject o;
    o.shape = example.objects[j].shape;
    o.pose_indices = farthest_point_subsample(o.shape, pose_points);
    if (!faces.empty()) o.faces = faces[j];
    objects.push_back(std::move(o));
  }
  return ReferenceJoint(std::move(objects));
}

std::size_t select_reference(std::span<const MultiObjectExample> examples) {
  if (examples.empty()) throw InvalidParams("no examples to choose a reference from");
  const std::size_t n = examples.size();
  std::vector<double> total(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      double d = 0.0;
      const auto& ea = examples[a].objects;
      const auto& eb = examples[b].objects;
      if (ea.size() != eb.size()) throw DomainMismatch("examples have different object counts");
      for (std::size_t j = 0; j < ea.size(); ++j) {
        if (ea[j].shape.cols() != eb[j].shape.cols()) throw DomainMismatch("shape sizes differ");
        d += (ea[j].shape - eb[j].shape).squaredNorm();
      }
      total[a] += d;
      total[b] += d;
    }
  }
  return static_cast<std::size_t>(std::min_element(total.begin(), total.end()) - total.begin());
}

std::string to_string(PoseRepresentation repr) {
  return repr == PoseRepresentation::Edr ? "edr" : "sr";
}

PoseRepresentation parse_pose_representation(const std::string& text) {
  if (text == "edr") return PoseRepresentation::Edr;
  if (text == "sr") return PoseRepresentation::Sr;
  throw InvalidParams("unknown pose representation '" + text + "'");
}

DomainPtr make_domain(const ReferenceJoint& reference, const PoseEncoding& encoding) {
  std::vector<DomainBlock> blocks;
  for (std::size_t j = 0; j < reference.object_count(); ++j) {
    const int id = static_cast<int>(j) + 1;
    const auto& o = reference.object(j);
    blocks.push_back({id, FeatureClass::Shape, o.shape});
    blocks.push_back({id, FeatureClass::Pose,
                      encoding.representation == PoseRepresentation::Edr ? o.pose_points()
                                                                          : PointSet::Zero(3, 2)});
  }
  return std::make_shared<const LabeledDomain>(std::move(blocks));
}

namespace {

void check_examples(std::span<const MultiObjectExample> examples, const ReferenceJoint& reference) {
  if (examples.empty()) throw InvalidParams("no training examples");
  for (const auto& e : examples) {
    if (e.objects.size() != reference.object_count()) {
      throw DomainMismatch("example object count differs from the reference");
    }
    for (std::size_t j = 0; j < e.objects.size(); ++j) {
      if (e.objects[j].shape.cols() != reference.object(j).shape.cols()) {
        throw DomainMismatch("example shape is not in correspondence with the reference");
      }
      if (!e.objects[j].shape.allFinite()) throw InvalidParams("non-finite example shape");
    }
  }
}

// Pose relative to `base`, as the pose-block values (unweighted).
PointSet encode_pose(const RigidTransform& base, const RigidTransform& h,
                     const ReferenceObject& object, const PoseEncoding& encoding) {
  if (encoding.representation == PoseRepresentation::Edr) {
    return edr_log_at(base, h, object.pose_points()).displacements;
  }
  const SrVector v = sr_log(base.inverse() * h, encoding.sr_scale_weight);
  PointSet out(3, 2);
  out.col(0) = std::sqrt(encoding.sr_scale_weight) * v.rotation;
  out.col(1) = v.translation;
  return out;
}

RigidTransform decode_pose(const RigidTransform& base, const PointSet& values,
                           const ReferenceObject& object, const PoseEncoding& encoding) {
  if (encoding.representation == PoseRepresentation::Edr) {
    return edr_exp_at(base, EnergyDisplacement{values}, object.pose_points());
  }
  SrVector v;
  v.rotation = values.col(0) / std::sqrt(encoding.sr_scale_weight);
  v.translation = values.col(1);
  v.scale_weight = encoding.sr_scale_weight;
  return base * sr_exp(v);
}

void write_block(const LabeledDomain& domain, std::size_t b, const PointSet& values,
                 Eigen::VectorXd& out) {
  out.segment(3 * domain.point_offset(b), values.size()) =
      Eigen::Map<const Eigen::VectorXd>(values.data(), values.size());
}

PointSet read_block(const LabeledDomain& domain, std::size_t b, const Eigen::VectorXd& v) {
  return Eigen::Map<const PointSet>(v.data() + 3 * domain.point_offset(b), 3, domain.block_size(b));
}

struct Normalized {
  DomainPtr domain;
  Eigen::VectorXd shape_mean;  // unweighted mean displacement, full layout (pose rows zero)
  std::vector<RigidTransform> base_poses;
  std::vector<DeformationField> fields;
};

Normalized normalize(std::span<const MultiObjectExample> examples, const ReferenceJoint& reference,
                     const PoseEncoding& encoding) {
  check_examples(examples, reference);
  if (!(encoding.shape_weight > 0.0) || !(encoding.pose_weight > 0.0)) {
    throw InvalidParams("class weights must be positive");
  }
  Normalized out;
  out.domain = make_domain(reference, encoding);
  const auto& domain = *out.domain;
  const double n = static_cast<double>(examples.size());
  out.shape_mean = Eigen::VectorXd::Zero(domain.dimension());

  for (std::size_t j = 0; j < reference.object_count(); ++j) {
    const auto& ref = reference.object(j);
    const int id = static_cast<int>(j) + 1;
    PointSet sum = PointSet::Zero(3, ref.shape.cols());
    std::vector<RigidTransform> poses;
    for (const auto& e : examples) {
      sum += e.objects[j].shape - ref.shape;
      poses.push_back(e.objects[j].pose);
    }
    write_block(domain, *domain.find(id, FeatureClass::Shape), sum / n, out.shape_mean);
    out.base_poses.push_back(encoding.representation == PoseRepresentation::Edr
                                 ? mean_rigid(poses, ref.pose_points())
                                 : sr_mean(poses, encoding.sr_scale_weight));
  }

  for (const auto& e : examples) {
    Eigen::VectorXd v(domain.dimension());
    for (std::size_t j = 0; j < reference.object_count(); ++j) {
      const auto& ref = reference.object(j);
      const int id = static_cast<int>(j) + 1;
      const auto sb = *domain.find(id, FeatureClass::Shape);
      const PointSet centered = e.objects[j].shape - ref.shape - read_block(domain, sb, out.shape_mean);
      write_block(domain, sb, encoding.shape_weight * centered, v);
      write_block(domain, *domain.find(id, FeatureClass::Pose),
                  encoding.pose_weight * encode_pose(out.base_poses[j], e.objects[j].pose, ref, encoding),
                  v);
    }
    out.fields.emplace_back(out.domain, std::move(v));
  }
  return out;
}

}  // namespace

JointMean joint_mean(std::span<const MultiObjectExample> examples, const ReferenceJoint& reference,
                     const PoseEncoding& encoding) {
  auto norm = normalize(examples, reference, encoding);
  Eigen::VectorXd v = norm.shape_mean;
  if (encoding.representation == PoseRepresentation::Edr) {
    for (std::size_t j = 0; j < reference.object_count(); ++j) {
      const auto& ref = reference.object(j);
      write_block(*norm.domain, *norm.domain->find(static_cast<int>(j) + 1, FeatureClass::Pose),
                  edr_log(norm.base_poses[j], ref.pose_points()).displacements, v);
    }
  }
  // SR pose blocks stay at the tangent origin: absolute SR parameters of the
  // mean may sit on the branch cut.
  return {DeformationField(norm.domain, std::move(v)), std::move(norm.base_poses)};
}

std::vector<DeformationField> normalize_features(std::span<const MultiObjectExample> examples,
                                                 const ReferenceJoint& reference,
                                                 const PoseEncoding& encoding) {
  return normalize(examples, reference, encoding).fields;
}

// ---------------------------------------------------------------------------
// DmoGpModel

DmoGpModel::DmoGpModel(ReferenceJoint reference, PoseEncoding encoding, DomainPtr full_domain,
                       Eigen::VectorXd full_mean, std::vector<RigidTransform> base_poses,
                       LowRankGP gp, std::size_t example_count)
    : reference_(std::move(reference)),
      encoding_(encoding),
      full_domain_(std::move(full_domain)),
      full_mean_(std::move(full_mean)),
      base_poses_(std::move(base_poses)),
      gp_(std::move(gp)),
      example_count_(example_count) {
  if (!full_domain_ || full_mean_.size() != full_domain_->dimension()) {
    throw DomainMismatch("model mean does not match its domain");
  }
  if (base_poses_.size() != reference_.object_count()) {
    throw InvalidParams("one base pose per object expected");
  }
  for (const auto& block : gp_.domain().blocks()) {
    const auto b = full_domain_->find(block.object_id, block.feature);
    if (!b || full_domain_->block_size(*b) != block.points.cols()) {
      throw DomainMismatch("gp block is not part of the model domain");
    }
    const Eigen::Index begin = 3 * full_domain_->point_offset(*b);
    for (Eigen::Index k = 0; k < 3 * block.points.cols(); ++k) gp_rows_.push_back(begin + k);
  }
}

Eigen::VectorXd DmoGpModel::field(const Eigen::Ref<const Eigen::VectorXd>& alpha) const {
  Eigen::VectorXd out = full_mean_;
  const Eigen::VectorXd part = gp_.sample_values(alpha);
  for (std::size_t k = 0; k < gp_rows_.size(); ++k) out(gp_rows_[k]) = part(static_cast<Eigen::Index>(k));
  return out;
}

JointInstance DmoGpModel::decode(const Eigen::Ref<const Eigen::VectorXd>& values) const {
  if (values.size() != full_domain_->dimension()) throw DomainMismatch("field length");
  const Eigen::VectorXd v = values;
  JointInstance out;
  for (std::size_t j = 0; j < reference_.object_count(); ++j) {
    const auto& ref = reference_.object(j);
    const int id = static_cast<int>(j) + 1;
    ObjectInstance o;
    o.displacement = read_block(*full_domain_, *full_domain_->find(id, FeatureClass::Shape), v) /
                     encoding_.shape_weight;
    o.shape = ref.shape + o.displacement;
    const PointSet pose_values =
        read_block(*full_domain_, *full_domain_->find(id, FeatureClass::Pose), v) / encoding_.pose_weight;
    o.pose = decode_pose(base_poses_[j], pose_values, ref, encoding_);
    o.posed_shape = apply(o.pose, o.shape);
    out.objects.push_back(std::move(o));
  }
  return out;
}

Eigen::VectorXd DmoGpModel::encode(const MultiObjectExample& example) const {
  check_examples(std::span(&example, 1), reference_);
  Eigen::VectorXd v(full_domain_->dimension());
  for (std::size_t j = 0; j < reference_.object_count(); ++j) {
    const auto& ref = reference_.object(j);
    const int id = static_cast<int>(j) + 1;
    write_block(*full_domain_, *full_domain_->find(id, FeatureClass::Shape),
                encoding_.shape_weight * (example.objects[j].shape - ref.shape), v);
    write_block(*full_domain_, *full_domain_->find(id, FeatureClass::Pose),
                encoding_.pose_weight * encode_pose(base_poses_[j], example.objects[j].pose, ref, encoding_),
                v);
  }
  return v;
}

std::vector<RigidTransform> DmoGpModel::mean_poses() const {
  std::vector<RigidTransform> out;
  for (auto& o : decode(full_mean_).objects) out.push_back(o.pose);
  return out;
}

ModelBuildResult build_model(std::span<const MultiObjectExample> examples,
                             const ReferenceJoint& reference, const ModelBuildOptions& options) {
  if (examples.size() < 2) throw InvalidParams("a model needs at least two examples");
  auto norm = normalize(examples, reference, options.encoding);
  // Mean of the model: absolute mean shape displacement plus the tangent mean
  // of the relative poses (which is not zero for curved pose sets).
  Eigen::VectorXd mean = options.encoding.shape_weight * norm.shape_mean;
  const auto tangent = empirical_mean(norm.fields);
  for (std::size_t b = 0; b < norm.domain->block_count(); ++b) {
    if (norm.domain->block(b).feature != FeatureClass::Pose) continue;
    write_block(*norm.domain, b, read_block(*norm.domain, b, tangent.values()), mean);
  }
  const auto n = static_cast<Eigen::Index>(examples.size());
  const Eigen::Index rank = std::min(options.rank, n - 1);
  auto built = build_low_rank(KernelSpec{SampleKernel{std::move(norm.fields)}},
                              DeformationField(norm.domain, mean), rank, options.low_rank);
  ModelBuildResult out;
  out.rank_deficient = built.rank_deficient || rank < options.rank;
  out.model = DmoGpModel(reference, options.encoding, norm.domain, std::move(mean),
                         std::move(norm.base_poses), std::move(built.gp), examples.size());
  return out;
}

JointInstance sample_joint(const DmoGpModel& model, const Eigen::Ref<const Eigen::VectorXd>& alpha) {
  auto out = model.decode(model.field(alpha));
  out.alpha = Eigen::VectorXd::Zero(model.rank());
  out.alpha.head(alpha.size()) = alpha;
  return out;
}

Eigen::VectorXd project_example(const DmoGpModel& model, const MultiObjectExample& example) {
  const Eigen::VectorXd full = model.encode(example);
  Eigen::VectorXd part(static_cast<Eigen::Index>(model.gp_rows().size()));
  for (std::size_t k = 0; k < model.gp_rows().size(); ++k)
    part(static_cast<Eigen::Index>(k)) = full(model.gp_rows()[k]);
  return project(model.gp(), part);
}

DmoGpModel marginal_model(const DmoGpModel& model, const BlockSelector& selector) {
  return DmoGpModel(model.reference(), model.encoding(), model.full_domain(), model.full_mean(),
                    model.base_poses(), marginalize(model.gp(), selector), model.example_count());
}

DmoGpModel class_specific(const DmoGpModel& model, FeatureClass keep) {
  return marginal_model(model, BlockSelector{std::nullopt, keep});
}

std::vector<PcRow> pc_report(const DmoGpModel& model) {
  const auto& gp = model.gp();
  const double total = gp.eigenvalues().sum();
  std::vector<PcRow> rows;
  for (Eigen::Index m = 0; m < gp.rank(); ++m) {
    PcRow row;
    row.index = m + 1;
    row.eigenvalue = gp.eigenvalues()(m);
    row.percent = 100.0 * row.eigenvalue / total;
    const auto phi = gp.basis().col(m);
    const double norm2 = phi.squaredNorm();
    for (std::size_t b = 0; b < gp.domain().block_count(); ++b) {
      const auto& block = gp.domain().block(b);
      const double e =
          phi.segment(3 * gp.domain().point_offset(b), 3 * gp.domain().block_size(b)).squaredNorm() / norm2;
      row.blocks.push_back({block.object_id, block.feature, e});
      (block.feature == FeatureClass::Shape ? row.shape_fraction : row.pose_fraction) += e;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace dmo
