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

// Dynamic multi-object shape-and-pose models.
//
// Each training example is a joint of N objects; object j has a shape in
// correspondence with the reference shape and a rigid pose placing that shape
// in the joint. Shapes enter the model as displacement fields on the reference
// vertices; poses enter as energy-displacement fields on a pose landmark
// subset, taken relative to the mean pose. Both live in millimetres, so one
// Gaussian process covers the concatenated field and its eigenfunctions mix
// shape and pose variation as the data dictates.

#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "dmo/geometry.hpp"
#include "dmo/gp.hpp"
#include "dmo/mesh.hpp"

namespace dmo {

struct ObjectExample {
  PointSet shape;  // in correspondence with the reference shape, object frame
  RigidTransform pose;
};

struct MultiObjectExample {
  std::vector<ObjectExample> objects;
};

struct ReferenceObject {
  PointSet shape;
  /// Pose landmarks, as indices into `shape`.
  std::vector<Eigen::Index> pose_indices;
  /// Optional triangle list for mesh output and surface distances.
  Eigen::Matrix3Xi faces;

  PointSet pose_points() const { return gather(shape, pose_indices); }
  TriangleMesh mesh(const PointSet& vertices) const { return {vertices, faces}; }
};

/// Reference shapes and pose landmarks. Object ids are 1-based positions.
class ReferenceJoint {
 public:
  ReferenceJoint() = default;
  /// Throws InvalidParams for an empty object list, out-of-range or duplicate
  /// pose indices, and DegenerateConfiguration for collinear pose landmarks.
  explicit ReferenceJoint(std::vector<ReferenceObject> objects);

  std::size_t object_count() const { return objects_.size(); }
  const ReferenceObject& object(std::size_t j) const { return objects_.at(j); }
  const std::vector<ReferenceObject>& objects() const { return objects_; }

 private:
  std::vector<ReferenceObject> objects_;
};

/// Reference joint built from one example: its shapes, `pose_points`
/// farthest-point landmarks per object and the given triangle lists.
ReferenceJoint make_reference(const MultiObjectExample& example, Eigen::Index pose_points,
                              const std::vector<Eigen::Matrix3Xi>& faces = {});

/// Index of the example whose shapes have the smallest summed squared distance
/// to all others (medoid); ties go to the lowest index.
std::size_t select_reference(std::span<const MultiObjectExample> examples);

enum class PoseRepresentation { Edr, Sr };

std::string to_string(PoseRepresentation repr);
PoseRepresentation parse_pose_representation(const std::string& text);

struct PoseEncoding {
  PoseRepresentation representation = PoseRepresentation::Edr;
  /// SR norm weight s on the rotation part (rad^2 -> mm^2).
  double sr_scale_weight = 1.0;
  /// Per-class rescaling hook applied to the normalized fields (1 = unweighted).
  double shape_weight = 1.0;
  double pose_weight = 1.0;
};

/// Domain with blocks (1,Shape), (1,Pose), (2,Shape), ... . EDR pose blocks
/// hold the pose landmarks; SR pose blocks hold two placeholder points at the
/// origin that carry (sqrt(s) r, t).
DomainPtr make_domain(const ReferenceJoint& reference, const PoseEncoding& encoding = {});

struct JointMean {
  /// Shape blocks: mean shape displacement; pose blocks: pose field of the
  /// mean pose (EDR field of h_bar for EDR, its SR vector for SR).
  DeformationField field;
  std::vector<RigidTransform> poses;
};

/// Throws InvalidParams for no examples and DomainMismatch when an example
/// does not match the reference.
JointMean joint_mean(std::span<const MultiObjectExample> examples, const ReferenceJoint& reference,
                     const PoseEncoding& encoding = {});

/// One field per example: shape blocks hold centered shape displacements,
/// pose blocks hold the pose relative to the mean pose (log at h_bar).
std::vector<DeformationField> normalize_features(std::span<const MultiObjectExample> examples,
                                                 const ReferenceJoint& reference,
                                                 const PoseEncoding& encoding = {});

struct ObjectInstance {
  PointSet displacement;  // shape field on the reference vertices
  PointSet shape;         // reference + displacement, object frame
  RigidTransform pose;
  PointSet posed_shape;   // pose applied to shape
};

struct JointInstance {
  std::vector<ObjectInstance> objects;
  Eigen::VectorXd alpha;
};

class DmoGpModel {
 public:
  DmoGpModel() = default;
  /// `full_mean` spans make_domain(reference, encoding); `gp` may cover any
  /// subset of its blocks (class-specific / marginal models). Blocks outside
  /// the gp stay at `full_mean`.
  DmoGpModel(ReferenceJoint reference, PoseEncoding encoding, DomainPtr full_domain,
             Eigen::VectorXd full_mean, std::vector<RigidTransform> base_poses, LowRankGP gp,
             std::size_t example_count);

  const ReferenceJoint& reference() const { return reference_; }
  const PoseEncoding& encoding() const { return encoding_; }
  const DomainPtr& full_domain() const { return full_domain_; }
  const Eigen::VectorXd& full_mean() const { return full_mean_; }
  /// Linearization points h_bar of the pose encoding.
  const std::vector<RigidTransform>& base_poses() const { return base_poses_; }
  /// Poses of the alpha = 0 instance.
  std::vector<RigidTransform> mean_poses() const;
  const LowRankGP& gp() const { return gp_; }
  Eigen::Index rank() const { return gp_.rank(); }
  std::size_t object_count() const { return reference_.object_count(); }
  std::size_t example_count() const { return example_count_; }
  /// Rows of the full field covered by the gp, in gp order.
  const std::vector<Eigen::Index>& gp_rows() const { return gp_rows_; }

  /// Full-domain field for coefficients alpha (zero-padded).
  Eigen::VectorXd field(const Eigen::Ref<const Eigen::VectorXd>& alpha) const;
  /// Shapes and poses encoded by a full-domain field.
  JointInstance decode(const Eigen::Ref<const Eigen::VectorXd>& field) const;
  /// Full-domain field of a joint (inverse of decode up to pose projection).
  Eigen::VectorXd encode(const MultiObjectExample& example) const;

 private:
  ReferenceJoint reference_;
  PoseEncoding encoding_;
  DomainPtr full_domain_;
  Eigen::VectorXd full_mean_;
  std::vector<RigidTransform> base_poses_;
  LowRankGP gp_;
  std::size_t example_count_ = 0;
  std::vector<Eigen::Index> gp_rows_;
};

struct ModelBuildOptions {
  Eigen::Index rank = 1000;  // capped at n - 1 by the data
  PoseEncoding encoding;
  LowRankOptions low_rank;
};

struct ModelBuildResult {
  DmoGpModel model;
  bool rank_deficient = false;
};

/// Joint model over the normalized fields of >= 2 examples.
ModelBuildResult build_model(std::span<const MultiObjectExample> examples,
                             const ReferenceJoint& reference, const ModelBuildOptions& options = {});

/// Instance for coefficients alpha (shorter alpha is zero-padded).
JointInstance sample_joint(const DmoGpModel& model, const Eigen::Ref<const Eigen::VectorXd>& alpha);

/// Model coefficients best reproducing an example (least squares in the
/// eigenbasis).
Eigen::VectorXd project_example(const DmoGpModel& model, const MultiObjectExample& example);

/// Marginal over the blocks matched by `selector`; the rest is frozen at the
/// mean.
DmoGpModel marginal_model(const DmoGpModel& model, const BlockSelector& selector);
/// Shape-only or pose-only model.
DmoGpModel class_specific(const DmoGpModel& model, FeatureClass keep);

struct BlockEnergy {
  int object_id = 0;
  FeatureClass feature = FeatureClass::Shape;
  double fraction = 0.0;
};

struct PcRow {
  Eigen::Index index = 0;  // 1-based
  double eigenvalue = 0.0;
  double percent = 0.0;  // of total model variance
  double shape_fraction = 0.0;
  double pose_fraction = 0.0;
  std::vector<BlockEnergy> blocks;
};

std::vector<PcRow> pc_report(const DmoGpModel& model);

}  // namespace dmo
