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

// Rigid-transform algebra on SE(3), least-squares rigid alignment, and the two
// competing pose encodings used by the shape-and-pose models:
//
//  * EDR (energy displacement): a transform h is represented by the vector
//    field h(x) - x sampled on a fixed pose domain. Its squared norm behaves
//    like the kinetic energy needed to move the object, so it accounts for
//    object extent.
//  * SR (standard representation): axis-angle rotation plus translation, with
//    norm t.t + s r.r.

#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace dmo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Ordered 3D points stored as columns (mm). Index i corresponds across
/// datasets.
using PointSet = Eigen::Matrix3Xd;

/// Proper rigid motion x -> R x + t.
class RigidTransform {
 public:
  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

  /// Throws InvalidParams unless `rotation` is orthonormal with det +1
  /// (1e-9 per entry).
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform translation(const Vec3& t);
  /// Rotation by `angle` (rad) about the line through `center` along `axis`.
  static RigidTransform rotation_about(const Vec3& axis, double angle,
                                       const Vec3& center = Vec3::Zero());

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 operator()(const Vec3& p) const { return rotation_ * p + translation_; }

  /// (a * b)(x) = a(b(x)).
  friend RigidTransform operator*(const RigidTransform& a,
                                  const RigidTransform& b);

  RigidTransform inverse() const;

  /// Rotation angle in [0, pi].
  double angle() const;

  bool operator==(const RigidTransform& other) const = default;

 private:
  struct Unchecked {};
  RigidTransform(const Mat3& r, const Vec3& t, Unchecked)
      : rotation_(r), translation_(t) {}

  Mat3 rotation_;
  Vec3 translation_;
};

/// Returns a copy of `points` with `h` applied to every column.
PointSet apply(const RigidTransform& h, const PointSet& points);

/// Least-squares rigid motion taking `source` onto `target`
/// (centroid subtraction + SVD of the cross-covariance, no scaling, with
/// reflection correction). Throws DegenerateConfiguration for fewer than 3
/// points or a cross-covariance of rank < 2.
RigidTransform kabsch_align(const PointSet& source, const PointSet& target);

/// Throws DegenerateConfiguration unless `domain` has >= 3 non-collinear
/// points.
void require_non_degenerate(const PointSet& domain);

/// h(x) - x on each pose-domain point.
struct EnergyDisplacement {
  PointSet displacements;

  double squared_norm() const { return displacements.squaredNorm(); }
};

EnergyDisplacement edr_log(const RigidTransform& h, const PointSet& pose_domain);

/// Rigid projection of a displacement field: the motion that best maps the
/// pose domain onto pose_domain + d. Exact inverse of edr_log.
RigidTransform edr_exp(const EnergyDisplacement& d, const PointSet& pose_domain);

/// Log map at a base point. Uses log[base^-1 * h] so that
/// edr_exp_at(base, edr_log_at(base, h)) == h.
EnergyDisplacement edr_log_at(const RigidTransform& base, const RigidTransform& h,
                              const PointSet& pose_domain);

/// base * edr_exp(d).
RigidTransform edr_exp_at(const RigidTransform& base, const EnergyDisplacement& d,
                          const PointSet& pose_domain);

/// Squared EDR distance (mm^2): sum of squared displacements of
/// edr_log_at(h1, h2).
double edr_distance(const RigidTransform& h1, const RigidTransform& h2,
                    const PointSet& pose_domain);

/// Mean rigid motion: edr_exp of the arithmetic mean of the EDR fields.
/// No iterative Frechet refinement. Throws InvalidParams on empty input.
RigidTransform mean_rigid(std::span<const RigidTransform> hs,
                          const PointSet& pose_domain);

/// Axis-angle rotation r (rad), translation t (mm) and norm weight s.
struct SrVector {
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();
  double scale_weight = 1.0;
};

/// Principal-branch axis-angle parameters of h. Throws BranchCut when the
/// rotation angle is within 1e-9 of pi and InvalidParams for s <= 0.
SrVector sr_log(const RigidTransform& h, double scale_weight = 1.0);
RigidTransform sr_exp(const SrVector& v);
double sr_norm(const SrVector& v);

/// Frechet mean under the SR metric by fixed-point iteration in the tangent
/// space. Used only by the SR baseline models.
RigidTransform sr_mean(std::span<const RigidTransform> hs, double scale_weight = 1.0,
                       int max_iterations = 100);

/// Axis-angle vector of a rotation matrix (principal branch, angle <= pi).
Vec3 rotation_log(const Mat3& r);
Mat3 rotation_exp(const Vec3& axis_angle);

/// Greedy farthest-point subsample of `points` starting at `first`;
/// returns `count` distinct indices (all indices when count >= size).
std::vector<Eigen::Index> farthest_point_subsample(const PointSet& points,
                                                   Eigen::Index count,
                                                   Eigen::Index first = 0);

/// Gathers columns of `points` by index.
PointSet gather(const PointSet& points, std::span<const Eigen::Index> indices);

}  // namespace dmo
