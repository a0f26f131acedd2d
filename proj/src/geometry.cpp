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

#include "dmo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/SVD>

#include "dmo/errors.hpp"

namespace dmo {

namespace {

constexpr double kOrthonormalTol = 1e-9;
constexpr double kBranchCutTol = 1e-9;
// Relative singular-value floor for a usable cross-covariance.
constexpr double kRankTol = 1e-10;

}  // namespace

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw InvalidParams("rigid transform has non-finite entries");
  }
  const double ortho_err =
      (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho_err > kOrthonormalTol ||
      std::abs(rotation.determinant() - 1.0) > kOrthonormalTol) {
    throw InvalidParams("rotation is not a proper orthonormal matrix");
  }
}

RigidTransform RigidTransform::translation(const Vec3& t) {
  return RigidTransform(Mat3::Identity(), t, Unchecked{});
}

RigidTransform RigidTransform::rotation_about(const Vec3& axis, double angle,
                                              const Vec3& center) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw InvalidParams("rotation axis must be non-zero");
  const Mat3 r = Eigen::AngleAxisd(angle, axis / n).toRotationMatrix();
  return RigidTransform(r, center - r * center, Unchecked{});
}

RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  return RigidTransform(a.rotation_ * b.rotation_,
                        a.rotation_ * b.translation_ + a.translation_,
                        RigidTransform::Unchecked{});
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return RigidTransform(rt, -(rt * translation_), Unchecked{});
}

double RigidTransform::angle() const { return rotation_log(rotation_).norm(); }

PointSet apply(const RigidTransform& h, const PointSet& points) {
  PointSet out = h.rotation() * points;
  out.colwise() += h.translation();
  return out;
}

RigidTransform kabsch_align(const PointSet& source, const PointSet& target) {
  if (source.cols() != target.cols()) {
    throw DegenerateConfiguration("kabsch_align: point counts differ (" +
                                  std::to_string(source.cols()) + " vs " +
                                  std::to_string(target.cols()) + ")");
  }
  if (source.cols() < 3) {
    throw DegenerateConfiguration("kabsch_align: need at least 3 points");
  }
  const Vec3 cs = source.rowwise().mean();
  const Vec3 ct = target.rowwise().mean();
  const Mat3 cov = (source.colwise() - cs) * (target.colwise() - ct).transpose();

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= kRankTol * sv(0)) {
    throw DegenerateConfiguration(
        "kabsch_align: cross-covariance has rank < 2 (collinear points?)");
  }
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Vec3 d(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
  const Mat3 r = v * d.asDiagonal() * u.transpose();
  return RigidTransform(r, ct - r * cs);
}

void require_non_degenerate(const PointSet& domain) {
  if (domain.cols() < 3) {
    throw DegenerateConfiguration("pose domain needs at least 3 points");
  }
  const Vec3 c = domain.rowwise().mean();
  const PointSet centered = domain.colwise() - c;
  Eigen::JacobiSVD<Mat3> svd(centered * centered.transpose());
  const Vec3& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= kRankTol * sv(0)) {
    throw DegenerateConfiguration("pose domain points are collinear");
  }
}

EnergyDisplacement edr_log(const RigidTransform& h, const PointSet& pose_domain) {
  require_non_degenerate(pose_domain);
  return {apply(h, pose_domain) - pose_domain};
}

RigidTransform edr_exp(const EnergyDisplacement& d, const PointSet& pose_domain) {
  if (d.displacements.cols() != pose_domain.cols()) {
    throw DegenerateConfiguration("edr_exp: field length does not match domain");
  }
  return kabsch_align(pose_domain, pose_domain + d.displacements);
}

EnergyDisplacement edr_log_at(const RigidTransform& base, const RigidTransform& h,
                              const PointSet& pose_domain) {
  return edr_log(base.inverse() * h, pose_domain);
}

RigidTransform edr_exp_at(const RigidTransform& base, const EnergyDisplacement& d,
                          const PointSet& pose_domain) {
  return base * edr_exp(d, pose_domain);
}

double edr_distance(const RigidTransform& h1, const RigidTransform& h2,
                    const PointSet& pose_domain) {
  return edr_log_at(h1, h2, pose_domain).squared_norm();
}

RigidTransform mean_rigid(std::span<const RigidTransform> hs,
                          const PointSet& pose_domain) {
  if (hs.empty()) throw InvalidParams("mean_rigid: empty input");
  require_non_degenerate(pose_domain);
  PointSet sum = PointSet::Zero(3, pose_domain.cols());
  for (const auto& h : hs) sum += apply(h, pose_domain) - pose_domain;
  return edr_exp({sum / static_cast<double>(hs.size())}, pose_domain);
}

Vec3 rotation_log(const Mat3& r) {
  const Eigen::AngleAxisd aa{Eigen::Quaterniond(r)};
  return aa.angle() * aa.axis();
}

Mat3 rotation_exp(const Vec3& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

SrVector sr_log(const RigidTransform& h, double scale_weight) {
  if (!(scale_weight > 0.0)) throw InvalidParams("SR scale weight must be > 0");
  const Vec3 r = rotation_log(h.rotation());
  if (r.norm() > std::numbers::pi - kBranchCutTol) {
    throw BranchCut("sr_log: rotation angle is pi; axis-angle is ambiguous");
  }
  return {r, h.translation(), scale_weight};
}

RigidTransform sr_exp(const SrVector& v) {
  return RigidTransform(rotation_exp(v.rotation), v.translation);
}

double sr_norm(const SrVector& v) {
  return v.translation.squaredNorm() + v.scale_weight * v.rotation.squaredNorm();
}

RigidTransform sr_mean(std::span<const RigidTransform> hs, double scale_weight,
                       int max_iterations) {
  if (hs.empty()) throw InvalidParams("sr_mean: empty input");
  RigidTransform mean = hs.front();
  const double n = static_cast<double>(hs.size());
  for (int it = 0; it < max_iterations; ++it) {
    SrVector step{Vec3::Zero(), Vec3::Zero(), scale_weight};
    const RigidTransform inv = mean.inverse();
    for (const auto& h : hs) {
      const SrVector v = sr_log(inv * h, scale_weight);
      step.rotation += v.rotation / n;
      step.translation += v.translation / n;
    }
    mean = mean * sr_exp(step);
    if (sr_norm(step) < 1e-24) break;
  }
  return mean;
}

std::vector<Eigen::Index> farthest_point_subsample(const PointSet& points,
                                                   Eigen::Index count,
                                                   Eigen::Index first) {
  const Eigen::Index n = points.cols();
  if (n == 0 || count <= 0) return {};
  if (first < 0 || first >= n) throw InvalidParams("farthest_point_subsample: bad seed index");
  count = std::min(count, n);
  std::vector<Eigen::Index> picked;
  picked.reserve(static_cast<std::size_t>(count));
  Eigen::VectorXd dist =
      (points.colwise() - points.col(first)).colwise().squaredNorm().transpose();
  picked.push_back(first);
  while (static_cast<Eigen::Index>(picked.size()) < count) {
    Eigen::Index next = 0;
    dist.maxCoeff(&next);
    picked.push_back(next);
    dist = dist.cwiseMin((points.colwise() - points.col(next)).colwise().squaredNorm().transpose());
  }
  return picked;
}

PointSet gather(const PointSet& points, std::span<const Eigen::Index> indices) {
  PointSet out(3, static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = points.col(indices[i]);
  }
  return out;
}

}  // namespace dmo
