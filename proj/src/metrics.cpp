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

#include "dmo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "dmo/errors.hpp"

namespace dmo {

namespace {

void require_points(const TriangleMesh& m) {
  if (m.vertex_count() == 0) throw EmptyMesh("distance to or from an empty mesh");
}

template <typename Query>
Eigen::VectorXd squared_distances(const TriangleMesh& a, Query query) {
  Eigen::VectorXd d(a.vertex_count());
  for (Eigen::Index i = 0; i < a.vertex_count(); ++i) d(i) = query(a.vertices.col(i));
  return d;
}

}  // namespace

double rms_distance(const TriangleMesh& a, const MeshIndex& b) {
  require_points(a);
  const auto d = squared_distances(a, [&](const Vec3& p) { return b.closest(p).squared_distance; });
  return std::sqrt(d.mean());
}

double rms_distance(const TriangleMesh& a, const TriangleMesh& b) {
  require_points(a);
  require_points(b);
  return rms_distance(a, MeshIndex(b));
}

double hausdorff_distance(const TriangleMesh& a, const MeshIndex& a_index, const TriangleMesh& b,
                          const MeshIndex& b_index) {
  require_points(a);
  require_points(b);
  const double ab =
      squared_distances(a, [&](const Vec3& p) { return b_index.closest(p).squared_distance; }).maxCoeff();
  const double ba =
      squared_distances(b, [&](const Vec3& p) { return a_index.closest(p).squared_distance; }).maxCoeff();
  return std::sqrt(std::max(ab, ba));
}

double hausdorff_distance(const TriangleMesh& a, const TriangleMesh& b) {
  require_points(a);
  require_points(b);
  return hausdorff_distance(a, MeshIndex(a), b, MeshIndex(b));
}

double rms_distance_exhaustive(const TriangleMesh& a, const TriangleMesh& b) {
  require_points(a);
  const auto d = squared_distances(
      a, [&](const Vec3& p) { return closest_point_exhaustive(b, p).squared_distance; });
  return std::sqrt(d.mean());
}

double hausdorff_distance_exhaustive(const TriangleMesh& a, const TriangleMesh& b) {
  require_points(a);
  require_points(b);
  auto one_way = [](const TriangleMesh& x, const TriangleMesh& y) {
    return squared_distances(x, [&](const Vec3& p) { return closest_point_exhaustive(y, p).squared_distance; })
        .maxCoeff();
  };
  return std::sqrt(std::max(one_way(a, b), one_way(b, a)));
}

double pose_angle_error(const RigidTransform& predicted, const RigidTransform& truth) {
  return (predicted.inverse() * truth).angle();
}

RegressionReport linear_regression(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidParams("regression inputs differ in length");
  if (xs.size() < 3) throw InvalidParams("regression needs at least 3 points");
  const auto n = static_cast<Eigen::Index>(xs.size());
  const Eigen::Map<const Eigen::VectorXd> x(xs.data(), n), y(ys.data(), n);
  const double mx = x.mean(), my = y.mean();
  const Eigen::VectorXd dx = x.array() - mx, dy = y.array() - my;
  const double sxx = dx.squaredNorm(), syy = dy.squaredNorm(), sxy = dx.dot(dy);
  if (!(sxx > 0.0)) throw DegenerateConfiguration("regression x values are constant");

  RegressionReport out;
  out.n = xs.size();
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  out.r = syy > 0.0 ? std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0) : 0.0;

  const double dof = static_cast<double>(n - 2);
  const double sse = std::max(0.0, syy - out.slope * sxy);
  if (sse <= 1e-300 * std::max(1.0, syy)) {
    // Exact fit: p underflows to the smallest positive double (or 1 for a flat line).
    out.p_value = out.slope != 0.0 ? std::numeric_limits<double>::min() : 1.0;
    return out;
  }
  const double se = std::sqrt(sse / dof / sxx);
  const double t = out.slope / se;
  const boost::math::students_t dist(dof);
  out.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))),
                           std::numeric_limits<double>::min(), 1.0);
  return out;
}

}  // namespace dmo
