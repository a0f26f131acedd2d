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

// Surface distances and the regression statistics used to evaluate models.

#pragma once

#include <span>

#include "dmo/geometry.hpp"
#include "dmo/mesh.hpp"

namespace dmo {

/// One-sided RMS of point-to-surface distances from a's vertices to b.
/// Throws EmptyMesh.
double rms_distance(const TriangleMesh& a, const TriangleMesh& b);
double rms_distance(const TriangleMesh& a, const MeshIndex& b);

/// Symmetric Hausdorff distance (vertex-to-surface in both directions).
double hausdorff_distance(const TriangleMesh& a, const TriangleMesh& b);
double hausdorff_distance(const TriangleMesh& a, const MeshIndex& a_index, const TriangleMesh& b,
                          const MeshIndex& b_index);

/// Brute-force counterparts scanning every triangle (oracles).
double rms_distance_exhaustive(const TriangleMesh& a, const TriangleMesh& b);
double hausdorff_distance_exhaustive(const TriangleMesh& a, const TriangleMesh& b);

/// Rotation angle of pred^-1 * truth, in [0, pi].
double pose_angle_error(const RigidTransform& predicted, const RigidTransform& truth);

struct RegressionReport {
  double slope = 0.0;
  double intercept = 0.0;
  double r = 0.0;
  double p_value = 1.0;  // two-sided t-test of slope != 0
  std::size_t n = 0;
};

/// Ordinary least squares y = intercept + slope x. Throws InvalidParams for
/// n < 3 or mismatched lengths and DegenerateConfiguration for constant x.
RegressionReport linear_regression(std::span<const double> xs, std::span<const double> ys);

}  // namespace dmo
