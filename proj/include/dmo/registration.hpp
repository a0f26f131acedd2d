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

// Dense correspondence by model-based registration: a per-family shape model
// (free-form deformation GP) is fitted to a target surface by alternating
// closest-point matching with ridge regression in coefficient space. The
// rigid pre-alignment of each object is kept so that the joint's spatial
// configuration can be restored afterwards.

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dmo/gp.hpp"
#include "dmo/mesh.hpp"
#include "dmo/model.hpp"

namespace dmo {

/// Shape-only model on the reference vertices. With >= 2 family members
/// (pre-aligned, in correspondence) the sample kernel of the family is used,
/// plus `smoothness` if given; with fewer, `smoothness` alone defines the
/// model around the reference. Throws InvalidParams if neither is available.
BuildResult build_ffd_model(std::span<const PointSet> family, const PointSet& reference,
                            Eigen::Index rank, const std::optional<GaussianKernel>& smoothness = std::nullopt,
                            const LowRankOptions& options = {});

struct RegistrationOptions {
  double beta = 0.0;  // weight of sum(alpha^2)
  int max_iterations = 100;
  /// Stop when the objective decreases by less than this (mm^2).
  double tolerance = 1e-8;
  /// Rigid map from the target's frame into the reference frame.
  RigidTransform alignment;
  /// Add target -> model closest-point distances to the data term. Without
  /// it, the model can slide along elongated targets (e.g. a shaft) into
  /// spurious minima.
  bool symmetric = true;
};

struct CorrespondenceResult {
  PointSet registered;  // reference topology, reference frame
  Eigen::VectorXd alpha;
  RigidTransform alignment;  // target frame -> reference frame
  double residual_rms = 0.0;
  double residual_hausdorff = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Objective after each iteration (first entry: the initial state).
  std::vector<double> objective;
};

/// Rigid pre-alignment from corresponding landmarks: maps target landmarks
/// onto the reference landmarks.
RigidTransform landmark_alignment(const PointSet& target_landmarks, const PointSet& reference_landmarks);

/// Registers `model` (on the vertices of a mesh with `reference_faces`) to
/// `target` (surface, or point cloud when it has no faces). Minimizes the
/// squared closest-point distances (model -> target, plus target -> model when
/// symmetric) + beta |alpha|^2; the recorded objective never increases.
/// Throws EmptyMesh for an empty target and InvalidParams for beta < 0.
CorrespondenceResult register_object(const LowRankGP& model, const Eigen::Matrix3Xi& reference_faces,
                                     const TriangleMesh& target, const RegistrationOptions& options = {});

/// Joint in model form: registered shapes, poses T * T_j^-1 relative to the
/// fixed object's frame (fixed object at the identity).
MultiObjectExample recover_joint(std::span<const CorrespondenceResult> results, std::size_t fixed);

}  // namespace dmo
