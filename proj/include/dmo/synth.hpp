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

// Synthetic "lollipop" joints with one shape degree of freedom per object
// (the head's major semi-axis), plus the motion-simulation helpers.

#pragma once

#include <string>
#include <vector>

#include "dmo/geometry.hpp"
#include "dmo/mesh.hpp"
#include "dmo/model.hpp"

namespace dmo {

/// Template dimensions in mm. The body is a surface of revolution along +z:
/// flat bottom disc at z = 0, shaft up to `shaft_length`, then a neck that
/// tapers to `neck_radius` over `neck_length`, closed by a flat top disc.
/// The head is an ellipsoid with semi-axes (head_minor, head_minor,
/// head_major) resting on the top of the neck.
struct LollipopParams {
  double head_major = 50.0;  // r
  double head_minor = 10.0;
  double shaft_length = 60.0;
  double shaft_radius = 5.0;
  double neck_length = 10.0;
  double neck_radius = 2.0;
  Eigen::Index vertex_budget = 6000;
  /// Share of the vertex budget spent on the head.
  double head_fraction = 0.3;

  double body_length() const { return shaft_length + neck_length; }
  /// Throws InvalidParams.
  void validate() const;
};

struct Lollipop {
  TriangleMesh mesh;
  /// First head vertex; head vertices run to the end.
  Eigen::Index head_begin = 0;
};

/// Closed two-component mesh whose topology depends only on the vertex budget
/// and head_fraction.
Lollipop make_lollipop(const LollipopParams& params);

/// Head extent along z (max - min over head vertices) of a lollipop shape.
double head_length(const PointSet& shape, Eigen::Index head_begin);

/// (r1, r2) in grid units.
struct GridPoint {
  double r1 = 0.0;
  double r2 = 0.0;
};

/// The anti-correlated 15-joint grid: r1 = (16 + k) / 10, r2 = (15 - k) / 10.
std::vector<GridPoint> anticorrelated_grid();

enum class MotionMode { None, Uncorrelated, Correlated };

std::string to_string(MotionMode mode);
MotionMode parse_motion_mode(const std::string& text);

struct SynthConfig {
  LollipopParams lollipop;
  /// Grid units -> mm.
  double scale = 26.0;
  /// Uncorrelated motion: each joint at every angle (rad).
  std::vector<double> uncorrelated_angles;  // default: pi/5 .. 4pi/5
  /// Correlated motion: theta_max = -3 pi / (4 r2 * correlated_unit), the
  /// sweep steps back from theta_max in `correlated_step` increments.
  double correlated_unit = 2.6;  // grid units -> cm
  double correlated_step = 0.15707963267948966;  // pi / 20
  int sweep_count = 4;

  SynthConfig();
  void validate() const;
};

struct JointParams {
  double r1 = 0.0;  // mm
  double r2 = 0.0;  // mm
  double theta = 0.0;  // rad, rotation of object 2 about the joint axis
  std::size_t shape_index = 0;  // grid position
};

struct SynthDataset {
  MotionMode mode = MotionMode::None;
  SynthConfig config;
  std::vector<JointParams> params;
  std::vector<MultiObjectExample> examples;
  /// Shared per-object topology.
  std::vector<Eigen::Matrix3Xi> faces;
  Eigen::Index head_begin = 0;
  /// Rotation center and axis of the object-2 motion.
  Vec3 center = Vec3::Zero();
  Vec3 axis = Vec3::UnitX();
};

/// theta_max for a grid-unit r2.
double correlated_max_angle(double r2_grid, const SynthConfig& config);

/// Placement of object 2 at theta = 0: turned upside down along the shared
/// axis so that the two heads touch.
RigidTransform rest_pose(double r1_mm, double r2_mm, const LollipopParams& params);

/// Rotation center used for every joint of a grid: the head contact point of
/// the joint with the mean (r1, r2).
Vec3 motion_center(const std::vector<GridPoint>& grid, const SynthConfig& config);

/// One joint: object 1 at the identity, object 2 at
/// rotation(theta about center, x axis) * rest_pose.
MultiObjectExample make_joint(double r1_mm, double r2_mm, double theta, const Vec3& center,
                              const SynthConfig& config);

/// Joints of the grid at rest (theta = 0).
SynthDataset make_shape_dataset(const std::vector<GridPoint>& grid, const SynthConfig& config = {});

/// Joints of the grid under the chosen motion protocol.
SynthDataset make_motion_dataset(const std::vector<GridPoint>& grid, MotionMode mode,
                                 const SynthConfig& config = {});

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

/// Algebraic least-squares sphere. Throws DegenerateConfiguration for fewer
/// than 4 points or coplanar points.
Sphere fit_sphere(const PointSet& points);

/// Copies of `joint` with object `moving` (0-based) additionally rotated by
/// each angle about the line (center, axis). Other objects are untouched.
std::vector<MultiObjectExample> simulate_rotation_sweep(const MultiObjectExample& joint,
                                                        const Vec3& center, const Vec3& axis,
                                                        const std::vector<double>& angles,
                                                        std::size_t moving = 1);

}  // namespace dmo
