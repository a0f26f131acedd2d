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

#include "dmo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/SVD>

#include "dmo/errors.hpp"

namespace dmo {

void LollipopParams::validate() const {
  if (!(head_major > 0.0) || !(head_minor > 0.0)) throw InvalidParams("head axes must be positive");
  if (!(shaft_length > 0.0) || !(shaft_radius > 0.0) || !(neck_length > 0.0) || !(neck_radius > 0.0)) {
    throw InvalidParams("body dimensions must be positive");
  }
  if (vertex_budget < 100) throw InvalidParams("vertex budget must be at least 100");
  if (!(head_fraction > 0.0 && head_fraction < 1.0)) throw InvalidParams("head fraction must be in (0, 1)");
}

namespace {

struct Tessellation {
  int segments;
  int body_rings;
  int head_rings;
};

Tessellation tessellation(const LollipopParams& p) {
  const double budget = static_cast<double>(p.vertex_budget);
  // Roughly square quads: ~3.75 rings per angular segment over the budget.
  const int seg = std::max(8, static_cast<int>(std::lround(std::sqrt(budget / 3.75))));
  const int head = std::max(1, static_cast<int>(std::lround(p.head_fraction * budget / seg)));
  const int body = std::max(4, static_cast<int>(std::lround((1.0 - p.head_fraction) * budget / seg)));
  return {seg, body, head};
}

// Pole, `rings` rings of `seg` vertices, pole; profile given as (rho, z).
template <typename Profile>
void add_revolution(int seg, int rings, Profile profile, std::vector<Vec3>& verts,
                    std::vector<Eigen::Vector3i>& faces) {
  const int base = static_cast<int>(verts.size());
  auto [rho0, z0] = profile(0);
  (void)rho0;
  verts.emplace_back(0.0, 0.0, z0);
  for (int k = 1; k <= rings; ++k) {
    auto [rho, z] = profile(k);
    for (int s = 0; s < seg; ++s) {
      const double a = 2.0 * std::numbers::pi * s / seg;
      verts.emplace_back(rho * std::cos(a), rho * std::sin(a), z);
    }
  }
  auto [rho1, z1] = profile(rings + 1);
  (void)rho1;
  verts.emplace_back(0.0, 0.0, z1);
  const int top = static_cast<int>(verts.size()) - 1;
  auto v = [&](int k, int s) { return base + 1 + (k - 1) * seg + (s % seg); };
  for (int s = 0; s < seg; ++s) faces.emplace_back(base, v(1, s + 1), v(1, s));
  for (int k = 1; k < rings; ++k) {
    for (int s = 0; s < seg; ++s) {
      faces.emplace_back(v(k, s), v(k, s + 1), v(k + 1, s + 1));
      faces.emplace_back(v(k, s), v(k + 1, s + 1), v(k + 1, s));
    }
  }
  for (int s = 0; s < seg; ++s) faces.emplace_back(top, v(rings, s), v(rings, s + 1));
}

}  // namespace

Lollipop make_lollipop(const LollipopParams& p) {
  p.validate();
  const auto t = tessellation(p);
  std::vector<Vec3> verts;
  std::vector<Eigen::Vector3i> faces;

  // Body profile polyline, sampled uniformly in arc length.
  const std::vector<Eigen::Vector2d> corners{{0.0, 0.0},
                                             {p.shaft_radius, 0.0},
                                             {p.shaft_radius, p.shaft_length},
                                             {p.neck_radius, p.body_length()},
                                             {0.0, p.body_length()}};
  std::vector<double> cumulative{0.0};
  for (std::size_t i = 1; i < corners.size(); ++i)
    cumulative.push_back(cumulative.back() + (corners[i] - corners[i - 1]).norm());
  const double total = cumulative.back();
  auto body = [&](int k) {
    const double s = total * k / (t.body_rings + 1);
    std::size_t i = 1;
    while (i + 1 < corners.size() && cumulative[i] < s) ++i;
    const double u = (s - cumulative[i - 1]) / (cumulative[i] - cumulative[i - 1]);
    const Eigen::Vector2d q = corners[i - 1] + u * (corners[i] - corners[i - 1]);
    return std::pair{q.x(), q.y()};
  };
  add_revolution(t.segments, t.body_rings, body, verts, faces);

  const auto head_begin = static_cast<Eigen::Index>(verts.size());
  const double center = p.body_length() + p.head_major;
  auto head = [&](int k) {
    const double phi = std::numbers::pi * k / (t.head_rings + 1);
    return std::pair{p.head_minor * std::sin(phi), center - p.head_major * std::cos(phi)};
  };
  add_revolution(t.segments, t.head_rings, head, verts, faces);

  Lollipop out;
  out.head_begin = head_begin;
  out.mesh.vertices.resize(3, static_cast<Eigen::Index>(verts.size()));
  for (std::size_t i = 0; i < verts.size(); ++i) out.mesh.vertices.col(static_cast<Eigen::Index>(i)) = verts[i];
  out.mesh.faces.resize(3, static_cast<Eigen::Index>(faces.size()));
  for (std::size_t i = 0; i < faces.size(); ++i) out.mesh.faces.col(static_cast<Eigen::Index>(i)) = faces[i];
  return out;
}

double head_length(const PointSet& shape, Eigen::Index head_begin) {
  const auto z = shape.row(2).tail(shape.cols() - head_begin);
  return z.maxCoeff() - z.minCoeff();
}

std::vector<GridPoint> anticorrelated_grid() {
  std::vector<GridPoint> grid;
  for (int k = 0; k < 15; ++k) grid.push_back({(16 + k) / 10.0, (15 - k) / 10.0});
  return grid;
}

std::string to_string(MotionMode mode) {
  switch (mode) {
    case MotionMode::None: return "none";
    case MotionMode::Uncorrelated: return "uncorrelated";
    case MotionMode::Correlated: return "correlated";
  }
  return "none";
}

MotionMode parse_motion_mode(const std::string& text) {
  if (text == "none") return MotionMode::None;
  if (text == "uncorrelated") return MotionMode::Uncorrelated;
  if (text == "correlated") return MotionMode::Correlated;
  throw InvalidParams("unknown motion mode '" + text + "'");
}

SynthConfig::SynthConfig() {
  for (int k = 1; k <= 4; ++k) uncorrelated_angles.push_back(k * std::numbers::pi / 5.0);
}

void SynthConfig::validate() const {
  lollipop.validate();
  if (!(scale > 0.0)) throw InvalidParams("scale must be positive");
  if (!(correlated_unit > 0.0)) throw InvalidParams("correlated unit must be positive");
  if (sweep_count < 1) throw InvalidParams("sweep count must be >= 1");
  if (uncorrelated_angles.empty()) throw InvalidParams("no uncorrelated angles");
}

double correlated_max_angle(double r2_grid, const SynthConfig& config) {
  if (!(r2_grid > 0.0)) throw InvalidParams("r2 must be positive");
  return -3.0 * std::numbers::pi / (4.0 * r2_grid * config.correlated_unit);
}

RigidTransform rest_pose(double r1_mm, double r2_mm, const LollipopParams& params) {
  const double z0 = 2.0 * params.body_length() + 2.0 * r1_mm + 2.0 * r2_mm;
  return RigidTransform::translation(Vec3(0, 0, z0)) *
         RigidTransform::rotation_about(Vec3::UnitX(), std::numbers::pi);
}

Vec3 motion_center(const std::vector<GridPoint>& grid, const SynthConfig& config) {
  if (grid.empty()) throw InvalidParams("empty grid");
  double mean_r1 = 0.0;
  for (const auto& g : grid) mean_r1 += g.r1;
  mean_r1 *= config.scale / static_cast<double>(grid.size());
  return Vec3(0, 0, config.lollipop.body_length() + 2.0 * mean_r1);
}

MultiObjectExample make_joint(double r1_mm, double r2_mm, double theta, const Vec3& center,
                              const SynthConfig& config) {
  LollipopParams p1 = config.lollipop, p2 = config.lollipop;
  p1.head_major = r1_mm;
  p2.head_major = r2_mm;
  MultiObjectExample joint;
  joint.objects.push_back({make_lollipop(p1).mesh.vertices, RigidTransform::identity()});
  joint.objects.push_back({make_lollipop(p2).mesh.vertices,
                           RigidTransform::rotation_about(Vec3::UnitX(), theta, center) *
                               rest_pose(r1_mm, r2_mm, config.lollipop)});
  return joint;
}

namespace {

SynthDataset empty_dataset(const std::vector<GridPoint>& grid, MotionMode mode,
                           const SynthConfig& config) {
  config.validate();
  if (grid.empty()) throw InvalidParams("empty grid");
  for (const auto& g : grid)
    if (!(g.r1 > 0.0) || !(g.r2 > 0.0)) throw InvalidParams("grid radii must be positive");
  SynthDataset d;
  d.mode = mode;
  d.config = config;
  const auto lp = make_lollipop(config.lollipop);
  d.faces = {lp.mesh.faces, lp.mesh.faces};
  d.head_begin = lp.head_begin;
  d.center = motion_center(grid, config);
  return d;
}

void add_joint(SynthDataset& d, const GridPoint& g, std::size_t index, double theta) {
  const double r1 = g.r1 * d.config.scale, r2 = g.r2 * d.config.scale;
  d.params.push_back({r1, r2, theta, index});
  d.examples.push_back(make_joint(r1, r2, theta, d.center, d.config));
}

}  // namespace

SynthDataset make_shape_dataset(const std::vector<GridPoint>& grid, const SynthConfig& config) {
  auto d = empty_dataset(grid, MotionMode::None, config);
  for (std::size_t i = 0; i < grid.size(); ++i) add_joint(d, grid[i], i, 0.0);
  return d;
}

SynthDataset make_motion_dataset(const std::vector<GridPoint>& grid, MotionMode mode,
                                 const SynthConfig& config) {
  if (mode == MotionMode::None) return make_shape_dataset(grid, config);
  auto d = empty_dataset(grid, mode, config);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (mode == MotionMode::Uncorrelated) {
      for (double theta : config.uncorrelated_angles) add_joint(d, grid[i], i, theta);
    } else {
      const double theta_max = correlated_max_angle(grid[i].r2, config);
      for (int l = 1; l <= config.sweep_count; ++l)
        add_joint(d, grid[i], i, theta_max + (config.sweep_count - l) * config.correlated_step);
    }
  }
  return d;
}

Sphere fit_sphere(const PointSet& points) {
  const Eigen::Index n = points.cols();
  if (n < 4) throw DegenerateConfiguration("sphere fit needs at least 4 points");
  const Vec3 centroid = points.rowwise().mean();
  const PointSet c = points.colwise() - centroid;
  // Solve |p|^2 = 2 c.p + d in centered coordinates for conditioning.
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a.row(i) << 2.0 * c.col(i).transpose(), 1.0;
    b(i) = c.col(i).squaredNorm();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(3) <= 1e-10 * sv(0)) throw DegenerateConfiguration("points are coplanar");
  const Eigen::Vector4d x = svd.solve(b);
  const Vec3 center = x.head<3>();
  return {center + centroid, std::sqrt(x(3) + center.squaredNorm())};
}

std::vector<MultiObjectExample> simulate_rotation_sweep(const MultiObjectExample& joint,
                                                        const Vec3& center, const Vec3& axis,
                                                        const std::vector<double>& angles,
                                                        std::size_t moving) {
  if (moving >= joint.objects.size()) throw InvalidParams("moving object out of range");
  if (std::abs(axis.norm() - 1.0) > 1e-9) throw InvalidParams("rotation axis must be a unit vector");
  std::vector<MultiObjectExample> out;
  for (double angle : angles) {
    MultiObjectExample e = joint;
    e.objects[moving].pose = RigidTransform::rotation_about(axis, angle, center) * e.objects[moving].pose;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace dmo
