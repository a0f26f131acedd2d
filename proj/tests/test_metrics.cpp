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

#include <doctest.h>

#include <numbers>

#include <Eigen/Geometry>

#include "dmo/errors.hpp"
#include "dmo/metrics.hpp"
#include "dmo/synth.hpp"
#include "test_support.hpp"

using namespace dmo;

namespace {

// Triangulated square grid in the plane z = height.
TriangleMesh plane(int n, double extent, double height) {
  TriangleMesh m;
  m.vertices.resize(3, (n + 1) * (n + 1));
  for (int i = 0; i <= n; ++i)
    for (int k = 0; k <= n; ++k)
      m.vertices.col(i * (n + 1) + k) << extent * (i / double(n) - 0.5), extent * (k / double(n) - 0.5), height;
  m.faces.resize(3, 2 * n * n);
  int f = 0;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const int a = i * (n + 1) + k, b = a + 1, c = a + n + 1, d = c + 1;
      m.faces.col(f++) << a, c, d;
      m.faces.col(f++) << a, d, b;
    }
  return m;
}

TriangleMesh uv_sphere(double radius, int segments, int rings) {
  LollipopParams unused;
  (void)unused;
  TriangleMesh m;
  m.vertices.resize(3, 2 + segments * rings);
  m.vertices.col(0) << 0, 0, -radius;
  for (int r = 1; r <= rings; ++r) {
    const double phi = std::numbers::pi * r / (rings + 1);
    for (int s = 0; s < segments; ++s) {
      const double a = 2.0 * std::numbers::pi * s / segments;
      m.vertices.col(1 + (r - 1) * segments + s) << radius * std::sin(phi) * std::cos(a),
          radius * std::sin(phi) * std::sin(a), -radius * std::cos(phi);
    }
  }
  const int top = 1 + segments * rings;
  m.vertices.col(top) << 0, 0, radius;
  std::vector<Eigen::Vector3i> faces;
  auto v = [&](int r, int s) { return 1 + (r - 1) * segments + (s % segments); };
  for (int s = 0; s < segments; ++s) faces.emplace_back(0, v(1, s + 1), v(1, s));
  for (int r = 1; r < rings; ++r)
    for (int s = 0; s < segments; ++s) {
      faces.emplace_back(v(r, s), v(r, s + 1), v(r + 1, s + 1));
      faces.emplace_back(v(r, s), v(r + 1, s + 1), v(r + 1, s));
    }
  for (int s = 0; s < segments; ++s) faces.emplace_back(top, v(rings, s), v(rings, s + 1));
  m.faces.resize(3, static_cast<Eigen::Index>(faces.size()));
  for (std::size_t i = 0; i < faces.size(); ++i) m.faces.col(static_cast<Eigen::Index>(i)) = faces[i];
  return m;
}

TriangleMesh random_mesh(CounterRng& rng, double jitter) {
  LollipopParams p;
  p.vertex_budget = 150;
  p.head_major = 20.0;
  auto m = make_lollipop(p).mesh;
  m.vertices += dmo::test::random_points(rng, m.vertex_count(), jitter);
  return m;
}

TriangleMesh transformed(const TriangleMesh& m, const RigidTransform& h) { return {apply(h, m.vertices), m.faces}; }

}  // namespace

TEST_CASE("distances of a mesh to itself vanish") {
  CounterRng rng(1);
  const auto m = random_mesh(rng, 0.5);
  CHECK(rms_distance(m, m) == 0.0);
  CHECK(hausdorff_distance(m, m) == 0.0);
}

TEST_CASE("offset planes") {
  const auto a = plane(8, 10.0, 2.5);
  const auto b = plane(8, 20.0, 0.0);
  CHECK(rms_distance(a, b) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(rms_distance_exhaustive(a, b) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("concentric spheres") {
  const double r = 10.0, d = 1.0;
  const auto inner = uv_sphere(r, 96, 48);
  const auto outer = uv_sphere(r + d, 96, 48);
  // The inscribed polyhedra deviate from the spheres by about r (1 - cos(pi / 96)).
  const double tess = (r + d) * (1.0 - std::cos(std::numbers::pi / 48.0));
  CHECK(std::abs(hausdorff_distance(inner, outer) - d) <= tess);
  CHECK(std::abs(rms_distance(outer, inner) - d) <= tess);
}

TEST_CASE("indexed distances match the exhaustive scan") {
  CounterRng rng(2);
  for (int trial = 0; trial < 3; ++trial) {
    const auto a = random_mesh(rng, 1.0);
    const auto b = transformed(random_mesh(rng, 1.0), dmo::test::random_transform(rng, 0.3, 3.0));
    CHECK(std::abs(rms_distance(a, b) - rms_distance_exhaustive(a, b)) < 1e-9);
    CHECK(std::abs(rms_distance(b, a) - rms_distance_exhaustive(b, a)) < 1e-9);
    CHECK(std::abs(hausdorff_distance(a, b) - hausdorff_distance_exhaustive(a, b)) < 1e-9);
  }
}

TEST_CASE("metrics are rigidly invariant") {
  CounterRng rng(3);
  for (int trial = 0; trial < 3; ++trial) {
    const auto a = random_mesh(rng, 1.0);
    const auto b = random_mesh(rng, 1.0);
    const auto h = dmo::test::random_transform(rng, std::numbers::pi - 0.1, 50.0);
    const auto ha = transformed(a, h), hb = transformed(b, h);
    CHECK(std::abs(rms_distance(a, b) - rms_distance(ha, hb)) < 1e-9);
    CHECK(std::abs(hausdorff_distance(a, b) - hausdorff_distance(ha, hb)) < 1e-9);
  }
}

TEST_CASE("hausdorff bounds both rms directions") {
  CounterRng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = random_mesh(rng, 1.0);
    const auto b = random_mesh(rng, 2.0);
    const double hd = hausdorff_distance(a, b);
    CHECK(hd >= rms_distance(a, b));
    CHECK(hd >= rms_distance(b, a));
  }
}

TEST_CASE("empty meshes are rejected") {
  CounterRng rng(5);
  const auto a = random_mesh(rng, 0.1);
  const TriangleMesh empty;
  CHECK_THROWS_AS(rms_distance(empty, a), EmptyMesh);
  CHECK_THROWS_AS(rms_distance(a, empty), EmptyMesh);
  CHECK_THROWS_AS(hausdorff_distance(a, empty), EmptyMesh);
}

TEST_CASE("pose angle error") {
  CounterRng rng(6);
  const auto id = RigidTransform::identity();
  CHECK(pose_angle_error(id, id) == 0.0);
  for (double t : {0.1, 1.0, 2.5, 3.0}) {
    const RigidTransform rz(dmo::test::rodrigues(Vec3::UnitZ(), t), Vec3(1, 2, 3));
    CHECK(pose_angle_error(rz, id) == doctest::Approx(t).epsilon(1e-12));
  }
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = dmo::test::random_transform(rng, std::numbers::pi);
    const auto b = dmo::test::random_transform(rng, std::numbers::pi);
    const Mat3 composed = a.rotation().transpose() * b.rotation();
    const double oracle = Eigen::AngleAxisd(composed).angle();
    CHECK(std::abs(pose_angle_error(a, b) - oracle) < 1e-9);
  }
}

TEST_CASE("regression of exact lines") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6};
  std::vector<double> y;
  for (double v : x) y.push_back(2.0 * v);
  const auto r = linear_regression(x, y);
  CHECK(r.slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.intercept == doctest::Approx(0.0).scale(1.0));
  CHECK(r.r == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value < 1e-12);
  CHECK(r.n == 6);

  const std::vector<double> flat(6, 3.0);
  CHECK(linear_regression(x, flat).p_value == 1.0);
  const std::vector<double> constant_x(6, 1.0);
  CHECK_THROWS_AS(linear_regression(constant_x, y), DegenerateConfiguration);
  CHECK_THROWS_AS(linear_regression(std::span(x.data(), 2), std::span(y.data(), 2)), InvalidParams);
}

TEST_CASE("regression p-value matches the Cauchy case") {
  // With one degree of freedom the t distribution is Cauchy:
  // P(|T| > t) = 1 - 2 atan(t) / pi.
  const std::vector<double> x{0.0, 1.0, 2.0};
  const std::vector<double> y{0.1, 0.9, 2.3};
  const auto r = linear_regression(x, y);
  const double t = r.r * std::sqrt(1.0 / (1.0 - r.r * r.r));
  CHECK(r.p_value == doctest::Approx(1.0 - 2.0 * std::atan(std::abs(t)) / std::numbers::pi).epsilon(1e-10));
}

TEST_CASE("regression p-values are calibrated under the null") {
  CounterRng rng(7);
  std::normal_distribution<double> nd(0.0, 1.0);
  const int repeats = 4000, n = 20;
  int below = 0;
  double mean_p = 0.0, mean_abs_r = 0.0;
  std::vector<double> x(n), y(n);
  for (int k = 0; k < repeats; ++k) {
    for (int i = 0; i < n; ++i) {
      x[i] = nd(rng);
      y[i] = nd(rng);
    }
    const auto r = linear_regression(x, y);
    CHECK(r.r >= -1.0);
    CHECK(r.r <= 1.0);
    below += r.p_value < 0.05;
    mean_p += r.p_value / repeats;
    mean_abs_r += std::abs(r.r) / repeats;
  }
  // Binomial sd of the rejection rate is about 0.0035.
  CHECK(below / double(repeats) == doctest::Approx(0.05).epsilon(0.3));
  CHECK(mean_p == doctest::Approx(0.5).epsilon(0.05));
  CHECK(mean_abs_r < 0.25);
}
