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

#include <Eigen/Eigenvalues>

#include "dmo/errors.hpp"
#include "dmo/gp.hpp"
#include "test_support.hpp"

using namespace dmo;

namespace {

DomainPtr toy_domain(CounterRng& rng, Eigen::Index shape_points, Eigen::Index pose_points,
                     int objects = 1) {
  std::vector<DomainBlock> blocks;
  for (int j = 1; j <= objects; ++j) {
    blocks.push_back({j, FeatureClass::Shape, dmo::test::random_points(rng, shape_points)});
    if (pose_points > 0)
      blocks.push_back({j, FeatureClass::Pose, dmo::test::random_points(rng, pose_points)});
  }
  return std::make_shared<const LabeledDomain>(std::move(blocks));
}

std::vector<DeformationField> random_fields(CounterRng& rng, const DomainPtr& d, int count) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<DeformationField> out;
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd v(d->dimension());
    for (auto& x : v) x = n(rng);
    out.emplace_back(d, v);
  }
  return out;
}

// Dense oracle: eigenvalues of a symmetric matrix, descending.
Eigen::VectorXd dense_eigenvalues(const Eigen::MatrixXd& k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k, Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

double max_orthonormality_error(const Eigen::MatrixXd& basis) {
  const Eigen::MatrixXd g = basis.transpose() * basis;
  return (g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("labeled domain bookkeeping") {
  CounterRng rng(31);
  const auto d = toy_domain(rng, 4, 3, 2);
  CHECK(d->block_count() == 4);
  CHECK(d->size() == 14);
  CHECK(d->point_offset(2) == 7);
  CHECK(*d->find(2, FeatureClass::Pose) == 3);
  CHECK_FALSE(d->find(3, FeatureClass::Shape).has_value());
  CHECK(d->block_of(7) == 2);
  CHECK(d->point(8) == d->block(2).points.col(1));
  CHECK_THROWS_AS(LabeledDomain({{1, FeatureClass::Shape, PointSet::Zero(3, 2)},
                                 {1, FeatureClass::Shape, PointSet::Zero(3, 2)}}),
                  InvalidParams);
  CHECK(parse_feature_class("pose") == FeatureClass::Pose);
  CHECK_THROWS_AS(parse_feature_class("hat"), InvalidParams);
}

TEST_CASE("deformation field validation") {
  CounterRng rng(32);
  const auto d = toy_domain(rng, 3, 0);
  CHECK_THROWS_AS(DeformationField(d, Eigen::VectorXd::Zero(8)), DomainMismatch);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(9);
  v(4) = std::nan("");
  CHECK_THROWS_AS(DeformationField(d, v), InvalidParams);
}

TEST_CASE("empirical_mean") {
  CounterRng rng(33);
  const auto d = toy_domain(rng, 6, 2);
  const auto fs = random_fields(rng, d, 10);
  CHECK(empirical_mean(std::span(fs.data(), 1)).values() == fs[0].values());
  const std::vector<DeformationField> pm{fs[0], DeformationField(d, -fs[0].values())};
  CHECK(empirical_mean(pm).values().cwiseAbs().maxCoeff() == 0.0);

  const auto mean = empirical_mean(fs);
  for (Eigen::Index k = 0; k < d->dimension(); ++k) {
    double sum = 0.0;
    for (const auto& f : fs) sum += f.values()(k);
    CHECK(std::abs(mean.values()(k) - sum / 10.0) < 1e-12);
  }
  const auto other = toy_domain(rng, 6, 2);
  const std::vector<DeformationField> mixed{fs[0], DeformationField::zero(other)};
  CHECK_THROWS_AS(empirical_mean(mixed), DomainMismatch);
}

TEST_CASE("sample kernel: snapshot eigenpairs match the dense oracle") {
  CounterRng rng(34);
  const auto d = toy_domain(rng, 10, 4, 2);
  const auto fs = random_fields(rng, d, 7);
  const KernelSpec k{SampleKernel{fs}};
  const auto res = build_low_rank(k, empirical_mean(fs), 20);
  CHECK(res.rank_deficient);
  CHECK(res.gp.rank() == 6);  // n - 1
  const Eigen::MatrixXd dense = assemble_kernel(k, *d);
  const Eigen::VectorXd oracle = dense_eigenvalues(dense);
  for (Eigen::Index m = 0; m < 6; ++m) CHECK(std::abs(res.gp.eigenvalues()(m) - oracle(m)) < 1e-9 * oracle(0));
  CHECK(max_orthonormality_error(res.gp.basis()) < 1e-10);
  CHECK((res.gp.covariance() - dense).norm() <= 1e-6 * dense.norm());
  CHECK(res.gp.eigenvalues().sum() == doctest::Approx(dense.trace()).epsilon(1e-9));
}

TEST_CASE("sample kernel edge cases") {
  CounterRng rng(35);
  const auto d = toy_domain(rng, 5, 0);
  const auto fs = random_fields(rng, d, 1);
  const std::vector<DeformationField> twins{fs[0], fs[0]};
  const auto res = build_low_rank(KernelSpec{SampleKernel{twins}}, fs[0], 1);
  CHECK(res.gp.rank() == 0);
  CHECK(res.rank_deficient);

  // mu + c_i v: one varying direction.
  Eigen::VectorXd v(d->dimension());
  for (auto& x : v) x = rng.uniform() - 0.5;
  std::vector<DeformationField> line;
  for (int i = 0; i < 5; ++i) line.emplace_back(d, fs[0].values() + (i - 1.7) * v);
  const auto one = build_low_rank(KernelSpec{SampleKernel{line}}, empirical_mean(line), 4);
  CHECK(one.gp.rank() == 1);
  const Eigen::VectorXd oracle = dense_eigenvalues(assemble_kernel(KernelSpec{SampleKernel{line}}, *d));
  CHECK(one.gp.eigenvalues()(0) / oracle.sum() >= 0.99999);
  CHECK(std::abs(std::abs(one.gp.basis().col(0).dot(v.normalized())) - 1.0) < 1e-12);
  CHECK_THROWS_AS(build_low_rank(KernelSpec{SampleKernel{line}}, line[0], 0), InvalidParams);
}

TEST_CASE("gaussian kernel") {
  PointSet two(3, 2);
  two << 0, 1, 0, 0, 0, 0;
  auto d = std::make_shared<const LabeledDomain>(
      std::vector<DomainBlock>{{1, FeatureClass::Shape, two}});
  const KernelSpec wide{GaussianKernel{{}, 1.0, 1e8}};
  const Eigen::MatrixXd kw = assemble_kernel(wide, *d);
  CHECK(kw(0, 3) == doctest::Approx(1.0));
  CHECK(kw(1, 1) == doctest::Approx(1.0));
  CHECK(kw(0, 1) == 0.0);

  PointSet one = PointSet::Zero(3, 1);
  auto d1 = std::make_shared<const LabeledDomain>(
      std::vector<DomainBlock>{{1, FeatureClass::Shape, one}});
  const auto gp1 = build_low_rank(KernelSpec{GaussianKernel{{}, 2.5, 3.0}},
                                  DeformationField::zero(d1), 3).gp;
  CHECK(gp1.rank() == 3);
  CHECK((gp1.covariance() - 2.5 * Eigen::Matrix3d::Identity()).norm() < 1e-12);

  const KernelSpec zero_scale{GaussianKernel{{}, 0.0, 1.0}};
  const KernelSpec negative_sigma{GaussianKernel{{}, 1.0, -1.0}};
  const KernelSpec lonely_sum{SumKernel{{KernelSpec{GaussianKernel{}}}}};
  const KernelSpec nowhere{GaussianKernel{{7, {}}, 1.0, 1.0}};
  CHECK_THROWS_AS(zero_scale.validate(), InvalidParams);
  CHECK_THROWS_AS(negative_sigma.validate(), InvalidParams);
  CHECK_THROWS_AS(lonely_sum.validate(), InvalidParams);
  CHECK_THROWS_AS(assemble_kernel(nowhere, *d), EmptySelection);
}

TEST_CASE("gaussian eigenpairs: exact and landmark paths") {
  CounterRng rng(36);
  const auto d = toy_domain(rng, 20, 0);
  const KernelSpec k{GaussianKernel{{}, 4.0, 40.0}};
  const Eigen::MatrixXd dense = assemble_kernel(k, *d);
  const auto exact = build_low_rank(k, DeformationField::zero(d), 60).gp;
  CHECK(max_orthonormality_error(exact.basis()) < 1e-6);
  CHECK((exact.covariance() - dense).norm() <= 1e-6 * dense.norm());
  const Eigen::VectorXd oracle = dense_eigenvalues(dense);
  for (Eigen::Index m = 0; m < exact.rank(); ++m)
    CHECK(std::abs(exact.eigenvalues()(m) - oracle(m)) < 1e-9 * oracle(0));

  // Nystrom factor on a landmark subset approximates the leading spectrum.
  LowRankOptions few;
  few.max_landmarks = 12;
  const auto approx = build_low_rank(k, DeformationField::zero(d), 6, few).gp;
  CHECK(max_orthonormality_error(approx.basis()) < 1e-6);
  for (Eigen::Index m = 0; m < 3; ++m)
    CHECK(std::abs(approx.eigenvalues()(m) - oracle(m)) < 1e-3 * oracle(0));
}

TEST_CASE("sum kernel equals the elementwise sum") {
  CounterRng rng(37);
  const auto d = toy_domain(rng, 10, 10);
  const auto fs = random_fields(rng, d, 4);
  const KernelSpec a{SampleKernel{fs}};
  const KernelSpec b{GaussianKernel{{1, FeatureClass::Pose}, 0.5, 8.0}};
  const KernelSpec sum{SumKernel{{a, b}}};
  const Eigen::MatrixXd oracle = assemble_kernel(a, *d) + assemble_kernel(b, *d);
  CHECK((assemble_kernel(sum, *d) - oracle).norm() < 1e-12);
  const auto gp = build_low_rank(sum, empirical_mean(fs), 200).gp;
  CHECK((gp.covariance() - oracle).norm() <= 1e-6 * oracle.norm());
  CHECK(max_orthonormality_error(gp.basis()) < 1e-6);
  CHECK(gp.eigenvalues().sum() == doctest::Approx(oracle.trace()).epsilon(1e-6));
}

TEST_CASE("sampling") {
  CounterRng rng(38);
  const auto d = toy_domain(rng, 4, 0);
  const auto fs = random_fields(rng, d, 6);
  const auto gp = build_low_rank(KernelSpec{SampleKernel{fs}}, empirical_mean(fs), 5).gp;
  const std::vector<double> zero(5, 0.0);
  CHECK(sample(gp, zero).values() == gp.mean());
  const std::vector<double> e1{1.0};
  CHECK((sample(gp, e1).values() - gp.mean() - std::sqrt(gp.eigenvalues()(0)) * gp.basis().col(0))
            .cwiseAbs().maxCoeff() < 1e-14);
  const std::vector<double> too_long(6, 0.0);
  CHECK_THROWS_AS(sample(gp, too_long), InvalidParams);

  // Linearity.
  const std::vector<double> a{0.5, -1.0, 2.0}, b{1.5, 0.25, -0.5, 1.0};
  std::vector<double> ab(4);
  for (int i = 0; i < 4; ++i) ab[i] = (i < 3 ? a[i] : 0.0) + b[i];
  const Eigen::VectorXd lhs = sample(gp, ab).values() - gp.mean();
  const Eigen::VectorXd rhs = (sample(gp, a).values() - gp.mean()) + (sample(gp, b).values() - gp.mean());
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);

  // Monte Carlo covariance diagonal.
  std::normal_distribution<double> n(0.0, 1.0);
  const int draws = 50000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d->dimension()), sq = sum;
  std::vector<double> alpha(5);
  for (int s = 0; s < draws; ++s) {
    for (auto& x : alpha) x = n(rng);
    const Eigen::VectorXd v = sample(gp, alpha).values();
    sum += v;
    sq += v.cwiseProduct(v);
  }
  const Eigen::VectorXd mean = sum / draws;
  const Eigen::VectorXd var = sq / draws - mean.cwiseProduct(mean);
  const Eigen::VectorXd expected = gp.covariance().diagonal();
  for (Eigen::Index k = 0; k < var.size(); ++k)
    CHECK(std::abs(var(k) - expected(k)) <= 0.03 * expected(k));
}

TEST_CASE("marginalize") {
  CounterRng rng(39);
  const auto d = toy_domain(rng, 10, 5, 2);  // 30 points
  REQUIRE(d->size() == 30);
  const auto fs = random_fields(rng, d, 8);
  const auto gp = build_low_rank(KernelSpec{SampleKernel{fs}}, empirical_mean(fs), 7).gp;
  const Eigen::MatrixXd full = gp.covariance();

  const auto all = marginalize(gp, BlockSelector{});
  CHECK((all.covariance() - full).cwiseAbs().maxCoeff() < 1e-8);

  for (const BlockSelector sel : {BlockSelector{std::nullopt, FeatureClass::Shape},
                                  BlockSelector{std::nullopt, FeatureClass::Pose},
                                  BlockSelector{2, std::nullopt},
                                  BlockSelector{1, FeatureClass::Pose}}) {
    const auto m = marginalize(gp, sel);
    const auto rows = selected_value_indices(*d, sel);
    const auto n = static_cast<Eigen::Index>(rows.size());
    REQUIRE(m.domain().dimension() == n);
    Eigen::MatrixXd oracle(n, n);
    Eigen::VectorXd mean(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mean(i) = gp.mean()(rows[i]);
      for (Eigen::Index j = 0; j < n; ++j) oracle(i, j) = full(rows[i], rows[j]);
    }
    CHECK(m.mean() == mean);
    CHECK((m.covariance() - oracle).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(max_orthonormality_error(m.basis()) < 1e-6);
  }
  const BlockSelector missing{9, std::nullopt};
  CHECK_THROWS_AS(marginalize(gp, missing), EmptySelection);
}

TEST_CASE("augment_kernel") {
  CounterRng rng(40);
  const auto d = toy_domain(rng, 12, 8);  // 20 points
  const auto fs = random_fields(rng, d, 5);
  const auto gp = build_low_rank(KernelSpec{SampleKernel{fs}}, empirical_mean(fs), 4).gp;

  const KernelSpec tiny{GaussianKernel{{1, FeatureClass::Shape}, 1e-14, 5.0}};
  const auto same = augment_kernel(gp, tiny, 4).gp;
  CHECK((same.covariance() - gp.covariance()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(same.mean() == gp.mean());

  const KernelSpec extra{GaussianKernel{{1, FeatureClass::Shape}, 2.0, 10.0}};
  const auto aug = augment_kernel(gp, extra, 200).gp;
  const Eigen::MatrixXd oracle = gp.covariance() + assemble_kernel(extra, *d);
  CHECK((aug.covariance() - oracle).norm() <= 1e-6 * oracle.norm());
  const KernelSpec nowhere{GaussianKernel{{5, {}}, 1.0, 1.0}};
  CHECK_THROWS_AS(augment_kernel(gp, nowhere, 3), EmptySelection);
}

TEST_CASE("nystrom extension") {
  CounterRng rng(41);
  const auto d = toy_domain(rng, 6, 3);
  const auto fs = random_fields(rng, d, 5);
  const KernelSpec sk{SampleKernel{fs}};
  const auto gp = build_low_rank(sk, empirical_mean(fs), 4).gp;
  for (Eigen::Index i = 0; i < d->size(); ++i) {
    const auto ext = nystrom_extend(gp, sk, d->point(i));
    for (Eigen::Index m = 0; m < gp.rank(); ++m)
      CHECK((ext[m] - gp.basis().col(m).segment<3>(3 * i)).norm() < 1e-10);
  }
  CHECK_THROWS_AS(nystrom_extend(gp, sk, Vec3(1e6, 0, 0)), DomainMismatch);

  // Smooth Gaussian kernel on a 1D grid; midpoint against a refined grid.
  const int coarse = 21;
  PointSet line(3, coarse), fine(3, 2 * coarse - 1);
  for (int i = 0; i < coarse; ++i) line.col(i) = Vec3(0.5 * i, 0, 0);
  for (int i = 0; i < 2 * coarse - 1; ++i) fine.col(i) = Vec3(0.25 * i, 0, 0);
  auto dc = std::make_shared<const LabeledDomain>(std::vector<DomainBlock>{{1, FeatureClass::Shape, line}});
  auto df = std::make_shared<const LabeledDomain>(std::vector<DomainBlock>{{1, FeatureClass::Shape, fine}});
  const KernelSpec gk{GaussianKernel{{}, 1.0, 4.0}};
  const auto gc = build_low_rank(gk, DeformationField::zero(dc), 3).gp;
  const auto gf = build_low_rank(gk, DeformationField::zero(df), 3).gp;
  for (Eigen::Index i = 0; i < coarse; ++i) {
    const auto ext = nystrom_extend(gc, gk, line.col(i));
    CHECK((ext[0] - gc.basis().col(0).segment<3>(3 * i)).norm() < 1e-6 * gc.basis().col(0).norm());
  }
  // Component of the leading eigenfunction (x axis); compare shapes after
  // matching the normalization on the shared nodes.
  auto coarse_x = [&](Eigen::Index i) { return gc.basis()(3 * i, 0); };
  // The leading eigenvalue is triple (one per axis); pick the fine-grid x-axis column.
  Eigen::Index fx = 0;
  for (Eigen::Index m = 0; m < 3; ++m)
    if (std::abs(gf.basis()(0, m)) > 1e-6) fx = m;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < coarse; ++i) {
    num += gf.basis()(3 * (2 * i), fx) * coarse_x(i);
    den += coarse_x(i) * coarse_x(i);
  }
  const double scale = num / den;
  const double peak = gf.basis().col(fx).cwiseAbs().maxCoeff();
  for (int i = 0; i + 1 < coarse; ++i) {
    const Vec3 mid = 0.5 * (line.col(i) + line.col(i + 1));
    const double value = nystrom_extend(gc, gk, mid)[0].x();
    const double lo = std::min(coarse_x(i), coarse_x(i + 1));
    const double hi = std::max(coarse_x(i), coarse_x(i + 1));
    CHECK(value >= lo - 1e-12);
    CHECK(value <= hi + 1e-12);
    CHECK(std::abs(scale * value - gf.basis()(3 * (2 * i + 1), fx)) < 1e-2 * peak);
  }
}

TEST_CASE("project inverts sampling") {
  CounterRng rng(42);
  const auto d = toy_domain(rng, 5, 2);
  const auto fs = random_fields(rng, d, 6);
  const auto gp = build_low_rank(KernelSpec{SampleKernel{fs}}, empirical_mean(fs), 5).gp;
  const std::vector<double> alpha{0.3, -1.2, 0.7, 0.1, 2.0};
  const auto a = project(gp, sample(gp, alpha).values());
  for (int m = 0; m < 5; ++m) CHECK(std::abs(a(m) - alpha[m]) < 1e-10);
}
