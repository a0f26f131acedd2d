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

#include "dmo/gp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "dmo/errors.hpp"

namespace dmo {

std::string to_string(FeatureClass feature) {
  return feature == FeatureClass::Shape ? "shape" : "pose";
}

FeatureClass parse_feature_class(const std::string& text) {
  if (text == "shape") return FeatureClass::Shape;
  if (text == "pose") return FeatureClass::Pose;
  throw InvalidParams("unknown feature class '" + text + "'");
}

// ---------------------------------------------------------------------------
// LabeledDomain

LabeledDomain::LabeledDomain(std::vector<DomainBlock> blocks) : blocks_(std::move(blocks)) {
  offsets_.reserve(blocks_.size() + 1);
  offsets_.push_back(0);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    for (std::size_t c = 0; c < b; ++c) {
      if (blocks_[c].object_id == blocks_[b].object_id &&
          blocks_[c].feature == blocks_[b].feature) {
        throw InvalidParams("duplicate domain block (object " +
                            std::to_string(blocks_[b].object_id) + ", " +
                            to_string(blocks_[b].feature) + ")");
      }
    }
    if (!blocks_[b].points.allFinite()) throw InvalidParams("non-finite domain point");
    offsets_.push_back(offsets_.back() + blocks_[b].points.cols());
  }
}

std::optional<std::size_t> LabeledDomain::find(int object_id, FeatureClass feature) const {
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    if (blocks_[b].object_id == object_id && blocks_[b].feature == feature) return b;
  }
  return std::nullopt;
}

std::size_t LabeledDomain::block_of(Eigen::Index point) const {
  if (point < 0 || point >= size()) throw InvalidParams("point index out of range");
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), point);
  return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

Vec3 LabeledDomain::point(Eigen::Index index) const {
  const std::size_t b = block_of(index);
  return blocks_[b].points.col(index - offsets_[b]);
}

PointSet LabeledDomain::points() const {
  PointSet all(3, size());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    all.middleCols(offsets_[b], blocks_[b].points.cols()) = blocks_[b].points;
  }
  return all;
}

bool LabeledDomain::operator==(const LabeledDomain& other) const {
  if (blocks_.size() != other.blocks_.size()) return false;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& x = blocks_[b];
    const auto& y = other.blocks_[b];
    if (x.object_id != y.object_id || x.feature != y.feature ||
        x.points.cols() != y.points.cols() || x.points != y.points) {
      return false;
    }
  }
  return true;
}

bool same_domain(const DomainPtr& a, const DomainPtr& b) {
  return a == b || (a && b && *a == *b);
}

std::vector<Eigen::Index> selected_value_indices(const LabeledDomain& domain,
                                                 const BlockSelector& selector) {
  std::vector<Eigen::Index> out;
  for (std::size_t b = 0; b < domain.block_count(); ++b) {
    if (!selector.matches(domain.block(b))) continue;
    const Eigen::Index begin = 3 * domain.point_offset(b);
    for (Eigen::Index k = 0; k < 3 * domain.block_size(b); ++k) out.push_back(begin + k);
  }
  return out;
}

namespace {

std::vector<Eigen::Index> selected_points(const LabeledDomain& domain,
                                          const BlockSelector& selector) {
  std::vector<Eigen::Index> out;
  for (std::size_t b = 0; b < domain.block_count(); ++b) {
    if (!selector.matches(domain.block(b))) continue;
    for (Eigen::Index k = 0; k < domain.block_size(b); ++k) {
      out.push_back(domain.point_offset(b) + k);
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// DeformationField

DeformationField::DeformationField(DomainPtr domain, Eigen::VectorXd values)
    : domain_(std::move(domain)), values_(std::move(values)) {
  if (!domain_) throw InvalidParams("deformation field without a domain");
  if (values_.size() != domain_->dimension()) {
    throw DomainMismatch("field has " + std::to_string(values_.size()) +
                         " values, domain needs " + std::to_string(domain_->dimension()));
  }
  if (!values_.allFinite()) throw InvalidParams("non-finite deformation value");
}

DeformationField DeformationField::zero(DomainPtr domain) {
  const Eigen::Index n = domain ? domain->dimension() : 0;
  return {std::move(domain), Eigen::VectorXd::Zero(n)};
}

PointSet DeformationField::block_values(std::size_t b) const {
  const Eigen::Index offset = domain_->point_offset(b);
  const Eigen::Index count = domain_->block_size(b);
  return Eigen::Map<const PointSet>(values_.data() + 3 * offset, 3, count);
}

DeformationField empirical_mean(std::span<const DeformationField> fields) {
  if (fields.empty()) throw InvalidParams("empirical mean of no fields");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(fields[0].values().size());
  for (const auto& f : fields) {
    if (!same_domain(f.domain_ptr(), fields[0].domain_ptr())) {
      throw DomainMismatch("fields live on different domains");
    }
    sum += f.values();
  }
  return {fields[0].domain_ptr(), sum / static_cast<double>(fields.size())};
}

// ---------------------------------------------------------------------------
// Kernels

double GaussianKernel::operator()(const Vec3& x, const Vec3& y) const {
  return scale * std::exp(-(x - y).squaredNorm() / (sigma * sigma));
}

void KernelSpec::validate() const {
  std::visit(
      [](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, SampleKernel>) {
          if (k.fields.empty()) throw InvalidParams("sample kernel without fields");
        } else if constexpr (std::is_same_v<K, GaussianKernel>) {
          if (!(k.scale > 0.0) || !(k.sigma > 0.0)) {
            throw InvalidParams("gaussian kernel needs s > 0 and sigma > 0");
          }
        } else {
          if (k.terms.size() < 2) throw InvalidParams("sum kernel needs at least two terms");
          for (const auto& t : k.terms) t.validate();
        }
      },
      term);
}

namespace {

Eigen::MatrixXd centered_data(const SampleKernel& k, const LabeledDomain& domain) {
  const auto mean = empirical_mean(k.fields);
  if (!(mean.domain() == domain)) throw DomainMismatch("sample kernel domain differs");
  const auto n = static_cast<Eigen::Index>(k.fields.size());
  Eigen::MatrixXd x(domain.dimension(), n);
  for (Eigen::Index i = 0; i < n; ++i) x.col(i) = k.fields[i].values() - mean.values();
  return x / std::sqrt(static_cast<double>(n));
}

void add_assembled(const KernelSpec& kernel, const LabeledDomain& domain, Eigen::MatrixXd& out) {
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, SampleKernel>) {
          const Eigen::MatrixXd x = centered_data(k, domain);
          out.noalias() += x * x.transpose();
        } else if constexpr (std::is_same_v<K, GaussianKernel>) {
          const auto idx = selected_points(domain, k.selector);
          if (idx.empty()) throw EmptySelection("gaussian kernel selects no block");
          for (auto i : idx) {
            const Vec3 xi = domain.point(i);
            for (auto j : idx) {
              const double v = k(xi, domain.point(j));
              for (int a = 0; a < 3; ++a) out(3 * i + a, 3 * j + a) += v;
            }
          }
        } else {
          for (const auto& t : k.terms) add_assembled(t, domain, out);
        }
      },
      kernel.term);
}

// Low-rank factor L with K ~ L L^T. Dense pieces are 3n x p; lifted pieces are
// scalar n x r factors that act as S (x) I_3, i.e. one copy per axis.
struct Factor {
  std::vector<Eigen::MatrixXd> dense;
  std::vector<Eigen::MatrixXd> lifted;
};

// Scalar factor of a Gaussian kernel on a point subset, scattered into n rows.
Eigen::MatrixXd gaussian_factor(const GaussianKernel& k, const LabeledDomain& domain,
                                const LowRankOptions& options) {
  const auto idx = selected_points(domain, k.selector);
  if (idx.empty()) throw EmptySelection("gaussian kernel selects no block");
  const auto m = static_cast<Eigen::Index>(idx.size());
  PointSet pts(3, m);
  for (Eigen::Index i = 0; i < m; ++i) pts.col(i) = domain.point(idx[i]);

  auto gram = [&](const PointSet& a, const PointSet& b) {
    Eigen::MatrixXd g(a.cols(), b.cols());
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index i = 0; i < a.cols(); ++i) g(i, j) = k(a.col(i), b.col(j));
    return g;
  };

  Eigen::MatrixXd local;
  if (m <= options.max_landmarks) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram(pts, pts));
    const Eigen::VectorXd lam = es.eigenvalues();
    const double floor = options.tolerance * lam.maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < lam.size(); ++i)
      if (lam(i) > floor && lam(i) > 0.0) keep.push_back(i);
    local.resize(m, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c)
      local.col(c) = es.eigenvectors().col(keep[c]) * std::sqrt(lam(keep[c]));
  } else {
    // Nystrom: K ~ K_nm K_mm^-1 K_mn on farthest-point landmarks.
    const auto lm = farthest_point_subsample(pts, options.max_landmarks);
    const PointSet landmarks = gather(pts, lm);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram(landmarks, landmarks));
    const Eigen::VectorXd lam = es.eigenvalues();
    const double floor = 1e-12 * lam.maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < lam.size(); ++i)
      if (lam(i) > floor && lam(i) > 0.0) keep.push_back(i);
    Eigen::MatrixXd w(landmarks.cols(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c)
      w.col(c) = es.eigenvectors().col(keep[c]) / std::sqrt(lam(keep[c]));
    local = gram(pts, landmarks) * w;
  }
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(domain.size(), local.cols());
  for (Eigen::Index i = 0; i < m; ++i) full.row(idx[i]) = local.row(i);
  return full;
}

void collect_factor(const KernelSpec& kernel, const LabeledDomain& domain,
                    const LowRankOptions& options, Factor& out) {
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, SampleKernel>) {
          out.dense.push_back(centered_data(k, domain));
        } else if constexpr (std::is_same_v<K, GaussianKernel>) {
          out.lifted.push_back(gaussian_factor(k, domain, options));
        } else {
          for (const auto& t : k.terms) collect_factor(t, domain, options, out);
        }
      },
      kernel.term);
}

// Rows of a 3n dense block belonging to one axis, as an n x p matrix.
Eigen::MatrixXd axis_rows(const Eigen::MatrixXd& dense, int axis) {
  const Eigen::Index n = dense.rows() / 3;
  Eigen::MatrixXd out(n, dense.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = dense.row(3 * i + axis);
  return out;
}

void orthonormalize(Eigen::MatrixXd& q) {
  // Two passes of modified Gram-Schmidt.
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      for (Eigen::Index i = 0; i < j; ++i) q.col(j) -= q.col(i).dot(q.col(j)) * q.col(i);
      const double norm = q.col(j).norm();
      if (norm > 0.0) q.col(j) /= norm;
    }
  }
}

void fix_signs(Eigen::MatrixXd& q) {
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    const double biggest = q.col(j).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      if (std::abs(q(i, j)) > 1e-8 * biggest) {
        if (q(i, j) < 0.0) q.col(j) = -q.col(j);
        break;
      }
    }
  }
}

struct EigenPairs {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

// Leading eigenpairs of L L^T via the snapshot method on L^T L.
EigenPairs eigen_from_factor(const Factor& f, Eigen::Index n, Eigen::Index rank,
                             double tolerance) {
  Eigen::Index total_dense = 0;
  for (const auto& d : f.dense) total_dense += d.cols();
  Eigen::Index total_scalar = 0;
  for (const auto& s : f.lifted) total_scalar += s.cols();

  Eigen::MatrixXd dense(3 * n, total_dense);
  for (Eigen::Index c = 0; const auto& d : f.dense) {
    dense.middleCols(c, d.cols()) = d;
    c += d.cols();
  }
  Eigen::MatrixXd scalar(n, total_scalar);
  for (Eigen::Index c = 0; const auto& s : f.lifted) {
    scalar.middleCols(c, s.cols()) = s;
    c += s.cols();
  }

  struct Candidate {
    double value;
    Eigen::VectorXd dense_coeffs;
    Eigen::VectorXd scalar_coeffs[3];
  };
  std::vector<Candidate> candidates;
  const Eigen::MatrixXd ss = scalar.transpose() * scalar;

  if (total_dense == 0) {
    // Purely lifted factor: the Gram matrix is block diagonal with three
    // identical scalar blocks, so solve once and replicate per axis.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ss);
    for (Eigen::Index i = ss.rows() - 1; i >= 0; --i) {
      for (int a = 0; a < 3; ++a) {
        Candidate c{es.eigenvalues()(i), Eigen::VectorXd(0), {}};
        for (int b = 0; b < 3; ++b) {
          c.scalar_coeffs[b] = b == a ? Eigen::VectorXd(es.eigenvectors().col(i))
                                      : Eigen::VectorXd::Zero(total_scalar);
        }
        candidates.push_back(std::move(c));
      }
    }
  } else {
    const Eigen::Index r = total_dense + 3 * total_scalar;
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(r, r);
    g.topLeftCorner(total_dense, total_dense).noalias() = dense.transpose() * dense;
    for (int a = 0; a < 3 && total_scalar > 0; ++a) {
      const Eigen::Index off = total_dense + a * total_scalar;
      const Eigen::MatrixXd cross = axis_rows(dense, a).transpose() * scalar;
      g.block(0, off, total_dense, total_scalar) = cross;
      g.block(off, 0, total_scalar, total_dense) = cross.transpose();
      g.block(off, off, total_scalar, total_scalar) = ss;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    for (Eigen::Index i = r - 1; i >= 0; --i) {
      const auto v = es.eigenvectors().col(i);
      Candidate c{es.eigenvalues()(i), v.head(total_dense), {}};
      for (int a = 0; a < 3; ++a)
        c.scalar_coeffs[a] = v.segment(total_dense + a * total_scalar, total_scalar);
      candidates.push_back(std::move(c));
    }
  }

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& x, const Candidate& y) { return x.value > y.value; });
  const double top = candidates.empty() ? 0.0 : candidates.front().value;
  std::vector<const Candidate*> kept;
  for (const auto& c : candidates) {
    if (static_cast<Eigen::Index>(kept.size()) >= rank) break;
    if (!(c.value > 0.0) || c.value <= tolerance * top) break;
    kept.push_back(&c);
  }

  const auto m_count = static_cast<Eigen::Index>(kept.size());
  EigenPairs out{Eigen::VectorXd(m_count), Eigen::MatrixXd::Zero(3 * n, m_count)};
  for (Eigen::Index m = 0; m < m_count; ++m) {
    const Candidate& c = *kept[static_cast<std::size_t>(m)];
    if (total_dense > 0) out.vectors.col(m).noalias() = dense * c.dense_coeffs;
    for (int a = 0; a < 3 && total_scalar > 0; ++a) {
      if (c.scalar_coeffs[a].isZero(0.0)) continue;
      const Eigen::VectorXd s = scalar * c.scalar_coeffs[a];
      for (Eigen::Index i = 0; i < n; ++i) out.vectors(3 * i + a, m) += s(i);
    }
    out.values(m) = c.value;
    out.vectors.col(m) /= std::sqrt(c.value);
  }
  orthonormalize(out.vectors);
  fix_signs(out.vectors);
  return out;
}

BuildResult finish(DomainPtr domain, Eigen::VectorXd mean, EigenPairs pairs, Eigen::Index rank) {
  BuildResult result;
  result.requested_rank = rank;
  result.rank_deficient = pairs.values.size() < rank;
  result.gp = LowRankGP(std::move(domain), std::move(mean), std::move(pairs.values),
                        std::move(pairs.vectors));
  return result;
}

}  // namespace

Eigen::MatrixXd assemble_kernel(const KernelSpec& kernel, const LabeledDomain& domain) {
  kernel.validate();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(domain.dimension(), domain.dimension());
  add_assembled(kernel, domain, out);
  return out;
}

// ---------------------------------------------------------------------------
// LowRankGP

LowRankGP::LowRankGP(DomainPtr domain, Eigen::VectorXd mean, Eigen::VectorXd eigenvalues,
                     Eigen::MatrixXd basis)
    : domain_(std::move(domain)),
      mean_(std::move(mean)),
      eigenvalues_(std::move(eigenvalues)),
      basis_(std::move(basis)) {
  if (!domain_) throw InvalidParams("gp without a domain");
  const Eigen::Index dim = domain_->dimension();
  if (mean_.size() != dim) throw DomainMismatch("gp mean length differs from domain");
  if (basis_.rows() != dim || basis_.cols() != eigenvalues_.size()) {
    throw InvalidParams("gp basis shape does not match eigenvalues/domain");
  }
  for (Eigen::Index m = 0; m < eigenvalues_.size(); ++m) {
    if (!(eigenvalues_(m) > 0.0)) throw InvalidParams("gp eigenvalues must be positive");
    if (m > 0 && eigenvalues_(m) > eigenvalues_(m - 1)) {
      throw InvalidParams("gp eigenvalues must be non-increasing");
    }
  }
  if (!mean_.allFinite() || !basis_.allFinite()) throw InvalidParams("non-finite gp data");
}

Eigen::MatrixXd LowRankGP::scaled_basis() const {
  return basis_ * eigenvalues_.cwiseSqrt().asDiagonal();
}

Eigen::MatrixXd LowRankGP::covariance() const {
  const Eigen::MatrixXd b = scaled_basis();
  return b * b.transpose();
}

Eigen::VectorXd LowRankGP::sample_values(const Eigen::Ref<const Eigen::VectorXd>& alpha) const {
  if (alpha.size() > rank()) throw InvalidParams("more coefficients than the model rank");
  Eigen::VectorXd out = mean_;
  for (Eigen::Index m = 0; m < alpha.size(); ++m) {
    if (alpha(m) != 0.0) out += (alpha(m) * std::sqrt(eigenvalues_(m))) * basis_.col(m);
  }
  return out;
}

BuildResult build_low_rank(const KernelSpec& kernel, const DeformationField& mean,
                           Eigen::Index rank, const LowRankOptions& options) {
  if (rank < 1) throw InvalidParams("requested rank must be >= 1");
  kernel.validate();
  Factor f;
  collect_factor(kernel, mean.domain(), options, f);
  return finish(mean.domain_ptr(), mean.values(),
                eigen_from_factor(f, mean.size(), rank, options.tolerance), rank);
}

DeformationField sample(const LowRankGP& gp, std::span<const double> alpha) {
  const Eigen::Map<const Eigen::VectorXd> a(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
  return {gp.domain_ptr(), gp.sample_values(a)};
}

LowRankGP marginalize(const LowRankGP& gp, const BlockSelector& selector,
                      const LowRankOptions& options) {
  std::vector<DomainBlock> kept;
  for (const auto& b : gp.domain().blocks())
    if (selector.matches(b)) kept.push_back(b);
  if (kept.empty()) throw EmptySelection("selector keeps no domain block");
  const auto rows = selected_value_indices(gp.domain(), selector);
  auto domain = std::make_shared<const LabeledDomain>(std::move(kept));

  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd mean(n);
  Eigen::MatrixXd restricted(n, gp.rank());
  const Eigen::MatrixXd scaled = gp.scaled_basis();
  for (Eigen::Index i = 0; i < n; ++i) {
    mean(i) = gp.mean()(rows[i]);
    restricted.row(i) = scaled.row(rows[i]);
  }
  if (gp.rank() == 0) {
    return LowRankGP(domain, mean, Eigen::VectorXd(0), Eigen::MatrixXd(n, 0));
  }
  Factor f;
  f.dense.push_back(std::move(restricted));
  auto pairs = eigen_from_factor(f, n / 3, gp.rank(), options.tolerance);
  return LowRankGP(domain, mean, std::move(pairs.values), std::move(pairs.vectors));
}

BuildResult augment_kernel(const LowRankGP& gp, const KernelSpec& extra, Eigen::Index rank,
                           const LowRankOptions& options) {
  if (rank < 1) throw InvalidParams("requested rank must be >= 1");
  extra.validate();
  Factor f;
  if (gp.rank() > 0) f.dense.push_back(gp.scaled_basis());
  collect_factor(extra, gp.domain(), options, f);
  return finish(gp.domain_ptr(), gp.mean(),
                eigen_from_factor(f, gp.domain().size(), rank, options.tolerance), rank);
}

namespace {

// Row block k(x, x_i) for all domain points, as 3 x 3n.
void add_kernel_row(const KernelSpec& kernel, const LabeledDomain& domain, const Vec3& x,
                    Eigen::MatrixXd& row) {
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, SampleKernel>) {
          const PointSet pts = domain.points();
          Eigen::Index node = -1;
          for (Eigen::Index i = 0; i < pts.cols(); ++i) {
            if ((pts.col(i) - x).squaredNorm() <= 1e-24 * (1.0 + x.squaredNorm())) {
              node = i;
              break;
            }
          }
          if (node < 0) throw DomainMismatch("sample kernel is only defined at domain nodes");
          const Eigen::MatrixXd data = centered_data(k, domain);
          row.noalias() += data.middleRows(3 * node, 3) * data.transpose();
        } else if constexpr (std::is_same_v<K, GaussianKernel>) {
          const auto idx = selected_points(domain, k.selector);
          if (idx.empty()) throw EmptySelection("gaussian kernel selects no block");
          for (auto i : idx) {
            const double v = k(x, domain.point(i));
            for (int a = 0; a < 3; ++a) row(a, 3 * i + a) += v;
          }
        } else {
          for (const auto& t : k.terms) add_kernel_row(t, domain, x, row);
        }
      },
      kernel.term);
}

}  // namespace

std::vector<Vec3> nystrom_extend(const LowRankGP& gp, const KernelSpec& kernel, const Vec3& x) {
  kernel.validate();
  Eigen::MatrixXd row = Eigen::MatrixXd::Zero(3, gp.domain().dimension());
  add_kernel_row(kernel, gp.domain(), x, row);
  const Eigen::MatrixXd proj = row * gp.basis();
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(gp.rank()));
  const double floor = gp.rank() > 0 ? 1e-10 * gp.eigenvalues()(0) : 0.0;
  for (Eigen::Index m = 0; m < gp.rank(); ++m) {
    if (gp.eigenvalues()(m) <= floor) throw RankDeficient("eigenvalue below tolerance");
    out.emplace_back(proj.col(m) / gp.eigenvalues()(m));
  }
  return out;
}

Eigen::VectorXd project(const LowRankGP& gp, const Eigen::Ref<const Eigen::VectorXd>& values) {
  if (values.size() != gp.domain().dimension()) throw DomainMismatch("projection length");
  Eigen::VectorXd alpha = gp.basis().transpose() * (values - gp.mean());
  return alpha.cwiseQuotient(gp.eigenvalues().cwiseSqrt());
}

}  // namespace dmo
