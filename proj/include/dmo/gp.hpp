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

// Low-rank Gaussian processes over discrete vector fields.
//
// A field on a LabeledDomain with n points is stored as a 3n vector with the
// xyz components of each point interleaved. A LowRankGP keeps the mean and the
// leading eigenpairs of the covariance operator (Karhunen-Loeve expansion);
// samples are mean + sum_m alpha_m sqrt(lambda_m) phi_m with alpha ~ N(0, I).

#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "dmo/geometry.hpp"

namespace dmo {

enum class FeatureClass { Shape, Pose };

std::string to_string(FeatureClass feature);
/// Accepts "shape" / "pose"; throws InvalidParams otherwise.
FeatureClass parse_feature_class(const std::string& text);

struct DomainBlock {
  int object_id = 0;
  FeatureClass feature = FeatureClass::Shape;
  PointSet points;
};

/// Ordered union of point blocks. The global point index is the concatenation
/// of the blocks in order.
class LabeledDomain {
 public:
  LabeledDomain() = default;
  /// Throws InvalidParams on duplicate (object_id, feature) pairs.
  explicit LabeledDomain(std::vector<DomainBlock> blocks);

  std::size_t block_count() const { return blocks_.size(); }
  const DomainBlock& block(std::size_t b) const { return blocks_.at(b); }
  const std::vector<DomainBlock>& blocks() const { return blocks_; }
  /// Global index of the first point of block b.
  Eigen::Index point_offset(std::size_t b) const { return offsets_.at(b); }
  Eigen::Index block_size(std::size_t b) const { return blocks_.at(b).points.cols(); }

  Eigen::Index size() const { return offsets_.empty() ? 0 : offsets_.back(); }
  Eigen::Index dimension() const { return 3 * size(); }

  std::optional<std::size_t> find(int object_id, FeatureClass feature) const;
  std::size_t block_of(Eigen::Index point) const;
  Vec3 point(Eigen::Index index) const;
  PointSet points() const;

  bool operator==(const LabeledDomain& other) const;

 private:
  std::vector<DomainBlock> blocks_;
  std::vector<Eigen::Index> offsets_;
};

using DomainPtr = std::shared_ptr<const LabeledDomain>;

/// Selects domain blocks by object and/or feature class; empty fields match
/// anything.
struct BlockSelector {
  std::optional<int> object_id;
  std::optional<FeatureClass> feature;

  bool matches(const DomainBlock& block) const {
    return (!object_id || *object_id == block.object_id) &&
           (!feature || *feature == block.feature);
  }
};

class DeformationField {
 public:
  /// Throws DomainMismatch on a length mismatch, InvalidParams on NaN/Inf.
  DeformationField(DomainPtr domain, Eigen::VectorXd values);
  static DeformationField zero(DomainPtr domain);

  const LabeledDomain& domain() const { return *domain_; }
  const DomainPtr& domain_ptr() const { return domain_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::Index size() const { return domain_->size(); }

  Vec3 at(Eigen::Index point) const { return values_.segment<3>(3 * point); }
  /// Values of block b as a 3 x count point set.
  PointSet block_values(std::size_t b) const;

 private:
  DomainPtr domain_;
  Eigen::VectorXd values_;
};

/// True when both domain pointers refer to equal domains.
bool same_domain(const DomainPtr& a, const DomainPtr& b);

/// Empirical covariance of training fields: (1/n) sum (u_i - mu)(u_i - mu)^T.
struct SampleKernel {
  std::vector<DeformationField> fields;
};

/// s * exp(-|x - y|^2 / sigma^2) * I_3 on pairs of points that both lie in
/// blocks matched by `selector`; zero elsewhere.
struct GaussianKernel {
  BlockSelector selector;
  double scale = 1.0;  // s, mm^2
  double sigma = 1.0;  // mm

  double operator()(const Vec3& x, const Vec3& y) const;
};

struct KernelSpec;

struct SumKernel {
  std::vector<KernelSpec> terms;
};

struct KernelSpec {
  std::variant<SampleKernel, GaussianKernel, SumKernel> term;

  /// Throws InvalidParams on s <= 0, sigma <= 0, or a sum with < 2 terms.
  void validate() const;
};

/// Pointwise mean. Throws InvalidParams on empty input and DomainMismatch if
/// domains differ.
DeformationField empirical_mean(std::span<const DeformationField> fields);

/// Dense 3n x 3n kernel matrix on the domain (small domains / oracles only).
Eigen::MatrixXd assemble_kernel(const KernelSpec& kernel, const LabeledDomain& domain);

class LowRankGP {
 public:
  LowRankGP() = default;
  /// `basis` is 3n x M with orthonormal columns; eigenvalues must be positive
  /// and non-increasing. Throws InvalidParams otherwise.
  LowRankGP(DomainPtr domain, Eigen::VectorXd mean, Eigen::VectorXd eigenvalues,
            Eigen::MatrixXd basis);

  const LabeledDomain& domain() const { return *domain_; }
  const DomainPtr& domain_ptr() const { return domain_; }
  Eigen::Index rank() const { return eigenvalues_.size(); }
  const Eigen::VectorXd& mean() const { return mean_; }
  DeformationField mean_field() const { return {domain_, mean_}; }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  const Eigen::MatrixXd& basis() const { return basis_; }
  DeformationField eigenfield(Eigen::Index m) const { return {domain_, basis_.col(m)}; }

  /// Phi * diag(sqrt(lambda)).
  Eigen::MatrixXd scaled_basis() const;
  /// Dense covariance Phi Lambda Phi^T.
  Eigen::MatrixXd covariance() const;
  /// Mean + scaled_basis * alpha; alpha shorter than the rank is zero-padded.
  Eigen::VectorXd sample_values(const Eigen::Ref<const Eigen::VectorXd>& alpha) const;

 private:
  DomainPtr domain_;
  Eigen::VectorXd mean_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd basis_;
};

struct LowRankOptions {
  /// Relative eigenvalue floor: eigenpairs below tol * lambda_1 are dropped.
  double tolerance = 1e-10;
  /// Analytic kernels on blocks larger than this use a Nystrom factor built
  /// on a farthest-point landmark subset; smaller blocks are exact.
  Eigen::Index max_landmarks = 400;
};

struct BuildResult {
  LowRankGP gp;
  Eigen::Index requested_rank = 0;
  /// Fewer eigenpairs above tolerance than requested.
  bool rank_deficient = false;
};

/// Leading `rank` eigenpairs of `kernel` on the domain of `mean`.
/// Sample kernels use the snapshot (Gram) method; analytic terms use exact or
/// Nystrom factors; sums combine the factors. Throws InvalidParams for
/// rank < 1.
BuildResult build_low_rank(const KernelSpec& kernel, const DeformationField& mean,
                           Eigen::Index rank, const LowRankOptions& options = {});

DeformationField sample(const LowRankGP& gp, std::span<const double> alpha);

/// Restriction of the process to the blocks matched by `selector`, with the
/// eigenbasis re-orthonormalized on the kept indices. Throws EmptySelection.
LowRankGP marginalize(const LowRankGP& gp, const BlockSelector& selector,
                      const LowRankOptions& options = {});

/// Low-rank model of k_gp + k_extra (mean unchanged).
BuildResult augment_kernel(const LowRankGP& gp, const KernelSpec& extra, Eigen::Index rank,
                           const LowRankOptions& options = {});

/// Nystrom extension of every eigenfunction to an arbitrary point x:
/// phi_m(x) = (1/lambda_m) sum_i k(x, x_i) phi_m(x_i). Sample kernels are only
/// defined at domain nodes (DomainMismatch otherwise).
std::vector<Vec3> nystrom_extend(const LowRankGP& gp, const KernelSpec& kernel, const Vec3& x);

/// Coefficients alpha minimizing |mean + scaled_basis alpha - values|.
Eigen::VectorXd project(const LowRankGP& gp, const Eigen::Ref<const Eigen::VectorXd>& values);

/// Indices (into the 3n value vector) of the blocks matched by `selector`.
std::vector<Eigen::Index> selected_value_indices(const LabeledDomain& domain,
                                                 const BlockSelector& selector);

}  // namespace dmo
