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

#include "dmo/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/QR>

#include "dmo/errors.hpp"
#include "dmo/metrics.hpp"

namespace dmo {

BuildResult build_ffd_model(std::span<const PointSet> family, const PointSet& reference,
                            Eigen::Index rank, const std::optional<GaussianKernel>& smoothness,
                            const LowRankOptions& options) {
  auto domain = std::make_shared<const LabeledDomain>(
      std::vector<DomainBlock>{{1, FeatureClass::Shape, reference}});
  std::vector<DeformationField> fields;
  for (const auto& shape : family) {
    if (shape.cols() != reference.cols()) throw DomainMismatch("family member is not in correspondence");
    const PointSet d = shape - reference;
    fields.emplace_back(domain, Eigen::Map<const Eigen::VectorXd>(d.data(), d.size()));
  }
  std::vector<KernelSpec> terms;
  DeformationField mean = DeformationField::zero(domain);
  if (fields.size() >= 2) {
    mean = empirical_mean(fields);
    terms.push_back(KernelSpec{SampleKernel{fields}});
  }
  if (smoothness) {
    GaussianKernel g = *smoothness;
    g.selector = {};
    terms.push_back(KernelSpec{g});
  }
  if (terms.empty()) throw InvalidParams("FFD model needs >= 2 family members or a smoothness kernel");
  const KernelSpec kernel = terms.size() == 1 ? terms.front() : KernelSpec{SumKernel{terms}};
  return build_low_rank(kernel, mean, rank, options);
}

RigidTransform landmark_alignment(const PointSet& target_landmarks, const PointSet& reference_landmarks) {
  return kabsch_align(target_landmarks, reference_landmarks);
}

namespace {

PointSet as_points(const Eigen::VectorXd& v) { return Eigen::Map<const PointSet>(v.data(), 3, v.size() / 3); }

// Barycentric coordinates of q (assumed in the plane of abc); degenerate
// triangles fall back to the nearest corner.
Vec3 barycentric(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& q) {
  const Vec3 e0 = b - a, e1 = c - a, d = q - a;
  const double d00 = e0.dot(e0), d01 = e0.dot(e1), d11 = e1.dot(e1);
  const double den = d00 * d11 - d01 * d01;
  if (!(den > 1e-24 * (d00 + d11) * (d00 + d11))) {
    const double da = (q - a).squaredNorm(), db = (q - b).squaredNorm(), dc = (q - c).squaredNorm();
    if (da <= db && da <= dc) return {1.0, 0.0, 0.0};
    return db <= dc ? Vec3(0.0, 1.0, 0.0) : Vec3(0.0, 0.0, 1.0);
  }
  const double v = (d11 * e0.dot(d) - d01 * e1.dot(d)) / den;
  const double w = (d00 * e1.dot(d) - d01 * e0.dot(d)) / den;
  return {1.0 - v - w, v, w};
}

}  // namespace

CorrespondenceResult register_object(const LowRankGP& model, const Eigen::Matrix3Xi& reference_faces,
                                     const TriangleMesh& target, const RegistrationOptions& options) {
  if (target.vertex_count() == 0) throw EmptyMesh("registration target is empty");
  if (!(options.beta >= 0.0)) throw InvalidParams("beta must be non-negative");
  if (options.max_iterations < 1) throw InvalidParams("need at least one iteration");
  if (model.domain().block_count() != 1) throw DomainMismatch("FFD model must have a single block");

  const PointSet reference = model.domain().block(0).points;
  const TriangleMesh aligned{apply(options.alignment, target.vertices), target.faces};
  const MeshIndex index(aligned);
  const Eigen::MatrixXd scaled = model.scaled_basis();
  const Eigen::VectorXd lambda = model.eigenvalues();

  auto shape_of = [&](const Eigen::VectorXd& alpha) {
    return PointSet(reference + as_points(model.sample_values(alpha)));
  };
  const Eigen::Index rank = model.rank();

  // One evaluation of the current model surface: closest target points for
  // every model vertex and, for the symmetric term, the closest model point
  // for every target vertex as barycentric weights on a model face.
  struct Surrogate {
    double value = 0.0;
    PointSet matches;       // model -> target
    Eigen::MatrixXd gram;   // sum of A^T A over target vertices
    Eigen::VectorXd rhs;    // sum of A^T (y - offset)
  };
  auto evaluate = [&](const Eigen::VectorXd& alpha) {
    Surrogate s;
    const PointSet x = shape_of(alpha);
    s.matches.resize(3, x.cols());
    for (Eigen::Index i = 0; i < x.cols(); ++i) s.matches.col(i) = index.closest(x.col(i)).point;
    s.value = (x - s.matches).squaredNorm() + options.beta * alpha.squaredNorm();
    s.gram = Eigen::MatrixXd::Zero(rank, rank);
    s.rhs = Eigen::VectorXd::Zero(rank);
    if (!options.symmetric) return s;
    const MeshIndex model_index(TriangleMesh{x, reference_faces});
    Eigen::MatrixXd a(3, rank);
    for (Eigen::Index j = 0; j < aligned.vertex_count(); ++j) {
      const Vec3 y = aligned.vertices.col(j);
      const auto hit = model_index.closest(y);
      s.value += hit.squared_distance;
      Eigen::Vector3i corners = Eigen::Vector3i::Constant(static_cast<int>(hit.primitive));
      Vec3 w(1.0, 0.0, 0.0);
      if (reference_faces.cols() > 0) {
        corners = reference_faces.col(hit.primitive);
        w = barycentric(x.col(corners(0)), x.col(corners(1)), x.col(corners(2)), hit.point);
      }
      a.setZero();
      Vec3 offset = Vec3::Zero();
      for (int q = 0; q < 3; ++q) {
        if (w(q) == 0.0) continue;
        const Eigen::Index v = corners(q);
        a += w(q) * scaled.middleRows(3 * v, 3);
        offset += w(q) * (reference.col(v) + model.mean().segment<3>(3 * v));
      }
      s.gram.noalias() += a.transpose() * a;
      s.rhs.noalias() += a.transpose() * (y - offset);
    }
    return s;
  };

  CorrespondenceResult out;
  out.alignment = options.alignment;
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(rank);
  Surrogate current = evaluate(alpha);
  out.objective.push_back(current.value);

  // Plain iteration: fix the correspondences, then minimize the resulting
  // quadratic upper bound of the objective in closed form, so the objective
  // cannot increase. Anderson mixing over recent iterates accelerates the
  // (linearly convergent) plain map; an accelerated candidate is kept only if
  // it beats the plain step.
  const Eigen::VectorXd shrink = lambda + Eigen::VectorXd::Constant(lambda.size(), options.beta);
  auto step = [&](const Surrogate& s) {
    const PointSet residual = s.matches - reference;
    const Eigen::Map<const Eigen::VectorXd> r(residual.data(), residual.size());
    // B^T B = Lambda for the scaled basis B.
    const Eigen::VectorXd g = scaled.transpose() * (r - model.mean()) + s.rhs;
    if (!options.symmetric) return Eigen::VectorXd(g.cwiseQuotient(shrink));
    Eigen::MatrixXd h = s.gram;
    h.diagonal() += shrink;
    return Eigen::VectorXd(h.ldlt().solve(g));
  };
  const int depth = static_cast<int>(std::min<Eigen::Index>(8, rank));
  std::vector<Eigen::VectorXd> hist_g, hist_f;

  for (int it = 0; it < options.max_iterations; ++it) {
    const Eigen::VectorXd plain = step(current);
    hist_g.push_back(plain);
    hist_f.push_back(plain - alpha);
    if (static_cast<int>(hist_g.size()) > depth + 1) {
      hist_g.erase(hist_g.begin());
      hist_f.erase(hist_f.begin());
    }

    Eigen::VectorXd next = plain;
    Surrogate candidate = evaluate(plain);
    if (hist_f.size() >= 2) {
      const auto k = static_cast<Eigen::Index>(hist_f.size()) - 1;
      Eigen::MatrixXd df(rank, k), dg(rank, k);
      for (Eigen::Index i = 0; i < k; ++i) {
        df.col(i) = hist_f[i + 1] - hist_f[i];
        dg.col(i) = hist_g[i + 1] - hist_g[i];
      }
      const Eigen::VectorXd gamma = df.completeOrthogonalDecomposition().solve(hist_f.back());
      const Eigen::VectorXd mixed = plain - dg * gamma;
      if (mixed.allFinite()) {
        Surrogate m = evaluate(mixed);
        if (m.value < candidate.value) {
          next = mixed;
          candidate = std::move(m);
        }
      }
    }

    out.iterations = it + 1;
    if (candidate.value > current.value) {
      // Numerical noise only; keep the better iterate.
      out.converged = true;
      break;
    }
    const double decrease = current.value - candidate.value;
    alpha = next;
    current = std::move(candidate);
    out.objective.push_back(current.value);
    if (decrease < options.tolerance) {
      out.converged = true;
      break;
    }
  }
  const PointSet x = shape_of(alpha);

  out.alpha = alpha;
  out.registered = x;
  const TriangleMesh registered{x, reference_faces};
  out.residual_rms = rms_distance(registered, index);
  out.residual_hausdorff = hausdorff_distance(registered, MeshIndex(registered), aligned, index);
  return out;
}

MultiObjectExample recover_joint(std::span<const CorrespondenceResult> results, std::size_t fixed) {
  if (fixed >= results.size()) throw InvalidParams("fixed object out of range");
  const RigidTransform& t = results[fixed].alignment;
  MultiObjectExample out;
  for (std::size_t j = 0; j < results.size(); ++j) {
    const RigidTransform pose = j == fixed ? RigidTransform::identity() : t * results[j].alignment.inverse();
    out.objects.push_back({results[j].registered, pose});
  }
  return out;
}

}  // namespace dmo
