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

#include "dmo/mesh.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "dmo/errors.hpp"

namespace dmo {

namespace {

constexpr int kLeafSize = 4;

double box_squared_distance(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  const Vec3 d = (lo - p).cwiseMax(Vec3::Zero()).cwiseMax(p - hi);
  return d.squaredNorm();
}

}  // namespace

void validate_mesh(const TriangleMesh& mesh) {
  if (mesh.faces.size() == 0) return;
  if (mesh.faces.minCoeff() < 0 || mesh.faces.maxCoeff() >= mesh.vertices.cols()) {
    throw InvalidParams("mesh face references a vertex out of range");
  }
}

// Region-based closest point (Ericson, Real-Time Collision Detection 5.1.5).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double denom = d1 - d3;
    return denom > 0.0 ? Vec3(a + (d1 / denom) * ab) : a;
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double denom = d2 - d6;
    return denom > 0.0 ? Vec3(a + (d2 / denom) * ac) : a;
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double denom = (d4 - d3) + (d5 - d6);
    return denom > 0.0 ? Vec3(b + ((d4 - d3) / denom) * (c - b)) : b;
  }

  const double sum = va + vb + vc;
  if (!(sum > 0.0)) {
    // Degenerate (zero-area) triangle: fall back to the closest vertex.
    Vec3 best = a;
    if ((b - p).squaredNorm() < (best - p).squaredNorm()) best = b;
    if ((c - p).squaredNorm() < (best - p).squaredNorm()) best = c;
    return best;
  }
  const double v = vb / sum;
  const double w = vc / sum;
  return a + ab * v + ac * w;
}

ClosestHit closest_point_exhaustive(const TriangleMesh& mesh, const Vec3& p) {
  if (mesh.vertex_count() == 0) throw EmptyMesh("closest point query on empty mesh");
  ClosestHit best;
  best.squared_distance = std::numeric_limits<double>::infinity();
  if (mesh.has_faces()) {
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
      const Vec3 q = closest_point_on_triangle(p, mesh.vertices.col(mesh.faces(0, f)),
                                               mesh.vertices.col(mesh.faces(1, f)),
                                               mesh.vertices.col(mesh.faces(2, f)));
      const double d = (q - p).squaredNorm();
      if (d < best.squared_distance) best = {q, d, f};
    }
  } else {
    for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
      const double d = (mesh.vertices.col(v) - p).squaredNorm();
      if (d < best.squared_distance) best = {mesh.vertices.col(v), d, v};
    }
  }
  return best;
}

MeshIndex::MeshIndex(TriangleMesh mesh) : mesh_(std::move(mesh)) {
  validate_mesh(mesh_);
  if (mesh_.vertex_count() == 0) throw EmptyMesh("cannot index an empty mesh");
  const int count = static_cast<int>(mesh_.has_faces() ? mesh_.face_count()
                                                       : mesh_.vertex_count());
  centroids_.resize(count);
  prim_lo_.resize(count);
  prim_hi_.resize(count);
  for (int i = 0; i < count; ++i) {
    if (mesh_.has_faces()) {
      const Vec3 a = mesh_.vertices.col(mesh_.faces(0, i));
      const Vec3 b = mesh_.vertices.col(mesh_.faces(1, i));
      const Vec3 c = mesh_.vertices.col(mesh_.faces(2, i));
      prim_lo_[i] = a.cwiseMin(b).cwiseMin(c);
      prim_hi_[i] = a.cwiseMax(b).cwiseMax(c);
      centroids_[i] = (a + b + c) / 3.0;
    } else {
      prim_lo_[i] = prim_hi_[i] = centroids_[i] = mesh_.vertices.col(i);
    }
  }
  order_.resize(count);
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * static_cast<std::size_t>(count) / kLeafSize + 2);
  build(0, count);
}

int MeshIndex::build(int begin, int end) {
  Node node;
  node.lo = prim_lo_[order_[begin]];
  node.hi = prim_hi_[order_[begin]];
  for (int i = begin + 1; i < end; ++i) {
    node.lo = node.lo.cwiseMin(prim_lo_[order_[i]]);
    node.hi = node.hi.cwiseMax(prim_hi_[order_[i]]);
  }
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= kLeafSize) {
    nodes_[index].begin = begin;
    nodes_[index].end = end;
    return index;
  }
  int axis = 0;
  (node.hi - node.lo).maxCoeff(&axis);
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     if (centroids_[a](axis) != centroids_[b](axis))
                       return centroids_[a](axis) < centroids_[b](axis);
                     return a < b;
                   });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

double MeshIndex::primitive_distance(int prim, const Vec3& p, Vec3& closest) const {
  if (mesh_.has_faces()) {
    closest = closest_point_on_triangle(p, mesh_.vertices.col(mesh_.faces(0, prim)),
                                        mesh_.vertices.col(mesh_.faces(1, prim)),
                                        mesh_.vertices.col(mesh_.faces(2, prim)));
  } else {
    closest = mesh_.vertices.col(prim);
  }
  return (closest - p).squaredNorm();
}

ClosestHit MeshIndex::closest(const Vec3& p) const {
  ClosestHit best;
  best.squared_distance = std::numeric_limits<double>::infinity();
  // Explicit stack; depth is logarithmic in the primitive count.
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (box_squared_distance(p, node.lo, node.hi) > best.squared_distance) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        Vec3 q;
        const double d = primitive_distance(order_[i], p, q);
        // Ties resolve to the lowest primitive index so results do not
        // depend on traversal order.
        if (d < best.squared_distance ||
            (d == best.squared_distance && order_[i] < best.primitive)) {
          best = {q, d, order_[i]};
        }
      }
      continue;
    }
    const double dl = box_squared_distance(p, nodes_[node.left].lo, nodes_[node.left].hi);
    const double dr = box_squared_distance(p, nodes_[node.right].lo, nodes_[node.right].hi);
    if (dl < dr) {
      stack[top++] = node.right;
      stack[top++] = node.left;
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return best;
}

}  // namespace dmo
