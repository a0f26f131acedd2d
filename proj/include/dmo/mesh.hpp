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

#pragma once

#include <vector>

#include <Eigen/Core>

#include "dmo/geometry.hpp"

namespace dmo {

/// Triangle surface. `faces` holds vertex indices column-wise; a mesh with no
/// faces is treated as a bare point cloud by the distance queries.
struct TriangleMesh {
  PointSet vertices;
  Eigen::Matrix3Xi faces;

  Eigen::Index vertex_count() const { return vertices.cols(); }
  Eigen::Index face_count() const { return faces.cols(); }
  bool has_faces() const { return faces.cols() > 0; }
};

/// Throws InvalidParams when a face references a missing vertex.
void validate_mesh(const TriangleMesh& mesh);

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c);

struct ClosestHit {
  Vec3 point = Vec3::Zero();
  double squared_distance = 0.0;
  Eigen::Index primitive = -1;
};

/// Closest point on the surface (or nearest vertex for face-less meshes) by
/// scanning every primitive. Reference implementation for MeshIndex.
ClosestHit closest_point_exhaustive(const TriangleMesh& mesh, const Vec3& p);

/// Axis-aligned bounding-box tree over the primitives of a mesh. Holds its own
/// copy of the geometry. Queries are const and thread-safe.
class MeshIndex {
 public:
  explicit MeshIndex(TriangleMesh mesh);

  ClosestHit closest(const Vec3& p) const;
  const TriangleMesh& mesh() const { return mesh_; }

 private:
  struct Node {
    Eigen::Vector3d lo, hi;
    int left = -1;  // children, or -1 for a leaf
    int right = -1;
    int begin = 0;  // leaf primitive range into order_
    int end = 0;
  };

  int build(int begin, int end);
  double primitive_distance(int prim, const Vec3& p, Vec3& closest) const;

  TriangleMesh mesh_;
  std::vector<int> order_;
  std::vector<Eigen::Vector3d> centroids_;
  std::vector<Eigen::Vector3d> prim_lo_, prim_hi_;
  std::vector<Node> nodes_;
};

}  // namespace dmo
