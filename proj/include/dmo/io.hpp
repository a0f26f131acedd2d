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

// Persistence: triangle meshes (PLY ascii / binary little-endian, OBJ),
// the single-file model container, and JSON manifests for datasets and
// observations. Every write goes to a temporary file that is renamed into
// place, so readers never see a partial file.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dmo/fitting.hpp"
#include "dmo/mesh.hpp"
#include "dmo/model.hpp"
#include "dmo/synth.hpp"

namespace dmo {

enum class MeshFormat { PlyAscii, PlyBinary, Obj };

/// Format implied by the extension (.obj -> Obj, otherwise PLY binary).
MeshFormat mesh_format_for(const std::filesystem::path& path);

/// Throws IoError, ParseError (line for text, byte offset for binary data)
/// and UnsupportedFeature (non-triangle faces, materials, big-endian PLY).
TriangleMesh read_mesh(const std::filesystem::path& path);
TriangleMesh parse_ply(const std::string& bytes);
TriangleMesh parse_obj(const std::string& text);

void write_mesh(const std::filesystem::path& path, const TriangleMesh& mesh, MeshFormat format);
void write_mesh(const std::filesystem::path& path, const TriangleMesh& mesh);
std::string format_ply(const TriangleMesh& mesh, bool binary);
std::string format_obj(const TriangleMesh& mesh);

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Model container

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string serialize_model(const DmoGpModel& model);
/// Throws ChecksumMismatch (corrupt or truncated data), VersionMismatch and
/// ParseError (not a model container).
DmoGpModel deserialize_model(const std::string& bytes);

void save_model(const std::filesystem::path& path, const DmoGpModel& model);
DmoGpModel load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Manifests

inline constexpr int kSchemaVersion = 1;

struct DatasetFile {
  MotionMode mode = MotionMode::None;
  std::vector<JointParams> params;
  std::vector<MultiObjectExample> examples;
  std::vector<Eigen::Matrix3Xi> faces;
  Eigen::Index head_begin = 0;
  Vec3 center = Vec3::Zero();
  Vec3 axis = Vec3::UnitX();
};

/// Writes `dir/dataset.json` plus one binary PLY per example object (object
/// frame) and one per posed object. Returns the manifest path.
std::filesystem::path write_dataset(const std::filesystem::path& dir, const SynthDataset& dataset);
DatasetFile read_dataset(const std::filesystem::path& manifest);

/// Observation manifest: per object {"type": "none" | "full" | "partial" |
/// "landmarks", "mesh": path, "landmarks": [...]}; optional "truth":
/// {"dataset": path, "index": k}. Relative paths resolve against the
/// manifest's directory.
struct ObservationFile {
  ObservationSpec spec;
  std::optional<std::filesystem::path> truth_dataset;
  std::size_t truth_index = 0;
};

ObservationFile read_observation(const std::filesystem::path& manifest);
void write_observation(const std::filesystem::path& manifest, const ObservationSpec& spec,
                       const std::optional<std::filesystem::path>& truth_dataset = std::nullopt,
                       std::size_t truth_index = 0);

}  // namespace dmo
