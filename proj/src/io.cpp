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

#include "dmo/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dmo/errors.hpp"

namespace dmo {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Files

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void atomic_write(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::random_device rd;
  const fs::path tmp = path.string() + ".tmp" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("short write to '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move temporary file onto '" + path.string() + "'");
  }
}

namespace {

// Little-endian scalar encoding, independent of the host byte order.
template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const char* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bits |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i));
  return std::bit_cast<T>(bits);
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

bool parse_double(std::string_view token, double& out) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  const auto r = std::from_chars(token.data(), token.data() + token.size(), out);
  return r.ec == std::errc() && r.ptr == token.data() + token.size();
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

TriangleMesh from_vectors(const std::vector<Vec3>& verts, const std::vector<Eigen::Vector3i>& faces) {
  TriangleMesh m;
  m.vertices.resize(3, static_cast<Eigen::Index>(verts.size()));
  for (std::size_t i = 0; i < verts.size(); ++i) m.vertices.col(static_cast<Eigen::Index>(i)) = verts[i];
  m.faces.resize(3, static_cast<Eigen::Index>(faces.size()));
  for (std::size_t i = 0; i < faces.size(); ++i) m.faces.col(static_cast<Eigen::Index>(i)) = faces[i];
  return m;
}

// ---------------------------------------------------------------------------
// PLY

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType ply_type(std::string_view name, std::size_t line) {
  static const std::map<std::string, PlyType, std::less<>> table{
      {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
      {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
      {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
      {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
      {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
      {"float64", PlyType::Float64}};
  const auto it = table.find(name);
  if (it == table.end()) throw ParseError("unknown PLY type '" + std::string(name) + "'", line);
  return it->second;
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::Int8: case PlyType::UInt8: return 1;
    case PlyType::Int16: case PlyType::UInt16: return 2;
    case PlyType::Int32: case PlyType::UInt32: case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

double ply_binary_value(PlyType t, const char* p) {
  switch (t) {
    case PlyType::Int8: return static_cast<double>(static_cast<std::int8_t>(*p));
    case PlyType::UInt8: return static_cast<double>(static_cast<std::uint8_t>(*p));
    case PlyType::Int16: return get_le<std::int16_t>(p);
    case PlyType::UInt16: return get_le<std::uint16_t>(p);
    case PlyType::Int32: return get_le<std::int32_t>(p);
    case PlyType::UInt32: return get_le<std::uint32_t>(p);
    case PlyType::Float32: return get_le<float>(p);
    case PlyType::Float64: return get_le<double>(p);
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
  PlyType type = PlyType::Float64;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

// Sequential reader over the PLY body for either encoding. Positions are
// lines (ascii) or byte offsets (binary).
class PlyBody {
 public:
  PlyBody(const std::string& bytes, std::size_t start, std::size_t line, bool binary)
      : bytes_(bytes), pos_(start), line_(line), binary_(binary) {}

  double next(PlyType type) {
    if (binary_) {
      const std::size_t n = ply_size(type);
      if (pos_ + n > bytes_.size()) throw ParseError("unexpected end of PLY data", pos_);
      const double v = ply_binary_value(type, bytes_.data() + pos_);
      pos_ += n;
      return v;
    }
    while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      if (bytes_[pos_] == '\n') ++line_;
      ++pos_;
    }
    if (pos_ >= bytes_.size()) throw ParseError("unexpected end of PLY data", line_);
    std::size_t end = pos_;
    while (end < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[end]))) ++end;
    double v = 0.0;
    if (!parse_double(std::string_view(bytes_).substr(pos_, end - pos_), v)) {
      throw ParseError("malformed PLY number", line_);
    }
    pos_ = end;
    return v;
  }

  std::size_t position() const { return binary_ ? pos_ : line_; }

 private:
  const std::string& bytes_;
  std::size_t pos_;
  std::size_t line_;
  bool binary_;
};

}  // namespace

TriangleMesh parse_ply(const std::string& bytes) {
  std::size_t pos = 0, line = 0;
  auto next_line = [&]() -> std::string_view {
    if (pos >= bytes.size()) throw ParseError("PLY header is not terminated", line + 1);
    const std::size_t end = bytes.find('\n', pos);
    const std::size_t stop = end == std::string::npos ? bytes.size() : end;
    std::string_view l(bytes.data() + pos, stop - pos);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    pos = end == std::string::npos ? bytes.size() : end + 1;
    ++line;
    return l;
  };

  if (next_line() != "ply") throw ParseError("missing 'ply' magic", 1);
  bool binary = false;
  bool have_format = false;
  std::vector<PlyElement> elements;
  for (;;) {
    const auto l = next_line();
    const auto tok = split_ws(l);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() < 2) throw ParseError("malformed format line", line);
      if (tok[1] == "ascii") binary = false;
      else if (tok[1] == "binary_little_endian") binary = true;
      else if (tok[1] == "binary_big_endian") throw UnsupportedFeature("big-endian PLY is not supported");
      else throw ParseError("unknown PLY format '" + std::string(tok[1]) + "'", line);
      have_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError("malformed element line", line);
      PlyElement e;
      e.name = tok[1];
      double count = 0.0;
      if (!parse_double(tok[2], count) || count < 0 || count != std::floor(count)) {
        throw ParseError("bad element count", line);
      }
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseError("property before any element", line);
      PlyProperty p;
      if (tok.size() == 5 && tok[1] == "list") {
        p.is_list = true;
        p.count_type = ply_type(tok[2], line);
        p.type = ply_type(tok[3], line);
        p.name = tok[4];
      } else if (tok.size() == 3) {
        p.type = ply_type(tok[1], line);
        p.name = tok[2];
      } else {
        throw ParseError("malformed property line", line);
      }
      elements.back().properties.push_back(std::move(p));
    } else {
      throw ParseError("unexpected header keyword '" + std::string(tok[0]) + "'", line);
    }
  }
  if (!have_format) throw ParseError("PLY header lacks a format line", line);

  PlyBody body(bytes, pos, line + 1, binary);
  std::vector<Vec3> verts;
  std::vector<Eigen::Vector3i> faces;
  bool seen_vertices = false;
  for (const auto& e : elements) {
    if (e.name == "vertex") {
      int ix = -1, iy = -1, iz = -1;
      for (std::size_t k = 0; k < e.properties.size(); ++k) {
        const auto& p = e.properties[k];
        if (p.is_list) continue;
        if (p.name == "x") ix = static_cast<int>(k);
        if (p.name == "y") iy = static_cast<int>(k);
        if (p.name == "z") iz = static_cast<int>(k);
      }
      if (ix < 0 || iy < 0 || iz < 0) throw ParseError("vertex element lacks x/y/z", line);
      verts.reserve(e.count);
      std::vector<double> values(e.properties.size());
      for (std::size_t i = 0; i < e.count; ++i) {
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          const auto& p = e.properties[k];
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(body.next(p.count_type));
            for (std::size_t c = 0; c < n; ++c) body.next(p.type);
          } else {
            values[k] = body.next(p.type);
          }
        }
        const Vec3 v(values[ix], values[iy], values[iz]);
        if (!v.allFinite()) throw ParseError("non-finite vertex coordinate", body.position());
        verts.push_back(v);
      }
      seen_vertices = true;
    } else if (e.name == "face") {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.properties) {
          if (!p.is_list) {
            body.next(p.type);
            continue;
          }
          const auto at = body.position();
          const double n = body.next(p.count_type);
          if (p.name != "vertex_indices" && p.name != "vertex_index") {
            for (int c = 0; c < static_cast<int>(n); ++c) body.next(p.type);
            continue;
          }
          if (n != 3) throw UnsupportedFeature("only triangle faces are supported (face with " +
                                               std::to_string(static_cast<long>(n)) + " vertices at " +
                                               std::to_string(at) + ")");
          Eigen::Vector3i f;
          for (int c = 0; c < 3; ++c) {
            const double idx = body.next(p.type);
            if (idx < 0 || idx != std::floor(idx) || (seen_vertices && idx >= static_cast<double>(verts.size()))) {
              throw ParseError("face index out of range", body.position());
            }
            f(c) = static_cast<int>(idx);
          }
          faces.push_back(f);
        }
      }
    } else {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.properties) {
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(body.next(p.count_type));
            for (std::size_t c = 0; c < n; ++c) body.next(p.type);
          } else {
            body.next(p.type);
          }
        }
      }
    }
  }
  auto mesh = from_vectors(verts, faces);
  if (mesh.faces.size() > 0 && mesh.faces.maxCoeff() >= mesh.vertex_count()) {
    throw ParseError("face index out of range", body.position());
  }
  return mesh;
}

TriangleMesh parse_obj(const std::string& text) {
  std::vector<Vec3> verts;
  std::vector<Eigen::Vector3i> faces;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view l(raw);
    if (const auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
    const auto tok = split_ws(l);
    if (tok.empty()) continue;
    const auto& key = tok[0];
    if (key == "v") {
      if (tok.size() != 4 && tok.size() != 5) throw ParseError("vertex needs 3 coordinates", line);
      Vec3 v;
      for (int c = 0; c < 3; ++c)
        if (!parse_double(tok[1 + c], v(c))) throw ParseError("malformed vertex coordinate", line);
      if (!v.allFinite()) throw ParseError("non-finite vertex coordinate", line);
      verts.push_back(v);
    } else if (key == "f") {
      if (tok.size() != 4) {
        throw UnsupportedFeature("only triangle faces are supported (line " + std::to_string(line) + ")");
      }
      Eigen::Vector3i f;
      for (int c = 0; c < 3; ++c) {
        const auto ref = tok[1 + c].substr(0, tok[1 + c].find('/'));
        long idx = 0;
        const auto r = std::from_chars(ref.data(), ref.data() + ref.size(), idx);
        if (r.ec != std::errc() || r.ptr != ref.data() + ref.size() || idx == 0) {
          throw ParseError("malformed face index", line);
        }
        const long n = static_cast<long>(verts.size());
        const long zero_based = idx > 0 ? idx - 1 : n + idx;
        if (zero_based < 0 || zero_based >= n) throw ParseError("face index out of range", line);
        f(c) = static_cast<int>(zero_based);
      }
      faces.push_back(f);
    } else if (key == "mtllib" || key == "usemtl") {
      throw UnsupportedFeature("OBJ materials are not supported (line " + std::to_string(line) + ")");
    } else if (key == "vn" || key == "vt" || key == "o" || key == "g" || key == "s") {
      continue;
    } else {
      throw ParseError("unsupported OBJ record '" + std::string(key) + "'", line);
    }
  }
  return from_vectors(verts, faces);
}

MeshFormat mesh_format_for(const fs::path& path) {
  return path.extension() == ".obj" ? MeshFormat::Obj : MeshFormat::PlyBinary;
}

TriangleMesh read_mesh(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (path.extension() == ".obj") return parse_obj(bytes);
  if (path.extension() == ".ply" || bytes.rfind("ply", 0) == 0) return parse_ply(bytes);
  throw UnsupportedFeature("unknown mesh format '" + path.extension().string() + "'");
}

std::string format_ply(const TriangleMesh& mesh, bool binary) {
  validate_mesh(mesh);
  std::string out = "ply\nformat ";
  out += binary ? "binary_little_endian 1.0\n" : "ascii 1.0\n";
  out += "element vertex " + std::to_string(mesh.vertex_count()) + "\n";
  out += "property double x\nproperty double y\nproperty double z\n";
  out += "element face " + std::to_string(mesh.face_count()) + "\n";
  out += "property list uchar int vertex_indices\nend_header\n";
  if (binary) {
    for (Eigen::Index i = 0; i < mesh.vertex_count(); ++i)
      for (int c = 0; c < 3; ++c) put_le<double>(out, mesh.vertices(c, i));
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
      out.push_back(static_cast<char>(3));
      for (int c = 0; c < 3; ++c) put_le<std::int32_t>(out, mesh.faces(c, f));
    }
  } else {
    for (Eigen::Index i = 0; i < mesh.vertex_count(); ++i) {
      out += format_double(mesh.vertices(0, i)) + ' ' + format_double(mesh.vertices(1, i)) + ' ' +
             format_double(mesh.vertices(2, i)) + '\n';
    }
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
      out += "3 " + std::to_string(mesh.faces(0, f)) + ' ' + std::to_string(mesh.faces(1, f)) + ' ' +
             std::to_string(mesh.faces(2, f)) + '\n';
    }
  }
  return out;
}

std::string format_obj(const TriangleMesh& mesh) {
  validate_mesh(mesh);
  std::string out;
  for (Eigen::Index i = 0; i < mesh.vertex_count(); ++i) {
    out += "v " + format_double(mesh.vertices(0, i)) + ' ' + format_double(mesh.vertices(1, i)) + ' ' +
           format_double(mesh.vertices(2, i)) + '\n';
  }
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    out += "f " + std::to_string(mesh.faces(0, f) + 1) + ' ' + std::to_string(mesh.faces(1, f) + 1) + ' ' +
           std::to_string(mesh.faces(2, f) + 1) + '\n';
  }
  return out;
}

void write_mesh(const fs::path& path, const TriangleMesh& mesh, MeshFormat format) {
  switch (format) {
    case MeshFormat::PlyAscii: atomic_write(path, format_ply(mesh, false)); break;
    case MeshFormat::PlyBinary: atomic_write(path, format_ply(mesh, true)); break;
    case MeshFormat::Obj: atomic_write(path, format_obj(mesh)); break;
  }
}

void write_mesh(const fs::path& path, const TriangleMesh& mesh) {
  write_mesh(path, mesh, mesh_format_for(path));
}

// ---------------------------------------------------------------------------
// Model container
//
// Layout: "DMOGPM\0\0" | u32 version | u64 manifest bytes | manifest JSON |
// u64 array doubles | float64 LE arrays | u64 FNV-1a of manifest + arrays.

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

constexpr char kMagic[8] = {'D', 'M', 'O', 'G', 'P', 'M', '\0', '\0'};

class ArrayWriter {
 public:
  void add(const std::string& name, const double* data, std::size_t count) {
    table_.push_back({{"name", name}, {"offset", values_.size()}, {"count", count}});
    values_.insert(values_.end(), data, data + count);
  }
  template <typename Derived>
  void add(const std::string& name, const Eigen::DenseBase<Derived>& m) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic> copy = m.template cast<double>();
    add(name, copy.data(), static_cast<std::size_t>(copy.size()));
  }
  const json& table() const { return table_; }
  const std::vector<double>& values() const { return values_; }

 private:
  json table_ = json::array();
  std::vector<double> values_;
};

class ArrayReader {
 public:
  ArrayReader(const json& table, std::vector<double> values) : values_(std::move(values)) {
    std::size_t expected = 0;
    for (const auto& entry : table) {
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = entry.at("count").get<std::size_t>();
      if (offset != expected) throw ParseError("model arrays do not partition the data region", offset);
      expected += count;
      index_[entry.at("name").get<std::string>()] = {offset, count};
    }
    if (expected != values_.size()) throw ParseError("model arrays do not cover the data region", expected);
  }

  std::span<const double> get(const std::string& name, std::size_t expected_count) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ParseError("model array '" + name + "' is missing", 0);
    if (it->second.second != expected_count) throw ParseError("model array '" + name + "' has the wrong size", 0);
    return {values_.data() + it->second.first, it->second.second};
  }

  Eigen::MatrixXd matrix(const std::string& name, Eigen::Index rows, Eigen::Index cols) const {
    const auto s = get(name, static_cast<std::size_t>(rows * cols));
    return Eigen::Map<const Eigen::MatrixXd>(s.data(), rows, cols);
  }

 private:
  std::vector<double> values_;
  std::map<std::string, std::pair<std::size_t, std::size_t>> index_;
};

std::string object_key(std::size_t j, const char* what) { return "object" + std::to_string(j + 1) + "/" + what; }

}  // namespace

std::string serialize_model(const DmoGpModel& model) {
  ArrayWriter arrays;
  json objects = json::array();
  const auto& ref = model.reference();
  for (std::size_t j = 0; j < ref.object_count(); ++j) {
    const auto& o = ref.object(j);
    objects.push_back({{"vertices", o.shape.cols()},
                       {"faces", o.faces.cols()},
                       {"pose_points", o.pose_indices.size()}});
    arrays.add(object_key(j, "shape"), o.shape);
    Eigen::VectorXd idx(static_cast<Eigen::Index>(o.pose_indices.size()));
    for (std::size_t k = 0; k < o.pose_indices.size(); ++k) idx(static_cast<Eigen::Index>(k)) = static_cast<double>(o.pose_indices[k]);
    arrays.add(object_key(j, "pose_indices"), idx);
    arrays.add(object_key(j, "faces"), o.faces);
  }
  arrays.add("full_mean", model.full_mean());
  Eigen::MatrixXd poses(12, static_cast<Eigen::Index>(model.base_poses().size()));
  for (std::size_t j = 0; j < model.base_poses().size(); ++j) {
    const auto& h = model.base_poses()[j];
    poses.col(static_cast<Eigen::Index>(j)) << Eigen::Map<const Eigen::VectorXd>(h.rotation().data(), 9),
        h.translation();
  }
  arrays.add("base_poses", poses);
  arrays.add("gp/mean", model.gp().mean());
  arrays.add("gp/eigenvalues", model.gp().eigenvalues());
  arrays.add("gp/basis", model.gp().basis());

  json blocks = json::array();
  const auto& dom = *model.full_domain();
  for (std::size_t b = 0; b < dom.block_count(); ++b) {
    blocks.push_back({{"object_id", dom.block(b).object_id},
                      {"feature", to_string(dom.block(b).feature)},
                      {"points", dom.block_size(b)},
                      {"offset", dom.point_offset(b)}});
  }
  json gp_blocks = json::array();
  for (const auto& b : model.gp().domain().blocks())
    gp_blocks.push_back({{"object_id", b.object_id}, {"feature", to_string(b.feature)}});

  const auto& enc = model.encoding();
  const json manifest = {
      {"format", "dmogpm-model"},
      {"format_version", kModelFormatVersion},
      {"n", model.example_count()},
      {"N", ref.object_count()},
      {"rank", model.rank()},
      {"pose_representation", to_string(enc.representation)},
      {"sr_scale_weight", enc.sr_scale_weight},
      {"shape_weight", enc.shape_weight},
      {"pose_weight", enc.pose_weight},
      {"objects", objects},
      {"blocks", blocks},
      {"gp_blocks", gp_blocks},
      {"arrays", arrays.table()},
  };
  const std::string text = manifest.dump();

  std::string payload = text;
  for (double v : arrays.values()) put_le<double>(payload, v);
  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kModelFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  put_le<std::uint64_t>(out, arrays.values().size());
  out.append(payload, text.size(), std::string::npos);
  put_le<std::uint64_t>(out, fnv1a64(payload.data(), payload.size()));
  return out;
}

DmoGpModel deserialize_model(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 4 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw ParseError("not a model container", 0);
  }
  std::size_t pos = sizeof kMagic;
  const auto version = get_le<std::uint32_t>(bytes.data() + pos);
  pos += 4;
  if (version != kModelFormatVersion) {
    throw VersionMismatch("model format version " + std::to_string(version) + ", expected " +
                          std::to_string(kModelFormatVersion));
  }
  auto need = [&](std::size_t n) {
    if (bytes.size() < pos || bytes.size() - pos < n) throw ChecksumMismatch("model file is truncated");
  };
  need(8);
  const auto manifest_size = get_le<std::uint64_t>(bytes.data() + pos);
  pos += 8;
  need(manifest_size);
  const std::size_t manifest_begin = pos;
  pos += manifest_size;
  need(8);
  const auto count = get_le<std::uint64_t>(bytes.data() + pos);
  pos += 8;
  if (count > bytes.size() / 8) throw ChecksumMismatch("model file is truncated");
  need(8 * count + 8);
  const std::size_t array_begin = pos;
  const std::size_t checksum_at = array_begin + 8 * count;

  std::string payload = bytes.substr(manifest_begin, manifest_size);
  payload.append(bytes, array_begin, 8 * count);
  if (fnv1a64(payload.data(), payload.size()) != get_le<std::uint64_t>(bytes.data() + checksum_at)) {
    throw ChecksumMismatch("model checksum does not match its contents");
  }
  if (checksum_at + 8 != bytes.size()) throw ChecksumMismatch("trailing bytes after the model checksum");

  json manifest;
  try {
    manifest = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(manifest_begin),
                           bytes.begin() + static_cast<std::ptrdiff_t>(manifest_begin + manifest_size));
  } catch (const json::exception& e) {
    throw ParseError(std::string("model manifest: ") + e.what(), manifest_begin);
  }

  try {
    if (manifest.at("format_version").get<std::uint32_t>() != kModelFormatVersion) {
      throw VersionMismatch("manifest format version differs from the header");
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) values[i] = get_le<double>(bytes.data() + array_begin + 8 * i);
    const ArrayReader arrays(manifest.at("arrays"), std::move(values));

    std::vector<ReferenceObject> objects;
    const auto& objs = manifest.at("objects");
    for (std::size_t j = 0; j < objs.size(); ++j) {
      const auto nv = objs[j].at("vertices").get<Eigen::Index>();
      const auto nf = objs[j].at("faces").get<Eigen::Index>();
      const auto nk = objs[j].at("pose_points").get<Eigen::Index>();
      ReferenceObject o;
      o.shape = arrays.matrix(object_key(j, "shape"), 3, nv);
      const auto idx = arrays.get(object_key(j, "pose_indices"), static_cast<std::size_t>(nk));
      for (double v : idx) o.pose_indices.push_back(static_cast<Eigen::Index>(v));
      o.faces = arrays.matrix(object_key(j, "faces"), 3, nf).cast<int>();
      objects.push_back(std::move(o));
    }
    ReferenceJoint reference(std::move(objects));

    PoseEncoding enc;
    enc.representation = parse_pose_representation(manifest.at("pose_representation").get<std::string>());
    enc.sr_scale_weight = manifest.at("sr_scale_weight").get<double>();
    enc.shape_weight = manifest.at("shape_weight").get<double>();
    enc.pose_weight = manifest.at("pose_weight").get<double>();
    const DomainPtr full = make_domain(reference, enc);

    const auto& blocks = manifest.at("blocks");
    if (blocks.size() != full->block_count()) throw ParseError("block table does not match the reference", 0);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      if (blocks[b].at("object_id").get<int>() != full->block(b).object_id ||
          parse_feature_class(blocks[b].at("feature").get<std::string>()) != full->block(b).feature ||
          blocks[b].at("points").get<Eigen::Index>() != full->block_size(b) ||
          blocks[b].at("offset").get<Eigen::Index>() != full->point_offset(b)) {
        throw ParseError("block table does not match the reference", 0);
      }
    }

    std::vector<DomainBlock> gp_blocks;
    for (const auto& g : manifest.at("gp_blocks")) {
      const auto b = full->find(g.at("object_id").get<int>(), parse_feature_class(g.at("feature").get<std::string>()));
      if (!b) throw ParseError("gp block missing from the model domain", 0);
      gp_blocks.push_back(full->block(*b));
    }
    auto gp_domain = std::make_shared<const LabeledDomain>(std::move(gp_blocks));
    const auto rank = manifest.at("rank").get<Eigen::Index>();
    const Eigen::Index dim = gp_domain->dimension();
    LowRankGP gp(gp_domain, arrays.matrix("gp/mean", dim, 1), arrays.matrix("gp/eigenvalues", rank, 1),
                 arrays.matrix("gp/basis", dim, rank));

    const auto n_obj = static_cast<Eigen::Index>(reference.object_count());
    const Eigen::MatrixXd poses = arrays.matrix("base_poses", 12, n_obj);
    std::vector<RigidTransform> base;
    for (Eigen::Index j = 0; j < n_obj; ++j) {
      const Mat3 r = Eigen::Map<const Mat3>(poses.col(j).data());
      base.emplace_back(r, poses.col(j).tail<3>());
    }
    return DmoGpModel(std::move(reference), enc, full, arrays.matrix("full_mean", full->dimension(), 1),
                      std::move(base), std::move(gp), manifest.at("n").get<std::size_t>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("model manifest: ") + e.what(), manifest_begin);
  }
}

void save_model(const fs::path& path, const DmoGpModel& model) { atomic_write(path, serialize_model(model)); }

DmoGpModel load_model(const fs::path& path) { return deserialize_model(read_file(path)); }

// ---------------------------------------------------------------------------
// Manifests

namespace {

json pose_json(const RigidTransform& h) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(h.rotation()(i, k));
  return {{"rotation", r}, {"translation", {h.translation().x(), h.translation().y(), h.translation().z()}}};
}

RigidTransform pose_from_json(const json& j) {
  const auto r = j.at("rotation").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  if (r.size() != 9 || t.size() != 3) throw ParseError("pose needs 9 rotation and 3 translation values", 0);
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) m(i, k) = r[static_cast<std::size_t>(3 * i + k)];
  return {m, Vec3(t[0], t[1], t[2])};
}

json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw ParseError("expected a 3-vector", 0);
  return {v[0], v[1], v[2]};
}

json parse_json_file(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

void check_schema(const json& j, const std::string& kind, const fs::path& path) {
  if (!j.contains("schema_version")) throw ParseError(path.string() + ": missing schema_version", 0);
  if (j.at("schema_version").get<int>() != kSchemaVersion) {
    throw VersionMismatch(path.string() + ": schema version " + std::to_string(j.at("schema_version").get<int>()));
  }
  if (j.value("kind", "") != kind) throw ParseError(path.string() + ": expected a " + kind + " manifest", 0);
}

}  // namespace

fs::path write_dataset(const fs::path& dir, const SynthDataset& d) {
  const auto& cfg = d.config;
  const auto& lp = cfg.lollipop;
  json joints = json::array();
  for (std::size_t k = 0; k < d.examples.size(); ++k) {
    json objs = json::array();
    for (std::size_t j = 0; j < d.examples[k].objects.size(); ++j) {
      char name[64];
      std::snprintf(name, sizeof name, "joint%03zu_object%zu.ply", k, j + 1);
      const auto& o = d.examples[k].objects[j];
      write_mesh(dir / "shapes" / name, TriangleMesh{o.shape, d.faces[j]}, MeshFormat::PlyBinary);
      write_mesh(dir / "posed" / name, TriangleMesh{apply(o.pose, o.shape), d.faces[j]}, MeshFormat::PlyBinary);
      objs.push_back({{"shape", (fs::path("shapes") / name).generic_string()},
                      {"posed", (fs::path("posed") / name).generic_string()},
                      {"pose", pose_json(o.pose)}});
    }
    const auto& p = d.params[k];
    joints.push_back({{"index", k}, {"r1", p.r1}, {"r2", p.r2}, {"theta", p.theta},
                      {"shape_index", p.shape_index}, {"objects", objs}});
  }
  const json manifest = {
      {"schema_version", kSchemaVersion},
      {"kind", "dmogpm-dataset"},
      {"mode", to_string(d.mode)},
      {"generator",
       {{"scale", cfg.scale},
        {"head_minor", lp.head_minor},
        {"shaft_length", lp.shaft_length},
        {"shaft_radius", lp.shaft_radius},
        {"neck_length", lp.neck_length},
        {"neck_radius", lp.neck_radius},
        {"vertex_budget", lp.vertex_budget},
        {"head_fraction", lp.head_fraction},
        {"uncorrelated_angles", cfg.uncorrelated_angles},
        {"correlated_unit", cfg.correlated_unit},
        {"correlated_step", cfg.correlated_step},
        {"sweep_count", cfg.sweep_count},
        {"head_begin", d.head_begin},
        {"motion_axis", vec_json(d.axis)},
        {"motion_center", vec_json(d.center)},
        {"motion_note",
         "object 2 rotates about the x axis through motion_center, keeping its long axis in the yz-plane"}}},
      {"joints", joints},
  };
  const fs::path path = dir / "dataset.json";
  atomic_write(path, manifest.dump(2) + "\n");
  return path;
}

DatasetFile read_dataset(const fs::path& manifest_path) {
  const json j = parse_json_file(manifest_path);
  check_schema(j, "dmogpm-dataset", manifest_path);
  const fs::path base = manifest_path.parent_path();
  DatasetFile out;
  try {
    out.mode = parse_motion_mode(j.at("mode").get<std::string>());
    const auto& g = j.at("generator");
    out.head_begin = g.value("head_begin", Eigen::Index{0});
    if (g.contains("motion_center")) out.center = vec_from_json(g.at("motion_center"));
    if (g.contains("motion_axis")) out.axis = vec_from_json(g.at("motion_axis"));
    for (const auto& joint : j.at("joints")) {
      JointParams p;
      p.r1 = joint.value("r1", 0.0);
      p.r2 = joint.value("r2", 0.0);
      p.theta = joint.value("theta", 0.0);
      p.shape_index = joint.value("shape_index", std::size_t{0});
      MultiObjectExample e;
      const auto& objs = joint.at("objects");
      for (std::size_t k = 0; k < objs.size(); ++k) {
        const auto mesh = read_mesh(base / objs[k].at("shape").get<std::string>());
        if (out.faces.size() <= k) out.faces.push_back(mesh.faces);
        e.objects.push_back({mesh.vertices, pose_from_json(objs[k].at("pose"))});
      }
      out.params.push_back(p);
      out.examples.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what(), 0);
  }
  return out;
}

ObservationFile read_observation(const fs::path& manifest_path) {
  const json j = parse_json_file(manifest_path);
  check_schema(j, "dmogpm-observation", manifest_path);
  const fs::path base = manifest_path.parent_path();
  ObservationFile out;
  try {
    for (const auto& o : j.at("objects")) {
      const auto type = parse_observation_type(o.at("type").get<std::string>());
      switch (type) {
        case ObservationType::None: out.spec.objects.push_back(ObjectObservation::none()); break;
        case ObservationType::Full:
          out.spec.objects.push_back(ObjectObservation::full(read_mesh(base / o.at("mesh").get<std::string>()).vertices));
          break;
        case ObservationType::Partial:
          out.spec.objects.push_back(ObjectObservation::partial(read_mesh(base / o.at("mesh").get<std::string>())));
          break;
        case ObservationType::Landmarks: {
          std::vector<Landmark> lms;
          for (const auto& l : o.at("landmarks"))
            lms.push_back({l.at("vertex").get<Eigen::Index>(), vec_from_json(l.at("position"))});
          out.spec.objects.push_back(ObjectObservation::from_landmarks(std::move(lms)));
          break;
        }
      }
    }
    if (j.contains("truth")) {
      out.truth_dataset = base / j.at("truth").at("dataset").get<std::string>();
      out.truth_index = j.at("truth").at("index").get<std::size_t>();
    }
  } catch (const json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what(), 0);
  }
  return out;
}

void write_observation(const fs::path& manifest_path, const ObservationSpec& spec,
                       const std::optional<fs::path>& truth_dataset, std::size_t truth_index) {
  const fs::path base = manifest_path.parent_path();
  const std::string stem = manifest_path.stem().string();
  json objs = json::array();
  for (std::size_t k = 0; k < spec.objects.size(); ++k) {
    const auto& o = spec.objects[k];
    json entry = {{"type", to_string(o.type)}};
    const std::string mesh_name = stem + "_object" + std::to_string(k + 1) + ".ply";
    if (o.type == ObservationType::Full) {
      write_mesh(base / mesh_name, TriangleMesh{o.points, {}}, MeshFormat::PlyBinary);
      entry["mesh"] = mesh_name;
    } else if (o.type == ObservationType::Partial) {
      write_mesh(base / mesh_name, o.fragment, MeshFormat::PlyBinary);
      entry["mesh"] = mesh_name;
    } else if (o.type == ObservationType::Landmarks) {
      json lms = json::array();
      for (const auto& l : o.landmarks) lms.push_back({{"vertex", l.vertex}, {"position", vec_json(l.position)}});
      entry["landmarks"] = lms;
    }
    objs.push_back(entry);
  }
  json manifest = {{"schema_version", kSchemaVersion}, {"kind", "dmogpm-observation"}, {"objects", objs}};
  if (truth_dataset) {
    manifest["truth"] = {{"dataset", fs::relative(*truth_dataset, base.empty() ? fs::path(".") : base).generic_string()},
                         {"index", truth_index}};
  }
  atomic_write(manifest_path, manifest.dump(2) + "\n");
}

}  // namespace dmo
