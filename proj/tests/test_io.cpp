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

#include <cstring>
#include <filesystem>
#include <random>

#include "dmo/errors.hpp"
#include "dmo/io.hpp"
#include "dmo/synth.hpp"
#include "test_support.hpp"

using namespace dmo;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case.
struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("dmo_io_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

TriangleMesh small_mesh(CounterRng& rng) {
  LollipopParams p;
  p.vertex_budget = 120;
  auto m = make_lollipop(p).mesh;
  m.vertices += dmo::test::random_points(rng, m.vertex_count(), 1e-3);  // non-round values
  return m;
}

template <typename E, typename F>
std::size_t parse_position(F&& f) {
  try {
    f();
  } catch (const E& e) {
    return e.position();
  }
  return 0;
}

DmoGpModel small_model(CounterRng& rng, PoseEncoding enc = {}) {
  SynthConfig cfg;
  cfg.lollipop.vertex_budget = 150;
  auto grid = anticorrelated_grid();
  grid.resize(5);
  const auto d = make_motion_dataset(grid, MotionMode::Correlated, cfg);
  const auto reference = make_reference(d.examples[select_reference(d.examples)], 20, d.faces);
  ModelBuildOptions opts;
  opts.encoding = enc;
  (void)rng;
  return build_model(d.examples, reference, opts).model;
}

}  // namespace

TEST_CASE("binary PLY roundtrip is bitwise") {
  CounterRng rng(1);
  const auto m = small_mesh(rng);
  const auto back = parse_ply(format_ply(m, true));
  CHECK(std::memcmp(back.vertices.data(), m.vertices.data(), sizeof(double) * m.vertices.size()) == 0);
  CHECK(back.faces == m.faces);
}

TEST_CASE("text formats roundtrip exactly") {
  CounterRng rng(2);
  const auto m = small_mesh(rng);
  const auto ply = parse_ply(format_ply(m, false));
  CHECK(ply.vertices == m.vertices);
  CHECK(ply.faces == m.faces);
  const auto obj = parse_obj(format_obj(m));
  CHECK(obj.vertices == m.vertices);
  CHECK(obj.faces == m.faces);
}

TEST_CASE("files roundtrip through every format") {
  TempDir tmp;
  const auto lp = make_lollipop(LollipopParams{});
  CHECK(lp.mesh.vertex_count() > 5900);
  for (const auto& [name, format] : {std::pair{"a.ply", MeshFormat::PlyBinary}, std::pair{"b.ply", MeshFormat::PlyAscii},
                                     std::pair{"c.obj", MeshFormat::Obj}}) {
    const fs::path path = tmp.path / name;
    write_mesh(path, lp.mesh, format);
    const auto back = read_mesh(path);
    CHECK(back.face_count() == lp.mesh.face_count());
    CHECK(back.vertices == lp.mesh.vertices);
  }
  // No temporary files are left behind.
  int files = 0;
  for (const auto& e : fs::directory_iterator(tmp.path)) {
    (void)e;
    ++files;
  }
  CHECK(files == 3);
  CHECK_THROWS_AS(read_mesh(tmp.path / "missing.ply"), IoError);
}

TEST_CASE("OBJ subset") {
  const std::string text =
      "# comment\n"
      "o thing\n"
      "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n"
      "vn 0 0 1\nvt 0 0\n"
      "s off\n"
      "f 1/1/1 2/1/1 3/1/1\n"
      "f -4 -2 -1\n"
      "f 2//1 3//1 4//1\n";
  const auto m = parse_obj(text);
  CHECK(m.vertex_count() == 4);
  REQUIRE(m.face_count() == 3);
  CHECK(m.faces.col(0) == Eigen::Vector3i(0, 1, 2));
  CHECK(m.faces.col(1) == Eigen::Vector3i(0, 2, 3));
  CHECK(m.faces.col(2) == Eigen::Vector3i(1, 2, 3));

  CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"), UnsupportedFeature);
  CHECK_THROWS_AS(parse_obj("mtllib x.mtl\nv 0 0 0\n"), UnsupportedFeature);
  CHECK_THROWS_AS(parse_obj("v 0 0 0\nusemtl red\n"), UnsupportedFeature);
  CHECK(parse_position<ParseError>([] { parse_obj("v 0 0 0\nv 1 0 0\nv 1 x 0\n"); }) == 3);
  CHECK(parse_position<ParseError>([] { parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n"); }) == 4);
  CHECK_THROWS_AS(parse_obj("v 0 0 0\nf 1 2 0\n"), ParseError);
  CHECK_THROWS_AS(parse_obj("curv 1 2\n"), ParseError);
}

TEST_CASE("PLY variants and errors") {
  const std::string header =
      "ply\r\nformat ascii 1.0\ncomment made by hand\n"
      "element vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\n"
      "element face 1\nproperty list uchar int vertex_indices\n"
      "element extra 1\nproperty list uchar float stuff\nend_header\n";
  const auto m = parse_ply(header + "0 0 0 255\n1 0 0 0\n0 1.5 0 9\n3 0 1 2\n2 0.5 0.25\n");
  CHECK(m.vertex_count() == 3);
  CHECK(m.vertices(1, 2) == 1.5);
  CHECK(m.faces.col(0) == Eigen::Vector3i(0, 1, 2));

  CHECK_THROWS_AS(parse_ply(header + "0 0 0 255\n1 0 0 0\n0 1 0 9\n4 0 1 2 0\n"), UnsupportedFeature);
  CHECK(parse_position<ParseError>([&] { parse_ply(header + "0 0 0 255\n1 0 0 0\n0 zz 0 9\n"); }) == 16);
  CHECK_THROWS_AS(parse_ply(header + "0 0 0 255\n1 0 0 0\n"), ParseError);
  CHECK_THROWS_AS(parse_ply(header + "0 0 0 255\n1 0 0 0\n0 1 0 9\n3 0 1 5\n"), ParseError);
  CHECK_THROWS_AS(parse_ply("ply\nformat binary_big_endian 1.0\nend_header\n"), UnsupportedFeature);
  CHECK_THROWS_AS(parse_ply("plx\n"), ParseError);
  CHECK_THROWS_AS(parse_ply("ply\nformat ascii 1.0\nelement vertex 1\n"), ParseError);
  CHECK(parse_position<ParseError>([] { parse_ply("ply\nformat ascii 1.0\nproperty float x\nend_header\n"); }) == 3);

  // Truncated binary data reports a byte offset inside the body.
  CounterRng rng(3);
  const std::string bytes = format_ply(small_mesh(rng), true);
  const std::size_t body = bytes.find("end_header\n") + 11;
  const std::size_t pos = parse_position<ParseError>([&] { parse_ply(bytes.substr(0, bytes.size() - 5)); });
  CHECK(pos > body);
  CHECK(pos <= bytes.size());
}

TEST_CASE("model container roundtrip") {
  CounterRng rng(4);
  const auto model = small_model(rng);
  const std::string bytes = serialize_model(model);
  const auto back = deserialize_model(bytes);
  CHECK(back.gp().eigenvalues() == model.gp().eigenvalues());
  CHECK(back.gp().basis() == model.gp().basis());
  CHECK(back.gp().mean() == model.gp().mean());
  CHECK(back.full_mean() == model.full_mean());
  CHECK(back.example_count() == model.example_count());
  CHECK(*back.full_domain() == *model.full_domain());
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(back.base_poses()[j] == model.base_poses()[j]);
    CHECK(back.reference().object(j).faces == model.reference().object(j).faces);
    CHECK(back.reference().object(j).pose_indices == model.reference().object(j).pose_indices);
  }
  CHECK(serialize_model(back) == bytes);

  std::normal_distribution<double> nd(0.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    Eigen::VectorXd alpha(model.rank());
    for (auto& a : alpha) a = nd(rng);
    const auto x = sample_joint(model, alpha), y = sample_joint(back, alpha);
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(std::memcmp(x.objects[j].posed_shape.data(), y.objects[j].posed_shape.data(),
                        sizeof(double) * x.objects[j].posed_shape.size()) == 0);
      CHECK(x.objects[j].pose == y.objects[j].pose);
    }
  }
}

TEST_CASE("marginal and SR models roundtrip") {
  CounterRng rng(5);
  const auto shape_only = class_specific(small_model(rng), FeatureClass::Shape);
  const auto back = deserialize_model(serialize_model(shape_only));
  CHECK(back.gp().domain() == shape_only.gp().domain());
  CHECK(back.gp_rows() == shape_only.gp_rows());
  for (const auto& row : pc_report(back)) CHECK(row.pose_fraction == 0.0);

  PoseEncoding sr;
  sr.representation = PoseRepresentation::Sr;
  sr.sr_scale_weight = 100.0;
  const auto sr_model = small_model(rng, sr);
  const auto sr_back = deserialize_model(serialize_model(sr_model));
  CHECK(sr_back.encoding().representation == PoseRepresentation::Sr);
  CHECK(sr_back.encoding().sr_scale_weight == 100.0);
  const Eigen::VectorXd alpha = Eigen::VectorXd::Constant(sr_model.rank(), 0.3);
  CHECK(sample_joint(sr_back, alpha).objects[1].posed_shape == sample_joint(sr_model, alpha).objects[1].posed_shape);
}

TEST_CASE("corrupt model containers are rejected") {
  CounterRng rng(6);
  TempDir tmp;
  const auto model = small_model(rng);
  const fs::path path = tmp.path / "m.dmo";
  save_model(path, model);
  const std::string bytes = read_file(path);
  CHECK(load_model(path).rank() == model.rank());

  CHECK_THROWS_AS(deserialize_model(bytes.substr(0, bytes.size() - 1)), ChecksumMismatch);
  CHECK_THROWS_AS(deserialize_model(bytes.substr(0, bytes.size() / 2)), ChecksumMismatch);
  CHECK_THROWS_AS(deserialize_model(bytes.substr(0, 20)), ChecksumMismatch);
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(deserialize_model(flipped), ChecksumMismatch);
  CHECK_THROWS_AS(deserialize_model(bytes + "x"), ChecksumMismatch);
  std::string version = bytes;
  version[8] = 2;
  CHECK_THROWS_AS(deserialize_model(version), VersionMismatch);
  CHECK_THROWS_AS(deserialize_model("not a model at all"), ParseError);
}

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
}

TEST_CASE("dataset manifest roundtrip") {
  TempDir tmp;
  SynthConfig cfg;
  cfg.lollipop.vertex_budget = 150;
  auto grid = anticorrelated_grid();
  grid.resize(3);
  const auto d = make_motion_dataset(grid, MotionMode::Uncorrelated, cfg);
  const auto manifest = write_dataset(tmp.path / "ds", d);
  const auto back = read_dataset(manifest);
  CHECK(back.mode == MotionMode::Uncorrelated);
  CHECK(back.head_begin == d.head_begin);
  CHECK(back.center == d.center);
  CHECK(back.axis == d.axis);
  REQUIRE(back.examples.size() == d.examples.size());
  REQUIRE(back.faces.size() == 2);
  CHECK(back.faces[1] == d.faces[1]);
  for (std::size_t k = 0; k < d.examples.size(); ++k) {
    CHECK(back.params[k].r1 == d.params[k].r1);
    CHECK(back.params[k].theta == d.params[k].theta);
    CHECK(back.params[k].shape_index == d.params[k].shape_index);
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(back.examples[k].objects[j].shape == d.examples[k].objects[j].shape);
      CHECK(back.examples[k].objects[j].pose == d.examples[k].objects[j].pose);
    }
  }
  // Posed meshes are written alongside for inspection.
  CHECK(fs::exists(tmp.path / "ds" / "posed" / "joint000_object2.ply"));

  atomic_write(tmp.path / "bad.json", "{\"kind\": \"dmogpm-dataset\"}");
  CHECK_THROWS_AS(read_dataset(tmp.path / "bad.json"), ParseError);
  atomic_write(tmp.path / "future.json", "{\"schema_version\": 99, \"kind\": \"dmogpm-dataset\"}");
  CHECK_THROWS_AS(read_dataset(tmp.path / "future.json"), VersionMismatch);
  atomic_write(tmp.path / "broken.json", "{\"schema_version\": ");
  CHECK_THROWS_AS(read_dataset(tmp.path / "broken.json"), ParseError);
}

TEST_CASE("observation manifest roundtrip") {
  CounterRng rng(7);
  TempDir tmp;
  const auto mesh = small_mesh(rng);
  ObservationSpec spec;
  spec.objects.push_back(ObjectObservation::full(mesh.vertices));
  spec.objects.push_back(ObjectObservation::partial(mesh));
  spec.objects.push_back(ObjectObservation::from_landmarks({{3, Vec3(0.1, 0.2, 0.3)}, {7, Vec3(-1, 0, 1)}}));
  spec.objects.push_back(ObjectObservation::none());
  const fs::path manifest = tmp.path / "obs" / "target.json";
  write_observation(manifest, spec, tmp.path / "ds" / "dataset.json", 4);
  const auto back = read_observation(manifest);
  REQUIRE(back.spec.objects.size() == 4);
  CHECK(back.spec.objects[0].type == ObservationType::Full);
  CHECK(back.spec.objects[0].points == mesh.vertices);
  CHECK(back.spec.objects[1].type == ObservationType::Partial);
  CHECK(back.spec.objects[1].fragment.faces == mesh.faces);
  CHECK(back.spec.objects[2].landmarks.size() == 2);
  CHECK(back.spec.objects[2].landmarks[1].vertex == 7);
  CHECK(back.spec.objects[2].landmarks[0].position == Vec3(0.1, 0.2, 0.3));
  CHECK(back.spec.objects[3].type == ObservationType::None);
  REQUIRE(back.truth_dataset.has_value());
  CHECK(fs::weakly_canonical(*back.truth_dataset) == fs::weakly_canonical(tmp.path / "ds" / "dataset.json"));
  CHECK(back.truth_index == 4);
}
