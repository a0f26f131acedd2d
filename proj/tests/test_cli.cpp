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

// End-to-end checks of the dmogpm executable.

#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dmogpm_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs the tool; stdout and stderr go to files under `dir`. Returns the exit code.
int run(const fs::path& dir, const std::string& args) {
  const std::string cmd = std::string("\"") + DMOGPM_EXE + "\" " + args + " >\"" + (dir / "stdout").string() +
                          "\" 2>\"" + (dir / "stderr").string() + "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("synth is deterministic") {
  const auto dir = scratch("synth");
  REQUIRE(run(dir, "synth motion --mode uncorrelated --vertex-budget 400 --seed 3 --out " + q(dir / "a")) == 0);
  REQUIRE(run(dir, "synth motion --mode uncorrelated --vertex-budget 400 --seed 3 --out " + q(dir / "b")) == 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "a");
    REQUIRE(fs::exists(dir / "b" / rel));
    CHECK(slurp(e.path()) == slurp(dir / "b" / rel));
    ++files;
  }
  CHECK(files == 1 + 2 * 2 * 60);
  CHECK(json::parse(slurp(dir / "a" / "dataset.json")).at("seed") == 3);
}

TEST_CASE("synth, build, make-obs, fit and eval") {
  const auto dir = scratch("pipeline");
  REQUIRE(run(dir, "synth shapes --vertex-budget 1000 --out " + q(dir / "ds")) == 0);
  REQUIRE(run(dir, "build --dataset " + q(dir / "ds" / "dataset.json") + " --pose-points 50 --out " +
                       q(dir / "m.dmo") + " --report " + q(dir / "pc.csv")) == 0);
  const std::string pcs = slurp(dir / "pc.csv");
  CHECK(pcs.rfind("pc,eigenvalue,percent", 0) == 0);
  const auto rank = static_cast<std::size_t>(std::count(pcs.begin(), pcs.end(), '\n') - 1);
  REQUIRE(run(dir, "make-obs --dataset " + q(dir / "ds" / "dataset.json") + " --index 4 --types full,full --out " +
                       q(dir / "obs.json")) == 0);
  REQUIRE(run(dir, "fit --model " + q(dir / "m.dmo") + " --obs " + q(dir / "obs.json") +
                       " --chain 20000 --burn 2000 --seed 5 --sigma-obs 0.01 --out " + q(dir / "fit")) == 0);
  const json fitted = json::parse(slurp(dir / "fit" / "fit.json"));
  CHECK(fitted.at("kind") == "dmogpm-fit");
  CHECK(fitted.at("map_alpha").size() == rank);
  REQUIRE(run(dir, "eval --pred " + q(dir / "fit") + " --truth " + q(dir / "obs.json") + " --out " +
                       q(dir / "ev.csv")) == 0);
  const json report = json::parse(slurp(dir / "ev.json"));
  REQUIRE(report.at("objects").size() == 2);
  for (const auto& o : report.at("objects")) {
    CHECK(o.at("rms").get<double>() <= 0.05);
    CHECK(o.at("hausdorff").get<double>() <= 0.2);
  }
  CHECK(slurp(dir / "ev.csv").rfind("object,rms,rms_reverse,hausdorff,angle_rad\n", 0) == 0);

  SUBCASE("sample writes meshes and coefficients") {
    REQUIRE(run(dir, "sample --model " + q(dir / "m.dmo") + " --random 9 --out " + q(dir / "smp")) == 0);
    for (const char* f : {"posed_object1.ply", "posed_object2.ply", "shape_object1.ply", "shape_object2.ply"})
      CHECK(fs::exists(dir / "smp" / f));
    CHECK(json::parse(slurp(dir / "smp" / "sample.json")).at("alpha").size() == rank);
  }
  SUBCASE("shape-only marginal has no pose energy") {
    REQUIRE(run(dir, "marginalize --model " + q(dir / "m.dmo") + " --keep shape --out " + q(dir / "s.dmo")) == 0);
    REQUIRE(run(dir, "pc-report --model " + q(dir / "s.dmo") + " --csv " + q(dir / "s.csv")) == 0);
    std::istringstream lines(slurp(dir / "s.csv"));
    std::string line;
    std::getline(lines, line);
    int rows = 0;
    while (std::getline(lines, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
      REQUIRE(cells.size() == 10);
      CHECK(std::stod(cells[5]) == 0.0);  // pose_fraction
      ++rows;
    }
    CHECK(rows > 0);
  }
}

TEST_CASE("errors are reported as JSON with a non-zero exit") {
  const auto dir = scratch("errors");
  {
    std::ofstream(dir / "junk.dmo") << "not a model";
  }
  CHECK(run(dir, "pc-report --model " + q(dir / "junk.dmo")) == 3);
  const json err = json::parse(slurp(dir / "stderr"));
  CHECK(err.at("error") == "ParseError");
  CHECK(!err.at("message").get<std::string>().empty());

  CHECK(run(dir, "synth shapes") == 2);  // --out missing
  CHECK(json::parse(slurp(dir / "stderr")).at("error") == "UsageError");
  CHECK(run(dir, "--help") == 0);
  CHECK(run(dir, "make-obs --dataset " + q(dir / "junk.dmo") + " --index 0 --types full --out " +
                     q(dir / "o.json")) == 3);
}
