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

// dmogpm: command-line front end for the dynamic multi-object GP model.
//
// Every command reads and writes files only; randomness comes from --seed.
// Failures print {"error": KIND, "message": ...} on stderr and exit non-zero.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmo/errors.hpp"
#include "dmo/fitting.hpp"
#include "dmo/io.hpp"
#include "dmo/metrics.hpp"
#include "dmo/model.hpp"
#include "dmo/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dmo;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitError = 3;
constexpr int kExitInternal = 4;

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

json pose_json(const RigidTransform& h) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(h.rotation()(i, k));
  return {{"rotation", r}, {"translation", {h.translation().x(), h.translation().y(), h.translation().z()}}};
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::string object_file(const std::string& prefix, std::size_t j) {
  return prefix + "_object" + std::to_string(j + 1) + ".ply";
}

void write_json(const fs::path& path, const json& j) { atomic_write(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

// ---------------------------------------------------------------------------
// pc-report

std::string block_name(int object_id, FeatureClass f) {
  return "object" + std::to_string(object_id) + "_" + to_string(f);
}

void pc_report_out(const DmoGpModel& model, std::ostream& table, const std::optional<fs::path>& csv) {
  const auto rows = pc_report(model);
  const auto& full = *model.full_domain();
  std::vector<std::string> names;
  for (const auto& b : full.blocks()) names.push_back(block_name(b.object_id, b.feature));

  std::ostringstream c;
  c << "pc,eigenvalue,percent,cumulative_percent,shape_fraction,pose_fraction";
  for (const auto& n : names) c << ',' << n;
  c << '\n';

  char line[256];
  std::snprintf(line, sizeof line, "%4s %14s %8s %8s %7s %7s", "PC", "eigenvalue", "%var", "cum%", "shape", "pose");
  table << line;
  for (const auto& n : names) table << ' ' << n;
  table << '\n';
  double cumulative = 0.0;
  for (const auto& r : rows) {
    cumulative += r.percent;
    std::vector<double> fractions(names.size(), 0.0);
    for (const auto& b : r.blocks) fractions[*full.find(b.object_id, b.feature)] = b.fraction;
    std::snprintf(line, sizeof line, "%4ld %14.6g %8.3f %8.3f %7.4f %7.4f", static_cast<long>(r.index), r.eigenvalue,
                  r.percent, cumulative, r.shape_fraction, r.pose_fraction);
    table << line;
    for (std::size_t k = 0; k < names.size(); ++k) {
      std::snprintf(line, sizeof line, " %*.4f", static_cast<int>(names[k].size()), fractions[k]);
      table << line;
    }
    table << '\n';
    c << r.index << ',' << json(r.eigenvalue).dump() << ',' << json(r.percent).dump() << ','
      << json(cumulative).dump() << ',' << json(r.shape_fraction).dump() << ',' << json(r.pose_fraction).dump();
    for (double f : fractions) c << ',' << json(f).dump();
    c << '\n';
  }
  if (csv) atomic_write(*csv, c.str());
}

// ---------------------------------------------------------------------------
// make-obs helper

TriangleMesh fragment_of(const TriangleMesh& posed, const PointSet& object_frame, double fraction) {
  const double zmin = object_frame.row(2).minCoeff(), zmax = object_frame.row(2).maxCoeff();
  const double cut = zmax - fraction * (zmax - zmin);
  std::vector<int> remap(static_cast<std::size_t>(posed.vertex_count()), -1);
  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = 0; i < posed.vertex_count(); ++i) {
    if (object_frame(2, i) >= cut) {
      remap[static_cast<std::size_t>(i)] = static_cast<int>(kept.size());
      kept.push_back(i);
    }
  }
  std::vector<Eigen::Vector3i> faces;
  for (Eigen::Index f = 0; f < posed.face_count(); ++f) {
    Eigen::Vector3i g;
    bool inside = true;
    for (int c = 0; c < 3; ++c) {
      g(c) = remap[static_cast<std::size_t>(posed.faces(c, f))];
      inside = inside && g(c) >= 0;
    }
    if (inside) faces.push_back(g);
  }
  TriangleMesh out;
  out.vertices = gather(posed.vertices, kept);
  out.faces.resize(3, static_cast<Eigen::Index>(faces.size()));
  for (std::size_t f = 0; f < faces.size(); ++f) out.faces.col(static_cast<Eigen::Index>(f)) = faces[f];
  return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& s : split(text, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw InvalidParams("not a number: '" + s + "'");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// eval

struct EvalRow {
  std::size_t object = 0;
  double rms = 0.0;          // predicted -> truth
  double rms_reverse = 0.0;  // truth -> predicted
  double hausdorff = 0.0;
  double angle = 0.0;
};

std::pair<MultiObjectExample, std::vector<Eigen::Matrix3Xi>> truth_from(const fs::path& manifest,
                                                                       std::optional<std::size_t> index) {
  const json j = read_json(manifest);
  fs::path dataset = manifest;
  if (j.value("kind", "") == "dmogpm-observation") {
    const auto obs = read_observation(manifest);
    if (!obs.truth_dataset) throw InvalidParams("observation manifest has no ground truth");
    dataset = *obs.truth_dataset;
    if (!index) index = obs.truth_index;
  }
  if (!index) throw InvalidParams("--index is required with a dataset manifest");
  auto d = read_dataset(dataset);
  if (*index >= d.examples.size()) throw InvalidParams("truth index out of range");
  return {d.examples[*index], d.faces};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic multi-object Gaussian process models"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a lollipop joint dataset");
  std::string synth_kind, synth_mode = "uncorrelated";
  fs::path synth_out;
  std::uint64_t synth_seed = 0;
  Eigen::Index synth_budget = 6000;
  double synth_scale = 26.0;
  synth->add_option("kind", synth_kind, "shapes | motion")->required()->check(CLI::IsMember({"shapes", "motion"}));
  synth->add_option("--mode", synth_mode, "uncorrelated | correlated (motion only)")
      ->check(CLI::IsMember({"uncorrelated", "correlated"}));
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Recorded in the manifest (the generator is deterministic)");
  synth->add_option("--vertex-budget", synth_budget, "Vertices per lollipop");
  synth->add_option("--scale", synth_scale, "Grid units -> mm");

  // build
  auto* build = app.add_subcommand("build", "Build a model from a dataset");
  fs::path build_dataset, build_out;
  std::optional<fs::path> build_csv;
  Eigen::Index build_rank = 1000, build_pose_points = 100;
  std::string build_repr = "edr";
  double build_sr_weight = 1.0;
  build->add_option("--dataset", build_dataset, "Dataset manifest")->required()->check(CLI::ExistingFile);
  build->add_option("--rank", build_rank, "Requested rank (capped at n - 1)");
  build->add_option("--pose-points", build_pose_points, "Pose points per object");
  build->add_option("--pose-repr", build_repr, "edr | sr")->check(CLI::IsMember({"edr", "sr"}));
  build->add_option("--sr-weight", build_sr_weight, "Rotation weight s of the SR norm");
  build->add_option("--out", build_out, "Model container")->required();
  build->add_option("--report", build_csv, "Also write the PC report as CSV");

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "Draw a joint instance");
  fs::path sample_model, sample_out;
  std::optional<fs::path> alpha_file;
  std::optional<std::uint64_t> random_seed;
  sample_cmd->add_option("--model", sample_model, "Model container")->required()->check(CLI::ExistingFile);
  auto* af = sample_cmd->add_option("--alpha-file", alpha_file, "JSON array of coefficients");
  auto* rs = sample_cmd->add_option("--random", random_seed, "Draw alpha ~ N(0, I) with this seed");
  af->excludes(rs);
  sample_cmd->add_option("--out", sample_out, "Output directory")->required();

  // marginalize
  auto* marg = app.add_subcommand("marginalize", "Restrict a model to some blocks");
  fs::path marg_model, marg_out;
  std::string marg_keep;
  marg->add_option("--model", marg_model, "Model container")->required()->check(CLI::ExistingFile);
  marg->add_option("--keep", marg_keep, "shape | pose | object:J")->required();
  marg->add_option("--out", marg_out, "Output model container")->required();

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "MCMC fit to an observation");
  fs::path fit_model, fit_obs, fit_out;
  FitConfig cfg;
  cfg.proposal_scales = {1.0, 0.1, 0.01, 0.001};
  std::string proposal_sd = "0.1", proposal_scales = "1,0.1,0.01,0.001";
  fit_cmd->add_option("--model", fit_model, "Model container")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--obs", fit_obs, "Observation manifest")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--chain", cfg.chain_length, "Chain length");
  fit_cmd->add_option("--burn", cfg.burn_in, "Burn-in steps");
  fit_cmd->add_option("--seed", cfg.seed, "Random seed");
  fit_cmd->add_option("--sigma-obs", cfg.sigma_obs, "Observation noise (mm)");
  fit_cmd->add_option("--partial-cutoff", cfg.partial_cutoff, "Ignore partial matches farther than this (mm)");
  fit_cmd->add_option("--proposal-sd", proposal_sd, "Proposal stddev: one value or one per coefficient");
  fit_cmd->add_option("--proposal-scales", proposal_scales, "Scale mixture, picked uniformly per step");
  fit_cmd->add_flag("--delayed-acceptance", cfg.delayed_acceptance, "Correct the filter sequence to the posterior");
  fit_cmd->add_option("--out", fit_out, "Output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Compare a prediction with ground truth");
  fs::path eval_pred, eval_truth, eval_out;
  std::optional<std::size_t> eval_index;
  eval->add_option("--pred", eval_pred, "Directory written by fit")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--truth", eval_truth, "Observation manifest with truth, or dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--index", eval_index, "Joint index (dataset manifests)");
  eval->add_option("--out", eval_out, "CSV report (a .json twin is written too)")->required();

  // pc-report
  auto* report = app.add_subcommand("pc-report", "Per-component variance table");
  fs::path report_model;
  std::optional<fs::path> report_csv;
  report->add_option("--model", report_model, "Model container")->required()->check(CLI::ExistingFile);
  report->add_option("--csv", report_csv, "Also write CSV here");

  // make-obs
  auto* make_obs = app.add_subcommand("make-obs", "Observation manifest from a dataset joint");
  fs::path obs_dataset, obs_out;
  std::size_t obs_index = 0;
  std::string obs_types;
  Eigen::Index obs_landmarks = 10;
  double obs_fraction = 0.3;
  make_obs->add_option("--dataset", obs_dataset, "Dataset manifest")->required()->check(CLI::ExistingFile);
  make_obs->add_option("--index", obs_index, "Joint index")->required();
  make_obs->add_option("--types", obs_types, "Per object: full|partial|landmarks|none, comma separated")
      ->required();
  make_obs->add_option("--landmarks", obs_landmarks, "Landmark count for 'landmarks'");
  make_obs->add_option("--partial-fraction", obs_fraction, "Kept fraction of the long axis for 'partial'");
  make_obs->add_option("--out", obs_out, "Observation manifest")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", e.what());
    return kExitUsage;
  }

  try {
    if (*synth) {
      SynthConfig config;
      config.lollipop.vertex_budget = synth_budget;
      config.scale = synth_scale;
      const auto grid = anticorrelated_grid();
      const auto d = synth_kind == "shapes" ? make_shape_dataset(grid, config)
                                            : make_motion_dataset(grid, parse_motion_mode(synth_mode), config);
      const auto manifest = write_dataset(synth_out, d);
      json m = read_json(manifest);
      m["seed"] = synth_seed;
      write_json(manifest, m);
      std::cout << json{{"manifest", manifest.string()}, {"examples", d.examples.size()}}.dump() << std::endl;
    } else if (*build) {
      const auto d = read_dataset(build_dataset);
      const auto ref_index = select_reference(d.examples);
      const auto reference = make_reference(d.examples[ref_index], build_pose_points, d.faces);
      ModelBuildOptions opts;
      opts.rank = build_rank;
      opts.encoding.representation = parse_pose_representation(build_repr);
      opts.encoding.sr_scale_weight = build_sr_weight;
      const auto built = build_model(d.examples, reference, opts);
      save_model(build_out, built.model);
      std::cout << "reference joint: " << ref_index << ", examples: " << d.examples.size()
                << ", rank: " << built.model.rank() << (built.rank_deficient ? " (capped by the data)" : "") << "\n";
      pc_report_out(built.model, std::cout, build_csv);
    } else if (*sample_cmd) {
      const auto model = load_model(sample_model);
      Eigen::VectorXd alpha = Eigen::VectorXd::Zero(model.rank());
      if (alpha_file) {
        const auto values = read_json(*alpha_file).get<std::vector<double>>();
        if (static_cast<Eigen::Index>(values.size()) > model.rank()) throw InvalidParams("alpha longer than the rank");
        for (std::size_t k = 0; k < values.size(); ++k) alpha(static_cast<Eigen::Index>(k)) = values[k];
      } else if (random_seed) {
        CounterRng rng(*random_seed);
        std::normal_distribution<double> nd(0.0, 1.0);
        for (auto& a : alpha) a = nd(rng);
      }
      const auto inst = sample_joint(model, alpha);
      json poses = json::array();
      for (std::size_t j = 0; j < inst.objects.size(); ++j) {
        const auto& faces = model.reference().object(j).faces;
        write_mesh(sample_out / object_file("posed", j), {inst.objects[j].posed_shape, faces});
        write_mesh(sample_out / object_file("shape", j), {inst.objects[j].shape, faces});
        poses.push_back(pose_json(inst.objects[j].pose));
      }
      write_json(sample_out / "sample.json", {{"schema_version", kSchemaVersion},
                                              {"kind", "dmogpm-sample"},
                                              {"alpha", vector_json(alpha)},
                                              {"poses", poses}});
    } else if (*marg) {
      const auto model = load_model(marg_model);
      BlockSelector sel;
      if (marg_keep == "shape") {
        sel.feature = FeatureClass::Shape;
      } else if (marg_keep == "pose") {
        sel.feature = FeatureClass::Pose;
      } else if (marg_keep.rfind("object:", 0) == 0) {
        try {
          sel.object_id = std::stoi(marg_keep.substr(7));
        } catch (const std::exception&) {
          throw InvalidParams("bad object id in '" + marg_keep + "'");
        }
      } else {
        throw InvalidParams("--keep must be shape, pose or object:J");
      }
      const auto out = marginal_model(model, sel);
      save_model(marg_out, out);
      std::cout << json{{"model", marg_out.string()}, {"rank", out.rank()}}.dump() << std::endl;
    } else if (*fit_cmd) {
      const auto model = load_model(fit_model);
      const auto obs = read_observation(fit_obs);
      cfg.proposal_stddev = parse_list(proposal_sd);
      cfg.proposal_scales = parse_list(proposal_scales);
      std::optional<MultiObjectExample> truth;
      if (obs.truth_dataset) truth = truth_from(fit_obs, std::nullopt).first;
      const auto p = obs.spec.any_observed() ? predict_missing(model, obs.spec, cfg, truth)
                                             : Prediction{fit(model, obs.spec, cfg), {}, {}};
      const auto& r = p.fit;
      json poses = json::array(), local = json::array(), residuals = json::array();
      for (std::size_t j = 0; j < r.map_instance.objects.size(); ++j) {
        const auto& o = r.map_instance.objects[j];
        write_mesh(fit_out / object_file("map", j), {o.posed_shape, model.reference().object(j).faces});
        poses.push_back(pose_json(o.pose));
        local.push_back(std::isnan(r.local_acceptance[j]) ? json(nullptr) : json(r.local_acceptance[j]));
      }
      for (std::size_t j = 0; j < p.residuals.size(); ++j)
        residuals.push_back({{"object", j + 1},
                             {"rms", p.residuals[j].rms},
                             {"hausdorff", p.residuals[j].hausdorff},
                             {"angle", p.residuals[j].angle}});
      json missing = json::array();
      for (auto j : p.missing) missing.push_back(j + 1);
      write_json(fit_out / "fit.json",
                 {{"schema_version", kSchemaVersion},
                  {"kind", "dmogpm-fit"},
                  {"model", fs::absolute(fit_model).string()},
                  {"observation", fs::absolute(fit_obs).string()},
                  {"config",
                   {{"chain", cfg.chain_length},
                    {"burn", cfg.burn_in},
                    {"seed", cfg.seed},
                    {"sigma_obs", cfg.sigma_obs},
                    {"partial_cutoff", cfg.partial_cutoff},
                    {"proposal_sd", cfg.proposal_stddev},
                    {"proposal_scales", cfg.proposal_scales},
                    {"delayed_acceptance", cfg.delayed_acceptance}}},
                  {"map_alpha", vector_json(r.map_alpha)},
                  {"map_log_posterior", r.map_log_posterior},
                  {"map_poses", poses},
                  {"posterior_mean", vector_json(r.posterior_mean)},
                  {"posterior_stddev", vector_json(r.posterior_stddev)},
                  {"local_acceptance", local},
                  {"global_acceptance", r.global_acceptance},
                  {"acceptance_rate", r.acceptance_rate},
                  {"missing_objects", missing},
                  {"residuals", residuals}});
      std::cout << json{{"map_log_posterior", r.map_log_posterior}, {"acceptance_rate", r.acceptance_rate},
                        {"residuals", residuals}}
                       .dump()
                << std::endl;
    } else if (*eval) {
      const auto [truth, faces] = truth_from(eval_truth, eval_index);
      const json fitted = read_json(eval_pred / "fit.json");
      const auto& poses = fitted.at("map_poses");
      std::vector<EvalRow> rows;
      for (std::size_t j = 0; j < truth.objects.size(); ++j) {
        const auto pred = read_mesh(eval_pred / object_file("map", j));
        const TriangleMesh real{apply(truth.objects[j].pose, truth.objects[j].shape), faces.at(j)};
        const MeshIndex pred_index(pred), real_index(real);
        const auto rot = poses.at(j).at("rotation").get<std::vector<double>>();
        const auto tr = poses.at(j).at("translation").get<std::vector<double>>();
        Mat3 m;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) m(a, b) = rot.at(static_cast<std::size_t>(3 * a + b));
        const RigidTransform h(m, Vec3(tr.at(0), tr.at(1), tr.at(2)));
        rows.push_back({j + 1, rms_distance(pred, real_index), rms_distance(real, pred_index),
                        hausdorff_distance(pred, pred_index, real, real_index),
                        pose_angle_error(h, truth.objects[j].pose)});
      }
      std::ostringstream csv;
      csv << "object,rms,rms_reverse,hausdorff,angle_rad\n";
      json out = json::array();
      for (const auto& r : rows) {
        csv << r.object << ',' << json(r.rms).dump() << ',' << json(r.rms_reverse).dump() << ','
            << json(r.hausdorff).dump() << ',' << json(r.angle).dump() << '\n';
        out.push_back({{"object", r.object},
                       {"rms", r.rms},
                       {"rms_reverse", r.rms_reverse},
                       {"hausdorff", r.hausdorff},
                       {"angle_rad", r.angle}});
      }
      atomic_write(eval_out, csv.str());
      fs::path twin = eval_out;
      twin.replace_extension(".json");
      write_json(twin, {{"schema_version", kSchemaVersion}, {"kind", "dmogpm-eval"}, {"objects", out}});
      std::cout << csv.str();
    } else if (*report) {
      pc_report_out(load_model(report_model), std::cout, report_csv);
    } else if (*make_obs) {
      const auto d = read_dataset(obs_dataset);
      if (obs_index >= d.examples.size()) throw InvalidParams("joint index out of range");
      const auto types = split(obs_types, ',');
      const auto& joint = d.examples[obs_index];
      if (types.size() != joint.objects.size()) throw InvalidParams("one observation type per object expected");
      ObservationSpec spec;
      for (std::size_t j = 0; j < types.size(); ++j) {
        const auto& o = joint.objects[j];
        const PointSet posed = apply(o.pose, o.shape);
        switch (parse_observation_type(types[j])) {
          case ObservationType::None: spec.objects.push_back(ObjectObservation::none()); break;
          case ObservationType::Full: spec.objects.push_back(ObjectObservation::full(posed)); break;
          case ObservationType::Partial:
            spec.objects.push_back(ObjectObservation::partial(fragment_of({posed, d.faces[j]}, o.shape, obs_fraction)));
            break;
          case ObservationType::Landmarks: {
            std::vector<Landmark> lms;
            for (auto i : farthest_point_subsample(o.shape, obs_landmarks)) lms.push_back({i, posed.col(i)});
            spec.objects.push_back(ObjectObservation::from_landmarks(std::move(lms)));
            break;
          }
        }
      }
      write_observation(obs_out, spec, fs::absolute(obs_dataset), obs_index);
      std::cout << json{{"manifest", obs_out.string()}}.dump() << std::endl;
    }
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return kExitError;
  } catch (const json::exception& e) {
    print_error("ParseError", e.what());
    return kExitError;
  } catch (const fs::filesystem_error& e) {
    print_error("IoError", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    print_error("InternalError", e.what());
    return kExitInternal;
  }
  return 0;
}
