// Copyright 2026 The GPViT-cpp Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <json.hpp>

#include "gpvit/checkpoint.hpp"
#include "gpvit/config.hpp"
#include "gpvit/cost.hpp"
#include "gpvit/error.hpp"
#include "gpvit/harness/dataset.hpp"
#include "gpvit/harness/export_groups.hpp"
#include "gpvit/harness/gradcheck.hpp"
#include "gpvit/harness/invariants.hpp"
#include "gpvit/harness/manifest.hpp"
#include "gpvit/harness/train.hpp"
#include "gpvit/image_io.hpp"

namespace {

using namespace gpvit;

// Exit codes: 0 ok, 1 a check failed, 2 usage or configuration error, 3 I/O error.
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;
constexpr int kIo = 3;

struct Common {
  std::string preset;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string precision = "f32";
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c, const std::string& default_preset) {
  c.preset = default_preset;
  cmd->add_option("--preset", c.preset, "Built-in configuration name")->capture_default_str();
  cmd->add_option("--config", c.config_path, "Configuration file (overrides --preset)");
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--precision", c.precision, "f32 or f64")->capture_default_str();
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
}

ModelConfig resolve(const Common& c) { return c.config_path.empty() ? preset(c.preset) : load_config(c.config_path); }

std::string config_label(const Common& c) { return c.config_path.empty() ? c.preset : c.config_path; }

std::string write_text(const std::string& dir, const std::string& name, const std::string& text) {
  std::filesystem::create_directories(dir);
  const std::string path = (std::filesystem::path(dir) / name).string();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
  return path;
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

RunManifest manifest_for(const std::string& command, const Common& c) {
  RunManifest m;
  m.command = command;
  m.config = config_label(c);
  m.seed = c.seed;
  m.precision = c.precision;
  m.out_dir = c.out;
  m.git_describe = git_describe();
  return m;
}

void finish(RunManifest& m, const Timer& t) {
  m.wall_time_seconds = t.seconds();
  write_manifest(m);
}

// ---------------------------------------------------------------------------

int cmd_analyze(const Common& c, long long input) {
  Timer timer;
  const ModelConfig cfg = resolve(c);
  if (input != -1 && input <= 0) throw UsageError("--input must be positive");
  const std::size_t size = input == -1 ? cfg.input_size : static_cast<std::size_t>(input);
  const CostReport r = emit_report(cfg, size, size);
  RunManifest m = manifest_for("analyze", c);
  m.artifacts.push_back(write_text(c.out, "cost.json", report_json(r)));
  m.artifacts.push_back(write_text(c.out, "cost.csv", report_csv(r)));
  std::vector<std::size_t> tokens;
  for (std::size_t side = 14; side <= 224; side += 14) tokens.push_back(side * side);
  std::vector<ScalingBlock> blocks = {{ScalingKind::self_attn, 0}, {ScalingKind::window, 0}, {ScalingKind::lepe, 0}};
  for (std::size_t mm : {16, 32, 64}) blocks.push_back({ScalingKind::gp, mm});
  m.artifacts.push_back(write_text(c.out, "scaling.csv", scaling_csv(blocks, cfg.channels, tokens)));
  finish(m, timer);
  std::cout << cfg.name << " @" << size << ": params " << r.total_params << " (" << r.total_params / 1e6
            << " M), flops " << r.total_flops << " (" << r.total_flops / 1e9 << " G)\n";
  return 0;
}

int cmd_gradcheck(const Common& c, const GradcheckOptions& base) {
  Timer timer;
  if (c.precision != "f64") throw UsageError("gradcheck runs in f64 only; pass --precision f64");
  const ModelConfig cfg = resolve(c);
  GradcheckOptions opts = base;
  opts.seed = c.seed;
  const GradcheckReport r = run_gradcheck(cfg, opts);
  RunManifest m = manifest_for("gradcheck", c);
  m.artifacts.push_back(write_text(c.out, "gradcheck.json", gradcheck_json(r)));
  finish(m, timer);
  for (const auto& b : r.blocks) std::cout << b.name << " max_rel_err " << b.max_rel_error << "\n";
  std::cout << (r.passed ? "PASS" : "FAIL") << " max relative error " << r.max_rel_error << " (tolerance "
            << r.tolerance << ")\n";
  return r.passed ? 0 : kCheckFailed;
}

template <typename T>
int train_typed(const Common& c, const ModelConfig& cfg, const TrainOptions& opts, std::size_t per_class,
                const std::string& save, double target) {
  Timer timer;
  DatasetSpec spec;
  spec.classes = cfg.num_classes;
  spec.samples_per_class = per_class;
  spec.image_size = cfg.input_size;
  spec.seed = c.seed + 1;
  const Dataset<T> data = make_synthetic_dataset<T>(spec);
  Model<T> model(cfg, c.seed);
  const TrainResult r = train_smoke(model, data, opts);
  RunManifest m = manifest_for("train-smoke", c);
  m.artifacts.push_back(write_text(c.out, "metrics.csv", metrics_csv(r)));
  nlohmann::json j;
  j["epochs_run"] = r.history.back().epoch;
  j["final_accuracy"] = r.final_accuracy();
  j["best_accuracy"] = r.best_accuracy();
  j["diverged"] = r.diverged;
  j["last_good_epoch"] = r.last_good_epoch;
  j["passed"] = !r.diverged && r.best_accuracy() >= target;
  m.artifacts.push_back(write_text(c.out, "train.json", j.dump(2) + "\n"));
  if (!save.empty()) {
    save_checkpoint(save, model);
    m.artifacts.push_back(save);
  }
  finish(m, timer);
  std::cout << "epochs " << r.history.back().epoch << ", final train accuracy " << r.final_accuracy() << "\n";
  if (r.diverged) {
    std::cerr << "training diverged; parameters restored to epoch " << r.last_good_epoch << "\n";
    return kCheckFailed;
  }
  return r.best_accuracy() >= target ? 0 : kCheckFailed;
}

template <typename T>
int export_typed(const Common& c, const ModelConfig& cfg, const std::string& checkpoint, const std::string& image_path) {
  Timer timer;
  Model<T> model(cfg, c.seed);
  if (!checkpoint.empty()) load_checkpoint(checkpoint, model);
  Image image;
  if (image_path.empty()) {
    DatasetSpec spec;
    spec.classes = 4;
    spec.samples_per_class = 1;
    spec.image_size = cfg.input_size;
    spec.seed = c.seed;
    const Tensor<float> t = make_synthetic_dataset<float>(spec).images.back();
    image = {cfg.input_size, cfg.input_size, 3, {}};
    for (float v : t.data()) image.pixels.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
  } else {
    image = read_pnm(image_path);
  }
  RunManifest m = manifest_for("export-groups", c);
  m.artifacts = export_groups(model, image, c.out);
  finish(m, timer);
  std::cout << "wrote " << m.artifacts.size() << " files to " << c.out << "\n";
  return 0;
}

int cmd_invariants(const Common& c, const std::string& suites, bool fault) {
  Timer timer;
  const ModelConfig cfg = resolve(c);
  InvariantOptions opts;
  opts.seed = c.seed;
  opts.flip_grouping_softmax = fault;
  std::stringstream list(suites);
  for (std::string s; std::getline(list, s, ',');) {
    if (s.empty()) continue;
    if (s == "all") {
      opts.suites = invariant_suite_names();
      break;
    }
    opts.suites.push_back(s);
  }
  const InvariantReport r = run_invariants(cfg, opts);
  RunManifest m = manifest_for("invariants", c);
  m.artifacts.push_back(write_text(c.out, "invariants.json", invariants_json(r)));
  finish(m, timer);
  for (const auto& ch : r.checks) {
    std::cout << (ch.passed ? "PASS " : "FAIL ") << ch.suite << ": " << ch.name << " (" << ch.value << " vs "
              << ch.threshold << (ch.detail.empty() ? "" : ", " + ch.detail) << ")\n";
  }
  std::cout << r.checks.size() - r.failures() << "/" << r.checks.size() << " checks passed\n";
  return r.passed() ? 0 : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GPViT reference implementation: cost analysis, gradient checks, smoke training, invariants"};
  app.require_subcommand(1);

  Common analyze_c, grad_c, train_c, export_c, inv_c;
  long long input = -1;
  auto* analyze = app.add_subcommand("analyze", "Parameter and FLOP report plus scaling curves");
  add_common(analyze, analyze_c, "gpvit-l1");
  analyze->add_option("--input", input, "Square input size (default: configured size)");

  GradcheckOptions gopts;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  add_common(grad, grad_c, "tiny-gradcheck");
  grad_c.precision = "f64";
  grad->add_option("--max-params", gopts.max_params, "Parameter cap")->capture_default_str();
  grad->add_option("--tolerance", gopts.tolerance, "Max relative error")->capture_default_str();
  grad->add_flag("--zero-head", gopts.zero_head, "Zero the classifier before checking");

  TrainOptions topts;
  std::size_t per_class = 8;
  std::string save_path;
  double target = 0.95;
  auto* train = app.add_subcommand("train-smoke", "Overfit a synthetic dataset");
  add_common(train, train_c, "tiny-train");
  train->add_option("--epochs", topts.epochs)->capture_default_str();
  train->add_option("--lr", topts.lr)->capture_default_str();
  train->add_option("--batch-size", topts.batch_size)->capture_default_str();
  train->add_option("--samples-per-class", per_class)->capture_default_str();
  train->add_option("--target", target, "Accuracy required for exit code 0")->capture_default_str();
  train->add_flag("--stop-at-target", "Stop once the target accuracy is reached");
  train->add_option("--save-checkpoint", save_path, "Write the trained parameters here");

  std::string checkpoint, image_path;
  auto* exp = app.add_subcommand("export-groups", "Write group assignment maps for every GP block");
  add_common(exp, export_c, "gpvit-l1");
  exp->add_option("--checkpoint", checkpoint, "Checkpoint to load (default: seeded initialisation)");
  exp->add_option("--image", image_path, "PGM/PPM input at the configured size (default: synthetic)");

  std::string suites = "all";
  bool fault = false;
  auto* inv = app.add_subcommand("invariants", "Mechanism invariant suites");
  add_common(inv, inv_c, "tiny");
  inv->add_option("--suite", suites, "Comma-separated suites, or 'all'")->capture_default_str();
  inv->add_flag("--fault-flip-softmax", fault, "Normalise grouping weights over groups (harness sanity check)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kUsage;
  }

  try {
    configure_threads_from_env();
    if (*analyze) return cmd_analyze(analyze_c, input);
    if (*grad) return cmd_gradcheck(grad_c, gopts);
    if (*train) {
      if (train->count("--stop-at-target")) topts.stop_at_accuracy = target;
      topts.seed = train_c.seed;
      const ModelConfig cfg = resolve(train_c);
      const Precision p = parse_precision(train_c.precision);
      return p == Precision::f64 ? train_typed<double>(train_c, cfg, topts, per_class, save_path, target)
                                 : train_typed<float>(train_c, cfg, topts, per_class, save_path, target);
    }
    if (*exp) {
      const ModelConfig cfg = resolve(export_c);
      const Precision p = parse_precision(export_c.precision);
      return p == Precision::f64 ? export_typed<double>(export_c, cfg, checkpoint, image_path)
                                 : export_typed<float>(export_c, cfg, checkpoint, image_path);
    }
    if (*inv) {
      if (suites.empty()) throw UsageError("invariants: no suites selected");
      return cmd_invariants(inv_c, suites, fault);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kUsage;
}
