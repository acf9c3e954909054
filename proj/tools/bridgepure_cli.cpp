// Copyright 2026 The BridgePure Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>

#include "CLI11.hpp"

#include "bridgepure/classifier.hpp"
#include "bridgepure/experiment.hpp"
#include "bridgepure/metrics.hpp"
#include "bridgepure/pairing.hpp"
#include "bridgepure/protections.hpp"
#include "bridgepure/sampler.hpp"
#include "bridgepure/synth_data.hpp"

namespace fs = std::filesystem;
using bridgepure::parse_fraction;
using nlohmann::json;

namespace {

// Owns a run directory for the lifetime of the process.
class RunLock {
 public:
  explicit RunLock(const std::string& run_dir) : path_(run_dir + "/.lock") {
    fs::create_directories(run_dir);
    if (fs::exists(path_)) {
      throw std::runtime_error("run directory is locked by another process (remove " + path_ +
                               " if stale)");
    }
    std::ofstream f(path_, std::ios::trunc);
    f << ::getpid() << "\n";
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  std::string path_;
};

std::string runs_root() {
  const char* env = std::getenv("BRIDGEPURE_RUNS_DIR");
  return env ? env : "runs";
}

json load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Convert the byte offset into a line:column diagnostic.
    size_t line = 1, col = 1;
    for (size_t i = 0; i < std::min(text.size(), e.byte); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw std::runtime_error(path + ":" + std::to_string(line) + ":" + std::to_string(col) +
                             ": " + e.what());
  }
}

// --set dotted.path=value overrides on the config JSON.
void apply_override(json& cfg, const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw std::runtime_error("--set expects key.path=value, got: " + assignment);
  }
  std::string path = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);
  json* node = &cfg;
  size_t pos = 0;
  while (true) {
    size_t dot = path.find('.', pos);
    std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (dot == std::string::npos) {
      try {
        (*node)[key] = json::parse(value);
      } catch (const json::parse_error&) {
        try {
          (*node)[key] = parse_fraction(value);  // accept 8/255-style literals
        } catch (const std::exception&) {
          (*node)[key] = value;
        }
      }
      return;
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
}

bridgepure::ProtectionSpec spec_from_flags(const std::string& kind, const std::string& epsilon,
                                           int class_count, uint64_t pattern_seed) {
  bridgepure::ProtectionSpec spec;
  spec.kind = bridgepure::protection_kind_from_name(kind);
  spec.epsilon = parse_fraction(epsilon);
  spec.class_count = class_count;
  spec.pattern_seed = pattern_seed;
  if (spec.kind == bridgepure::ProtectionKind::kMixture) {
    for (const char* member : {"classwise-linf", "one-pixel", "patch-l2"}) {
      bridgepure::ProtectionSpec m = spec;
      m.kind = bridgepure::protection_kind_from_name(member);
      m.epsilon = m.kind == bridgepure::ProtectionKind::kPatchL2 ? 1.0 : spec.epsilon;
      m.members.clear();
      spec.members.push_back(m);
    }
  }
  return spec;
}

int do_main(int argc, char** argv) {
  CLI::App app{"bridgepure: protection leakage, bridge training, purification, evaluation"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic shape dataset");
  int g_classes = 10, g_h = 32, g_w = 32;
  size_t g_count = 7000;
  uint64_t g_seed = 0;
  std::string g_out;
  gen->add_option("--classes", g_classes);
  gen->add_option("--count", g_count, "total image count");
  gen->add_option("--height", g_h);
  gen->add_option("--width", g_w);
  gen->add_option("--seed", g_seed);
  gen->add_option("--out", g_out)->required();

  // protect: the black-box protection service surface
  auto* prot = app.add_subcommand("protect", "apply a protection mechanism to a dataset folder");
  std::string p_kind = "classwise-linf", p_eps = "8/255", p_in, p_out;
  int p_classes = 10;
  uint64_t p_seed = 0;
  prot->add_option("--spec", p_kind, "classwise-linf | one-pixel | patch-l2 | mixture");
  prot->add_option("--epsilon", p_eps, "budget; accepts fraction literals like 8/255");
  prot->add_option("--class-count", p_classes);
  prot->add_option("--pattern-seed", p_seed);
  prot->add_option("--in", p_in)->required();
  prot->add_option("--out", p_out)->required();

  // harvest
  auto* harv = app.add_subcommand("harvest", "collect (clean, protected) leakage pairs");
  std::string h_kind = "classwise-linf", h_eps = "8/255", h_ref, h_out, h_classes;
  int h_class_count = 10;
  size_t h_n = 500, h_per_class = 0;
  uint64_t h_seed = 0, h_pattern_seed = 0;
  harv->add_option("--spec", h_kind);
  harv->add_option("--epsilon", h_eps);
  harv->add_option("--class-count", h_class_count);
  harv->add_option("--pattern-seed", h_pattern_seed);
  harv->add_option("--reference", h_ref)->required();
  harv->add_option("--n", h_n);
  harv->add_option("--classes", h_classes, "comma-separated class filter for partial leakage");
  harv->add_option("--per-class", h_per_class);
  harv->add_option("--seed", h_seed);
  harv->add_option("--out", h_out)->required();

  // train
  auto* tr = app.add_subcommand("train", "train a bridge model on a pair archive");
  std::string t_archive, t_out, t_mode = "VE";
  long t_steps = 4000;
  int t_batch = 32, t_base = 16;
  double t_lr = 2e-3, t_beta = 0.0, t_sigma_min = 0.02, t_sigma_max = 80.0;
  uint64_t t_seed = 0;
  tr->add_option("--archive", t_archive)->required();
  tr->add_option("--out", t_out)->required();
  tr->add_option("--steps", t_steps);
  tr->add_option("--batch", t_batch);
  tr->add_option("--lr", t_lr);
  tr->add_option("--beta", t_beta, "Gaussian pre-processing strength");
  tr->add_option("--mode", t_mode, "VE | VP");
  tr->add_option("--sigma-min", t_sigma_min);
  tr->add_option("--sigma-max", t_sigma_max);
  tr->add_option("--base", t_base, "unet base width");
  tr->add_option("--seed", t_seed);

  // purify
  auto* pur = app.add_subcommand("purify", "purify a protected dataset folder");
  std::string u_model, u_in, u_out, u_s = "0";
  int u_steps = 40, u_batch = 64;
  double u_guidance = -1.0, u_beta = 0.0;
  uint64_t u_seed = 0;
  pur->add_option("--model", u_model)->required();
  pur->add_option("--in", u_in)->required();
  pur->add_option("--out", u_out)->required();
  pur->add_option("--steps", u_steps);
  pur->add_option("--s", u_s, "sampling randomness in [0,1]; fraction literals accepted");
  pur->add_option("--guidance", u_guidance);
  pur->add_option("--beta", u_beta);
  pur->add_option("--batch", u_batch);
  pur->add_option("--seed", u_seed);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "train classifiers and report accuracy");
  std::string e_train, e_test, e_out, e_arch = "resnet-compact";
  int e_epochs = 30, e_trials = 1, e_width = 16, e_batch = 128;
  uint64_t e_seed = 0;
  ev->add_option("--train", e_train)->required();
  ev->add_option("--test", e_test)->required();
  ev->add_option("--out", e_out, "report JSON path");
  ev->add_option("--arch", e_arch, "resnet-compact | linear");
  ev->add_option("--epochs", e_epochs);
  ev->add_option("--trials", e_trials);
  ev->add_option("--width", e_width);
  ev->add_option("--batch", e_batch);
  ev->add_option("--seed", e_seed);

  // experiment
  auto* ex = app.add_subcommand("experiment", "run a full pipeline from a config file");
  std::string x_config, x_out;
  bool x_dry = false;
  std::vector<std::string> x_sets;
  ex->add_option("--config", x_config)->required();
  ex->add_option("--out", x_out, "run directory (default <runs>/<config name>)");
  ex->add_flag("--dry-run", x_dry, "print the resolved stage plan without executing");
  ex->add_option("--set", x_sets, "config override, e.g. --set sampler.s=0.33");

  // report
  auto* rep = app.add_subcommand("report", "re-render plots from a run directory");
  std::string r_run;
  rep->add_option("--run", r_run)->required();

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    bridgepure::Dataset ds =
        bridgepure::generate_synthetic(g_classes, g_count, g_h, g_w, g_seed);
    bridgepure::save_dataset_folder(g_out, ds);
    std::printf("wrote %zu images (%d classes, %dx%d) to %s\n", ds.size(), g_classes, g_h, g_w,
                g_out.c_str());
    return 0;
  }

  if (prot->parsed()) {
    bridgepure::ProtectionSpec spec = spec_from_flags(p_kind, p_eps, p_classes, p_seed);
    bridgepure::Dataset in = bridgepure::load_dataset_folder(p_in);
    bridgepure::Dataset out = bridgepure::protect_dataset(spec, in);
    bridgepure::save_dataset_folder(p_out, out);
    std::printf("protected %zu images with %s (budget %s in %s) -> %s\n", out.size(),
                p_kind.c_str(), p_eps.c_str(), spec.norm_name().c_str(), p_out.c_str());
    return 0;
  }

  if (harv->parsed()) {
    bridgepure::ProtectionSpec spec =
        spec_from_flags(h_kind, h_eps, h_class_count, h_pattern_seed);
    bridgepure::Dataset ref = bridgepure::load_dataset_folder(h_ref);
    std::optional<std::vector<int>> filter;
    if (!h_classes.empty()) {
      std::vector<int> cls;
      size_t pos = 0;
      while (pos < h_classes.size()) {
        size_t comma = h_classes.find(',', pos);
        cls.push_back(std::stoi(h_classes.substr(pos, comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
      filter = cls;
    }
    bridgepure::PairArchive archive =
        bridgepure::harvest_leakage(spec, ref, h_n, h_seed, filter, h_per_class);
    archive.save(h_out);
    std::printf("harvested %zu pairs (manifest %s) -> %s\n", archive.size(),
                archive.manifest_hash().substr(0, 12).c_str(), h_out.c_str());
    return 0;
  }

  if (tr->parsed()) {
    bridgepure::PairArchive archive = bridgepure::PairArchive::load(t_archive);
    bridgepure::NoiseSchedule sched =
        t_mode == "VP" ? bridgepure::NoiseSchedule::vp()
                       : bridgepure::NoiseSchedule::ve(t_sigma_min, t_sigma_max);
    bridgepure::Dataset prot;
    prot.images = archive.protected_images;
    prot.labels = archive.labels;
    prot.ids = archive.ids;
    bridgepure::Preprocess pp{t_beta, bridgepure::derive_seed(t_seed, "preprocess-train")};
    bridgepure::Dataset prot_pp = bridgepure::preprocess_dataset(pp, prot);
    std::vector<bridgepure::PairView> pairs(archive.size());
    for (size_t i = 0; i < archive.size(); ++i) {
      pairs[i] = bridgepure::PairView{&archive.clean[i], &prot_pp.images[i]};
    }
    bridgepure::TrainConfig cfg;
    cfg.steps = t_steps;
    cfg.batch_size = t_batch;
    cfg.learning_rate = t_lr;
    cfg.seed = t_seed;
    cfg.checkpoint_dir = t_out;
    int channels = archive.clean[0].c;
    json arch{{"type", "unet"}, {"base", t_base}, {"mults", json{1, 2}}, {"groups", 8},
              {"channels", channels}};
    auto model = bridgepure::fit(pairs, sched, arch, cfg, [](long step, double loss) {
      std::printf("step %ld loss %.5f\n", step, loss);
      std::fflush(stdout);
    });
    std::printf("trained %zu-parameter model for %ld steps -> %s/model.bpck\n",
                model->param_count(), t_steps, t_out.c_str());
    return 0;
  }

  if (pur->parsed()) {
    auto model = bridgepure::ScoreModel::load(u_model);
    bridgepure::Dataset in = bridgepure::load_dataset_folder(u_in);
    bridgepure::Preprocess pp{u_beta, bridgepure::derive_seed(u_seed, "preprocess-purify")};
    bridgepure::Dataset input = bridgepure::preprocess_dataset(pp, in);
    bridgepure::SamplerConfig cfg;
    cfg.steps = u_steps;
    cfg.s = parse_fraction(u_s);
    cfg.guidance = u_guidance;
    cfg.seed = u_seed;
    bridgepure::ModelScore source(*model);
    bridgepure::PurifyResult res = bridgepure::purify_dataset(
        source, input, cfg, u_batch, [](size_t done, size_t total, double secs) {
          std::printf("purify %zu/%zu (%.2fs/batch)\n", done, total, secs);
          std::fflush(stdout);
        });
    for (bridgepure::Image& img : res.purified.images) bridgepure::quantize8(img);
    bridgepure::save_dataset_folder(u_out, res.purified);
    std::printf("purified %zu images (%zu faults) -> %s\n", res.purified.size(),
                res.faults.size(), u_out.c_str());
    return res.faults.empty() ? 0 : 2;
  }

  if (ev->parsed()) {
    bridgepure::Dataset train = bridgepure::load_dataset_folder(e_train);
    bridgepure::Dataset test = bridgepure::load_dataset_folder(e_test);
    bridgepure::EvalConfig cfg;
    cfg.arch = bridgepure::classifier_arch_from_name(e_arch);
    cfg.epochs = e_epochs;
    cfg.trials = e_trials;
    cfg.width = e_width;
    cfg.batch_size = e_batch;
    cfg.seed = e_seed;
    bridgepure::EvalReport report = bridgepure::train_and_score(train, test, cfg);
    json out = report.to_json();
    if (!e_out.empty()) {
      std::ofstream f(e_out, std::ios::trunc);
      f << out.dump(2);
    }
    std::printf("accuracy %.4f%s\n", report.mean_accuracy,
                report.std_valid ? (" +- " + std::to_string(report.std_accuracy)).c_str() : "");
    return 0;
  }

  if (ex->parsed()) {
    json cfg = load_config_file(x_config);
    for (const std::string& s : x_sets) apply_override(cfg, s);
    json resolved = bridgepure::resolve_experiment_config(cfg);
    std::string run_dir =
        x_out.empty() ? runs_root() + "/" + resolved.at("name").get<std::string>() : x_out;
    if (x_dry) {
      bridgepure::run_experiment(cfg, run_dir, /*dry_run=*/true);
      return 0;
    }
    RunLock lock(run_dir);
    bridgepure::ExperimentOutcome out = bridgepure::run_experiment(cfg, run_dir);
    std::printf("report: %s/report.json\n", out.run_dir.c_str());
    return 0;
  }

  if (rep->parsed()) {
    bridgepure::render_report_plots(r_run);
    std::printf("plots rendered under %s/plots\n", r_run.c_str());
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return do_main(argc, argv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
