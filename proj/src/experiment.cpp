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

#include "bridgepure/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>

#include "bridgepure/classifier.hpp"
#include "bridgepure/metrics.hpp"
#include "bridgepure/pairing.hpp"
#include "bridgepure/plots.hpp"
#include "bridgepure/protections.hpp"
#include "bridgepure/sampler.hpp"
#include "bridgepure/synth_data.hpp"

namespace bridgepure {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json dataset_defaults() {
  return json{{"kind", "synthetic"}, {"classes", 10},   {"height", 32},
              {"width", 32},         {"protect", 5000}, {"reference", 1000},
              {"test", 1000},        {"path", ""}};
}

json merged(const json& defaults, const json& given, const std::string& where) {
  json out = defaults;
  for (auto it = given.begin(); it != given.end(); ++it) {
    if (!out.contains(it.key())) {
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
    }
    out[it.key()] = it.value();
  }
  return out;
}

}  // namespace

json resolve_experiment_config(const json& config) {
  json defaults{
      {"name", "experiment"},
      {"seed", 0},
      {"dataset", dataset_defaults()},
      {"protection",
       json{{"kind", "classwise-linf"}, {"epsilon", 8.0 / 255.0}, {"class_count", 10},
            {"pattern_seed", 0}, {"members", json::array()}}},
      {"leakage", json{{"n", 500}, {"per_class", 0}, {"classes", json::array()}}},
      {"preprocess", json{{"beta", 0.0}}},
      {"schedule", json{{"mode", "VE"}, {"t_max", 1.0}, {"sigma_min", 0.02}, {"sigma_max", 80.0},
                        {"beta_min_rate", 0.1}, {"beta_max_rate", 20.0}}},
      {"arch", json{{"type", "unet"}, {"base", 16}, {"mults", json{1, 2}}, {"groups", 8},
                    {"channels", 3}}},
      {"train", TrainConfig{}.to_json()},
      {"sampler", json{{"steps", 40}, {"s", 0.0}, {"guidance", -1.0}}},
      {"eval", EvalConfig{}.to_json()},
      {"grid", json{{"s", json::array()}, {"beta", json::array()}}},
      {"transfer", json{{"protection", json()}}},
      {"dilution", json{{"extra", 0}}},
      {"purify_batch", 64},
  };
  json out = defaults;
  for (auto it = config.begin(); it != config.end(); ++it) {
    const std::string& k = it.key();
    if (!defaults.contains(k)) {
      throw std::invalid_argument("config: unknown top-level key '" + k + "'");
    }
    if (defaults[k].is_object() && !defaults[k].empty() && it.value().is_object() &&
        k != "transfer") {
      out[k] = merged(defaults[k], it.value(), k);
    } else {
      out[k] = it.value();
    }
  }
  // The seed threads into per-stage streams; stamp it where stages read it.
  uint64_t seed = out.at("seed").get<uint64_t>();
  if (!out["train"].contains("seed") || out["train"]["seed"].get<uint64_t>() == 0) {
    out["train"]["seed"] = derive_seed(seed, "train");
  }
  if (!out["eval"].contains("seed") || out["eval"]["seed"].get<uint64_t>() == 0) {
    out["eval"]["seed"] = derive_seed(seed, "eval");
  }
  return out;
}

std::string experiment_config_hash(const json& resolved) {
  return sha256_hex(resolved.dump()).substr(0, 16);
}

namespace {

std::string short_key(const json& j) { return sha256_hex(j.dump()).substr(0, 12); }

std::string cell_tag(double s, double beta) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "s%.4g_b%.4g", s, beta);
  return buf;
}

// Stage engine: a stage is a named, keyed unit of work whose outputs (JSON)
// are persisted in its directory. Complete stages load from disk.
class StageRunner {
 public:
  StageRunner(std::string run_dir, bool dry_run)
      : run_dir_(std::move(run_dir)), dry_run_(dry_run) {}

  bool dry_run() const { return dry_run_; }
  const std::vector<json>& plan() const { return plan_; }

  json run(const std::string& name, const json& key_material,
           const std::function<json(const std::string& stage_dir)>& fn) {
    std::string key = short_key(key_material);
    std::string dir = run_dir_ + "/stages/" + name + "-" + key;
    bool cached = fs::exists(dir + "/stage.json");
    plan_.push_back(json{{"stage", name}, {"key", key}, {"cached", cached}});
    if (dry_run_) {
      std::printf("[plan] %-22s key=%s %s\n", name.c_str(), key.c_str(),
                  cached ? "(cached)" : "(pending)");
      return json();
    }
    if (cached) {
      std::ifstream f(dir + "/stage.json");
      json marker = json::parse(f);
      if (marker.value("status", "") == "complete" && marker.value("key", "") == key) {
        std::printf("[stage] %-22s cached (%s)\n", name.c_str(), key.c_str());
        return marker.at("outputs");
      }
    }
    std::printf("[stage] %-22s running...\n", name.c_str());
    std::fflush(stdout);
    auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(dir);
    json outputs;
    try {
      outputs = fn(dir);
    } catch (const std::exception& e) {
      json fail{{"stage", name}, {"key", key}, {"error", e.what()}};
      std::ofstream f(run_dir_ + "/failure.json", std::ios::trunc);
      f << fail.dump(2);
      throw std::runtime_error("stage '" + name + "' failed: " + e.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json marker{{"name", name}, {"key", key}, {"status", "complete"}, {"outputs", outputs},
                {"seconds", secs}};
    std::ofstream f(dir + "/stage.json", std::ios::trunc);
    f << marker.dump(2);
    std::printf("[stage] %-22s done in %.1fs\n", name.c_str(), secs);
    std::fflush(stdout);
    return outputs;
  }

 private:
  std::string run_dir_;
  bool dry_run_;
  std::vector<json> plan_;
};

std::string dataset_content_hash(const Dataset& ds) {
  std::string acc;
  for (size_t i = 0; i < ds.size(); ++i) {
    acc += ds.ids[i];
    acc += ':';
    acc += std::to_string(ds.labels[i]);
    acc += ';';
  }
  return sha256_hex(acc).substr(0, 16);
}

double accuracy_of(const json& eval_report) {
  return eval_report.at("mean_accuracy").get<double>();
}

struct GroupAccuracy {
  double leaked = 0.0;
  double non_leaked = 0.0;
  double all = 0.0;
};

GroupAccuracy group_accuracy(const json& eval_report, const std::vector<int>& leaked_classes) {
  GroupAccuracy g;
  std::set<int> leaked(leaked_classes.begin(), leaked_classes.end());
  const auto& per_class = eval_report.at("per_class_accuracy");
  double ls = 0.0, ns = 0.0;
  int lc = 0, nc = 0;
  for (size_t c = 0; c < per_class.size(); ++c) {
    double a = per_class[c].get<double>();
    if (leaked.count(static_cast<int>(c))) {
      ls += a;
      ++lc;
    } else {
      ns += a;
      ++nc;
    }
  }
  g.leaked = lc ? ls / lc : 0.0;
  g.non_leaked = nc ? ns / nc : 0.0;
  g.all = accuracy_of(eval_report);
  return g;
}

}  // namespace

ExperimentOutcome run_experiment(const json& config, const std::string& run_dir, bool dry_run) {
  json cfg = resolve_experiment_config(config);
  std::string cfg_hash = experiment_config_hash(cfg);
  uint64_t seed = cfg.at("seed").get<uint64_t>();

  if (!dry_run) {
    fs::create_directories(run_dir);
    std::ofstream echo(run_dir + "/config.json", std::ios::trunc);
    echo << cfg.dump(2);
  }
  StageRunner stages(run_dir, dry_run);

  // ---- data ----------------------------------------------------------------
  const json& dcfg = cfg.at("dataset");
  json data_out = stages.run("data", json{{"dataset", dcfg}, {"seed", seed}}, [&](const std::string& dir) {
    Dataset all;
    if (dcfg.at("kind") == "synthetic") {
      size_t total = dcfg.at("protect").get<size_t>() + dcfg.at("reference").get<size_t>() +
                     dcfg.at("test").get<size_t>();
      all = generate_synthetic(dcfg.at("classes").get<int>(), total, dcfg.at("height").get<int>(),
                               dcfg.at("width").get<int>(), derive_seed(seed, "data"));
    } else if (dcfg.at("kind") == "folder") {
      all = load_dataset_folder(dcfg.at("path").get<std::string>());
    } else {
      throw std::invalid_argument("dataset.kind must be 'synthetic' or 'folder'");
    }
    DatasetSplit split =
        make_splits(all, dcfg.at("protect").get<size_t>(), dcfg.at("reference").get<size_t>(),
                    dcfg.at("test").get<size_t>(), derive_seed(seed, "splits"));
    save_dataset_folder(dir + "/protect", split.protect_set);
    save_dataset_folder(dir + "/reference", split.reference_set);
    save_dataset_folder(dir + "/test", split.test_set);
    return json{{"protect", dir + "/protect"},
                {"reference", dir + "/reference"},
                {"test", dir + "/test"},
                {"hash", dataset_content_hash(split.protect_set) + "/" +
                             dataset_content_hash(split.reference_set) + "/" +
                             dataset_content_hash(split.test_set)}};
  });

  // ---- protect (the dataset the adversary wants to purify) -----------------
  ProtectionSpec leak_spec = ProtectionSpec::from_json(cfg.at("protection"));
  ProtectionSpec target_spec = leak_spec;
  bool transfer = cfg.at("transfer").contains("protection") &&
                  cfg.at("transfer").at("protection").is_object();
  if (transfer) {
    target_spec = ProtectionSpec::from_json(cfg.at("transfer").at("protection"));
  }
  json protect_out = stages.run(
      "protect", json{{"data", data_out}, {"protection", target_spec.to_json()}},
      [&](const std::string& dir) {
        Dataset protect_set = load_dataset_folder(data_out.at("protect").get<std::string>());
        Dataset protected_set = protect_dataset(target_spec, protect_set);
        save_dataset_folder(dir + "/protected", protected_set);
        return json{{"protected", dir + "/protected"},
                    {"protection_id", target_spec.id()},
                    {"hash", dataset_content_hash(protected_set)}};
      });

  // ---- harvest leakage pairs ------------------------------------------------
  const json& lcfg = cfg.at("leakage");
  bool partial = lcfg.at("per_class").get<size_t>() > 0;
  json harvest_out = stages.run(
      "harvest",
      json{{"data", data_out}, {"protection", leak_spec.to_json()}, {"leakage", lcfg},
           {"seed", seed}},
      [&](const std::string& dir) {
        Dataset reference = load_dataset_folder(data_out.at("reference").get<std::string>());
        PairArchive archive;
        if (partial) {
          std::vector<int> classes = lcfg.at("classes").get<std::vector<int>>();
          archive = harvest_leakage(leak_spec, reference, 0, derive_seed(seed, "harvest"),
                                    classes, lcfg.at("per_class").get<size_t>());
        } else {
          archive = harvest_leakage(leak_spec, reference, lcfg.at("n").get<size_t>(),
                                    derive_seed(seed, "harvest"));
        }
        archive.save(dir + "/archive");
        return json{{"archive", dir + "/archive"},
                    {"manifest_hash", archive.manifest_hash()},
                    {"pairs", archive.size()}};
      });

  // ---- baselines --------------------------------------------------------------
  EvalConfig eval_cfg = EvalConfig::from_json(cfg.at("eval"));
  auto eval_stage = [&](const std::string& name, const json& dep_key,
                        const std::function<Dataset()>& train_set) {
    return stages.run(name, json{{"dep", dep_key}, {"eval", cfg.at("eval")}},
                      [&](const std::string& dir) {
                        Dataset test = load_dataset_folder(data_out.at("test").get<std::string>());
                        EvalReport rep = train_and_score(train_set(), test, eval_cfg);
                        json out = rep.to_json();
                        std::ofstream f(dir + "/eval.json", std::ios::trunc);
                        f << out.dump(2);
                        return out;
                      });
  };

  json clean_eval = eval_stage("eval-clean", data_out, [&] {
    return load_dataset_folder(data_out.at("protect").get<std::string>());
  });
  json protected_eval = eval_stage("eval-protected", protect_out, [&] {
    return load_dataset_folder(protect_out.at("protected").get<std::string>());
  });

  json dilution_eval;
  size_t dilution_extra = cfg.at("dilution").at("extra").get<size_t>();
  if (dilution_extra > 0) {
    dilution_eval = eval_stage(
        "eval-dilution", json{{"protect", protect_out}, {"extra", dilution_extra}}, [&] {
          Dataset protected_set =
              load_dataset_folder(protect_out.at("protected").get<std::string>());
          Dataset reference = load_dataset_folder(data_out.at("reference").get<std::string>());
          std::vector<size_t> idx;
          for (size_t i = 0; i < std::min(dilution_extra, reference.size()); ++i) {
            idx.push_back(i);
          }
          return dilute(protected_set, reference.subset(idx)).data;
        });
  }

  // ---- grid cells ---------------------------------------------------------------
  std::vector<double> s_values;
  std::vector<double> beta_values;
  for (const auto& v : cfg.at("grid").at("s")) s_values.push_back(v.get<double>());
  for (const auto& v : cfg.at("grid").at("beta")) beta_values.push_back(v.get<double>());
  if (s_values.empty()) s_values.push_back(cfg.at("sampler").at("s").get<double>());
  if (beta_values.empty()) beta_values.push_back(cfg.at("preprocess").at("beta").get<double>());

  NoiseSchedule sched = NoiseSchedule::from_json(cfg.at("schedule"));
  TrainConfig train_cfg = TrainConfig::from_json(cfg.at("train"));

  json cells = json::array();
  struct CellRef {
    double s, beta;
    double accuracy;
  };
  std::vector<CellRef> cell_refs;

  for (double beta : beta_values) {
    // Training depends on beta but not on s: one model per beta value.
    json train_out = stages.run(
        "train-b" + cell_tag(0, beta).substr(3),
        json{{"harvest", harvest_out}, {"beta", beta}, {"schedule", cfg.at("schedule")},
             {"arch", cfg.at("arch")}, {"train", cfg.at("train")}},
        [&](const std::string& dir) {
          PairArchive archive = PairArchive::load(harvest_out.at("archive").get<std::string>());
          Dataset prot;
          prot.images = archive.protected_images;
          prot.labels = archive.labels;
          prot.ids = archive.ids;
          Preprocess pp{beta, derive_seed(seed, "preprocess-train")};
          Dataset prot_pp = preprocess_dataset(pp, prot);
          std::vector<PairView> pairs(archive.size());
          for (size_t i = 0; i < archive.size(); ++i) {
            pairs[i] = PairView{&archive.clean[i], &prot_pp.images[i]};
          }
          TrainConfig tc = train_cfg;
          tc.checkpoint_dir = dir;
          auto model = fit(pairs, sched, cfg.at("arch"), tc, [](long step, double loss) {
            std::printf("  train step %ld loss %.5f\n", step, loss);
            std::fflush(stdout);
          });
          model->set_config_hash(cfg_hash);
          model->save(dir + "/model.bpck");
          return json{{"model", dir + "/model.bpck"}, {"beta", beta}};
        });

    for (double s : s_values) {
      std::string tag = cell_tag(s, beta);
      json sampler_cfg_json = cfg.at("sampler");
      sampler_cfg_json["s"] = s;

      json purify_out = stages.run(
          "purify-" + tag,
          json{{"train", train_out}, {"protect", protect_out}, {"sampler", sampler_cfg_json},
               {"beta", beta}, {"batch", cfg.at("purify_batch")}},
          [&](const std::string& dir) {
            auto model = ScoreModel::load(train_out.at("model").get<std::string>());
            Dataset protected_set =
                load_dataset_folder(protect_out.at("protected").get<std::string>());
            Preprocess pp{beta, derive_seed(seed, "preprocess-purify")};
            Dataset input = preprocess_dataset(pp, protected_set);
            SamplerConfig sc;
            sc.steps = sampler_cfg_json.at("steps").get<int>();
            sc.s = s;
            sc.guidance = sampler_cfg_json.at("guidance").get<double>();
            sc.seed = derive_seed(seed, "purify/" + tag);
            ModelScore source(*model);
            PurifyResult pr = purify_dataset(
                source, input, sc, cfg.at("purify_batch").get<int>(),
                [](size_t done, size_t total, double secs) {
                  std::printf("  purify %zu/%zu (%.2fs/batch)\n", done, total, secs);
                  std::fflush(stdout);
                });
            for (Image& img : pr.purified.images) quantize8(img);
            save_dataset_folder(dir + "/purified", pr.purified);
            json faults = json::array();
            for (const auto& flt : pr.faults) {
              faults.push_back(json{{"id", flt.image_id}, {"step", flt.step_index}});
            }
            return json{{"purified", dir + "/purified"}, {"faults", faults}};
          });

      json cell_eval = eval_stage("eval-" + tag, purify_out, [&] {
        return load_dataset_folder(purify_out.at("purified").get<std::string>());
      });

      json fid_out = stages.run(
          "fidelity-" + tag, json{{"purify", purify_out}, {"data", data_out}},
          [&](const std::string&) {
            Dataset clean = load_dataset_folder(data_out.at("protect").get<std::string>());
            Dataset purified = load_dataset_folder(purify_out.at("purified").get<std::string>());
            Dataset protected_set =
                load_dataset_folder(protect_out.at("protected").get<std::string>());
            FidelityReport fp = image_fidelity(clean, purified);
            FidelityReport fq = image_fidelity(clean, protected_set);
            return json{{"purified_psnr", fp.psnr_stats.mean},
                        {"purified_ssim", fp.ssim_stats.mean},
                        {"protected_psnr", fq.psnr_stats.mean},
                        {"protected_ssim", fq.ssim_stats.mean}};
          });

      if (!dry_run) {
        json cell{{"s", s},      {"beta", beta},          {"accuracy", cell_eval},
                  {"fidelity", fid_out}, {"faults", purify_out.at("faults").size()}};
        if (partial) {
          std::vector<int> classes = lcfg.at("classes").get<std::vector<int>>();
          GroupAccuracy gp = group_accuracy(protected_eval, classes);
          GroupAccuracy gu = group_accuracy(cell_eval, classes);
          cell["partial_leakage"] =
              json{{"leaked_classes", classes},
                   {"protected", json{{"leaked", gp.leaked}, {"non_leaked", gp.non_leaked},
                                      {"all", gp.all}}},
                   {"purified", json{{"leaked", gu.leaked}, {"non_leaked", gu.non_leaked},
                                     {"all", gu.all}}},
                   {"improvement_gap",
                    (gu.leaked - gp.leaked) - (gu.non_leaked - gp.non_leaked)}};
        }
        cells.push_back(cell);
        cell_refs.push_back({s, beta, accuracy_of(cell_eval)});
      }
    }
  }

  if (dry_run) {
    std::printf("[plan] report\n");
    return ExperimentOutcome{json(), run_dir, true};
  }

  // ---- report --------------------------------------------------------------
  size_t best = 0;
  for (size_t i = 1; i < cell_refs.size(); ++i) {
    if (cell_refs[i].accuracy > cell_refs[best].accuracy) best = i;
  }
  json report{{"name", cfg.at("name")},
              {"config_hash", cfg_hash},
              {"dataset", dcfg},
              {"protection", leak_spec.to_json()},
              {"transfer", transfer ? target_spec.to_json() : json()},
              {"leakage", lcfg},
              {"baselines",
               json{{"clean", clean_eval},
                    {"protected", protected_eval},
                    {"dilution", dilution_eval}}},
              {"cells", cells},
              {"best_over_grid", json{{"accuracy", cell_refs[best].accuracy},
                                      {"s", cell_refs[best].s},
                                      {"beta", cell_refs[best].beta},
                                      {"cell_index", best}}}};
  std::ofstream rf(run_dir + "/report.json", std::ios::trunc);
  rf << report.dump(2);
  rf.close();
  render_report_plots(run_dir);
  return ExperimentOutcome{report, run_dir, false};
}

void render_report_plots(const std::string& run_dir) {
  std::ifstream rf(run_dir + "/report.json");
  if (!rf) throw std::runtime_error("render_report_plots: missing report.json in " + run_dir);
  json report = json::parse(rf);
  std::string plots = run_dir + "/plots";
  fs::create_directories(plots);

  const json& cells = report.at("cells");
  size_t best = report.at("best_over_grid").at("cell_index").get<size_t>();

  // Accuracy: clean vs protected vs best purified (plus dilution when present).
  {
    std::vector<std::string> cats{"clean", "protected", "purified(best)"};
    std::vector<double> vals{accuracy_of(report.at("baselines").at("clean")),
                             accuracy_of(report.at("baselines").at("protected")),
                             cells.at(best).at("accuracy").at("mean_accuracy").get<double>()};
    if (!report.at("baselines").at("dilution").is_null()) {
      cats.push_back("dilution");
      vals.push_back(accuracy_of(report.at("baselines").at("dilution")));
    }
    write_bar_chart_svg(plots + "/accuracy.svg", "Availability restoration", cats,
                        {Series{"test accuracy", vals}}, "accuracy");
  }

  // Ablation grid over s for each beta.
  {
    std::map<double, std::pair<std::vector<double>, std::vector<double>>> by_beta;
    for (const auto& cell : cells) {
      double b = cell.at("beta").get<double>();
      by_beta[b].first.push_back(cell.at("s").get<double>());
      by_beta[b].second.push_back(cell.at("accuracy").at("mean_accuracy").get<double>());
    }
    if (!by_beta.empty() && cells.size() > 1) {
      std::vector<double> xs = by_beta.begin()->second.first;
      std::vector<Series> series;
      for (const auto& [b, sv] : by_beta) {
        series.push_back(Series{"beta=" + std::to_string(b).substr(0, 5), sv.second});
      }
      write_line_chart_svg(plots + "/ablation.svg", "Accuracy over (s, beta)", xs, series,
                           "sampling randomness s", "accuracy");
    }
  }

  // Fidelity: protected vs best purified.
  {
    const json& fid = cells.at(best).at("fidelity");
    write_bar_chart_svg(
        plots + "/fidelity_psnr.svg", "PSNR to clean data", {"protected", "purified"},
        {Series{"PSNR (dB)",
                {fid.at("protected_psnr").get<double>(), fid.at("purified_psnr").get<double>()}}},
        "dB");
    write_bar_chart_svg(
        plots + "/fidelity_ssim.svg", "SSIM to clean data", {"protected", "purified"},
        {Series{"SSIM",
                {fid.at("protected_ssim").get<double>(), fid.at("purified_ssim").get<double>()}}},
        "SSIM");
  }

  // Per-class bars for partial leakage runs.
  if (cells.at(best).contains("partial_leakage")) {
    const json& prot = report.at("baselines").at("protected").at("per_class_accuracy");
    const json& pur = cells.at(best).at("accuracy").at("per_class_accuracy");
    std::set<int> leaked;
    for (const auto& c : cells.at(best).at("partial_leakage").at("leaked_classes")) {
      leaked.insert(c.get<int>());
    }
    std::vector<std::string> cats;
    std::vector<double> pv, uv;
    for (size_t c = 0; c < prot.size(); ++c) {
      cats.push_back(std::to_string(c) + (leaked.count(static_cast<int>(c)) ? "*" : ""));
      pv.push_back(prot[c].get<double>());
      uv.push_back(pur[c].get<double>());
    }
    write_bar_chart_svg(plots + "/per_class.svg", "Per-class accuracy (* = leaked class)", cats,
                        {Series{"protected", pv}, Series{"purified", uv}}, "accuracy");
  }
}

}  // namespace bridgepure
