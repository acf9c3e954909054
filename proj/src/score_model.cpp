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

#include "bridgepure/score_model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace bridgepure {

using nlohmann::json;

json TrainConfig::to_json() const {
  return json{{"steps", steps},
              {"batch_size", batch_size},
              {"learning_rate", learning_rate},
              {"lr_decay_at", lr_decay_at},
              {"lr_decay_mult", lr_decay_mult},
              {"ema_decay", ema_decay},
              {"t_pad_frac", t_pad_frac},
              {"checkpoint_every", checkpoint_every},
              {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.lr_decay_at = j.value("lr_decay_at", c.lr_decay_at);
  c.lr_decay_mult = j.value("lr_decay_mult", c.lr_decay_mult);
  c.ema_decay = j.value("ema_decay", c.ema_decay);
  c.t_pad_frac = j.value("t_pad_frac", c.t_pad_frac);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

Tensor image_batch(const std::vector<PairView>& batch, bool clean) {
  const Image& first = clean ? *batch[0].clean : *batch[0].protected_img;
  Tensor t(static_cast<int>(batch.size()), first.c, first.h, first.w);
  for (size_t i = 0; i < batch.size(); ++i) {
    const Image& img = clean ? *batch[i].clean : *batch[i].protected_img;
    if (img.c != first.c || img.h != first.h || img.w != first.w) {
      throw std::invalid_argument("training batch: image shape mismatch");
    }
    std::memcpy(t.sample(static_cast<int>(i)), img.px.data(), img.px.size() * sizeof(float));
  }
  return t;
}

}  // namespace

ScoreModel::ScoreModel(NoiseSchedule sched, json arch, uint64_t init_seed)
    : kernel_(sched),
      arch_(std::move(arch)),
      net_(make_denoiser(arch_, sched, init_seed)),
      eval_net_(make_denoiser(arch_, sched, init_seed)),
      ema_(net_->params()),
      init_seed_(init_seed) {
  opt_ = std::make_unique<Adam>(net_->params());
}

void ScoreModel::sync_eval_net() {
  if (!eval_dirty_) return;
  ema_.copy_to(eval_net_->params());
  eval_dirty_ = false;
}

Tensor ScoreModel::predict_x0(const Tensor& x_t, const Tensor& x_end,
                              const std::vector<double>& t, bool use_ema) {
  if (use_ema) {
    sync_eval_net();
    return eval_net_->predict_x0(x_t, x_end, t, /*train=*/false);
  }
  return net_->predict_x0(x_t, x_end, t, /*train=*/false);
}

Tensor ScoreModel::predict_score(const Tensor& x_t, const Tensor& x_end,
                                 const std::vector<double>& t) {
  Tensor x0_hat = predict_x0(x_t, x_end, t, /*use_ema=*/true);
  Tensor score(x_t.n, x_t.c, x_t.h, x_t.w);
  size_t ss = x_t.sample_size();
  for (int i = 0; i < x_t.n; ++i) {
    double ti = t[i];
    if (ti <= 0.0 || ti >= schedule().t_max) {
      throw std::domain_error("predict_score: singular time");
    }
    BridgeMarginalCoeffs mc = kernel_.marginal_coeffs(ti);
    const float* xh = x0_hat.sample(i);
    const float* xe = x_end.sample(i);
    const float* xt = x_t.sample(i);
    float* out = score.sample(i);
    for (size_t j = 0; j < ss; ++j) {
      double mean = mc.mean_coeff_x0 * xh[j] + mc.mean_coeff_xend * xe[j];
      out[j] = static_cast<float>((mean - xt[j]) / mc.variance);
    }
  }
  return score;
}

double ScoreModel::training_step(const std::vector<PairView>& batch, const TrainConfig& cfg,
                                 Rng& rng, long batch_id) {
  if (batch.empty()) throw std::invalid_argument("training_step: empty batch");
  const double T = schedule().t_max;
  const double t_lo = schedule().t_min;
  const double t_hi = T * (1.0 - cfg.t_pad_frac);

  Tensor x0 = image_batch(batch, /*clean=*/true);
  Tensor x_end = image_batch(batch, /*clean=*/false);
  int n = x0.n;
  size_t ss = x0.sample_size();

  std::vector<double> t(n);
  Tensor x_t(n, x0.c, x0.h, x0.w);
  for (int i = 0; i < n; ++i) {
    t[i] = rng.uniform(t_lo, t_hi);
    BridgeMarginalCoeffs mc = kernel_.marginal_coeffs(t[i]);
    double sd = std::sqrt(mc.variance);
    const float* a = x0.sample(i);
    const float* b = x_end.sample(i);
    float* o = x_t.sample(i);
    for (size_t j = 0; j < ss; ++j) {
      double mean = mc.mean_coeff_x0 * a[j] + mc.mean_coeff_xend * b[j];
      o[j] = static_cast<float>(mean + sd * rng.normal());
    }
  }

  Tensor x0_hat = net_->predict_x0(x_t, x_end, t, /*train=*/true);

  // Plain x̂0 regression; equals the score-matching MSE weighted by
  // lambda(t) = (variance / mean_coeff_x0)^2.
  double loss = 0.0;
  std::vector<double> sample_loss(n, 0.0);
  Tensor dl(n, x0.c, x0.h, x0.w);
  double scale = 1.0 / (static_cast<double>(n) * ss);
  for (int i = 0; i < n; ++i) {
    const float* p = x0_hat.sample(i);
    const float* a = x0.sample(i);
    float* d = dl.sample(i);
    double acc = 0.0;
    for (size_t j = 0; j < ss; ++j) {
      double diff = static_cast<double>(p[j]) - a[j];
      acc += diff * diff;
      d[j] = static_cast<float>(2.0 * diff * scale);
    }
    sample_loss[i] = acc / ss;
    loss += acc;
  }
  loss *= scale;

  if (!std::isfinite(loss)) {
    std::vector<double> bad_t;
    for (int i = 0; i < n; ++i) {
      if (!std::isfinite(sample_loss[i])) bad_t.push_back(t[i]);
    }
    throw TrainingFault("non-finite training loss", bad_t, batch_id);
  }

  net_->params().zero_grads();
  net_->backward(dl);
  double lr = cfg.learning_rate;
  if (cfg.steps > 0 && step_ >= static_cast<long>(cfg.lr_decay_at * cfg.steps)) {
    lr *= cfg.lr_decay_mult;
  }
  opt_->step(lr);
  ema_.update(net_->params(), cfg.ema_decay);
  ++step_;
  eval_dirty_ = true;
  return loss;
}

// ---- checkpoint format ------------------------------------------------------
// "BPCK" magic, u32 version, u64 header length, JSON header, u32 block count,
// then per block: u32 name length, name bytes, u32 ndim (=4), u32 dims[4],
// u64 byte length, raw little-endian float32 data. Raw weights first, then the
// EMA shadow under "ema/" names.

namespace {

template <typename T>
void write_pod(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

void write_block(std::ofstream& f, const std::string& name, const Tensor& shape_src,
                 const std::vector<float>& data) {
  write_pod<uint32_t>(f, static_cast<uint32_t>(name.size()));
  f.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_pod<uint32_t>(f, 4);
  write_pod<uint32_t>(f, static_cast<uint32_t>(shape_src.n));
  write_pod<uint32_t>(f, static_cast<uint32_t>(shape_src.c));
  write_pod<uint32_t>(f, static_cast<uint32_t>(shape_src.h));
  write_pod<uint32_t>(f, static_cast<uint32_t>(shape_src.w));
  write_pod<uint64_t>(f, static_cast<uint64_t>(data.size() * sizeof(float)));
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
}

}  // namespace

void ScoreModel::save(const std::string& path) const {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);

  json header{{"format", "bpck"},
              {"version", 1},
              {"schedule", schedule().to_json()},
              {"arch", arch_},
              {"step", step_},
              {"seed", init_seed_},
              {"config_hash", config_hash_}};
  std::string hs = header.dump();

  f.write("BPCK", 4);
  write_pod<uint32_t>(f, 1);
  write_pod<uint64_t>(f, hs.size());
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));

  const auto& items = net_->params().items();
  write_pod<uint32_t>(f, static_cast<uint32_t>(2 * items.size()));
  for (const auto& prm : items) write_block(f, prm->name, prm->w, prm->w.v);
  const auto& shadow = ema_.shadow();
  for (size_t k = 0; k < items.size(); ++k) {
    write_block(f, "ema/" + items[k]->name, items[k]->w, shadow[k]);
  }
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::unique_ptr<ScoreModel> ScoreModel::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (std::memcmp(magic, "BPCK", 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  uint32_t version = read_pod<uint32_t>(f);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  uint64_t hlen = read_pod<uint64_t>(f);
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  json header = json::parse(hs);

  NoiseSchedule sched = NoiseSchedule::from_json(header.at("schedule"));
  auto model = std::make_unique<ScoreModel>(sched, header.at("arch"),
                                            header.at("seed").get<uint64_t>());
  model->step_ = header.at("step").get<long>();
  model->config_hash_ = header.value("config_hash", "");

  uint32_t blocks = read_pod<uint32_t>(f);
  auto& items = model->net_->params().items();
  for (uint32_t b = 0; b < blocks; ++b) {
    uint32_t nlen = read_pod<uint32_t>(f);
    std::string name(nlen, '\0');
    f.read(name.data(), nlen);
    uint32_t ndim = read_pod<uint32_t>(f);
    if (ndim != 4) throw std::runtime_error("checkpoint: unexpected ndim");
    uint32_t dims[4];
    for (uint32_t& d : dims) d = read_pod<uint32_t>(f);
    uint64_t bytes = read_pod<uint64_t>(f);
    std::vector<float> data(bytes / sizeof(float));
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    if (!f) throw std::runtime_error("checkpoint: truncated block " + name);

    bool is_ema = name.rfind("ema/", 0) == 0;
    std::string base = is_ema ? name.substr(4) : name;
    bool found = false;
    for (size_t k = 0; k < items.size(); ++k) {
      if (items[k]->name != base) continue;
      if (items[k]->w.size() != data.size()) {
        throw std::runtime_error("checkpoint: size mismatch for " + name);
      }
      if (is_ema) {
        model->ema_.shadow()[k] = std::move(data);
      } else {
        items[k]->w.v = std::move(data);
      }
      found = true;
      break;
    }
    if (!found) throw std::runtime_error("checkpoint: unknown parameter " + name);
  }
  model->eval_dirty_ = true;
  return model;
}

std::unique_ptr<ScoreModel> fit(const std::vector<PairView>& pairs, const NoiseSchedule& sched,
                                const json& arch, const TrainConfig& cfg,
                                const std::function<void(long, double)>& progress) {
  if (pairs.empty()) throw std::invalid_argument("fit: need at least one pair");
  for (const PairView& pv : pairs) {
    if (!pv.clean->same_shape(*pv.protected_img)) {
      throw std::invalid_argument("fit: clean/protected shape mismatch in pair set");
    }
  }

  auto model = std::make_unique<ScoreModel>(sched, arch, derive_seed(cfg.seed, "init"));
  Rng batch_rng(derive_seed(cfg.seed, "batch"));
  Rng diff_rng(derive_seed(cfg.seed, "diffusion"));

  for (long s = 0; s < cfg.steps; ++s) {
    std::vector<PairView> batch(cfg.batch_size);
    for (int i = 0; i < cfg.batch_size; ++i) {
      batch[i] = pairs[batch_rng.uniform_int(pairs.size())];
    }
    double loss = model->training_step(batch, cfg, diff_rng, s);
    if (progress && (s % 200 == 0 || s + 1 == cfg.steps)) progress(s + 1, loss);
    if (!cfg.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
        ((s + 1) % cfg.checkpoint_every == 0)) {
      model->save(cfg.checkpoint_dir + "/ckpt_" + std::to_string(s + 1) + ".bpck");
    }
  }
  if (!cfg.checkpoint_dir.empty()) {
    model->save(cfg.checkpoint_dir + "/model.bpck");
  }
  return model;
}

}  // namespace bridgepure
