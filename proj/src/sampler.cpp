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

#include "bridgepure/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace bridgepure {

void SamplerConfig::validate(const NoiseSchedule& sched) const {
  if (steps < 1) throw std::invalid_argument("sampler: steps must be >= 1");
  if (s < 0.0 || s > 1.0) throw std::invalid_argument("sampler: s must be in [0, 1]");
  if (!time_grid.empty()) {
    if (static_cast<int>(time_grid.size()) != steps + 1) {
      throw std::invalid_argument("sampler: custom grid needs steps+1 points");
    }
    if (std::abs(time_grid.front() - sched.t_max) > 1e-12 ||
        std::abs(time_grid.back() - sched.t_min) > 1e-12) {
      throw std::invalid_argument("sampler: custom grid must run from T to t_min");
    }
    for (size_t i = 1; i < time_grid.size(); ++i) {
      if (!(time_grid[i] < time_grid[i - 1])) {
        throw std::invalid_argument("sampler: grid must be strictly decreasing");
      }
    }
  }
}

double resolve_guidance(const NoiseSchedule& sched, double guidance) {
  if (guidance >= 0.0) return guidance;
  return sched.mode == ScheduleMode::kVE ? 0.5 : 1.0;
}

std::vector<double> build_time_grid(const NoiseSchedule& sched, int steps, double warp) {
  std::vector<double> grid(steps + 1);
  for (int i = 0; i <= steps; ++i) {
    double u = static_cast<double>(i) / steps;
    grid[i] = sched.t_min + (sched.t_max - sched.t_min) * std::pow(1.0 - u, warp);
  }
  grid.front() = sched.t_max;
  grid.back() = sched.t_min;
  return grid;
}

Tensor reverse_drift(ScoreSource& model, const Tensor& x_t, const Tensor& x_end, double t,
                     double guidance, double score_weight) {
  const NoiseSchedule& sched = model.schedule();
  sched.check_time(t);
  if (t <= 0.0 || t >= sched.t_max) {
    throw std::domain_error("reverse_drift: singular time");
  }
  std::vector<double> times(x_t.n, t);
  Tensor s = model.score(x_t, x_end, times);

  BridgeKernel kernel(sched);
  TransitionCoeffs tc = kernel.to_end(t);
  double g2 = sched.g2(t);
  double fcoef = sched.drift_coef(t);

  Tensor out(x_t.n, x_t.c, x_t.h, x_t.w);
  for (size_t j = 0; j < x_t.v.size(); ++j) {
    double x = x_t.v[j];
    double h = tc.a * (static_cast<double>(x_end.v[j]) - tc.a * x) / tc.b2;
    out.v[j] =
        static_cast<float>(fcoef * x - g2 * (score_weight * guidance * s.v[j] - h));
  }
  return out;
}

namespace {

struct BatchState {
  std::vector<std::vector<double>> x;  // per image
  std::vector<int> fault_step;         // -1 = healthy
};

// One drift evaluation for the whole batch at a common time.
void batch_drift(ScoreSource& model, const BatchState& st, const Dataset& ds,
                 const std::vector<size_t>& idx, const Tensor& x_end, double t_eval,
                 double guidance, double score_weight, std::vector<std::vector<double>>* out) {
  const NoiseSchedule& sched = model.schedule();
  int n = static_cast<int>(idx.size());
  const Image& shape = ds.images[idx[0]];
  Tensor x_t(n, shape.c, shape.h, shape.w);
  for (int i = 0; i < n; ++i) {
    const std::vector<double>& xi = st.x[i];
    float* o = x_t.sample(i);
    for (size_t j = 0; j < xi.size(); ++j) o[j] = static_cast<float>(xi[j]);
  }
  std::vector<double> times(n, t_eval);
  Tensor s = model.score(x_t, x_end, times);

  BridgeKernel kernel(sched);
  TransitionCoeffs tc = kernel.to_end(t_eval);
  double g2 = sched.g2(t_eval);
  double fcoef = sched.drift_coef(t_eval);

  out->assign(n, {});
  for (int i = 0; i < n; ++i) {
    const std::vector<double>& xi = st.x[i];
    const float* si = s.sample(i);
    const float* ei = x_end.sample(i);
    std::vector<double>& oi = (*out)[i];
    oi.resize(xi.size());
    for (size_t j = 0; j < xi.size(); ++j) {
      double h = tc.a * (static_cast<double>(ei[j]) - tc.a * xi[j]) / tc.b2;
      oi[j] = fcoef * xi[j] - g2 * (score_weight * guidance * si[j] - h);
    }
  }
}

bool finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// Integrates a batch that shares one image shape. Per-image noise streams
// come from seeds[i], so results are independent of batch composition.
void purify_batch(ScoreSource& model, const Dataset& ds, const std::vector<size_t>& idx,
                  const SamplerConfig& cfg, const std::vector<uint64_t>& seeds,
                  Dataset* out_set, std::vector<PurifyFault>* faults) {
  const NoiseSchedule& sched = model.schedule();
  int n = static_cast<int>(idx.size());
  const Image& shape = ds.images[idx[0]];
  size_t dim = shape.size();

  std::vector<double> grid =
      cfg.time_grid.empty() ? build_time_grid(sched, cfg.steps, cfg.grid_warp) : cfg.time_grid;
  double t_clamp = sched.t_max * (1.0 - cfg.t_eval_pad_frac);
  int n_stoch = static_cast<int>(std::lround(cfg.s * cfg.steps));
  double guidance = resolve_guidance(sched, cfg.guidance);

  Tensor x_end(n, shape.c, shape.h, shape.w);
  BatchState st;
  st.x.resize(n);
  st.fault_step.assign(n, -1);
  std::vector<Rng> rngs;
  rngs.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Image& img = ds.images[idx[i]];
    if (!img.same_shape(shape)) throw std::invalid_argument("purify batch: shape mismatch");
    st.x[i].assign(img.px.begin(), img.px.end());
    float* e = x_end.sample(i);
    for (size_t j = 0; j < dim; ++j) e[j] = img.px[j];
    rngs.emplace_back(seeds[i]);
  }

  std::vector<std::vector<double>> d1, d2;
  for (int step = 0; step < cfg.steps; ++step) {
    double t_cur = grid[step];
    double t_next = grid[step + 1];
    double dt = t_next - t_cur;  // negative
    double t_eval = std::min(t_cur, t_clamp);
    bool stochastic = step < n_stoch;
    double weight = stochastic ? 1.0 : 0.5;

    batch_drift(model, st, ds, idx, x_end, t_eval, guidance, weight, &d1);
    if (stochastic) {
      double noise_sd = std::sqrt(sched.g2(t_eval) * (-dt));
      for (int i = 0; i < n; ++i) {
        if (st.fault_step[i] >= 0) continue;
        std::vector<double>& xi = st.x[i];
        for (size_t j = 0; j < dim; ++j) {
          xi[j] += d1[i][j] * dt + noise_sd * rngs[i].normal();
        }
      }
    } else {
      BatchState pred = st;
      for (int i = 0; i < n; ++i) {
        if (st.fault_step[i] >= 0) continue;
        for (size_t j = 0; j < dim; ++j) pred.x[i][j] = st.x[i][j] + d1[i][j] * dt;
      }
      double t_eval2 = std::min(t_next, t_clamp);
      batch_drift(model, pred, ds, idx, x_end, t_eval2, guidance, weight, &d2);
      for (int i = 0; i < n; ++i) {
        if (st.fault_step[i] >= 0) continue;
        std::vector<double>& xi = st.x[i];
        for (size_t j = 0; j < dim; ++j) {
          xi[j] += 0.5 * (d1[i][j] + d2[i][j]) * dt;
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      if (st.fault_step[i] < 0 && !finite(st.x[i])) st.fault_step[i] = step;
    }
  }

  for (int i = 0; i < n; ++i) {
    const Image& src = ds.images[idx[i]];
    if (st.fault_step[i] >= 0) {
      faults->push_back({ds.ids[idx[i]], st.fault_step[i], "non-finite state"});
      out_set->images[idx[i]] = src;  // fall back to the input
      continue;
    }
    Image img(shape.c, shape.h, shape.w);
    for (size_t j = 0; j < dim; ++j) {
      img.px[j] = static_cast<float>(std::min(1.0, std::max(0.0, st.x[i][j])));
    }
    out_set->images[idx[i]] = std::move(img);
  }
}

}  // namespace

Image purify(ScoreSource& model, const Image& x_protected, const SamplerConfig& cfg) {
  cfg.validate(model.schedule());
  Dataset one;
  one.push(x_protected, 0, "single");
  Dataset out = one;
  std::vector<PurifyFault> faults;
  purify_batch(model, one, {0}, cfg, {cfg.seed}, &out, &faults);
  if (!faults.empty()) {
    throw SamplingFault("purify: " + faults[0].message, faults[0].step_index, faults[0].image_id);
  }
  return out.images[0];
}

PurifyResult purify_dataset(ScoreSource& model, const Dataset& dataset, const SamplerConfig& cfg,
                            int batch_size, const ProgressFn& progress) {
  if (dataset.empty()) throw std::invalid_argument("purify_dataset: empty dataset");
  if (batch_size < 1) throw std::invalid_argument("purify_dataset: batch_size must be >= 1");
  cfg.validate(model.schedule());

  PurifyResult res;
  res.purified = dataset;  // labels, ids, ordering preserved; images replaced below

  size_t total = dataset.size();
  for (size_t lo = 0; lo < total; lo += batch_size) {
    auto t0 = std::chrono::steady_clock::now();
    size_t hi = std::min(total, lo + batch_size);
    std::vector<size_t> idx;
    std::vector<uint64_t> seeds;
    for (size_t i = lo; i < hi; ++i) {
      idx.push_back(i);
      seeds.push_back(derive_seed(cfg.seed, "purify/" + dataset.ids[i]));
    }
    purify_batch(model, dataset, idx, cfg, seeds, &res.purified, &res.faults);
    if (progress) {
      double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      progress(hi, total, secs);
    }
  }
  return res;
}

}  // namespace bridgepure
