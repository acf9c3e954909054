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

#include "doctest.h"

#include <cmath>
#include <functional>

#include <nlohmann/json.hpp>

#include "bridgepure/denoiser.hpp"
#include "bridgepure/nn.hpp"

using namespace bridgepure;

namespace {

Tensor random_tensor(int n, int c, int h, int w, Rng& rng, double scale = 1.0) {
  Tensor t(n, c, h, w);
  for (float& v : t.v) v = static_cast<float>(scale * rng.normal());
  return t;
}

// Projection loss L = sum p .* y with a fixed random p; dL/dy = p.
double proj_loss(const Tensor& y, const Tensor& p) {
  double acc = 0.0;
  for (size_t i = 0; i < y.v.size(); ++i) acc += static_cast<double>(y.v[i]) * p.v[i];
  return acc;
}

// Central-difference check of input gradients for a layer-like callable.
void check_input_grads(const std::function<Tensor(const Tensor&)>& fwd, const Tensor& x,
                       const Tensor& dx, const Tensor& p, int probes, Rng& rng,
                       double tol = 2e-3) {
  for (int k = 0; k < probes; ++k) {
    size_t j = rng.uniform_int(x.size());
    double delta = 1e-2;
    Tensor xp = x, xm = x;
    xp.v[j] += static_cast<float>(delta);
    xm.v[j] -= static_cast<float>(delta);
    double fd = (proj_loss(fwd(xp), p) - proj_loss(fwd(xm), p)) / (2 * delta);
    double g = dx.v[j];
    CHECK(std::abs(fd - g) <= tol * std::max({std::abs(fd), std::abs(g), 1e-2}));
  }
}

void check_param_grads(const std::function<double()>& loss, ParamStore& ps, int probes, Rng& rng,
                       double tol = 2e-3) {
  auto& items = ps.items();
  for (int k = 0; k < probes; ++k) {
    size_t which = rng.uniform_int(items.size());
    Param& prm = *items[which];
    size_t j = rng.uniform_int(prm.w.size());
    double g = prm.g.v[j];
    double delta = 1e-2;
    float saved = prm.w.v[j];
    prm.w.v[j] = saved + static_cast<float>(delta);
    double lp = loss();
    prm.w.v[j] = saved - static_cast<float>(delta);
    double lm = loss();
    prm.w.v[j] = saved;
    double fd = (lp - lm) / (2 * delta);
    CHECK(std::abs(fd - g) <= tol * std::max({std::abs(fd), std::abs(g), 1e-2}));
  }
}

}  // namespace

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(31);
  ParamStore ps;
  Conv2d conv(ps, "c", 3, 4, 3, rng);
  Tensor x = random_tensor(2, 3, 6, 5, rng);
  Tensor p = random_tensor(2, 4, 6, 5, rng);

  auto fwd = [&](const Tensor& xin) { return conv.forward(xin, true); };
  Tensor y = fwd(x);
  ps.zero_grads();
  Tensor dx = conv.backward(p);
  check_input_grads(fwd, x, dx, p, 12, rng);
  // forward caches are overwritten by FD evaluations; re-prime then check params
  fwd(x);
  ps.zero_grads();
  conv.backward(p);
  check_param_grads([&] { return proj_loss(fwd(x), p); }, ps, 12, rng);
}

TEST_CASE("linear gradients match finite differences") {
  Rng rng(32);
  ParamStore ps;
  Linear lin(ps, "l", 7, 5, rng);
  Tensor x = random_tensor(3, 7, 1, 1, rng);
  Tensor p = random_tensor(3, 5, 1, 1, rng);
  auto fwd = [&](const Tensor& xin) { return lin.forward(xin, true); };
  fwd(x);
  ps.zero_grads();
  Tensor dx = lin.backward(p);
  check_input_grads(fwd, x, dx, p, 10, rng);
  fwd(x);
  ps.zero_grads();
  lin.backward(p);
  check_param_grads([&] { return proj_loss(fwd(x), p); }, ps, 10, rng);
}

TEST_CASE("group norm gradients match finite differences") {
  Rng rng(33);
  ParamStore ps;
  GroupNorm gn(ps, "g", 2, 4);
  // nudge gamma/beta off their init so gradients are generic
  for (auto& prm : ps.items()) {
    for (float& v : prm->w.v) v += static_cast<float>(0.3 * rng.normal());
  }
  Tensor x = random_tensor(2, 4, 5, 5, rng);
  Tensor p = random_tensor(2, 4, 5, 5, rng);
  auto fwd = [&](const Tensor& xin) { return gn.forward(xin, true); };
  fwd(x);
  ps.zero_grads();
  Tensor dx = gn.backward(p);
  check_input_grads(fwd, x, dx, p, 12, rng, 5e-3);
  fwd(x);
  ps.zero_grads();
  gn.backward(p);
  check_param_grads([&] { return proj_loss(fwd(x), p); }, ps, 12, rng, 5e-3);
}

TEST_CASE("silu, pooling, upsampling gradients") {
  Rng rng(34);
  SiLU act;
  Tensor x = random_tensor(2, 3, 4, 4, rng);
  Tensor p = random_tensor(2, 3, 4, 4, rng);
  auto fwd = [&](const Tensor& xin) { return act.forward(xin, true); };
  fwd(x);
  Tensor dx = act.backward(p);
  check_input_grads(fwd, x, dx, p, 10, rng);

  AvgPool2 pool;
  Tensor pp = random_tensor(2, 3, 2, 2, rng);
  auto fwd_pool = [&](const Tensor& xin) { return pool.forward(xin); };
  fwd_pool(x);
  Tensor dxp = pool.backward(pp);
  check_input_grads(fwd_pool, x, dxp, pp, 8, rng);

  UpsampleNearest2 up;
  Tensor pu = random_tensor(2, 3, 8, 8, rng);
  auto fwd_up = [&](const Tensor& xin) { return up.forward(xin); };
  fwd_up(x);
  Tensor dxu = up.backward(pu);
  check_input_grads(fwd_up, x, dxu, pu, 8, rng);
}

TEST_CASE("concat/split round-trip") {
  Rng rng(35);
  Tensor a = random_tensor(2, 3, 4, 4, rng);
  Tensor b = random_tensor(2, 5, 4, 4, rng);
  Tensor ab = concat_channels(a, b);
  CHECK(ab.c == 8);
  Tensor a2, b2;
  split_channels(ab, 3, &a2, &b2);
  CHECK(a2.v == a.v);
  CHECK(b2.v == b.v);
}

TEST_CASE("mlp denoiser: zero-init head gives x0_hat == x_end, grads check") {
  NoiseSchedule sched = NoiseSchedule::ve();
  nlohmann::json arch{{"type", "mlp"}, {"dim", 2}, {"hidden", 16}, {"emb", 8}};
  auto net = make_denoiser(arch, sched, 77);
  CHECK(net->params().total_size() <= 1000);

  Rng rng(5);
  Tensor x_t = random_tensor(4, 2, 1, 1, rng);
  Tensor x_end = random_tensor(4, 2, 1, 1, rng);
  std::vector<double> t{0.2, 0.4, 0.6, 0.8};

  Tensor out = net->predict_x0(x_t, x_end, t, false);
  CHECK(out.v == x_end.v);  // residual head is zero-initialized

  // spec gradient oracle: loss grads vs central differences on a tiny net
  auto x0 = random_tensor(4, 2, 1, 1, rng);
  auto loss = [&] {
    Tensor pred = net->predict_x0(x_t, x_end, t, true);
    double acc = 0.0;
    for (size_t i = 0; i < pred.v.size(); ++i) {
      double d = static_cast<double>(pred.v[i]) - x0.v[i];
      acc += d * d;
    }
    return acc / pred.v.size();
  };
  // move to a generic parameter point before differentiating
  for (auto& prm : net->params().items()) {
    for (float& v : prm->w.v) v += static_cast<float>(0.05 * rng.normal());
  }
  Tensor pred = net->predict_x0(x_t, x_end, t, true);
  Tensor dl(pred.n, pred.c, pred.h, pred.w);
  for (size_t i = 0; i < pred.v.size(); ++i) {
    dl.v[i] = static_cast<float>(2.0 * (static_cast<double>(pred.v[i]) - x0.v[i]) /
                                 pred.v.size());
  }
  net->params().zero_grads();
  net->backward(dl);

  auto& items = net->params().items();
  int checked = 0;
  Rng pick(99);
  while (checked < 10) {
    size_t which = pick.uniform_int(items.size());
    Param& prm = *items[which];
    size_t j = pick.uniform_int(prm.w.size());
    double g = prm.g.v[j];
    // The relative tolerance needs a gradient whose difference signal clears
    // float32 rounding noise in the loss.
    if (std::abs(g) < 1e-2) continue;
    double delta = 1e-2;
    float saved = prm.w.v[j];
    prm.w.v[j] = saved + static_cast<float>(delta);
    double lp = loss();
    prm.w.v[j] = saved - static_cast<float>(delta);
    double lm = loss();
    prm.w.v[j] = saved;
    double fd = (lp - lm) / (2 * delta);
    CHECK(std::abs(fd - g) / std::max(std::abs(fd), std::abs(g)) < 1e-3);
    ++checked;
  }
}

TEST_CASE("unet denoiser: shape preservation and gradient spot-checks") {
  NoiseSchedule sched = NoiseSchedule::ve();
  nlohmann::json arch{{"type", "unet"}, {"channels", 3}, {"base", 8}, {"mults", {1, 2}},
                      {"groups", 4}};
  auto net = make_denoiser(arch, sched, 3);

  Rng rng(6);
  for (int hw : {16, 32}) {
    Tensor x_t = random_tensor(2, 3, hw, hw, rng, 0.3);
    Tensor x_end = random_tensor(2, 3, hw, hw, rng, 0.3);
    std::vector<double> t{0.3, 0.7};
    Tensor out = net->predict_x0(x_t, x_end, t, false);
    CHECK(out.n == 2);
    CHECK(out.c == 3);
    CHECK(out.h == hw);
    CHECK(out.w == hw);
    CHECK(out.v == x_end.v);  // zero-init head
  }

  // gradcheck through the whole unet (skip connections, temb fan-in)
  Tensor x_t = random_tensor(2, 3, 8, 8, rng, 0.5);
  Tensor x_end = random_tensor(2, 3, 8, 8, rng, 0.5);
  Tensor x0 = random_tensor(2, 3, 8, 8, rng, 0.5);
  std::vector<double> t{0.25, 0.75};
  for (auto& prm : net->params().items()) {
    for (float& v : prm->w.v) v += static_cast<float>(0.05 * rng.normal());
  }
  auto loss = [&] {
    Tensor pred = net->predict_x0(x_t, x_end, t, true);
    double acc = 0.0;
    for (size_t i = 0; i < pred.v.size(); ++i) {
      double d = static_cast<double>(pred.v[i]) - x0.v[i];
      acc += d * d;
    }
    return acc / pred.v.size();
  };
  Tensor pred = net->predict_x0(x_t, x_end, t, true);
  Tensor dl(pred.n, pred.c, pred.h, pred.w);
  for (size_t i = 0; i < pred.v.size(); ++i) {
    dl.v[i] = static_cast<float>(2.0 * (static_cast<double>(pred.v[i]) - x0.v[i]) /
                                 pred.v.size());
  }
  net->params().zero_grads();
  net->backward(dl);

  auto& items = net->params().items();
  Rng pick(17);
  int checked = 0;
  while (checked < 12) {
    size_t which = pick.uniform_int(items.size());
    Param& prm = *items[which];
    size_t j = pick.uniform_int(prm.w.size());
    double g = prm.g.v[j];
    if (std::abs(g) < 1e-4) continue;
    double delta = 1e-2;
    float saved = prm.w.v[j];
    prm.w.v[j] = saved + static_cast<float>(delta);
    double lp = loss();
    prm.w.v[j] = saved - static_cast<float>(delta);
    double lm = loss();
    prm.w.v[j] = saved;
    double fd = (lp - lm) / (2 * delta);
    CHECK(std::abs(fd - g) / std::max(std::abs(fd), std::abs(g)) < 2e-2);
    ++checked;
  }
}

TEST_CASE("adam and sgd reduce a quadratic; ema tracks weights") {
  ParamStore ps;
  Rng rng(1);
  Param& w = ps.add("w", 8);
  for (float& v : w.w.v) v = static_cast<float>(rng.normal());

  Adam adam(ps);
  for (int i = 0; i < 400; ++i) {
    for (size_t j = 0; j < w.w.size(); ++j) w.g.v[j] = 2.0f * w.w.v[j];
    adam.step(0.05);
  }
  for (float v : w.w.v) CHECK(std::abs(v) < 1e-2);

  ParamStore ps2;
  Param& w2 = ps2.add("w", 8);
  for (float& v : w2.w.v) v = 1.0f;
  SgdMomentum sgd(ps2, 0.9, 0.0);
  for (int i = 0; i < 200; ++i) {
    for (size_t j = 0; j < w2.w.size(); ++j) w2.g.v[j] = 2.0f * w2.w.v[j];
    sgd.step(0.02);
  }
  for (float v : w2.w.v) CHECK(std::abs(v) < 1e-2);

  Ema ema(ps2);
  std::vector<float> before = ema.shadow()[0];
  for (float& v : w2.w.v) v = 1.0f;
  ema.update(ps2, 0.9);
  for (size_t j = 0; j < w2.w.size(); ++j) {
    CHECK(ema.shadow()[0][j] ==
          doctest::Approx(0.9f * before[j] + 0.1f * 1.0f).epsilon(1e-6));
  }
  ema.copy_to(ps2);
  CHECK(ps2.items()[0]->w.v == ema.shadow()[0]);
}

TEST_CASE("denoiser init and forward are deterministic given the seed") {
  NoiseSchedule sched = NoiseSchedule::ve();
  nlohmann::json arch{{"type", "unet"}, {"channels", 3}, {"base", 8}, {"mults", {1, 2}},
                      {"groups", 4}};
  auto a = make_denoiser(arch, sched, 123);
  auto b = make_denoiser(arch, sched, 123);
  Rng rng(4);
  Tensor x_t = random_tensor(1, 3, 16, 16, rng);
  Tensor x_end = random_tensor(1, 3, 16, 16, rng);
  for (auto& prm : a->params().items()) {
    for (float& v : prm->w.v) v += 0.01f;
  }
  for (auto& prm : b->params().items()) {
    for (float& v : prm->w.v) v += 0.01f;
  }
  Tensor ya = a->predict_x0(x_t, x_end, {0.5}, false);
  Tensor yb = b->predict_x0(x_t, x_end, {0.5}, false);
  CHECK(ya.v == yb.v);
}
