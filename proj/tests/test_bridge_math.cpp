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

#include "bridgepure/bridge.hpp"

using namespace bridgepure;

namespace {

// Toy VE schedule whose accumulated variance hits 1.0 at an interior time and
// 2.0 at T: sigma 0.5 -> 1.5 geometric, var(t) = 0.25 (9^(t/T) - 1).
NoiseSchedule toy_ve() { return NoiseSchedule::ve(0.5, 1.5, 1.0); }

double toy_t_for_var1() { return std::log(5.0) / (2.0 * std::log(3.0)); }

double fd_h(const BridgeKernel& k, double x_t, double t, double x_end) {
  double delta = 1e-5 * std::max(1.0, std::abs(x_t));
  return (k.log_transition_density(x_t + delta, t, x_end) -
          k.log_transition_density(x_t - delta, t, x_end)) /
         (2.0 * delta);
}

double fd_score(const BridgeKernel& k, double x_t, double t, double x0, double x_end) {
  double delta = 1e-5 * std::max(1.0, std::abs(x_t));
  return (k.log_marginal_density(x_t + delta, t, x0, x_end) -
          k.log_marginal_density(x_t - delta, t, x0, x_end)) /
         (2.0 * delta);
}

}  // namespace

TEST_CASE("drift: VE is identically zero, VP is -1/2 beta x") {
  BridgeKernel ve(NoiseSchedule::ve());
  std::vector<double> x{0.3, -1.2, 5.0};
  auto d = ve.drift(x, 0.5);
  for (double v : d) CHECK(v == 0.0);

  // constant-rate VP with beta(t) = 0.2 everywhere
  BridgeKernel vp(NoiseSchedule::vp(0.2, 0.2, 1.0));
  auto dv = vp.drift({1.0}, 0.4);
  CHECK(dv[0] == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(vp.drift({0.0}, 0.4)[0] == 0.0);

  CHECK_THROWS_AS(ve.drift({1.0}, -0.1), std::domain_error);
  CHECK_THROWS_AS(ve.drift({1.0}, 1.5), std::domain_error);
}

TEST_CASE("h_function: VE closed form and singularity") {
  BridgeKernel k(toy_ve());
  double t = toy_t_for_var1();
  // var(t)=1, var(T)=2: h(0, t, 1) = (1 - 0) / (2 - 1) = 1
  CHECK(k.h_scalar(0.0, t, 1.0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(k.h_scalar(0.0, t, 1.0) == doctest::Approx(fd_h(k, 0.0, t, 1.0)).epsilon(1e-7));

  // Gaussian score vanishes at its mean
  auto h = k.h_function({0.37, -0.4}, 0.5, {0.37, -0.4});
  CHECK(h[0] == 0.0);
  CHECK(h[1] == 0.0);

  CHECK_THROWS_AS(k.h_function({0.0}, k.t_max(), {1.0}), std::domain_error);
}

TEST_CASE("h oracle: central finite differences, VE and VP") {
  for (auto sched : {NoiseSchedule::ve(), NoiseSchedule::ve(0.5, 1.5), NoiseSchedule::vp()}) {
    BridgeKernel k(sched);
    Rng rng(42);
    int checked = 0;
    while (checked < 300) {
      double t = rng.uniform(0.01, 0.95) * sched.t_max;
      double x_t = rng.uniform(-2.0, 2.0);
      double x_end = rng.uniform(-2.0, 2.0);
      double h = k.h_scalar(x_t, t, x_end);
      if (std::abs(h) < 1e-4) continue;  // relative error ill-defined near the zero crossing
      double fd = fd_h(k, x_t, t, x_end);
      CHECK(std::abs(fd - h) / std::abs(h) < 1e-4);
      ++checked;
    }
  }
}

TEST_CASE("bridge_marginal: endpoint pinning is exact") {
  for (auto sched : {NoiseSchedule::ve(), NoiseSchedule::vp()}) {
    BridgeKernel k(sched);
    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
      std::vector<double> x0{rng.uniform(-1, 1), rng.uniform(-1, 1)};
      std::vector<double> xe{rng.uniform(-1, 1), rng.uniform(-1, 1)};
      std::vector<double> mean;
      double var = -1.0;
      k.bridge_marginal(x0, xe, 0.0, &mean, &var);
      CHECK(mean[0] == x0[0]);
      CHECK(mean[1] == x0[1]);
      CHECK(var == 0.0);
      k.bridge_marginal(x0, xe, sched.t_max, &mean, &var);
      CHECK(mean[0] == xe[0]);
      CHECK(mean[1] == xe[1]);
      CHECK(var == 0.0);
    }
  }
}

TEST_CASE("bridge_marginal: toy VE closed-form values") {
  BridgeKernel k(toy_ve());
  double t = toy_t_for_var1();
  std::vector<double> mean;
  double var = 0.0;
  k.bridge_marginal({0.0}, {2.0}, t, &mean, &var);
  CHECK(mean[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(var == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("bridge_marginal Monte-Carlo oracle: pinned-SDE simulation") {
  // Forward bridge SDE dx = [f + g^2 h] dt + g dw simulated by Euler-Maruyama
  // at step 1e-3, 1e5 paths, checked at the time where the closed form gives
  // (mean 1.0, variance 0.5) for x0=0, x_end=2.
  BridgeKernel k(toy_ve());
  const NoiseSchedule& sched = k.schedule();
  double t_star = toy_t_for_var1();
  const int n_paths = 100000;
  const double dt = 1e-3;
  const double x0 = 0.0, x_end = 2.0;

  std::vector<double> x(n_paths, x0);
  Rng rng(2026);
  double t = 0.0;
  while (t < t_star - 1e-12) {
    double step = std::min(dt, t_star - t);
    TransitionCoeffs tc = k.to_end(t);
    double g2 = sched.g2(t);
    double fcoef = sched.drift_coef(t);
    double sd = std::sqrt(g2 * step);
    for (int i = 0; i < n_paths; ++i) {
      double h = tc.a * (x_end - tc.a * x[i]) / tc.b2;
      x[i] += (fcoef * x[i] + g2 * h) * step + sd * rng.normal();
    }
    t += step;
  }
  double m = 0.0;
  for (double v : x) m += v;
  m /= n_paths;
  double var = 0.0;
  for (double v : x) var += (v - m) * (v - m);
  var /= n_paths - 1;

  double se_mean = std::sqrt(var / n_paths);
  double se_var = var * std::sqrt(2.0 / (n_paths - 1));
  CHECK(std::abs(m - 1.0) < 3.0 * se_mean);
  CHECK(std::abs(var - 0.5) < 3.0 * se_var);
}

TEST_CASE("analytic score: zero at mean, linearity, FD oracle, singularities") {
  BridgeKernel k(NoiseSchedule::ve());
  double t = 0.45;
  BridgeMarginalCoeffs mc = k.marginal_coeffs(t);
  double x0 = 0.3, xe = 0.8;
  double mean = mc.mean_coeff_x0 * x0 + mc.mean_coeff_xend * xe;

  CHECK(k.score_scalar(mean, t, x0, xe) == doctest::Approx(0.0).epsilon(1e-12));
  double d = 0.2;
  double s1 = k.score_scalar(mean + d, t, x0, xe);
  double s2 = k.score_scalar(mean + 2 * d, t, x0, xe);
  CHECK(s2 == doctest::Approx(2.0 * s1).epsilon(1e-9));

  CHECK_THROWS_AS(k.analytic_bridge_score({0.0}, 0.0, {0.0}, {1.0}), std::domain_error);
  CHECK_THROWS_AS(k.analytic_bridge_score({0.0}, k.t_max(), {0.0}, {1.0}), std::domain_error);

  for (auto sched : {NoiseSchedule::ve(0.5, 1.5), NoiseSchedule::vp()}) {
    BridgeKernel kb(sched);
    Rng rng(11);
    int checked = 0;
    while (checked < 300) {
      double tt = rng.uniform(0.05, 0.95) * sched.t_max;
      double xt = rng.uniform(-2.0, 2.0);
      double a0 = rng.uniform(-1.0, 1.0);
      double ae = rng.uniform(-1.0, 1.0);
      double s = kb.score_scalar(xt, tt, a0, ae);
      if (std::abs(s) < 1e-3) continue;
      double fd = fd_score(kb, xt, tt, a0, ae);
      CHECK(std::abs(fd - s) / std::abs(s) < 1e-5);
      ++checked;
    }
  }
}

TEST_CASE("sample_bridge_state: determinism and moments") {
  BridgeKernel k(NoiseSchedule::ve());
  std::vector<double> x0{0.2, 0.8}, xe{0.9, 0.1};

  // zero variance at t=0: exactly x0 for any seed
  Rng r0(123);
  auto s0 = k.sample_bridge_state(x0, xe, 0.0, r0);
  CHECK(s0[0] == x0[0]);
  CHECK(s0[1] == x0[1]);

  Rng ra(55), rb(55);
  auto a = k.sample_bridge_state(x0, xe, 0.37, ra);
  auto b = k.sample_bridge_state(x0, xe, 0.37, rb);
  CHECK(a == b);

  // sample moments match the closed form within 3 standard errors
  double t = 0.6;
  std::vector<double> mean;
  double var = 0.0;
  k.bridge_marginal({x0[0]}, {xe[0]}, t, &mean, &var);
  const int n = 20000;
  Rng rng(999);
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double v = k.sample_bridge_state({x0[0]}, {xe[0]}, t, rng)[0];
    acc += v;
    acc2 += v * v;
  }
  double m = acc / n;
  double v_emp = acc2 / n - m * m;
  CHECK(std::abs(m - mean[0]) < 3.0 * std::sqrt(var / n));
  CHECK(std::abs(v_emp - var) < 3.0 * var * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("VE/VP consistency: VP with vanishing rates matches VE algebra") {
  // With alpha(t) ~= 1, the VP kernel quantities must converge to the
  // VE formulas evaluated at the same accumulated variances.
  NoiseSchedule vp = NoiseSchedule::vp(1e-7, 1e-7, 1.0);
  for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    double at = vp.alpha(t), aT = vp.alpha(vp.t_max);
    double vt = vp.accumulated_var(t), vT = vp.accumulated_var(vp.t_max);
    BridgeMarginalCoeffs full = pinned_marginal_coeffs(at, vt, aT, vT);
    BridgeMarginalCoeffs ve_style = pinned_marginal_coeffs(1.0, vt, 1.0, vT);
    CHECK(std::abs(full.mean_coeff_x0 - ve_style.mean_coeff_x0) < 1e-6);
    CHECK(std::abs(full.mean_coeff_xend - ve_style.mean_coeff_xend) < 1e-6);
    CHECK(std::abs(full.variance - ve_style.variance) < 1e-6);
    TransitionCoeffs tf = transition_between(at, vt, aT, vT);
    TransitionCoeffs tv = transition_between(1.0, vt, 1.0, vT);
    CHECK(std::abs(tf.a - tv.a) < 1e-6);
    CHECK(std::abs(tf.b2 - tv.b2) < 1e-6);
  }
}

TEST_CASE("schedule invariants: monotone variance, alpha behavior") {
  for (auto sched : {NoiseSchedule::ve(), NoiseSchedule::vp()}) {
    double prev = sched.accumulated_var(0.0);
    CHECK(prev == 0.0);
    for (int i = 1; i <= 50; ++i) {
      double t = sched.t_max * i / 50.0;
      double v = sched.accumulated_var(t);
      CHECK(std::isfinite(v));
      CHECK(v > prev);
      prev = v;
    }
  }
  NoiseSchedule vp = NoiseSchedule::vp();
  CHECK(vp.alpha(0.0) == 1.0);
  double pa = 1.0;
  for (int i = 1; i <= 20; ++i) {
    double a = vp.alpha(vp.t_max * i / 20.0);
    CHECK(a < pa);
    pa = a;
  }
  NoiseSchedule ve = NoiseSchedule::ve();
  for (int i = 0; i <= 10; ++i) CHECK(ve.alpha(ve.t_max * i / 10.0) == 1.0);
}
