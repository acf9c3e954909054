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
#include <filesystem>
#include <fstream>

#include "bridgepure/score_model.hpp"

using namespace bridgepure;
using nlohmann::json;

namespace {

json mlp_arch(int dim = 1, int hidden = 32) {
  return json{{"type", "mlp"}, {"dim", dim}, {"hidden", hidden}, {"emb", 8}};
}

Image scalar_image(float v) {
  Image img(1, 1, 1);
  img.px[0] = v;
  return img;
}

std::string file_sha(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

// x0 ~ N(0,1), x_end = x0 + shift + tau * noise
std::pair<std::vector<Image>, std::vector<Image>> linear_gaussian_pairs(size_t n, double shift,
                                                                        double tau,
                                                                        uint64_t seed) {
  Rng rng(seed);
  std::vector<Image> clean, prot;
  for (size_t i = 0; i < n; ++i) {
    double x0 = rng.normal();
    clean.push_back(scalar_image(static_cast<float>(x0)));
    prot.push_back(scalar_image(static_cast<float>(x0 + shift + tau * rng.normal())));
  }
  return {clean, prot};
}

}  // namespace

TEST_CASE("predict_score composes the x0 prediction with the analytic score") {
  NoiseSchedule sched = NoiseSchedule::ve();
  ScoreModel model(sched, mlp_arch(), 9);
  const BridgeKernel& k = model.kernel();

  Rng rng(3);
  Tensor x_t(4, 1, 1, 1), x_end(4, 1, 1, 1);
  std::vector<double> t;
  for (int i = 0; i < 4; ++i) {
    x_t.v[i] = static_cast<float>(rng.normal());
    x_end.v[i] = static_cast<float>(rng.uniform());
    t.push_back(rng.uniform(0.1, 0.9));
  }
  Tensor x0_hat = model.predict_x0(x_t, x_end, t, /*use_ema=*/true);
  Tensor score = model.predict_score(x_t, x_end, t);
  for (int i = 0; i < 4; ++i) {
    double expected =
        k.score_scalar(x_t.v[i], t[i], x0_hat.v[i], x_end.v[i]);
    CHECK(score.v[i] == doctest::Approx(expected).epsilon(1e-5));
  }

  // determinism: same inputs, same outputs
  Tensor score2 = model.predict_score(x_t, x_end, t);
  CHECK(score.v == score2.v);

  // fresh model has a zero residual head: x0_hat == x_end, so the score at
  // x_t = bridge mean of (x_end, x_end) = x_end vanishes
  Tensor at_end = x_end;
  Tensor s_end = model.predict_score(at_end, x_end, t);
  for (float v : s_end.v) CHECK(v == doctest::Approx(0.0));

  CHECK_THROWS_AS(model.predict_score(x_t, x_end, {0.0, 0.5, 0.5, 0.5}), std::domain_error);
}

TEST_CASE("training_step: zero loss when clean==protected and the net is fresh") {
  ScoreModel model(NoiseSchedule::ve(), mlp_arch(), 1);
  Image a = scalar_image(0.37f);
  std::vector<PairView> batch(8, PairView{&a, &a});
  TrainConfig cfg;
  cfg.steps = 10;
  Rng rng(5);
  double loss = model.training_step(batch, cfg, rng, 0);
  CHECK(loss == 0.0);  // x0_hat == x_end == x0 exactly at init
}

TEST_CASE("training loss: 100-step moving average non-increasing over 500 steps") {
  auto [clean, prot] = linear_gaussian_pairs(512, 0.8, 0.5, 11);
  std::vector<PairView> pairs(clean.size());
  for (size_t i = 0; i < clean.size(); ++i) pairs[i] = {&clean[i], &prot[i]};

  ScoreModel model(NoiseSchedule::ve(), mlp_arch(), 2);
  // Slow enough that the first 500 steps stay in the descent phase rather
  // than bouncing around a converged floor.
  TrainConfig cfg;
  cfg.steps = 500;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-4;
  Rng batch_rng(derive_seed(7, "batch"));
  Rng diff_rng(derive_seed(7, "diffusion"));
  std::vector<double> losses;
  for (long s = 0; s < 500; ++s) {
    std::vector<PairView> batch(cfg.batch_size);
    for (int i = 0; i < cfg.batch_size; ++i) {
      batch[i] = pairs[batch_rng.uniform_int(pairs.size())];
    }
    losses.push_back(model.training_step(batch, cfg, diff_rng, s));
  }
  auto ma100 = [&](size_t end) {
    double acc = 0.0;
    for (size_t i = end - 100; i < end; ++i) acc += losses[i];
    return acc / 100.0;
  };
  double prev = ma100(100);
  for (size_t end : {200u, 300u, 400u, 500u}) {
    double cur = ma100(end);
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("training_step: non-finite loss raises a diagnostic fault") {
  ScoreModel model(NoiseSchedule::ve(), mlp_arch(), 1);
  Image bad = scalar_image(std::numeric_limits<float>::quiet_NaN());
  Image good = scalar_image(0.5f);
  std::vector<PairView> batch{{&bad, &good}, {&good, &good}};
  TrainConfig cfg;
  Rng rng(1);
  try {
    model.training_step(batch, cfg, rng, 42);
    FAIL("expected TrainingFault");
  } catch (const TrainingFault& e) {
    CHECK(e.batch == 42);
    CHECK(!e.offending_times.empty());
  }
}

TEST_CASE("fit: steps=1 checkpoint exists and loads losslessly") {
  auto [clean, prot] = linear_gaussian_pairs(16, 0.5, 0.2, 3);
  std::vector<PairView> pairs(clean.size());
  for (size_t i = 0; i < clean.size(); ++i) pairs[i] = {&clean[i], &prot[i]};

  std::string dir = std::filesystem::temp_directory_path() / "bp_ckpt_test";
  std::filesystem::remove_all(dir);
  TrainConfig cfg;
  cfg.steps = 1;
  cfg.batch_size = 4;
  cfg.seed = 99;
  cfg.checkpoint_dir = dir;
  auto model = fit(pairs, NoiseSchedule::ve(), mlp_arch(), cfg);
  CHECK(std::filesystem::exists(dir + "/model.bpck"));

  auto loaded = ScoreModel::load(dir + "/model.bpck");
  CHECK(loaded->step() == 1);
  // weights byte-for-byte equal
  auto& a = model->net().params().items();
  auto& b = loaded->net().params().items();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(a[i]->w.v == b[i]->w.v);
  }
  // and they predict identically
  Tensor x_t(2, 1, 1, 1), x_end(2, 1, 1, 1);
  x_t.v = {0.1f, -0.3f};
  x_end.v = {0.6f, 0.2f};
  Tensor ya = model->predict_score(x_t, x_end, {0.3, 0.6});
  Tensor yb = loaded->predict_score(x_t, x_end, {0.3, 0.6});
  CHECK(ya.v == yb.v);
  std::filesystem::remove_all(dir);
}

TEST_CASE("fit is bitwise reproducible from (pairs, cfg, seed)") {
  auto [clean, prot] = linear_gaussian_pairs(64, 0.8, 0.5, 21);
  std::vector<PairView> pairs(clean.size());
  for (size_t i = 0; i < clean.size(); ++i) pairs[i] = {&clean[i], &prot[i]};

  TrainConfig cfg;
  cfg.steps = 40;
  cfg.batch_size = 8;
  cfg.seed = 1234;

  std::string d1 = std::filesystem::temp_directory_path() / "bp_repro1";
  std::string d2 = std::filesystem::temp_directory_path() / "bp_repro2";
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
  TrainConfig c1 = cfg;
  c1.checkpoint_dir = d1;
  TrainConfig c2 = cfg;
  c2.checkpoint_dir = d2;
  fit(pairs, NoiseSchedule::ve(), mlp_arch(), c1);
  fit(pairs, NoiseSchedule::ve(), mlp_arch(), c2);
  CHECK(file_sha(d1 + "/model.bpck") == file_sha(d2 + "/model.bpck"));
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("shape preservation through the image model") {
  json arch{{"type", "unet"}, {"channels", 3}, {"base", 8}, {"mults", {1, 2}}, {"groups", 4}};
  ScoreModel model(NoiseSchedule::ve(), arch, 5);
  Rng rng(8);
  Tensor x_t(3, 3, 16, 16), x_end(3, 3, 16, 16);
  for (float& v : x_t.v) v = static_cast<float>(rng.normal());
  for (float& v : x_end.v) v = static_cast<float>(rng.uniform());
  std::vector<double> t{0.2, 0.5, 0.8};
  Tensor out = model.predict_x0(x_t, x_end, t, true);
  CHECK(out.n == 3);
  CHECK(out.c == 3);
  CHECK(out.h == 16);
  CHECK(out.w == 16);
  CHECK(model.param_count() > 0);
}

TEST_CASE("fit rejects empty and mismatched pair sets") {
  CHECK_THROWS_AS(fit({}, NoiseSchedule::ve(), mlp_arch(), TrainConfig{}),
                  std::invalid_argument);
  Image a = scalar_image(0.1f);
  Image b(1, 2, 2);  // different shape
  std::vector<PairView> bad{{&a, &b}};
  CHECK_THROWS_AS(fit(bad, NoiseSchedule::ve(), mlp_arch(), TrainConfig{}),
                  std::invalid_argument);
}
