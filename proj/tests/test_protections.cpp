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
#include <map>

#include "bridgepure/protections.hpp"

using namespace bridgepure;

namespace {

Image random_image8(int c, int h, int w, Rng& rng) {
  Image img(c, h, w);
  for (float& v : img.px) v = static_cast<float>(rng.uniform());
  quantize8(img);
  return img;
}

double linf(const Image& a, const Image& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.px[i]) - b.px[i]));
  }
  return m;
}

double l2(const Image& a, const Image& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    double d = static_cast<double>(a.px[i]) - b.px[i];
    s += d * d;
  }
  return std::sqrt(s);
}

int pixel_l0(const Image& a, const Image& b) {
  int hw = a.h * a.w;
  int count = 0;
  for (int p = 0; p < hw; ++p) {
    for (int ch = 0; ch < a.c; ++ch) {
      if (a.px[ch * hw + p] != b.px[ch * hw + p]) {
        ++count;
        break;
      }
    }
  }
  return count;
}

ProtectionSpec linf_spec(double eps = 8.0 / 255.0) {
  ProtectionSpec s;
  s.kind = ProtectionKind::kClasswiseLinf;
  s.epsilon = eps;
  s.class_count = 10;
  s.pattern_seed = 7;
  return s;
}

}  // namespace

TEST_CASE("classwise-linf: budget exact, zero budget is identity, deterministic") {
  Rng rng(1);
  ProtectionSpec spec = linf_spec();
  Protector prot(spec);

  // interior image (no clamping): |P(x)-x| equals 8/255 everywhere
  Image x(3, 8, 8, 0.5f);
  quantize8(x);
  Image y = prot.protect(x, 3);
  double lo = 1.0, hi = 0.0;
  for (size_t i = 0; i < x.px.size(); ++i) {
    double d = std::abs(static_cast<double>(y.px[i]) - x.px[i]);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  CHECK(hi == doctest::Approx(8.0 / 255.0).epsilon(1e-9));
  CHECK(lo == doctest::Approx(8.0 / 255.0).epsilon(1e-9));

  // budget holds on 100% of random images, clamping included
  for (int i = 0; i < 200; ++i) {
    Image xi = random_image8(3, 8, 8, rng);
    Image yi = prot.protect(xi, i % 10);
    CHECK(linf(xi, yi) <= 8.0 / 255.0 + 1e-9);
  }

  // zero budget: P(x) = x
  Protector zero(linf_spec(0.0));
  Image xz = random_image8(3, 8, 8, rng);
  CHECK(zero.protect(xz, 0).px == xz.px);

  // pure function: repeated calls identical
  Image a = prot.protect(xz, 4);
  Image b = prot.protect(xz, 4);
  CHECK(a.px == b.px);

  // non-multiple-of-1/255 budgets round down, never violating the cap
  Protector frac(linf_spec(0.03));
  Image yf = frac.protect(x, 1);
  CHECK(linf(x, yf) <= 0.03 + 1e-12);
}

TEST_CASE("one-pixel: L0 pixel distance exactly 1 on every input") {
  ProtectionSpec spec;
  spec.kind = ProtectionKind::kOnePixel;
  spec.class_count = 10;
  spec.pattern_seed = 3;
  Protector prot(spec);
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    Image x = random_image8(3, 8, 8, rng);
    Image y = prot.protect(x, i % 10);
    CHECK(pixel_l0(x, y) == 1);
    // re-protecting the protected image hits the already-set pixel and must
    // still change exactly one pixel (alternate color path)
    Image z = prot.protect(y, i % 10);
    CHECK(pixel_l0(y, z) == 1);
  }
}

TEST_CASE("patch-l2: budget holds after quantization, zero budget is identity") {
  ProtectionSpec spec;
  spec.kind = ProtectionKind::kPatchL2;
  spec.epsilon = 1.0;
  spec.class_count = 10;
  spec.pattern_seed = 5;
  Protector prot(spec);
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Image x = random_image8(3, 16, 16, rng);
    Image y = prot.protect(x, i % 10);
    CHECK(l2(x, y) <= spec.epsilon + 1e-9);
    CHECK(l2(x, y) > 0.0);  // the pattern is non-trivial at this budget
  }
  spec.epsilon = 0.0;
  Protector zero(spec);
  Image x = random_image8(3, 16, 16, rng);
  CHECK(zero.protect(x, 2).px == x.px);
}

TEST_CASE("mixture: members assigned near-uniformly by content hash") {
  ProtectionSpec spec;
  spec.kind = ProtectionKind::kMixture;
  spec.class_count = 10;
  spec.pattern_seed = 11;
  for (const char* kind : {"classwise-linf", "one-pixel", "patch-l2"}) {
    ProtectionSpec m;
    m.kind = protection_kind_from_name(kind);
    m.epsilon = m.kind == ProtectionKind::kPatchL2 ? 1.0 : 8.0 / 255.0;
    m.class_count = 10;
    m.pattern_seed = 11;
    spec.members.push_back(m);
  }
  Protector prot(spec);

  // classify each output by which member signature it matches
  Rng rng(4);
  std::map<std::string, int> counts{{"one-pixel", 0}, {"classwise-linf", 0}, {"patch-l2", 0}};
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    Image x = random_image8(3, 8, 8, rng);
    Image y = prot.protect(x, i % 10);
    int l0 = pixel_l0(x, y);
    double li = linf(x, y);
    if (l0 == 1) {
      ++counts["one-pixel"];
    } else if (std::abs(li - 8.0 / 255.0) < 1e-9) {
      ++counts["classwise-linf"];
    } else {
      ++counts["patch-l2"];
    }
  }
  for (const auto& [kind, count] : counts) {
    CAPTURE(kind);
    CHECK(std::abs(count / static_cast<double>(n) - 1.0 / 3.0) < 0.05);
  }
}

TEST_CASE("protect: input validation") {
  Protector prot(linf_spec());
  Image x(3, 4, 4, 0.5f);
  CHECK_THROWS_AS(prot.protect(x, -1), std::invalid_argument);
  CHECK_THROWS_AS(prot.protect(x, 10), std::invalid_argument);
  Image bad(3, 4, 4, 1.5f);
  CHECK_THROWS_AS(prot.protect(bad, 0), std::invalid_argument);
  ProtectionSpec empty_mix;
  empty_mix.kind = ProtectionKind::kMixture;
  CHECK_THROWS_AS(Protector{empty_mix}, std::invalid_argument);
}

TEST_CASE("protect_dataset: empty in, empty out; labels and order preserved") {
  Dataset empty;
  Dataset out = protect_dataset(linf_spec(), empty);
  CHECK(out.empty());

  Rng rng(5);
  Dataset ds;
  for (int i = 0; i < 12; ++i) ds.push_auto_id(random_image8(3, 8, 8, rng), i % 10);
  Dataset prot = protect_dataset(linf_spec(), ds);
  CHECK(prot.labels == ds.labels);
  CHECK(prot.ids == ds.ids);
  REQUIRE(prot.size() == ds.size());
  for (size_t i = 0; i < ds.size(); ++i) {
    CHECK(linf(ds.images[i], prot.images[i]) > 0.0);
  }
}

TEST_CASE("preprocess: identity at beta=0, standard normal at beta=1, unclamped") {
  Image x(1, 10, 10, 0.5f);
  Preprocess id{0.0, 9};
  CHECK(preprocess(id, x).px == x.px);

  // beta=1: pure z; empirical moments over 1e5 pixels within 3 SE
  Image big(1, 400, 250, 0.37f);
  Preprocess full{1.0, 42};
  Image z = preprocess(full, big);
  double n = static_cast<double>(z.px.size());
  double mean = 0.0;
  for (float v : z.px) mean += v;
  mean /= n;
  double var = 0.0;
  for (float v : z.px) var += (v - mean) * (v - mean);
  var /= n - 1;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(n));
  CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / (n - 1)));
  // unclamped by construction
  bool outside = false;
  for (float v : z.px) outside |= (v < 0.0f || v > 1.0f);
  CHECK(outside);

  // E[G_beta(x')] = sqrt(1-beta) x': average over seeds at one pixel
  double beta = 0.3;
  const int seeds = 10000;
  double acc = 0.0;
  for (int s = 0; s < seeds; ++s) {
    Preprocess pp{beta, static_cast<uint64_t>(s)};
    Image y = preprocess(pp, x);
    acc += y.px[0];
  }
  acc /= seeds;
  double expect = std::sqrt(1.0 - beta) * 0.5;
  double se = std::sqrt(beta) / std::sqrt(static_cast<double>(seeds));
  CHECK(std::abs(acc - expect) < 3.0 * se);

  CHECK_THROWS_AS(preprocess(Preprocess{-0.1, 0}, x), std::invalid_argument);
  CHECK_THROWS_AS(preprocess(Preprocess{1.1, 0}, x), std::invalid_argument);
}

TEST_CASE("protection spec: json round trip and stable id") {
  ProtectionSpec spec = linf_spec();
  ProtectionSpec back = ProtectionSpec::from_json(spec.to_json());
  CHECK(back.kind == spec.kind);
  CHECK(back.epsilon == spec.epsilon);
  CHECK(back.class_count == spec.class_count);
  CHECK(back.pattern_seed == spec.pattern_seed);
  CHECK(spec.id() == back.id());
  ProtectionSpec other = linf_spec();
  other.pattern_seed = 8;
  CHECK(other.id() != spec.id());
  CHECK(spec.norm_name() == "Linf");
}
