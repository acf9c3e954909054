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

#include "bridgepure/protections.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bridgepure {

using nlohmann::json;

ProtectionKind protection_kind_from_name(const std::string& name) {
  if (name == "classwise-linf") return ProtectionKind::kClasswiseLinf;
  if (name == "one-pixel") return ProtectionKind::kOnePixel;
  if (name == "patch-l2") return ProtectionKind::kPatchL2;
  if (name == "mixture") return ProtectionKind::kMixture;
  throw std::invalid_argument("unknown protection kind: " + name);
}

std::string protection_kind_name(ProtectionKind k) {
  switch (k) {
    case ProtectionKind::kClasswiseLinf:
      return "classwise-linf";
    case ProtectionKind::kOnePixel:
      return "one-pixel";
    case ProtectionKind::kPatchL2:
      return "patch-l2";
    case ProtectionKind::kMixture:
      return "mixture";
  }
  throw std::logic_error("bad protection kind");
}

std::string ProtectionSpec::norm_name() const {
  switch (kind) {
    case ProtectionKind::kClasswiseLinf:
      return "Linf";
    case ProtectionKind::kOnePixel:
      return "L0";
    case ProtectionKind::kPatchL2:
      return "L2";
    case ProtectionKind::kMixture:
      return "mixed";
  }
  return "?";
}

json ProtectionSpec::to_json() const {
  json j{{"kind", protection_kind_name(kind)},
         {"epsilon", epsilon},
         {"class_count", class_count},
         {"pattern_seed", pattern_seed},
         {"norm", norm_name()}};
  if (kind == ProtectionKind::kMixture) {
    json ms = json::array();
    for (const auto& m : members) ms.push_back(m.to_json());
    j["members"] = ms;
  }
  return j;
}

ProtectionSpec ProtectionSpec::from_json(const json& j) {
  ProtectionSpec s;
  s.kind = protection_kind_from_name(j.at("kind").get<std::string>());
  s.epsilon = j.value("epsilon", s.epsilon);
  s.class_count = j.value("class_count", s.class_count);
  s.pattern_seed = j.value("pattern_seed", s.pattern_seed);
  if (j.contains("members")) {
    for (const auto& m : j.at("members")) s.members.push_back(from_json(m));
  }
  return s;
}

std::string ProtectionSpec::id() const { return sha256_hex(to_json().dump()).substr(0, 16); }

namespace {

void check_input(const Image& x, int label, const ProtectionSpec& spec) {
  if (label < 0 || label >= spec.class_count) {
    throw std::invalid_argument("protect: label " + std::to_string(label) +
                                " out of range for class_count " +
                                std::to_string(spec.class_count));
  }
  for (float v : x.px) {
    if (!(v >= -1e-6f && v <= 1.0f + 1e-6f)) {
      throw std::invalid_argument("protect: input pixels must lie in [0, 1]");
    }
  }
}

std::string shape_key(int label, int c, int h, int w) {
  return std::to_string(label) + "/" + std::to_string(c) + "x" + std::to_string(h) + "x" +
         std::to_string(w);
}

}  // namespace

Protector::Protector(ProtectionSpec spec) : spec_(std::move(spec)) {
  if (spec_.kind == ProtectionKind::kMixture) {
    if (spec_.members.empty()) {
      throw std::invalid_argument("mixture protection needs at least one member");
    }
    for (const auto& m : spec_.members) {
      if (m.kind == ProtectionKind::kMixture) {
        throw std::invalid_argument("nested mixture protections are not supported");
      }
      members_.push_back(std::make_unique<Protector>(m));
    }
  }
}

const Protector::Pattern& Protector::pattern_for(int label, int c, int h, int w) const {
  std::string key = shape_key(label, c, h, w);
  std::lock_guard<std::mutex> lock(mu_);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;

  Rng rng(derive_seed(spec_.pattern_seed,
                      "pattern/" + protection_kind_name(spec_.kind) + "/" + key));
  Pattern p;
  size_t dim = static_cast<size_t>(c) * h * w;
  switch (spec_.kind) {
    case ProtectionKind::kClasswiseLinf: {
      p.delta.resize(dim);
      for (size_t j = 0; j < dim; ++j) p.delta[j] = rng.uniform() < 0.5 ? -1.0f : 1.0f;
      break;
    }
    case ProtectionKind::kOnePixel: {
      p.pixel_y = static_cast<int>(rng.uniform_int(h));
      p.pixel_x = static_cast<int>(rng.uniform_int(w));
      p.color.resize(c);
      for (int ch = 0; ch < c; ++ch) p.color[ch] = rng.uniform() < 0.5 ? 0 : 255;
      // Alternate color for inputs whose pixel already matches: flip the
      // last channel by one step, keeping the L0 pixel distance at exactly 1.
      p.alt_color = p.color;
      p.alt_color[c - 1] = p.color[c - 1] == 255 ? 254 : p.color[c - 1] + 1;
      break;
    }
    case ProtectionKind::kPatchL2: {
      // Smooth per-class wave field: a few low-frequency cosines per channel.
      p.delta.assign(dim, 0.0f);
      for (int ch = 0; ch < c; ++ch) {
        for (int k = 0; k < 3; ++k) {
          double fy = 1.0 + rng.uniform_int(3);
          double fx = 1.0 + rng.uniform_int(3);
          double phase = rng.uniform(0.0, 2.0 * M_PI);
          double amp = 0.5 + rng.uniform();
          for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
              p.delta[(static_cast<size_t>(ch) * h + y) * w + x] += static_cast<float>(
                  amp * std::cos(2.0 * M_PI * (fy * y / h + fx * x / w) + phase));
            }
          }
        }
      }
      double norm = 0.0;
      for (float v : p.delta) norm += static_cast<double>(v) * v;
      norm = std::sqrt(norm);
      // Scale to the budget minus the worst-case 8-bit rounding headroom so
      // the quantized output still satisfies the L2 budget exactly.
      double headroom = std::sqrt(static_cast<double>(dim)) * (0.5 / 255.0);
      double scale = std::max(0.0, spec_.epsilon - headroom) / std::max(norm, 1e-12);
      for (float& v : p.delta) v = static_cast<float>(v * scale);
      break;
    }
    case ProtectionKind::kMixture:
      break;  // members hold their own patterns
  }
  return cache_.emplace(std::move(key), std::move(p)).first->second;
}

void Protector::precompute(int c, int h, int w) const {
  if (spec_.kind == ProtectionKind::kMixture) {
    for (const auto& m : members_) m->precompute(c, h, w);
    return;
  }
  for (int label = 0; label < spec_.class_count; ++label) pattern_for(label, c, h, w);
}

Image Protector::protect(const Image& x, int label) const {
  check_input(x, label, spec_);
  switch (spec_.kind) {
    case ProtectionKind::kClasswiseLinf: {
      const Pattern& p = pattern_for(label, x.c, x.h, x.w);
      // Work in integer 8-bit units so the budget is exact on the grid.
      int step = static_cast<int>(std::floor(spec_.epsilon * 255.0 + 1e-9));
      std::vector<uint8_t> bytes = to_bytes8(x);
      for (size_t j = 0; j < bytes.size(); ++j) {
        int v = bytes[j] + (p.delta[j] > 0 ? step : -step);
        bytes[j] = static_cast<uint8_t>(std::min(255, std::max(0, v)));
      }
      return from_bytes8(bytes, x.c, x.h, x.w);
    }
    case ProtectionKind::kOnePixel: {
      const Pattern& p = pattern_for(label, x.c, x.h, x.w);
      std::vector<uint8_t> bytes = to_bytes8(x);
      size_t hw = static_cast<size_t>(x.h) * x.w;
      size_t pix = static_cast<size_t>(p.pixel_y) * x.w + p.pixel_x;
      bool unchanged = true;
      for (int ch = 0; ch < x.c; ++ch) {
        if (bytes[ch * hw + pix] != p.color[ch]) unchanged = false;
      }
      const std::vector<uint8_t>& color = unchanged ? p.alt_color : p.color;
      for (int ch = 0; ch < x.c; ++ch) bytes[ch * hw + pix] = color[ch];
      return from_bytes8(bytes, x.c, x.h, x.w);
    }
    case ProtectionKind::kPatchL2: {
      const Pattern& p = pattern_for(label, x.c, x.h, x.w);
      Image out = x;
      for (size_t j = 0; j < out.px.size(); ++j) out.px[j] += p.delta[j];
      quantize8(out);
      return out;
    }
    case ProtectionKind::kMixture: {
      uint64_t pick = splitmix64(spec_.pattern_seed ^ fnv1a64(image_content_id(x)));
      return members_[pick % members_.size()]->protect(x, label);
    }
  }
  throw std::logic_error("protect: bad kind");
}

Image protect(const ProtectionSpec& spec, const Image& x, int label) {
  Protector p(spec);
  return p.protect(x, label);
}

Dataset protect_dataset(const ProtectionSpec& spec, const Dataset& ds) {
  Protector prot(spec);
  Dataset out;
  out.labels = ds.labels;
  out.ids = ds.ids;
  out.images.resize(ds.size());
  if (!ds.empty()) prot.precompute(ds.images[0].c, ds.images[0].h, ds.images[0].w);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(ds.size()); ++i) {
    out.images[i] = prot.protect(ds.images[i], ds.labels[i]);
  }
  return out;
}

Image preprocess(const Preprocess& pp, const Image& x_protected) {
  if (pp.beta < 0.0 || pp.beta > 1.0) {
    throw std::invalid_argument("preprocess: beta must be in [0, 1]");
  }
  if (pp.beta == 0.0) return x_protected;
  Rng rng(pp.seed);
  double keep = std::sqrt(1.0 - pp.beta);
  double noise = std::sqrt(pp.beta);
  Image out = x_protected;
  for (float& v : out.px) {
    v = static_cast<float>(keep * v + noise * rng.normal());
  }
  return out;
}

Dataset preprocess_dataset(const Preprocess& pp, const Dataset& ds) {
  Dataset out;
  out.labels = ds.labels;
  out.ids = ds.ids;
  out.images.resize(ds.size());
  for (size_t i = 0; i < ds.size(); ++i) {
    Preprocess per{pp.beta, derive_seed(pp.seed, "preprocess/" + ds.ids[i])};
    out.images[i] = preprocess(per, ds.images[i]);
  }
  return out;
}

}  // namespace bridgepure
