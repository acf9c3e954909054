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

#include "bridgepure/pairing.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "bridgepure/png_io.hpp"

namespace bridgepure {

using nlohmann::json;

namespace {

// Full-length content digest (the image id is its 16-char prefix).
std::string image_sha256(const Image& img) {
  std::vector<uint8_t> buf;
  auto push_u32 = [&buf](uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
  };
  push_u32(static_cast<uint32_t>(img.c));
  push_u32(static_cast<uint32_t>(img.h));
  push_u32(static_cast<uint32_t>(img.w));
  std::vector<uint8_t> px = to_bytes8(img);
  buf.insert(buf.end(), px.begin(), px.end());
  return sha256_hex(buf);
}

void seeded_shuffle(std::vector<size_t>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = rng.uniform_int(i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

DatasetSplit make_splits(const Dataset& dataset, size_t n_protect, size_t n_reference,
                         size_t n_test, uint64_t seed) {
  if (n_protect + n_reference + n_test > dataset.size()) {
    throw std::invalid_argument("make_splits: requested sizes exceed the dataset");
  }
  int classes = dataset.num_classes();
  std::vector<std::vector<size_t>> pools(std::max(classes, 1));
  for (size_t i = 0; i < dataset.size(); ++i) pools[dataset.labels[i]].push_back(i);
  Rng rng(derive_seed(seed, "splits"));
  for (auto& pool : pools) seeded_shuffle(pool, rng);
  std::vector<size_t> taken(pools.size(), 0);

  // Largest-remainder allocation per split against the remaining pools keeps
  // per-class counts within one of the exact proportion.
  auto take_stratified = [&](size_t want) {
    size_t remaining = 0;
    for (size_t c = 0; c < pools.size(); ++c) remaining += pools[c].size() - taken[c];
    if (want > remaining) throw std::invalid_argument("make_splits: infeasible sizes");
    std::vector<size_t> alloc(pools.size(), 0);
    std::vector<std::pair<double, size_t>> rema;
    size_t assigned = 0;
    for (size_t c = 0; c < pools.size(); ++c) {
      size_t avail = pools[c].size() - taken[c];
      double exact = remaining ? static_cast<double>(want) * avail / remaining : 0.0;
      alloc[c] = std::min<size_t>(avail, static_cast<size_t>(exact));
      assigned += alloc[c];
      rema.push_back({exact - static_cast<double>(alloc[c]), c});
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (const auto& [frac, c] : rema) {
      if (assigned == want) break;
      if (alloc[c] < pools[c].size() - taken[c]) {
        ++alloc[c];
        ++assigned;
      }
    }
    if (assigned != want) throw std::invalid_argument("make_splits: infeasible sizes");
    std::vector<size_t> idx;
    idx.reserve(want);
    for (size_t c = 0; c < pools.size(); ++c) {
      for (size_t k = 0; k < alloc[c]; ++k) idx.push_back(pools[c][taken[c] + k]);
      taken[c] += alloc[c];
    }
    std::sort(idx.begin(), idx.end());
    return idx;
  };

  DatasetSplit split;
  split.protect_set = dataset.subset(take_stratified(n_protect));
  split.reference_set = dataset.subset(take_stratified(n_reference));
  split.test_set = dataset.subset(take_stratified(n_test));
  return split;
}

std::string PairArchive::manifest_json() const {
  json records = json::array();
  for (size_t i = 0; i < size(); ++i) {
    records.push_back(json{{"id", ids[i]},
                           {"label", labels[i]},
                           {"clean_sha256", image_sha256(clean[i])},
                           {"protected_sha256", image_sha256(protected_images[i])}});
  }
  json manifest{{"format", "bridgepure-pair-archive"},
                {"version", 1},
                {"count", size()},
                {"protection", protection_spec},
                {"protection_id", protection_id},
                {"records", records}};
  return manifest.dump(2);
}

std::string PairArchive::manifest_hash() const { return sha256_hex(manifest_json()); }

std::vector<PairView> PairArchive::views() const {
  std::vector<PairView> v(size());
  for (size_t i = 0; i < size(); ++i) v[i] = PairView{&clean[i], &protected_images[i]};
  return v;
}

void PairArchive::save(const std::string& dir) const {
  std::filesystem::create_directories(dir + "/clean");
  std::filesystem::create_directories(dir + "/protected");
  for (size_t i = 0; i < size(); ++i) {
    write_png(dir + "/clean/" + ids[i] + ".png", clean[i]);
    write_png(dir + "/protected/" + ids[i] + ".png", protected_images[i]);
  }
  std::ofstream f(dir + "/manifest.json", std::ios::trunc);
  if (!f) throw std::runtime_error("PairArchive::save: cannot write manifest in " + dir);
  f << manifest_json();
}

PairArchive PairArchive::load(const std::string& dir) {
  std::ifstream f(dir + "/manifest.json");
  if (!f) throw std::runtime_error("PairArchive::load: missing manifest.json in " + dir);
  json manifest = json::parse(f);
  if (manifest.value("format", "") != "bridgepure-pair-archive") {
    throw std::runtime_error("PairArchive::load: not a pair archive: " + dir);
  }
  PairArchive a;
  a.protection_spec = manifest.at("protection");
  a.protection_id = manifest.at("protection_id").get<std::string>();
  for (const auto& rec : manifest.at("records")) {
    std::string id = rec.at("id").get<std::string>();
    Image c = read_png(dir + "/clean/" + id + ".png");
    Image p = read_png(dir + "/protected/" + id + ".png");
    if (image_sha256(c) != rec.at("clean_sha256").get<std::string>() ||
        image_sha256(p) != rec.at("protected_sha256").get<std::string>()) {
      throw std::runtime_error("PairArchive::load: digest mismatch for " + id);
    }
    a.clean.push_back(std::move(c));
    a.protected_images.push_back(std::move(p));
    a.labels.push_back(rec.at("label").get<int>());
    a.ids.push_back(id);
  }
  return a;
}

PairArchive harvest_leakage(const ProtectionSpec& spec, const Dataset& reference_set, size_t n,
                            uint64_t seed, const std::optional<std::vector<int>>& class_filter,
                            size_t per_class) {
  std::vector<size_t> chosen;
  Rng rng(derive_seed(seed, "harvest"));
  if (class_filter.has_value()) {
    if (per_class == 0) throw std::invalid_argument("harvest_leakage: per_class must be > 0");
    for (int cls : *class_filter) {
      std::vector<size_t> pool;
      for (size_t i = 0; i < reference_set.size(); ++i) {
        if (reference_set.labels[i] == cls) pool.push_back(i);
      }
      if (pool.size() < per_class) {
        throw std::invalid_argument("harvest_leakage: class " + std::to_string(cls) +
                                    " has only " + std::to_string(pool.size()) +
                                    " reference images");
      }
      seeded_shuffle(pool, rng);
      chosen.insert(chosen.end(), pool.begin(), pool.begin() + per_class);
    }
  } else {
    if (n == 0 || n > reference_set.size()) {
      throw std::invalid_argument("harvest_leakage: need 1 <= N <= reference size");
    }
    std::vector<size_t> pool(reference_set.size());
    for (size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    seeded_shuffle(pool, rng);
    chosen.assign(pool.begin(), pool.begin() + n);
  }
  std::sort(chosen.begin(), chosen.end());

  Protector prot(spec);
  PairArchive a;
  a.protection_spec = spec.to_json();
  a.protection_id = spec.id();
  for (size_t i : chosen) {
    Image clean = quantized8(reference_set.images[i]);
    Image protected_img = prot.protect(clean, reference_set.labels[i]);
    a.ids.push_back(image_content_id(clean));
    a.labels.push_back(reference_set.labels[i]);
    a.clean.push_back(std::move(clean));
    a.protected_images.push_back(std::move(protected_img));
  }
  return a;
}

DilutedDataset dilute(const Dataset& protected_dataset, const Dataset& clean_extra) {
  std::set<std::string> seen(protected_dataset.ids.begin(), protected_dataset.ids.end());
  for (const std::string& id : clean_extra.ids) {
    if (!seen.insert(id).second) {
      throw std::invalid_argument("dilute: id collision on " + id);
    }
  }
  DilutedDataset out;
  out.data = protected_dataset;
  out.from_extra.assign(protected_dataset.size(), false);
  for (size_t i = 0; i < clean_extra.size(); ++i) {
    out.data.push(clean_extra.images[i], clean_extra.labels[i], clean_extra.ids[i]);
    out.from_extra.push_back(true);
  }
  return out;
}

}  // namespace bridgepure
