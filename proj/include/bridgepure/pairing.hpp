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

#ifndef BRIDGEPURE_PAIRING_HPP_
#define BRIDGEPURE_PAIRING_HPP_

#include <optional>
#include <string>
#include <vector>

#include "bridgepure/protections.hpp"
#include "bridgepure/score_model.hpp"

namespace bridgepure {

// Disjoint protect / reference / test partition. The reference set is the
// source of leakage pairs and never intersects the protect set.
struct DatasetSplit {
  Dataset protect_set;
  Dataset reference_set;
  Dataset test_set;
};

// Seeded, class-stratified, disjoint split. Throws if the sizes are
// infeasible.
DatasetSplit make_splits(const Dataset& dataset, size_t n_protect, size_t n_reference,
                         size_t n_test, uint64_t seed);

// The leaked pair set: aligned (clean, protected) images with labels and
// protection provenance. Persisted as a directory:
//   manifest.json            canonical JSON (sorted keys) with per-image digests
//   clean/<id>.png           8-bit lossless
//   protected/<id>.png
// ids are content digests of the clean image.
struct PairArchive {
  std::vector<Image> clean;
  std::vector<Image> protected_images;
  std::vector<int> labels;
  std::vector<std::string> ids;
  nlohmann::json protection_spec;  // ProtectionSpec::to_json()
  std::string protection_id;

  size_t size() const { return clean.size(); }
  std::string manifest_json() const;
  std::string manifest_hash() const;  // digest over the manifest bytes
  std::vector<PairView> views() const;

  void save(const std::string& dir) const;
  // Verifies per-image digests against the manifest.
  static PairArchive load(const std::string& dir);
};

// Samples clean images from the reference set, queries the protection
// mechanism, and stores aligned pairs. Optionally restricted to
// class_filter with per_class pairs from each listed class.
PairArchive harvest_leakage(const ProtectionSpec& spec, const Dataset& reference_set, size_t n,
                            uint64_t seed,
                            const std::optional<std::vector<int>>& class_filter = std::nullopt,
                            size_t per_class = 0);

// Dilution baseline: protected data plus extra unprotected images, with
// provenance flags. Throws on id collisions.
struct DilutedDataset {
  Dataset data;
  std::vector<bool> from_extra;
};

DilutedDataset dilute(const Dataset& protected_dataset, const Dataset& clean_extra);

}  // namespace bridgepure

#endif  // BRIDGEPURE_PAIRING_HPP_
