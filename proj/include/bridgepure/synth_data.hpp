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

#ifndef BRIDGEPURE_SYNTH_DATA_HPP_
#define BRIDGEPURE_SYNTH_DATA_HPP_

#include <string>

#include "bridgepure/common.hpp"

namespace bridgepure {

// Procedural shape dataset: the class determines the geometry (circle, ring,
// square, bars, ...) while colors are drawn independently of the class, so a
// classifier has to learn shapes rather than a color lookup. Images are
// anti-aliased, lightly noised, and quantized to the 8-bit grid. Balanced
// across classes (count need not divide evenly; remainders go to low labels).
Dataset generate_synthetic(int classes, size_t count, int h, int w, uint64_t seed);

// Folder-of-PNGs dataset: <dir>/labels.csv with header "id,label" and one
// <dir>/<id>.png per row.
void save_dataset_folder(const std::string& dir, const Dataset& ds);
Dataset load_dataset_folder(const std::string& dir);

}  // namespace bridgepure

#endif  // BRIDGEPURE_SYNTH_DATA_HPP_
