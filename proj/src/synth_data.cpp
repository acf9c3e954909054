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

#include "bridgepure/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "bridgepure/png_io.hpp"

namespace bridgepure {

namespace {

// Signed distance to each shape archetype, negative inside. Coordinates are
// centered and scaled so the shape radius is ~1.
double shape_sdf(int archetype, double px, double py) {
  double ax = std::abs(px), ay = std::abs(py);
  switch (archetype) {
    case 0:  // disc
      return std::hypot(px, py) - 1.0;
    case 1: {  // ring
      double r = std::hypot(px, py);
      return std::max(r - 1.0, 0.55 - r);
    }
    case 2:  // square
      return std::max(ax, ay) - 0.9;
    case 3:  // diamond
      return (ax + ay) - 1.15;
    case 4: {  // triangle (upward)
      double d1 = py - 0.75;
      double d2 = 0.95 * ax - 0.55 * py - 0.62;
      return std::max(d1, d2);
    }
    case 5:  // plus
      return std::min(std::max(ax - 1.0, ay - 0.36), std::max(ax - 0.36, ay - 1.0));
    case 6: {  // saltire (x)
      double u = std::abs(px + py) * M_SQRT1_2;
      double v = std::abs(px - py) * M_SQRT1_2;
      return std::min(std::max(u - 1.0, v - 0.3), std::max(v - 1.0, u - 0.3));
    }
    case 7: {  // horizontal bars
      double m = std::fmod(py * 1.5 + 3.0, 1.0);
      return std::max(std::max(ax, ay) - 1.0, std::abs(m - 0.5) - 0.26);
    }
    case 8: {  // checker
      double cx = std::fmod(px * 1.2 + 4.0, 1.0) - 0.5;
      double cy = std::fmod(py * 1.2 + 4.0, 1.0) - 0.5;
      double cell = (cx * cy > 0.0) ? -0.2 : 0.2;
      return std::max(std::max(ax, ay) - 1.0, cell);
    }
    case 9: {  // vertical bars
      double m = std::fmod(px * 1.5 + 3.0, 1.0);
      return std::max(std::max(ax, ay) - 1.0, std::abs(m - 0.5) - 0.26);
    }
    default:
      throw std::logic_error("bad shape archetype");
  }
}

}  // namespace

Dataset generate_synthetic(int classes, size_t count, int h, int w, uint64_t seed) {
  if (classes < 1 || classes > 10) {
    throw std::invalid_argument("generate_synthetic: 1..10 classes supported");
  }
  Dataset ds;
  double min_dim = std::min(h, w);
  for (size_t i = 0; i < count; ++i) {
    int label = static_cast<int>(i % classes);
    // Spread archetypes so small class counts get maximally distinct shapes.
    int archetype = label * 10 / classes;
    Rng rng(derive_seed(seed, "synth", i));

    double cx = w / 2.0 + (rng.uniform() - 0.5) * 0.25 * w;
    double cy = h / 2.0 + (rng.uniform() - 0.5) * 0.25 * h;
    double radius = (0.28 + 0.12 * rng.uniform()) * min_dim;

    float bg[3], fg[3];
    for (int ch = 0; ch < 3; ++ch) bg[ch] = static_cast<float>(0.05 + 0.30 * rng.uniform());
    for (int ch = 0; ch < 3; ++ch) fg[ch] = static_cast<float>(0.55 + 0.40 * rng.uniform());

    Image img(3, h, w);
    double edge = 1.2 / radius;  // ~1px anti-alias band in shape units
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double px = (x + 0.5 - cx) / radius;
        double py = (y + 0.5 - cy) / radius;
        double d = shape_sdf(archetype, px, py);
        double cov = std::min(1.0, std::max(0.0, 0.5 - d / edge));
        for (int ch = 0; ch < 3; ++ch) {
          double v = bg[ch] + cov * (fg[ch] - bg[ch]) + 0.02 * rng.normal();
          img.at(ch, y, x) = static_cast<float>(v);
        }
      }
    }
    quantize8(img);
    ds.push_auto_id(std::move(img), label);
  }
  return ds;
}

void save_dataset_folder(const std::string& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir + "/labels.csv", std::ios::trunc);
  if (!csv) throw std::runtime_error("save_dataset_folder: cannot write labels.csv in " + dir);
  csv << "id,label\n";
  for (size_t i = 0; i < ds.size(); ++i) {
    csv << ds.ids[i] << "," << ds.labels[i] << "\n";
    write_png(dir + "/" + ds.ids[i] + ".png", ds.images[i]);
  }
}

Dataset load_dataset_folder(const std::string& dir) {
  std::ifstream csv(dir + "/labels.csv");
  if (!csv) throw std::runtime_error("load_dataset_folder: missing labels.csv in " + dir);
  Dataset ds;
  std::string line;
  if (!std::getline(csv, line) || line.rfind("id,label", 0) != 0) {
    throw std::runtime_error("load_dataset_folder: labels.csv must start with 'id,label'");
  }
  size_t lineno = 1;
  while (std::getline(csv, line)) {
    ++lineno;
    if (line.empty()) continue;
    size_t comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::runtime_error("load_dataset_folder: bad row at labels.csv:" +
                               std::to_string(lineno));
    }
    std::string id = line.substr(0, comma);
    int label = std::stoi(line.substr(comma + 1));
    ds.push(read_png(dir + "/" + id + ".png"), label, id);
  }
  return ds;
}

}  // namespace bridgepure
