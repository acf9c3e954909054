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

#include "bridgepure/plots.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bridgepure {

namespace {

constexpr int kW = 640;
constexpr int kH = 420;
constexpr int kMarginL = 64;
constexpr int kMarginR = 20;
constexpr int kMarginT = 46;
constexpr int kMarginB = 70;

const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

void open_svg(std::ofstream& f, const std::string& title) {
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" "
       "text-anchor=\"middle\">"
    << title << "</text>\n";
}

void axes_and_grid(std::ofstream& f, double ymin, double ymax, const std::string& y_label) {
  int x0 = kMarginL, x1 = kW - kMarginR, y0 = kH - kMarginB, y1 = kMarginT;
  f << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
    << "\" stroke=\"black\"/>\n";
  f << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double v = ymin + (ymax - ymin) * i / 4.0;
    double y = y0 - (y0 - y1) * i / 4.0;
    f << "<line x1=\"" << x0 << "\" y1=\"" << y << "\" x2=\"" << x1 << "\" y2=\"" << y
      << "\" stroke=\"#dddddd\"/>\n";
    f << "<text x=\"" << x0 - 6 << "\" y=\"" << y + 4
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << fmt(v)
      << "</text>\n";
  }
  f << "<text x=\"16\" y=\"" << (y0 + y1) / 2
    << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 "
    << 16 << " " << (y0 + y1) / 2 << ")\">" << y_label << "</text>\n";
}

void legend(std::ofstream& f, const std::vector<Series>& series) {
  int x = kMarginL + 8;
  int y = kMarginT - 12;
  for (size_t s = 0; s < series.size(); ++s) {
    f << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"12\" fill=\""
      << kPalette[s % 6] << "\"/>\n";
    f << "<text x=\"" << x + 16 << "\" y=\"" << y + 2
      << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[s].name << "</text>\n";
    x += 24 + static_cast<int>(series[s].name.size()) * 7;
  }
}

void y_range(const std::vector<Series>& series, double* ymin, double* ymax) {
  *ymin = 0.0;
  *ymax = 1e-9;
  for (const auto& s : series) {
    for (double v : s.values) {
      *ymin = std::min(*ymin, v);
      *ymax = std::max(*ymax, v);
    }
  }
  double pad = 0.08 * (*ymax - *ymin);
  *ymax += pad;
}

}  // namespace

void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::string>& categories,
                         const std::vector<Series>& series, const std::string& y_label) {
  for (const auto& s : series) {
    if (s.values.size() != categories.size()) {
      throw std::invalid_argument("bar chart: series length mismatch");
    }
  }
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  open_svg(f, title);
  double ymin, ymax;
  y_range(series, &ymin, &ymax);
  axes_and_grid(f, ymin, ymax, y_label);
  legend(f, series);

  int x0 = kMarginL, x1 = kW - kMarginR, y0 = kH - kMarginB, y1 = kMarginT;
  double slot = static_cast<double>(x1 - x0) / categories.size();
  double bar = slot * 0.8 / std::max<size_t>(1, series.size());
  for (size_t c = 0; c < categories.size(); ++c) {
    for (size_t s = 0; s < series.size(); ++s) {
      double v = series[s].values[c];
      double hgt = (v - ymin) / (ymax - ymin) * (y0 - y1);
      double x = x0 + slot * c + slot * 0.1 + bar * s;
      f << "<rect x=\"" << x << "\" y=\"" << y0 - hgt << "\" width=\"" << bar * 0.92
        << "\" height=\"" << hgt << "\" fill=\"" << kPalette[s % 6] << "\"/>\n";
    }
    f << "<text x=\"" << x0 + slot * c + slot / 2 << "\" y=\"" << y0 + 16
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << categories[c]
      << "</text>\n";
  }
  f << "</svg>\n";
}

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::vector<double>& x, const std::vector<Series>& series,
                          const std::string& x_label, const std::string& y_label) {
  for (const auto& s : series) {
    if (s.values.size() != x.size()) {
      throw std::invalid_argument("line chart: series length mismatch");
    }
  }
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  open_svg(f, title);
  double ymin, ymax;
  y_range(series, &ymin, &ymax);
  axes_and_grid(f, ymin, ymax, y_label);
  legend(f, series);

  int x0 = kMarginL, x1 = kW - kMarginR, y0 = kH - kMarginB, y1 = kMarginT;
  double xmin = *std::min_element(x.begin(), x.end());
  double xmax = *std::max_element(x.begin(), x.end());
  double span = (xmax > xmin) ? xmax - xmin : 1.0;
  auto px = [&](double v) { return x0 + (v - xmin) / span * (x1 - x0); };
  auto py = [&](double v) { return y0 - (v - ymin) / (ymax - ymin) * (y0 - y1); };

  for (size_t s = 0; s < series.size(); ++s) {
    f << "<polyline fill=\"none\" stroke=\"" << kPalette[s % 6] << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < x.size(); ++i) f << px(x[i]) << "," << py(series[s].values[i]) << " ";
    f << "\"/>\n";
    for (size_t i = 0; i < x.size(); ++i) {
      f << "<circle cx=\"" << px(x[i]) << "\" cy=\"" << py(series[s].values[i])
        << "\" r=\"3\" fill=\"" << kPalette[s % 6] << "\"/>\n";
    }
  }
  for (size_t i = 0; i < x.size(); ++i) {
    f << "<text x=\"" << px(x[i]) << "\" y=\"" << y0 + 16
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << fmt(x[i])
      << "</text>\n";
  }
  f << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kH - 16
    << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << x_label
    << "</text>\n";
  f << "</svg>\n";
}

}  // namespace bridgepure
