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

#ifndef BRIDGEPURE_PLOTS_HPP_
#define BRIDGEPURE_PLOTS_HPP_

#include <string>
#include <vector>

namespace bridgepure {

struct Series {
  std::string name;
  std::vector<double> values;
};

// Self-contained SVG renderers for run reports.
void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::string>& categories,
                         const std::vector<Series>& series, const std::string& y_label);

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::vector<double>& x, const std::vector<Series>& series,
                          const std::string& x_label, const std::string& y_label);

}  // namespace bridgepure

#endif  // BRIDGEPURE_PLOTS_HPP_
