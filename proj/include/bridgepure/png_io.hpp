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

#ifndef BRIDGEPURE_PNG_IO_HPP_
#define BRIDGEPURE_PNG_IO_HPP_

#include <string>

#include "bridgepure/common.hpp"

namespace bridgepure {

// 8-bit RGB (or grayscale) PNG. Writing quantizes to the 8-bit grid; the
// encoding is lossless, so write-then-read reproduces pixels exactly.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

}  // namespace bridgepure

#endif  // BRIDGEPURE_PNG_IO_HPP_
