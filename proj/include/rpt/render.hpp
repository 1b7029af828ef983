/* Copyright 2026 The RPT Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Binary PPM (P6) previews of label maps.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rpt/error.hpp"
#include "rpt/tensor.hpp"

namespace rpt {

using Rgb8 = std::array<std::uint8_t, 3>;
using Palette = std::array<Rgb8, 19>;

/// Mirrors data/palette.txt.
inline constexpr Palette kDefaultPalette = {{
    {128, 64, 128}, {70, 70, 70},   {70, 130, 180}, {107, 142, 35}, {0, 0, 142},
    {244, 35, 232}, {102, 102, 156}, {190, 153, 153}, {153, 153, 153}, {250, 170, 30},
    {220, 220, 0},  {152, 251, 152}, {220, 20, 60},  {255, 0, 0},     {0, 0, 70},
    {0, 60, 100},   {0, 80, 100},   {0, 0, 230},    {119, 11, 32},
}};

inline Palette read_palette(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open palette " + path.string());
  Palette palette{};
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int r, g, b;
    if (!(ls >> r >> g >> b) || r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255)
      throw FormatError("bad palette line: " + line);
    if (n == palette.size()) throw FormatError("palette has more than 19 entries");
    palette[n++] = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
  }
  if (n != palette.size()) throw FormatError("palette must have exactly 19 entries");
  return palette;
}

/// P6 bytes; IGNORE and out-of-palette labels render black.
inline std::string encode_ppm(const LabelMap& labels, const Palette& palette = kDefaultPalette) {
  std::string out = "P6\n" + std::to_string(labels.width()) + " " + std::to_string(labels.height()) + "\n255\n";
  out.reserve(out.size() + labels.pixels() * 3);
  for (std::uint8_t v : labels.data()) {
    const Rgb8 c = v < palette.size() ? palette[v] : Rgb8{0, 0, 0};
    out.append(reinterpret_cast<const char*>(c.data()), 3);
  }
  return out;
}

inline void write_ppm(const std::filesystem::path& path, const LabelMap& labels,
                      const Palette& palette = kDefaultPalette) {
  const std::string bytes = encode_ppm(labels, palette);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace rpt
