// Copyright 2026 The ppdlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ppdlab/density_eval.hpp"

namespace ppdlab::cli {

/// 8-bit RGB raster, row-major, top row first.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image(int w, int h);
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

void write_png(const std::filesystem::path& path, const Image& img);

/// 2D grid as a heatmap (axis 0 horizontal, axis 1 upward), optionally with
/// iso-lines at the given normalized density levels.
Image heatmap(const DensityGrid& g, const std::vector<double>& contour_levels = {});

struct Curve {
  std::vector<double> y;
  std::uint8_t r, g, b;
};

/// Curves sampled on a shared x lattice, scaled to a common y range.
Image line_plot(const std::vector<double>& x, const std::vector<Curve>& curves,
                int width = 640, int height = 360);

}  // namespace ppdlab::cli
