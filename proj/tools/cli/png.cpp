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

#include "png.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "ppdlab/error.hpp"

namespace ppdlab::cli {
namespace {

// Viridis anchor colours, interpolated linearly.
constexpr std::array<std::array<double, 3>, 5> kAnchors{{
    {68, 1, 84},
    {59, 82, 139},
    {33, 145, 140},
    {94, 201, 98},
    {253, 231, 37},
}};

std::array<std::uint8_t, 3> colormap(double t) {
  t = std::clamp(t, 0.0, 1.0) * (kAnchors.size() - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(t), kAnchors.size() - 2);
  const double f = t - static_cast<double>(i);
  std::array<std::uint8_t, 3> c{};
  for (int k = 0; k < 3; ++k) {
    c[k] = static_cast<std::uint8_t>(
        std::lround((1.0 - f) * kAnchors[i][k] + f * kAnchors[i + 1][k]));
  }
  return c;
}

void draw_line(Image& img, int x0, int y0, int x1, int y1, std::uint8_t r,
               std::uint8_t g, std::uint8_t b) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    img.set(x0, y0, r, g, b);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

Image::Image(int w, int h)
    : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 255) {}

void Image::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const auto o = (static_cast<std::size_t>(y) * width + x) * 3;
  rgb[o] = r;
  rgb[o + 1] = g;
  rgb[o + 2] = b;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  require(fp != nullptr, ErrorKind::kRejectedInput,
          "cannot write " + path.string());
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    raise(ErrorKind::kRejectedInput, "libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(
                           img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

Image heatmap(const DensityGrid& g, const std::vector<double>& contour_levels) {
  require(g.dim() == 2, ErrorKind::kRejectedInput, "heatmap needs a 2D grid");
  const int nx = g.axes[0].res, ny = g.axes[1].res;
  const double peak = *std::max_element(g.values.begin(), g.values.end());
  Image img(nx, ny);
  auto value = [&](int i, int j) {
    return g.log_z ? g.normalized(g.index(i, j)) : g.values[g.index(i, j)];
  };
  const double scale = g.log_z ? peak / std::exp(*g.log_z) : peak;
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      const auto c = colormap(scale > 0 ? value(i, j) / scale : 0.0);
      img.set(i, ny - 1 - j, c[0], c[1], c[2]);
    }
  }
  for (double level : contour_levels) {
    for (int i = 0; i < nx; ++i) {
      for (int j = 0; j < ny; ++j) {
        if (value(i, j) < level) continue;
        const bool edge = (i > 0 && value(i - 1, j) < level) ||
                          (i + 1 < nx && value(i + 1, j) < level) ||
                          (j > 0 && value(i, j - 1) < level) ||
                          (j + 1 < ny && value(i, j + 1) < level);
        if (edge) img.set(i, ny - 1 - j, 255, 255, 255);
      }
    }
  }
  return img;
}

Image line_plot(const std::vector<double>& x, const std::vector<Curve>& curves,
                int width, int height) {
  require(x.size() >= 2, ErrorKind::kRejectedInput, "line plot needs two points");
  Image img(width, height);
  const int margin = 10;
  double top = 0.0;
  for (const auto& c : curves) {
    for (double v : c.y) {
      if (std::isfinite(v)) top = std::max(top, v);
    }
  }
  if (top <= 0.0) top = 1.0;
  const double x_lo = x.front(), x_hi = x.back();
  auto px = [&](double v) {
    return margin + static_cast<int>(std::lround((v - x_lo) / (x_hi - x_lo) *
                                                 (width - 2 * margin - 1)));
  };
  auto py = [&](double v) {
    return height - 1 - margin -
           static_cast<int>(std::lround(v / top * (height - 2 * margin - 1)));
  };
  draw_line(img, px(x_lo), py(0.0), px(x_hi), py(0.0), 190, 190, 190);
  if (x_lo < 0.0 && x_hi > 0.0) {
    draw_line(img, px(0.0), py(0.0), px(0.0), py(top), 220, 220, 220);
  }
  for (const auto& c : curves) {
    for (std::size_t i = 1; i < x.size() && i < c.y.size(); ++i) {
      draw_line(img, px(x[i - 1]), py(c.y[i - 1]), px(x[i]), py(c.y[i]), c.r,
                c.g, c.b);
    }
  }
  return img;
}

}  // namespace ppdlab::cli
