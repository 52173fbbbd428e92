// Copyright 2026 The bvv Authors.
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

// Token text -> standardized HxH binary vector: concatenate glyphs left to
// right, bilinear resize to HxH, threshold, flatten row-major.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "bvv/error.hpp"
#include "bvv/fontstore.hpp"

namespace bvv {

inline constexpr std::size_t kMaxRenderedGlyphs = 8;
inline constexpr double kDefaultThreshold = 0.5;

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major intensities in [0, 1]

  GrayImage() = default;
  GrayImage(int w, int h)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0) {}

  double at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  double& at(int x, int y) {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

/// Horizontal concatenation of the glyphs of the first eight characters.
/// Empty text renders as a 0-wide bitmap.
inline GlyphBitmap render_token(std::u32string_view text,
                                const GlyphStore& store) {
  if (text.size() > kMaxRenderedGlyphs) text = text.substr(0, kMaxRenderedGlyphs);
  int width = 0;
  for (char32_t c : text) width += store.glyph(c).width;
  GlyphBitmap out(width);
  int x0 = 0;
  for (char32_t c : text) {
    const auto& g = store.glyph(c);
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) out.set(x0 + x, y, g.at(x, y) != 0);
    }
    x0 += g.width;
  }
  return out;
}

inline GrayImage to_gray(const GlyphBitmap& bitmap) {
  GrayImage img(bitmap.width, bitmap.height);
  for (std::size_t i = 0; i < bitmap.pixels.size(); ++i) {
    img.values[i] = bitmap.pixels[i] ? 1.0 : 0.0;
  }
  return img;
}

/// Bilinear resize to side x side with half-pixel centers: output (i, j)
/// samples the source at ((i + 0.5) h / side - 0.5, (j + 0.5) w / side -
/// 0.5), clamped to the border.
inline GrayImage resize_bilinear(const GrayImage& src, int side) {
  if (side <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "target side must be >= 1");
  }
  if (src.width <= 0 || src.height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "source image is empty");
  }
  struct Tap {
    int lo;
    int hi;
    double frac;
  };
  const auto taps = [side](int n) {
    std::vector<Tap> out(static_cast<std::size_t>(side));
    for (int i = 0; i < side; ++i) {
      double s = (i + 0.5) * n / side - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(n - 1));
      const int lo = static_cast<int>(std::floor(s));
      out[static_cast<std::size_t>(i)] = {lo, std::min(lo + 1, n - 1), s - lo};
    }
    return out;
  };
  const auto rows = taps(src.height);
  const auto cols = taps(src.width);
  GrayImage out(side, side);
  for (int i = 0; i < side; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (int j = 0; j < side; ++j) {
      const auto& c = cols[static_cast<std::size_t>(j)];
      const double top =
          (1.0 - c.frac) * src.at(c.lo, r.lo) + c.frac * src.at(c.hi, r.lo);
      const double bottom =
          (1.0 - c.frac) * src.at(c.lo, r.hi) + c.frac * src.at(c.hi, r.hi);
      out.at(j, i) = (1.0 - r.frac) * top + r.frac * bottom;
    }
  }
  return out;
}

inline std::vector<std::uint8_t> binarize(const GrayImage& img,
                                          double threshold) {
  std::vector<std::uint8_t> bits(img.values.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    bits[i] = img.values[i] >= threshold ? 1 : 0;
  }
  return bits;
}

/// side^2 raw vector of a token. Empty text gives the zero vector.
inline std::vector<std::uint8_t> token_raw_vector(
    std::u32string_view text, const GlyphStore& store, int side,
    double threshold = kDefaultThreshold) {
  if (side <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "target side must be >= 1");
  }
  if (text.empty()) {
    return std::vector<std::uint8_t>(static_cast<std::size_t>(side) * side, 0);
  }
  return binarize(resize_bilinear(to_gray(render_token(text, store)), side),
                  threshold);
}

inline double ink_density(const std::vector<std::uint8_t>& bits) {
  if (bits.empty()) return 0.0;
  std::size_t on = 0;
  for (auto b : bits) on += b;
  return static_cast<double>(on) / static_cast<double>(bits.size());
}

/// Binary PGM (P5), ink drawn black on white.
inline void write_pgm(const std::string& path,
                      const std::vector<std::uint8_t>& bits, int side) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot create " + path);
  out << "P5\n" << side << ' ' << side << "\n255\n";
  for (auto b : bits) out.put(static_cast<char>(b ? 0 : 255));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path);
}

}  // namespace bvv
