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

// Unifont `.hex` glyph store. Each line is `CODEPOINT:PAYLOAD` where the
// payload is 32 hex digits (8x16 glyph) or 64 hex digits (16x16 glyph),
// rows top to bottom, bits MSB-first within each row.

#include <cstdint>
#include <fstream>
#include <istream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bvv/error.hpp"
#include "bvv/unicode.hpp"

namespace bvv {

inline constexpr int kGlyphHeight = 16;

struct GlyphBitmap {
  int width = 8;
  int height = kGlyphHeight;
  std::vector<std::uint8_t> pixels;  // row-major, 1 = ink

  GlyphBitmap() : pixels(static_cast<std::size_t>(8 * kGlyphHeight), 0) {}
  explicit GlyphBitmap(int w)
      : width(w), pixels(static_cast<std::size_t>(w * kGlyphHeight), 0) {}

  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y * width + x)];
  }
  void set(int x, int y, bool ink) {
    pixels[static_cast<std::size_t>(y * width + x)] = ink ? 1 : 0;
  }

  std::size_t ink_count() const {
    std::size_t n = 0;
    for (auto p : pixels) n += p;
    return n;
  }

  friend bool operator==(const GlyphBitmap&, const GlyphBitmap&) = default;
};

namespace detail {

inline int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n' ||
                        s.back() == ' ' || s.back() == '\t')) {
    s.remove_suffix(1);
  }
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  return s;
}

}  // namespace detail

/// The fallback box: 8x16 with the outermost rows and columns inked.
inline GlyphBitmap notdef_glyph() {
  GlyphBitmap g(8);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      if (y == 0 || y == g.height - 1 || x == 0 || x == g.width - 1) {
        g.set(x, y, true);
      }
    }
  }
  return g;
}

inline std::pair<char32_t, GlyphBitmap> parse_hex_line(std::string_view line) {
  line = detail::trim(line);
  const auto colon = line.find(':');
  if (colon == std::string_view::npos) {
    throw Error(ErrorCode::kParse, "missing ':' separator");
  }
  const auto prefix = line.substr(0, colon);
  const auto payload = line.substr(colon + 1);
  if (prefix.size() < 4 || prefix.size() > 6) {
    throw Error(ErrorCode::kParse,
                "malformed codepoint '" + std::string(prefix) + "'");
  }
  std::uint32_t cp = 0;
  for (char c : prefix) {
    const int v = detail::hex_value(c);
    if (v < 0) {
      throw Error(ErrorCode::kParse,
                  "malformed codepoint '" + std::string(prefix) + "'");
    }
    cp = cp * 16 + static_cast<std::uint32_t>(v);
  }
  if (!unicode::is_scalar(cp)) {
    throw Error(ErrorCode::kParse,
                "codepoint is not a Unicode scalar: " + std::string(prefix));
  }
  int width = 0;
  if (payload.size() == 32) {
    width = 8;
  } else if (payload.size() == 64) {
    width = 16;
  } else {
    throw Error(ErrorCode::kParse, "payload length " +
                                       std::to_string(payload.size()) +
                                       " not in {32, 64}");
  }
  GlyphBitmap g(width);
  const int digits_per_row = width / 4;
  for (int y = 0; y < kGlyphHeight; ++y) {
    for (int d = 0; d < digits_per_row; ++d) {
      const int v = detail::hex_value(payload[static_cast<std::size_t>(
          y * digits_per_row + d)]);
      if (v < 0) throw Error(ErrorCode::kParse, "non-hex payload character");
      for (int b = 0; b < 4; ++b) {
        g.set(d * 4 + b, y, ((v >> (3 - b)) & 1) != 0);
      }
    }
  }
  return {static_cast<char32_t>(cp), std::move(g)};
}

/// Inverse of parse_hex_line; uppercase, 4-digit minimum codepoint.
inline std::string to_hex_line(char32_t cp, const GlyphBitmap& g) {
  static constexpr char kDigits[] = "0123456789ABCDEF";
  std::string out;
  std::string code;
  for (auto v = static_cast<std::uint32_t>(cp); v != 0 || code.size() < 4;
       v >>= 4) {
    code.insert(code.begin(), kDigits[v & 0xF]);
  }
  out = code + ':';
  const int digits_per_row = g.width / 4;
  for (int y = 0; y < g.height; ++y) {
    for (int d = 0; d < digits_per_row; ++d) {
      int v = 0;
      for (int b = 0; b < 4; ++b) v = (v << 1) | g.at(d * 4 + b, y);
      out.push_back(kDigits[v]);
    }
  }
  return out;
}

struct FontLoadReport {
  std::size_t lines = 0;       // non-blank, non-comment lines seen
  std::size_t skipped = 0;     // lines that failed to parse
  std::size_t duplicates = 0;  // codepoints overwritten (last wins)
};

/// Immutable codepoint -> bitmap table. Lookup is total: absent codepoints
/// resolve to the notdef box.
class GlyphStore {
 public:
  GlyphStore() : notdef_(notdef_glyph()) {}

  const GlyphBitmap& glyph(char32_t cp) const {
    const auto it = glyphs_.find(cp);
    return it == glyphs_.end() ? notdef_ : it->second;
  }

  bool contains(char32_t cp) const { return glyphs_.contains(cp); }
  std::size_t size() const { return glyphs_.size(); }
  const GlyphBitmap& notdef() const { return notdef_; }
  const std::unordered_map<char32_t, GlyphBitmap>& glyphs() const {
    return glyphs_;
  }

  friend bool operator==(const GlyphStore&, const GlyphStore&) = default;

 private:
  friend GlyphStore load_font(std::istream&, FontLoadReport*);

  std::unordered_map<char32_t, GlyphBitmap> glyphs_;
  GlyphBitmap notdef_;
};

inline GlyphStore load_font(std::istream& source,
                            FontLoadReport* report = nullptr) {
  if (!source) throw Error(ErrorCode::kIo, "unreadable font source");
  GlyphStore store;
  FontLoadReport rep;
  std::string line;
  while (std::getline(source, line)) {
    const auto view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    ++rep.lines;
    try {
      auto [cp, g] = parse_hex_line(view);
      auto [it, inserted] = store.glyphs_.insert_or_assign(cp, std::move(g));
      if (!inserted) ++rep.duplicates;
    } catch (const Error&) {
      ++rep.skipped;
    }
  }
  if (source.bad()) throw Error(ErrorCode::kIo, "error reading font source");
  if (store.glyphs_.empty()) {
    throw Error(ErrorCode::kEmptyInput, "no glyphs parsed from font source");
  }
  if (report != nullptr) *report = rep;
  return store;
}

inline GlyphStore load_font_file(const std::string& path,
                                 FontLoadReport* report = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open font file " + path);
  return load_font(in, report);
}

}  // namespace bvv
