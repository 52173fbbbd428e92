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

#include <gtest/gtest.h>

#include <fstream>
#include <string>

#include "bvv/fontstore.hpp"
#include "bvv/glyphrender.hpp"
#include "bvv/rng.hpp"
#include "bvv/univoc.hpp"
#include "test_util.hpp"

namespace {

const bvv::GlyphStore& font() {
  static const auto store = bvv::load_font_file(testutil::data_path("unifont-fixture.hex"));
  return store;
}

bvv::GrayImage random_image(bvv::Rng& rng, int w, int h) {
  bvv::GrayImage img(w, h);
  for (auto& v : img.values) v = rng.uniform();
  return img;
}

TEST(RenderToken, SingleCharIsGlyph) {
  EXPECT_EQ(bvv::render_token(U"A", font()), font().glyph(U'A'));
}

TEST(RenderToken, WidthsAdd) {
  const auto img = bvv::render_token(U"abc", font());
  EXPECT_EQ(img.width, 24);
  EXPECT_EQ(img.height, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 8; ++x) ASSERT_EQ(img.at(16 + x, y), font().glyph(U'c').at(x, y));
  EXPECT_EQ(bvv::render_token(U"a中", font()).width, 24);
}

TEST(RenderToken, UnmappedUsesNotdef) {
  const char32_t missing = 0x1F600;
  ASSERT_FALSE(font().contains(missing));
  const std::u32string text{U'a', missing};
  const auto img = bvv::render_token(text, font());
  EXPECT_EQ(img.width, 16);
  const auto box = bvv::notdef_glyph();
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 8; ++x) ASSERT_EQ(img.at(8 + x, y), box.at(x, y));
}

TEST(RenderToken, CapsAtEightGlyphs) {
  EXPECT_EQ(bvv::render_token(U"abcdefghij", font()), bvv::render_token(U"abcdefgh", font()));
}

TEST(ResizeBilinear, ConstantStaysConstant) {
  for (auto [w, h, side] : {std::tuple{24, 16, 16}, {8, 16, 5}, {3, 2, 32}, {1, 1, 7}}) {
    bvv::GrayImage img(w, h);
    for (auto& v : img.values) v = 0.375;
    const auto out = bvv::resize_bilinear(img, side);
    for (double v : out.values) ASSERT_DOUBLE_EQ(v, 0.375);
  }
}

TEST(ResizeBilinear, CheckerboardToOnePixel) {
  bvv::GrayImage img(2, 2);
  img.values = {1, 0, 0, 1};
  const auto out = bvv::resize_bilinear(img, 1);
  ASSERT_EQ(out.values.size(), 1u);
  EXPECT_DOUBLE_EQ(out.values[0], 0.5);
}

TEST(ResizeBilinear, Errors) {
  bvv::GrayImage img(2, 2);
  EXPECT_EQ(testutil::error_code([&] { bvv::resize_bilinear(img, 0); }),
            bvv::ErrorCode::kInvalidArgument);
  EXPECT_THROW(bvv::resize_bilinear(bvv::GrayImage(0, 16), 4), bvv::Error);
}

TEST(ResizeBilinear, IdentityAtNativeSize) {
  bvv::Rng rng(1);
  const auto img = random_image(rng, 16, 16);
  EXPECT_EQ(bvv::resize_bilinear(img, 16).values, img.values);
}

TEST(ResizeBilinear, LinearInScale) {
  bvv::Rng rng(2);
  const auto img = random_image(rng, 40, 16);
  const double a = 0.3;
  auto scaled = img;
  for (auto& v : scaled.values) v *= a;
  const auto r1 = bvv::resize_bilinear(img, 16);
  const auto r2 = bvv::resize_bilinear(scaled, 16);
  for (std::size_t i = 0; i < r1.values.size(); ++i) {
    ASSERT_NEAR(r2.values[i], a * r1.values[i], 1e-12);
    ASSERT_GE(r1.values[i], 0.0);
    ASSERT_LE(r1.values[i], 1.0);
  }
}

TEST(ResizeBilinear, HandEvaluatedSamples) {
  // 4x1 ramp resized to 2 columns: samples at x = 0.5 and 2.5.
  bvv::GrayImage img(4, 1);
  img.values = {0.0, 0.2, 0.4, 0.6};
  const auto out = bvv::resize_bilinear(img, 2);
  EXPECT_NEAR(out.at(0, 0), 0.1, 1e-15);
  EXPECT_NEAR(out.at(1, 0), 0.5, 1e-15);
  EXPECT_NEAR(out.at(0, 1), 0.1, 1e-15);
}

TEST(Binarize, ThresholdAndMonotone) {
  bvv::Rng rng(3);
  const auto img = random_image(rng, 16, 16);
  const auto lo = bvv::binarize(img, 0.4);
  const auto hi = bvv::binarize(img, 0.6);
  for (std::size_t i = 0; i < lo.size(); ++i) {
    ASSERT_EQ(lo[i], img.values[i] >= 0.4 ? 1 : 0);
    ASSERT_LE(hi[i], lo[i]);
  }
}

TEST(TokenRawVector, BlankAndEmptyAreZero) {
  for (const auto* text : {U" ", U"   ", U""}) {
    const auto v = bvv::token_raw_vector(text, font(), 16);
    ASSERT_EQ(v.size(), 256u);
    EXPECT_EQ(bvv::ink_density(v), 0.0);
  }
}

TEST(TokenRawVector, DeterministicAndSized) {
  for (int side : {1, 8, 16, 32}) {
    const auto a = bvv::token_raw_vector(U"при", font(), side);
    EXPECT_EQ(a.size(), static_cast<std::size_t>(side * side));
    EXPECT_EQ(a, bvv::token_raw_vector(U"при", font(), side));
  }
  EXPECT_THROW(bvv::token_raw_vector(U"a", font(), 0), bvv::Error);
}

TEST(TokenRawVector, TrigramsAtLeastAsDenseAsTheirFirstChar) {
  // Averaged over the 3-char tokens of the desk vocabulary.
  std::ifstream in(testutil::data_path("corpus.txt"));
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  const auto vocab = bvv::build_compact_vocab(bvv::unicode::decode_utf8(text), 1024);
  double tri = 0, first = 0;
  std::size_t n = 0;
  for (const auto& e : vocab.entries()) {
    if (e.text.size() != 3) continue;
    tri += bvv::ink_density(bvv::token_raw_vector(e.text, font(), 16));
    first += bvv::ink_density(bvv::token_raw_vector(e.text.substr(0, 1), font(), 16));
    ++n;
  }
  ASSERT_GT(n, 0u);
  EXPECT_GE(tri / n, first / n);
}

TEST(WritePgm, HeaderAndPixels) {
  const auto dir = testutil::scratch_dir("pgm");
  const auto path = (dir / "0041.pgm").string();
  const auto bits = bvv::token_raw_vector(U"A", font(), 16);
  bvv::write_pgm(path, bits, 16);
  std::ifstream in(path, std::ios::binary);
  const std::string data((std::istreambuf_iterator<char>(in)), {});
  const std::string header = "P5\n16 16\n255\n";
  ASSERT_EQ(data.size(), header.size() + 256);
  EXPECT_EQ(data.substr(0, header.size()), header);
  for (std::size_t i = 0; i < 256; ++i) {
    ASSERT_EQ(static_cast<unsigned char>(data[header.size() + i]), bits[i] ? 0 : 255);
  }
}

}  // namespace
