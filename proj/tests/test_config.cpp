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

#include "bvv/config.hpp"
#include "test_util.hpp"

namespace {

using testutil::error_code;

TEST(Config, DefaultsValidate) {
  const bvv::ExperimentConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.model_config().vocab_size, 1024u);
  EXPECT_EQ(c.model_config().embedding_mode, bvv::EmbeddingMode::kFrozenVisual);
}

TEST(Config, ParsesSectionsCommentsAndQuotes) {
  const auto c = bvv::parse_config(R"(
# experiment
[paths]
font = "fonts/a b.hex"   # spaces survive quoting
outdir = runs/x

[model]
H = 32
d_model = 128
embedding_mode = trainable
[train]
lr = 0.001
steps = 10
)");
  EXPECT_EQ(c.font, "fonts/a b.hex");
  EXPECT_EQ(c.outdir, "runs/x");
  EXPECT_EQ(c.side, 32u);
  EXPECT_EQ(c.d_model, 128u);
  EXPECT_EQ(c.embedding_mode, bvv::EmbeddingMode::kTrainable);
  EXPECT_DOUBLE_EQ(c.lr, 0.001);
  EXPECT_EQ(c.steps, 10u);
  EXPECT_EQ(c.batch, 8u);  // untouched default
}

TEST(Config, SerializeRoundTrip) {
  bvv::ExperimentConfig c;
  c.font = "with \"quote\" and \\ slash";
  c.lr = 0.1 + 0.2;  // needs shortest round-trip formatting
  c.val_fraction = 1.0 / 3.0;
  c.embedding_mode = bvv::EmbeddingMode::kFrozenRandom;
  c.seed = 0xFFFFFFFFFFFFFFFFull;
  const auto text = c.serialize();
  const auto back = bvv::parse_config(text);
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.serialize(), text);
}

TEST(Config, BaseIsOverlaid) {
  bvv::ExperimentConfig base;
  base.steps = 77;
  const auto c = bvv::parse_config("[train]\nbatch = 2\n", base);
  EXPECT_EQ(c.steps, 77u);
  EXPECT_EQ(c.batch, 2u);
}

TEST(Config, Errors) {
  auto code = [](const char* t) { return error_code([&] { bvv::parse_config(t); }); };
  EXPECT_EQ(code("[model]\nwidth = 3\n"), bvv::ErrorCode::kParse);
  EXPECT_EQ(code("[model\nH = 3\n"), bvv::ErrorCode::kParse);
  EXPECT_EQ(code("H 3\n"), bvv::ErrorCode::kParse);
  EXPECT_EQ(code("[model]\nH = sixteen\n"), bvv::ErrorCode::kParse);
  EXPECT_EQ(code("[model]\nH = -1\n"), bvv::ErrorCode::kParse);
  EXPECT_EQ(code("[model]\nembedding_mode = visual\n"), bvv::ErrorCode::kParse);
  EXPECT_EQ(code("[paths]\nfont = \"open\n"), bvv::ErrorCode::kParse);
  EXPECT_EQ(error_code([] { bvv::load_config("/nonexistent/bvv.toml"); }), bvv::ErrorCode::kIo);
}

TEST(Config, Validation) {
  bvv::ExperimentConfig c;
  c.side = 8;
  c.d_model = 65;  // > 64 = H^2
  EXPECT_EQ(error_code([&] { c.validate(); }), bvv::ErrorCode::kInvalidArgument);
  c.d_model = 64;
  EXPECT_NO_THROW(c.validate());
  c.n_heads = 3;
  EXPECT_EQ(error_code([&] { c.validate(); }), bvv::ErrorCode::kInvalidArgument);
  c.n_heads = 2;
  c.batch = 0;
  EXPECT_EQ(error_code([&] { c.validate(); }), bvv::ErrorCode::kInvalidArgument);
}

TEST(Config, RequireFiles) {
  const std::string present = testutil::data_path("unifont-fixture.hex");
  const std::string missing = "/nonexistent/x.hex";
  EXPECT_NO_THROW(bvv::ExperimentConfig::require_files({&present}));
  EXPECT_EQ(error_code([&] { bvv::ExperimentConfig::require_files({&present, &missing}); }),
            bvv::ErrorCode::kIo);
}

TEST(Config, LoadFromFile) {
  const auto dir = testutil::scratch_dir("config");
  const auto path = (dir / "exp.toml").string();
  bvv::ExperimentConfig c;
  c.steps = 5;
  std::ofstream(path) << c.serialize();
  EXPECT_EQ(bvv::load_config(path), c);
}

}  // namespace
