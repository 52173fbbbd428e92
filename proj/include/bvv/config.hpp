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

// Experiment configuration: a flat key = value file with optional
// [section] headers. Keys inside a section are addressed as
// section.key. Strings may be double-quoted; '#' starts a comment.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "bvv/error.hpp"
#include "bvv/nanoformer.hpp"

namespace bvv {

struct ExperimentConfig {
  // [paths]
  std::string font = "data/unifont-fixture.hex";
  std::string vocab = "vocab.jsonl";
  std::string corpus = "data/corpus.txt";
  std::string embeddings = "embeddings.bvve";
  std::string outdir = "out";
  // [model]
  std::uint32_t vocab_size = 1024;
  std::uint32_t side = 16;  // H
  std::uint32_t d_model = 64;
  std::uint32_t n_layers = 2;
  std::uint32_t n_heads = 2;
  std::uint32_t block_size = 64;
  EmbeddingMode embedding_mode = EmbeddingMode::kFrozenVisual;
  // [train]
  double lr = 3e-3;
  std::uint32_t batch = 8;
  std::uint64_t steps = 2000;
  std::uint32_t accum = 1;
  std::uint64_t seed = 1337;
  std::uint64_t eval_every = 500;
  std::uint64_t warmup = 100;
  double val_fraction = 0.1;
  double threshold = 0.0;  // 0 = 0.5 ln V

  ModelConfig model_config() const {
    ModelConfig m;
    m.vocab_size = vocab_size;
    m.block_size = block_size;
    m.n_layers = n_layers;
    m.n_heads = n_heads;
    m.d_model = d_model;
    m.embedding_mode = embedding_mode;
    return m;
  }

  /// Numeric fields positive, d_model <= H^2, heads divide d_model.
  void validate() const {
    auto positive = [](std::uint64_t v, const char* name) {
      if (v == 0) throw Error(ErrorCode::kInvalidArgument, std::string(name) + " must be positive");
    };
    positive(vocab_size, "model.vocab_size");
    positive(side, "model.H");
    positive(d_model, "model.d_model");
    positive(n_layers, "model.n_layers");
    positive(n_heads, "model.n_heads");
    positive(block_size, "model.block_size");
    positive(batch, "train.batch");
    positive(steps, "train.steps");
    positive(accum, "train.accum");
    if (!(lr > 0)) throw Error(ErrorCode::kInvalidArgument, "train.lr must be positive");
    if (!(val_fraction >= 0 && val_fraction < 1)) {
      throw Error(ErrorCode::kInvalidArgument, "train.val_fraction must be in [0, 1)");
    }
    if (!(threshold >= 0)) {
      throw Error(ErrorCode::kInvalidArgument, "train.threshold must be >= 0");
    }
    if (static_cast<std::uint64_t>(d_model) > static_cast<std::uint64_t>(side) * side) {
      throw Error(ErrorCode::kInvalidArgument,
                  "d_model " + std::to_string(d_model) + " exceeds H^2 = " +
                      std::to_string(static_cast<std::uint64_t>(side) * side));
    }
    if (d_model % n_heads != 0) {
      throw Error(ErrorCode::kInvalidArgument, "n_heads must divide d_model");
    }
  }

  /// Throws kIo naming the first listed path that does not exist.
  static void require_files(std::initializer_list<const std::string*> paths) {
    for (const auto* p : paths) {
      if (!std::filesystem::exists(*p)) throw Error(ErrorCode::kIo, "missing file: " + *p);
    }
  }

  /// Sets one key (section.key). Unknown keys are kParse errors.
  void set(std::string_view key, std::string_view value);
  std::string serialize() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace config_detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::kParse,
                "bad value for " + std::string(key) + ": '" + std::string(v) + "'");
  }
  return out;
}

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + '"';
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// Strips a trailing comment outside quotes and unquotes strings.
inline std::string parse_value(std::string_view raw, int line_no) {
  raw = trim(raw);
  if (!raw.empty() && raw.front() == '"') {
    std::string out;
    std::size_t i = 1;
    for (; i < raw.size(); ++i) {
      char c = raw[i];
      if (c == '\\' && i + 1 < raw.size()) {
        out += raw[++i];
      } else if (c == '"') {
        break;
      } else {
        out += c;
      }
    }
    if (i >= raw.size()) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": unterminated string");
    }
    const auto rest = trim(raw.substr(i + 1));
    if (!rest.empty() && rest.front() != '#') {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": text after string");
    }
    return out;
  }
  const auto hash = raw.find('#');
  return std::string(trim(raw.substr(0, hash)));
}

}  // namespace config_detail

inline void ExperimentConfig::set(std::string_view key, std::string_view v) {
  using config_detail::parse_number;
  if (key == "paths.font") font = v;
  else if (key == "paths.vocab") vocab = v;
  else if (key == "paths.corpus") corpus = v;
  else if (key == "paths.embeddings") embeddings = v;
  else if (key == "paths.outdir") outdir = v;
  else if (key == "model.vocab_size") vocab_size = parse_number<std::uint32_t>(key, v);
  else if (key == "model.H") side = parse_number<std::uint32_t>(key, v);
  else if (key == "model.d_model") d_model = parse_number<std::uint32_t>(key, v);
  else if (key == "model.n_layers") n_layers = parse_number<std::uint32_t>(key, v);
  else if (key == "model.n_heads") n_heads = parse_number<std::uint32_t>(key, v);
  else if (key == "model.block_size") block_size = parse_number<std::uint32_t>(key, v);
  else if (key == "model.embedding_mode") {
    try {
      embedding_mode = embedding_mode_from_string(v);
    } catch (const Error& e) {
      throw Error(ErrorCode::kParse, e.what());
    }
  }
  else if (key == "train.lr") lr = parse_number<double>(key, v);
  else if (key == "train.batch") batch = parse_number<std::uint32_t>(key, v);
  else if (key == "train.steps") steps = parse_number<std::uint64_t>(key, v);
  else if (key == "train.accum") accum = parse_number<std::uint32_t>(key, v);
  else if (key == "train.seed") seed = parse_number<std::uint64_t>(key, v);
  else if (key == "train.eval_every") eval_every = parse_number<std::uint64_t>(key, v);
  else if (key == "train.warmup") warmup = parse_number<std::uint64_t>(key, v);
  else if (key == "train.val_fraction") val_fraction = parse_number<double>(key, v);
  else if (key == "train.threshold") threshold = parse_number<double>(key, v);
  else throw Error(ErrorCode::kParse, "unknown config key '" + std::string(key) + "'");
}

inline std::string ExperimentConfig::serialize() const {
  using config_detail::format_double;
  using config_detail::quote;
  std::ostringstream o;
  o << "[paths]\n"
    << "font = " << quote(font) << "\n"
    << "vocab = " << quote(vocab) << "\n"
    << "corpus = " << quote(corpus) << "\n"
    << "embeddings = " << quote(embeddings) << "\n"
    << "outdir = " << quote(outdir) << "\n\n"
    << "[model]\n"
    << "vocab_size = " << vocab_size << "\n"
    << "H = " << side << "\n"
    << "d_model = " << d_model << "\n"
    << "n_layers = " << n_layers << "\n"
    << "n_heads = " << n_heads << "\n"
    << "block_size = " << block_size << "\n"
    << "embedding_mode = " << quote(to_string(embedding_mode)) << "\n\n"
    << "[train]\n"
    << "lr = " << format_double(lr) << "\n"
    << "batch = " << batch << "\n"
    << "steps = " << steps << "\n"
    << "accum = " << accum << "\n"
    << "seed = " << seed << "\n"
    << "eval_every = " << eval_every << "\n"
    << "warmup = " << warmup << "\n"
    << "val_fraction = " << format_double(val_fraction) << "\n"
    << "threshold = " << format_double(threshold) << "\n";
  return o.str();
}

/// Applies every key in `text` on top of `base`.
inline ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {}) {
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line_end = nl == std::string_view::npos ? text.size() : nl;
    auto line = config_detail::trim(text.substr(pos, line_end - pos));
    pos = line_end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string_view::npos) {
        throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": unclosed section");
      }
      section = std::string(config_detail::trim(line.substr(1, close - 1)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = config_detail::trim(line.substr(0, eq));
    const auto full = section.empty() ? std::string(key) : section + "." + std::string(key);
    base.set(full, config_detail::parse_value(line.substr(eq + 1), line_no));
  }
  return base;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

}  // namespace bvv
