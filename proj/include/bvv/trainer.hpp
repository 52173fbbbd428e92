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

// Training loop, evaluation, sampling and the BVVC checkpoint format.
//
// BVVC layout, all little-endian:
//   "BVVC" | version u32 | vocab u32 | block u32 | n_layers u32 |
//   n_heads u32 | d_model u32 | embedding_mode u8 | n_tensors u32 |
//   per tensor in declaration order: name_len u32, name, rank u32,
//   dims u64 x rank, trainable u8, values f32 x numel |
//   has_state u8 | optional train state: step u64, skipped u64,
//   rng u64 x 4, adam_step u64, n_history u64, history records
//   (step u64, train f64, val f64, seconds f64), then Adam m and v
//   (f32 x numel each) for every trainable tensor in order.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bvv/binio.hpp"
#include "bvv/error.hpp"
#include "bvv/nanoformer.hpp"
#include "bvv/rng.hpp"

namespace bvv {

struct TrainHyper {
  double lr = 3e-3;
  std::uint32_t batch = 8;
  std::uint64_t steps = 2000;
  std::uint32_t accum = 1;
  std::uint64_t seed = 1337;
  std::uint64_t eval_every = 500;
  std::uint64_t warmup = 100;
  std::size_t eval_max_blocks = 0;  // 0 = whole validation split
  bool record_time = true;          // false writes 0 seconds (byte-stable logs)
};

struct LossRecord {
  std::uint64_t step = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
};

inline bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

inline bool operator==(const LossRecord& a, const LossRecord& b) {
  return a.step == b.step && same_bits(a.train_loss, b.train_loss) &&
         same_bits(a.val_loss, b.val_loss) && same_bits(a.seconds, b.seconds);
}

struct TrainState {
  std::uint64_t step = 0;
  std::uint64_t skipped = 0;  // optimizer steps dropped for non-finite grads
  Rng rng;
  AdamState adam;
  std::vector<LossRecord> history;
};

/// Summed NLL and token count over non-overlapping blocks of block_size
/// inputs (targets shifted by one).
template <typename T>
CrossEntropyResult evaluate_nll(Model<T>& model, std::span<const TokenId> tokens,
                                std::size_t max_blocks = 0, std::size_t batch = 16) {
  const std::size_t seq = model.config().block_size;
  if (tokens.size() < seq + 1) {
    throw Error(ErrorCode::kEmptyInput,
                "evaluation set shorter than one block (" +
                    std::to_string(seq + 1) + " tokens)");
  }
  std::size_t blocks = (tokens.size() - 1) / seq;
  if (max_blocks != 0) blocks = std::min(blocks, max_blocks);
  CrossEntropyResult total;
  std::vector<TokenId> x;
  std::vector<TokenId> y;
  for (std::size_t first = 0; first < blocks; first += batch) {
    const std::size_t nb = std::min(batch, blocks - first);
    x.clear();
    y.clear();
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t start = (first + b) * seq;
      x.insert(x.end(), tokens.begin() + static_cast<std::ptrdiff_t>(start),
               tokens.begin() + static_cast<std::ptrdiff_t>(start + seq));
      y.insert(y.end(), tokens.begin() + static_cast<std::ptrdiff_t>(start + 1),
               tokens.begin() + static_cast<std::ptrdiff_t>(start + seq + 1));
    }
    model.forward(x, {}, nb, seq);
    const auto ce = cross_entropy<T>(model.logits(), y, model.config().vocab_size,
                                     nullptr);
    total.sum += ce.sum;
    total.count += ce.count;
  }
  return total;
}

/// exp(mean token NLL) over non-overlapping blocks.
template <typename T>
double perplexity(Model<T>& model, std::span<const TokenId> tokens,
                  std::size_t max_blocks = 0) {
  return std::exp(evaluate_nll(model, tokens, max_blocks).mean());
}

/// Mean of the last `window` train losses ending at history index `i`.
inline double trailing_mean(const std::vector<LossRecord>& history, std::size_t i,
                            std::size_t window) {
  const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
  double sum = 0.0;
  for (std::size_t j = lo; j <= i; ++j) sum += history[j].train_loss;
  return sum / static_cast<double>(i + 1 - lo);
}

/// First step whose trailing-window train loss is below `threshold`.
inline std::optional<std::uint64_t> steps_to_threshold(
    const std::vector<LossRecord>& history, double threshold,
    std::size_t window = 50) {
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (trailing_mean(history, i, window) < threshold) return history[i].step;
  }
  return std::nullopt;
}

class Trainer {
 public:
  Trainer(Model<float>& model, const TrainHyper& hp,
          std::span<const TokenId> train, std::span<const TokenId> val)
      : model_(model), hp_(hp), train_(train), val_(val) {
    const std::size_t seq = model.config().block_size;
    if (train.size() < seq + 1) {
      throw Error(ErrorCode::kEmptyInput,
                  "training split has " + std::to_string(train.size()) +
                      " tokens, need block_size + 1 = " + std::to_string(seq + 1));
    }
    if (hp.batch == 0 || hp.accum == 0) {
      throw Error(ErrorCode::kInvalidArgument, "batch and accum must be positive");
    }
    state_.rng.reseed(hp.seed ^ 0xD1B54A32D192ED03ULL);
    state_.adam = AdamState::for_model(model);
  }

  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }
  void resume(TrainState state) { state_ = std::move(state); }

  double learning_rate(std::uint64_t step) const {
    if (hp_.warmup == 0 || step >= hp_.warmup) return hp_.lr;
    return hp_.lr * static_cast<double>(step) / static_cast<double>(hp_.warmup);
  }

  /// One optimizer step over `accum` sampled micro-batches.
  double step() {
    const std::size_t seq = model_.config().block_size;
    const std::size_t B = hp_.batch;
    model_.zero_grad();
    double loss = 0.0;
    for (std::uint32_t micro = 0; micro < hp_.accum; ++micro) {
      x_.resize(B * seq);
      y_.resize(B * seq);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t start = state_.rng.below(train_.size() - seq);
        for (std::size_t t = 0; t < seq; ++t) {
          x_[b * seq + t] = train_[start + t];
          y_[b * seq + t] = train_[start + t + 1];
        }
      }
      loss += model_.forward(x_, y_, B, seq);
      model_.backward();
    }
    loss /= hp_.accum;
    ++state_.step;
    AdamHyper ah;
    ah.lr = learning_rate(state_.step);
    if (!adam_step(model_, state_.adam, ah, 1.0 / hp_.accum)) ++state_.skipped;
    return loss;
  }

  double validation_loss() {
    if (val_.size() < model_.config().block_size + 1) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    return evaluate_nll(model_, val_, hp_.eval_max_blocks).mean();
  }

  /// Trains until hp.steps. `on_eval` fires after every evaluation
  /// (every eval_every steps and at the final step).
  void run(const std::function<void(const TrainState&)>& on_eval = {}) {
    const double offset = state_.history.empty() ? 0.0 : state_.history.back().seconds;
    const auto start = std::chrono::steady_clock::now();
    while (state_.step < hp_.steps) {
      LossRecord rec;
      rec.train_loss = step();
      rec.step = state_.step;
      const bool eval = state_.step == hp_.steps ||
                        (hp_.eval_every != 0 && state_.step % hp_.eval_every == 0);
      if (eval) rec.val_loss = validation_loss();
      if (hp_.record_time) {
        rec.seconds = offset + std::chrono::duration<double>(
                                   std::chrono::steady_clock::now() - start)
                                   .count();
      }
      state_.history.push_back(rec);
      if (eval && on_eval) on_eval(state_);
    }
  }

 private:
  Model<float>& model_;
  TrainHyper hp_;
  std::span<const TokenId> train_;
  std::span<const TokenId> val_;
  TrainState state_;
  std::vector<TokenId> x_;
  std::vector<TokenId> y_;
};

/// CSV: step,train_loss,val_loss,seconds. Missing validation is empty.
inline std::string format_loss_csv(const std::vector<LossRecord>& history) {
  std::string out = "step,train_loss,val_loss,seconds\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%llu,%.9g,", static_cast<unsigned long long>(r.step),
                  r.train_loss);
    out += buf;
    if (!std::isnan(r.val_loss)) {
      std::snprintf(buf, sizeof buf, "%.9g", r.val_loss);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, ",%.3f\n", r.seconds);
    out += buf;
  }
  return out;
}

/// Autoregressive sampling. temperature == 0 selects the argmax (lowest id
/// on ties); the context keeps the last block_size tokens.
template <typename T>
std::vector<TokenId> generate(Model<T>& model, std::span<const TokenId> prompt,
                              std::size_t n_tokens, double temperature,
                              std::uint64_t seed) {
  if (prompt.empty()) throw Error(ErrorCode::kInvalidArgument, "prompt is empty");
  if (temperature < 0 || !std::isfinite(temperature)) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be >= 0");
  }
  const std::size_t V = model.config().vocab_size;
  for (TokenId id : prompt) {
    if (id >= V) {
      throw Error(ErrorCode::kOutOfRange, "prompt id " + std::to_string(id) + " >= V");
    }
  }
  Rng rng(seed);
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  std::vector<TokenId> out;
  std::vector<double> probs(V);
  const std::size_t block = model.config().block_size;
  for (std::size_t i = 0; i < n_tokens; ++i) {
    const std::size_t len = std::min(context.size(), block);
    std::span<const TokenId> window(context.data() + context.size() - len, len);
    model.forward(window, {}, 1, len);
    const auto logits = model.logits().subspan((len - 1) * V, V);
    TokenId next = 0;
    if (temperature == 0.0) {
      for (std::size_t j = 1; j < V; ++j) {
        if (logits[j] > logits[next]) next = static_cast<TokenId>(j);
      }
    } else {
      double maxval = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < V; ++j) {
        maxval = std::max(maxval, static_cast<double>(logits[j]) / temperature);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < V; ++j) {
        probs[j] = std::exp(static_cast<double>(logits[j]) / temperature - maxval);
        sum += probs[j];
      }
      double u = rng.uniform() * sum;
      next = static_cast<TokenId>(V - 1);
      for (std::size_t j = 0; j < V; ++j) {
        u -= probs[j];
        if (u < 0) {
          next = static_cast<TokenId>(j);
          break;
        }
      }
    }
    out.push_back(next);
    context.push_back(next);
  }
  return out;
}

inline constexpr char kCheckpointMagic[4] = {'B', 'V', 'V', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string serialize_checkpoint(const Model<float>& model,
                                        const TrainState* state) {
  const auto& cfg = model.config();
  binio::Writer w;
  w.put_bytes(std::string_view(kCheckpointMagic, 4));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(cfg.vocab_size);
  w.put<std::uint32_t>(cfg.block_size);
  w.put<std::uint32_t>(cfg.n_layers);
  w.put<std::uint32_t>(cfg.n_heads);
  w.put<std::uint32_t>(cfg.d_model);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(cfg.embedding_mode));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.tensors().size()));
  for (const auto& t : model.tensors()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.put_bytes(t.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.put<std::uint64_t>(d);
    w.put<std::uint8_t>(t.trainable ? 1 : 0);
    w.put_span<float>(t.value);
  }
  w.put<std::uint8_t>(state != nullptr ? 1 : 0);
  if (state != nullptr) {
    w.put<std::uint64_t>(state->step);
    w.put<std::uint64_t>(state->skipped);
    for (int i = 0; i < 4; ++i) w.put<std::uint64_t>(state->rng.state()[i]);
    w.put<std::uint64_t>(state->adam.step);
    w.put<std::uint64_t>(state->history.size());
    for (const auto& r : state->history) {
      w.put<std::uint64_t>(r.step);
      w.put<double>(r.train_loss);
      w.put<double>(r.val_loss);
      w.put<double>(r.seconds);
    }
    for (std::size_t i = 0; i < model.tensors().size(); ++i) {
      if (!model.tensors()[i].trainable) continue;
      w.put_span<float>(state->adam.m[i]);
      w.put_span<float>(state->adam.v[i]);
    }
  }
  return w.take();
}

struct LoadedCheckpoint {
  Model<float> model;
  std::optional<TrainState> state;
};

inline LoadedCheckpoint parse_checkpoint(std::string_view bytes) {
  binio::Reader r(bytes);
  if (bytes.size() < 4) throw Error(ErrorCode::kTruncated, "file shorter than magic");
  if (r.take(4) != std::string_view(kCheckpointMagic, 4)) {
    throw Error(ErrorCode::kBadMagic, "not a BVVC checkpoint");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kUnsupportedVersion, "BVVC version " + std::to_string(version));
  }
  ModelConfig cfg;
  cfg.vocab_size = r.get<std::uint32_t>();
  cfg.block_size = r.get<std::uint32_t>();
  cfg.n_layers = r.get<std::uint32_t>();
  cfg.n_heads = r.get<std::uint32_t>();
  cfg.d_model = r.get<std::uint32_t>();
  const auto mode = r.get<std::uint8_t>();
  if (mode > static_cast<std::uint8_t>(EmbeddingMode::kTrainable)) {
    throw Error(ErrorCode::kCorrupt, "unknown embedding mode " + std::to_string(mode));
  }
  cfg.embedding_mode = static_cast<EmbeddingMode>(mode);
  if (cfg.n_layers > 1024 || cfg.d_model > (1u << 16) || cfg.block_size > (1u << 20)) {
    throw Error(ErrorCode::kCorrupt, "implausible model dimensions");
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kCorrupt, e.what());
  }
  LoadedCheckpoint out{Model<float>(cfg), std::nullopt};
  auto& tensors = out.model.tensors();
  const auto n_tensors = r.get<std::uint32_t>();
  if (n_tensors != tensors.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "checkpoint has " + std::to_string(n_tensors) + " tensors, config implies " +
                    std::to_string(tensors.size()));
  }
  for (auto& t : tensors) {
    const auto name_len = r.get<std::uint32_t>();
    if (name_len > 256) throw Error(ErrorCode::kCorrupt, "tensor name too long");
    const auto name = r.take(name_len);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw Error(ErrorCode::kCorrupt, "tensor rank too large");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    const auto trainable = r.get<std::uint8_t>();
    if (trainable > 1) throw Error(ErrorCode::kCorrupt, "trainable flag not 0/1");
    if (name != t.name || shape != t.shape || (trainable == 1) != t.trainable) {
      throw Error(ErrorCode::kShapeMismatch,
                  "tensor '" + std::string(name) + "' does not match expected '" + t.name + "'");
    }
    r.get_into<float>(t.value);
  }
  const auto has_state = r.get<std::uint8_t>();
  if (has_state > 1) throw Error(ErrorCode::kCorrupt, "state flag not 0/1");
  if (has_state == 1) {
    TrainState s;
    s.step = r.get<std::uint64_t>();
    s.skipped = r.get<std::uint64_t>();
    std::uint64_t rs[4];
    for (auto& v : rs) v = r.get<std::uint64_t>();
    s.rng.set_state(rs);
    s.adam = AdamState::for_model(out.model);
    s.adam.step = r.get<std::uint64_t>();
    const auto n_hist = r.get<std::uint64_t>();
    if (n_hist > r.remaining() / 32) {
      throw Error(ErrorCode::kTruncated, "history longer than remaining bytes");
    }
    s.history.resize(n_hist);
    for (auto& rec : s.history) {
      rec.step = r.get<std::uint64_t>();
      rec.train_loss = r.get<double>();
      rec.val_loss = r.get<double>();
      rec.seconds = r.get<double>();
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (!tensors[i].trainable) continue;
      r.get_into<float>(s.adam.m[i]);
      r.get_into<float>(s.adam.v[i]);
    }
    out.state = std::move(s);
  }
  if (r.remaining() != 0) {
    throw Error(ErrorCode::kTrailingData,
                std::to_string(r.remaining()) + " unexpected bytes after checkpoint");
  }
  return out;
}

inline void save_checkpoint(const std::string& path, const Model<float>& model,
                            const TrainState* state = nullptr) {
  binio::write_file(path, serialize_checkpoint(model, state));
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  return parse_checkpoint(binio::read_file(path));
}

}  // namespace bvv
