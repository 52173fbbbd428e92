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

// Glue shared by the command-line tool and the acceptance runner: corpus
// split, model construction from a config, and the default loss threshold.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bvv/config.hpp"
#include "bvv/embedmat.hpp"
#include "bvv/nanoformer.hpp"
#include "bvv/trainer.hpp"
#include "bvv/univoc.hpp"

namespace bvv {

struct CorpusSplit {
  std::vector<TokenId> train;
  std::vector<TokenId> val;
};

/// The last `val_fraction` of the token stream is held out.
inline CorpusSplit split_tokens(std::span<const TokenId> ids, double val_fraction) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "train.val_fraction must be in (0, 1)");
  }
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(ids.size())));
  const auto cut = ids.size() - n_val;
  return {{ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cut)},
          {ids.begin() + static_cast<std::ptrdiff_t>(cut), ids.end()}};
}

/// Steps-to-threshold level: the configured value, else 0.5 ln V.
inline double loss_threshold(const ExperimentConfig& cfg) {
  return cfg.threshold > 0.0 ? cfg.threshold : 0.5 * std::log(static_cast<double>(cfg.vocab_size));
}

inline TrainHyper train_hyper(const ExperimentConfig& cfg, bool record_time) {
  TrainHyper hp;
  hp.lr = cfg.lr;
  hp.batch = cfg.batch;
  hp.steps = cfg.steps;
  hp.accum = cfg.accum;
  hp.seed = cfg.seed;
  hp.eval_every = cfg.eval_every;
  hp.warmup = cfg.warmup;
  hp.record_time = record_time;
  return hp;
}

/// Initialized model; frozen modes take their token embedding from `emb`.
inline Model<float> make_model(const ExperimentConfig& cfg, EmbeddingMode mode,
                               const EmbeddingMatrix* emb) {
  auto mc = cfg.model_config();
  mc.embedding_mode = mode;
  Model<float> m(mc);
  m.init(cfg.seed);
  if (mode == EmbeddingMode::kTrainable) return m;
  if (emb == nullptr) throw Error(ErrorCode::kInvalidArgument, "frozen mode needs an embedding matrix");
  if (emb->d_model != cfg.d_model || emb->vocab_size != cfg.vocab_size) {
    throw Error(ErrorCode::kShapeMismatch,
                "embedding matrix is " + std::to_string(emb->vocab_size) + "x" +
                    std::to_string(emb->d_model) + ", model wants " +
                    std::to_string(cfg.vocab_size) + "x" + std::to_string(cfg.d_model));
  }
  m.set_token_embedding(std::span<const float>(emb->rows));
  return m;
}

struct RunResult {
  EmbeddingMode mode = EmbeddingMode::kTrainable;
  std::vector<LossRecord> history;
  double final_train = NAN;  // trailing 50-step mean at the last step
  double val_ppl = NAN;
  std::optional<std::uint64_t> steps_to_threshold;
  std::uint64_t skipped = 0;
};

inline RunResult summarize(const Trainer& t, Model<float>& model, std::span<const TokenId> val,
                           double threshold) {
  RunResult r;
  r.mode = model.config().embedding_mode;
  r.history = t.state().history;
  if (!r.history.empty()) r.final_train = trailing_mean(r.history, r.history.size() - 1, 50);
  r.val_ppl = perplexity(model, val);
  r.steps_to_threshold = steps_to_threshold(r.history, threshold);
  r.skipped = t.state().skipped;
  return r;
}

}  // namespace bvv
