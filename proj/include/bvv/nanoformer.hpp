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

// Decoder-only transformer with hand-written forward and backward passes.
//
// Pre-norm GPT-2 block: x += Attn(LN(x)); x += MLP(LN(x)), causal masked
// multi-head attention scaled by 1/sqrt(d_head), exact erf GELU, final LN
// and an untied output head. Weights are stored (in x out) row-major so a
// forward matmul streams contiguous rows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bvv/error.hpp"
#include "bvv/rng.hpp"
#include "bvv/univoc.hpp"

namespace bvv {

enum class EmbeddingMode : std::uint8_t {
  kFrozenVisual = 0,
  kFrozenRandom = 1,
  kTrainable = 2,
};

constexpr std::string_view to_string(EmbeddingMode mode) {
  switch (mode) {
    case EmbeddingMode::kFrozenVisual: return "frozen_visual";
    case EmbeddingMode::kFrozenRandom: return "frozen_random";
    case EmbeddingMode::kTrainable: return "trainable";
  }
  return "unknown";
}

inline EmbeddingMode embedding_mode_from_string(std::string_view s) {
  if (s == "frozen_visual") return EmbeddingMode::kFrozenVisual;
  if (s == "frozen_random") return EmbeddingMode::kFrozenRandom;
  if (s == "trainable") return EmbeddingMode::kTrainable;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown embedding mode '" + std::string(s) + "'");
}

constexpr bool is_frozen(EmbeddingMode mode) {
  return mode != EmbeddingMode::kTrainable;
}

struct ModelConfig {
  std::uint32_t vocab_size = 1024;
  std::uint32_t block_size = 64;
  std::uint32_t n_layers = 2;
  std::uint32_t n_heads = 2;
  std::uint32_t d_model = 64;
  EmbeddingMode embedding_mode = EmbeddingMode::kFrozenVisual;

  std::uint32_t d_head() const { return d_model / n_heads; }

  void validate() const {
    if (vocab_size == 0 || block_size == 0 || n_layers == 0 || n_heads == 0 ||
        d_model == 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "model config fields must be positive");
    }
    if (d_model % n_heads != 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "d_model must be divisible by n_heads");
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  bool trainable = true;
  std::vector<T> value;
  std::vector<T> grad;  // empty when frozen

  std::size_t numel() const { return value.size(); }
};

namespace kernels {

inline constexpr std::size_t kDotLanes = 16;

template <typename T>
inline T reduce_lanes(T (&acc)[kDotLanes]) {
  for (std::size_t w = kDotLanes / 2; w > 0; w /= 2) {
    for (std::size_t j = 0; j < w; ++j) acc[j] += acc[j + w];
  }
  return acc[0];
}

// Sixteen independent partial sums combined pairwise: a fixed association,
// so results are reproducible while the loop still vectorizes.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T acc[kDotLanes] = {};
  const std::size_t body = n - n % kDotLanes;
  for (std::size_t i = 0; i < body; i += kDotLanes) {
    for (std::size_t j = 0; j < kDotLanes; ++j) acc[j] += a[i + j] * b[i + j];
  }
  T tail = 0;
  for (std::size_t i = body; i < n; ++i) tail += a[i] * b[i];
  return reduce_lanes(acc) + tail;
}

/// out[k] = dot(a + k * stride, b, n) for k < 4, bitwise.
template <typename T>
inline void dot4(T* out, const T* a, std::size_t stride, const T* b, std::size_t n) {
  T acc[4][kDotLanes] = {};
  const std::size_t body = n - n % kDotLanes;
  for (std::size_t i = 0; i < body; i += kDotLanes) {
    for (std::size_t k = 0; k < 4; ++k) {
      const T* ak = a + k * stride + i;
      for (std::size_t j = 0; j < kDotLanes; ++j) acc[k][j] += ak[j] * b[i + j];
    }
  }
  for (std::size_t k = 0; k < 4; ++k) {
    T tail = 0;
    const T* ak = a + k * stride;
    for (std::size_t i = body; i < n; ++i) tail += ak[i] * b[i];
    out[k] = reduce_lanes(acc[k]) + tail;
  }
}

/// out[n, oc] = inp[n, :] . w[:, oc] + bias[oc]
template <typename T>
void matmul_forward(T* out, const T* inp, const T* w, const T* bias,
                    std::size_t n, std::size_t in, std::size_t oc) {
  for (std::size_t r = 0; r < n; ++r) {
    T* o = out + r * oc;
    if (bias != nullptr) {
      std::copy(bias, bias + oc, o);
    } else {
      std::fill(o, o + oc, T{0});
    }
  }
  // Rows go in blocks of four so each weight row is loaded once per block;
  // every output element still accumulates over c in order.
  std::size_t r = 0;
  for (; r + 4 <= n; r += 4) {
    T* o0 = out + r * oc;
    T* o1 = o0 + oc;
    T* o2 = o1 + oc;
    T* o3 = o2 + oc;
    const T* x0 = inp + r * in;
    for (std::size_t c = 0; c < in; ++c) {
      const T a0 = x0[c];
      const T a1 = x0[in + c];
      const T a2 = x0[2 * in + c];
      const T a3 = x0[3 * in + c];
      const T* wr = w + c * oc;
      for (std::size_t j = 0; j < oc; ++j) {
        const T wv = wr[j];
        o0[j] += a0 * wv;
        o1[j] += a1 * wv;
        o2[j] += a2 * wv;
        o3[j] += a3 * wv;
      }
    }
  }
  for (; r < n; ++r) {
    T* o = out + r * oc;
    const T* x = inp + r * in;
    for (std::size_t c = 0; c < in; ++c) {
      const T xc = x[c];
      const T* wr = w + c * oc;
      for (std::size_t j = 0; j < oc; ++j) o[j] += xc * wr[j];
    }
  }
}

/// Accumulates dinp, dw, dbias (each may be null) from dout.
template <typename T>
void matmul_backward(T* dinp, T* dw, T* dbias, const T* dout, const T* inp,
                     const T* w, std::size_t n, std::size_t in,
                     std::size_t oc) {
  if (dinp != nullptr) {
    // Four rows share each pass over a weight row; per-element sums keep
    // the same order as dot().
    std::size_t r = 0;
    for (; r + 4 <= n; r += 4) {
      const T* d0 = dout + r * oc;
      for (std::size_t c = 0; c < in; ++c) {
        T out[4];
        dot4(out, d0, oc, w + c * oc, oc);
        for (std::size_t k = 0; k < 4; ++k) dinp[(r + k) * in + c] += out[k];
      }
    }
    for (; r < n; ++r) {
      const T* d = dout + r * oc;
      T* di = dinp + r * in;
      for (std::size_t c = 0; c < in; ++c) di[c] += dot(d, w + c * oc, oc);
    }
  }
  for (std::size_t r = 0; r < n; ++r) {
    const T* d = dout + r * oc;
    if (dw != nullptr) {
      const T* x = inp + r * in;
      for (std::size_t c = 0; c < in; ++c) {
        const T xc = x[c];
        T* dwr = dw + c * oc;
        for (std::size_t j = 0; j < oc; ++j) dwr[j] += xc * d[j];
      }
    }
    if (dbias != nullptr) {
      for (std::size_t j = 0; j < oc; ++j) dbias[j] += d[j];
    }
  }
}

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
void layernorm_forward(T* out, T* mean, T* rstd, const T* inp, const T* g,
                       const T* b, std::size_t n, std::size_t c) {
  for (std::size_t r = 0; r < n; ++r) {
    const T* x = inp + r * c;
    T m = 0;
    for (std::size_t i = 0; i < c; ++i) m += x[i];
    m /= static_cast<T>(c);
    T v = 0;
    for (std::size_t i = 0; i < c; ++i) v += (x[i] - m) * (x[i] - m);
    v /= static_cast<T>(c);
    const T s = T{1} / std::sqrt(v + static_cast<T>(kLayerNormEps));
    T* o = out + r * c;
    for (std::size_t i = 0; i < c; ++i) o[i] = (x[i] - m) * s * g[i] + b[i];
    mean[r] = m;
    rstd[r] = s;
  }
}

template <typename T>
void layernorm_backward(T* dinp, T* dg, T* db, const T* dout, const T* inp,
                        const T* g, const T* mean, const T* rstd,
                        std::size_t n, std::size_t c) {
  for (std::size_t r = 0; r < n; ++r) {
    const T* d = dout + r * c;
    const T* x = inp + r * c;
    const T m = mean[r];
    const T s = rstd[r];
    T dnorm_mean = 0;
    T dnorm_norm_mean = 0;
    for (std::size_t i = 0; i < c; ++i) {
      const T norm = (x[i] - m) * s;
      const T dnorm = g[i] * d[i];
      dnorm_mean += dnorm;
      dnorm_norm_mean += dnorm * norm;
    }
    dnorm_mean /= static_cast<T>(c);
    dnorm_norm_mean /= static_cast<T>(c);
    T* di = dinp + r * c;
    for (std::size_t i = 0; i < c; ++i) {
      const T norm = (x[i] - m) * s;
      const T dnorm = g[i] * d[i];
      if (db != nullptr) db[i] += d[i];
      if (dg != nullptr) dg[i] += norm * d[i];
      di[i] += (dnorm - dnorm_mean - norm * dnorm_norm_mean) * s;
    }
  }
}

template <typename T>
void gelu_forward(T* out, const T* inp, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T x = inp[i];
    out[i] = T{0.5} * x * (T{1} + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2)));
  }
}

template <typename T>
void gelu_backward(T* dinp, const T* inp, const T* dout, std::size_t n) {
  const T inv_sqrt_2pi = static_cast<T>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  for (std::size_t i = 0; i < n; ++i) {
    const T x = inp[i];
    const T cdf = T{0.5} * (T{1} + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2)));
    const T pdf = inv_sqrt_2pi * std::exp(T{-0.5} * x * x);
    dinp[i] += (cdf + x * pdf) * dout[i];
  }
}

/// Causal multi-head attention over qkv laid out [B*T, 3C] (q | k | v).
/// `att` receives the (B, NH, T, T) probabilities; entries above the
/// diagonal are zero.
template <typename T>
void attention_forward(T* out, T* att, const T* qkv, std::size_t batch,
                       std::size_t seq, std::size_t c, std::size_t heads) {
  const std::size_t hs = c / heads;
  const std::size_t c3 = 3 * c;
  const T scale = T{1} / std::sqrt(static_cast<T>(hs));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < seq; ++t) {
      for (std::size_t h = 0; h < heads; ++h) {
        const T* q = qkv + (b * seq + t) * c3 + h * hs;
        T* a = att + ((b * heads + h) * seq + t) * seq;
        T maxval = -std::numeric_limits<T>::infinity();
        for (std::size_t t2 = 0; t2 <= t; ++t2) {
          const T* k = qkv + (b * seq + t2) * c3 + c + h * hs;
          a[t2] = dot(q, k, hs) * scale;
          maxval = std::max(maxval, a[t2]);
        }
        T sum = 0;
        for (std::size_t t2 = 0; t2 <= t; ++t2) {
          a[t2] = std::exp(a[t2] - maxval);
          sum += a[t2];
        }
        const T inv = T{1} / sum;
        for (std::size_t t2 = 0; t2 < seq; ++t2) {
          a[t2] = t2 <= t ? a[t2] * inv : T{0};
        }
        T* o = out + (b * seq + t) * c + h * hs;
        std::fill(o, o + hs, T{0});
        for (std::size_t t2 = 0; t2 <= t; ++t2) {
          const T* v = qkv + (b * seq + t2) * c3 + 2 * c + h * hs;
          const T p = a[t2];
          for (std::size_t i = 0; i < hs; ++i) o[i] += p * v[i];
        }
      }
    }
  }
}

template <typename T>
void attention_backward(T* dqkv, const T* dout, const T* qkv, const T* att,
                        std::size_t batch, std::size_t seq, std::size_t c,
                        std::size_t heads) {
  const std::size_t hs = c / heads;
  const std::size_t c3 = 3 * c;
  const T scale = T{1} / std::sqrt(static_cast<T>(hs));
  std::vector<T> datt(seq);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < seq; ++t) {
      for (std::size_t h = 0; h < heads; ++h) {
        const T* a = att + ((b * heads + h) * seq + t) * seq;
        const T* d = dout + (b * seq + t) * c + h * hs;
        const T* q = qkv + (b * seq + t) * c3 + h * hs;
        T* dq = dqkv + (b * seq + t) * c3 + h * hs;
        T weighted = 0;
        for (std::size_t t2 = 0; t2 <= t; ++t2) {
          const T* v = qkv + (b * seq + t2) * c3 + 2 * c + h * hs;
          T* dv = dqkv + (b * seq + t2) * c3 + 2 * c + h * hs;
          datt[t2] = dot(d, v, hs);
          weighted += a[t2] * datt[t2];
          for (std::size_t i = 0; i < hs; ++i) dv[i] += a[t2] * d[i];
        }
        for (std::size_t t2 = 0; t2 <= t; ++t2) {
          const T dpre = a[t2] * (datt[t2] - weighted) * scale;
          const T* k = qkv + (b * seq + t2) * c3 + c + h * hs;
          T* dk = dqkv + (b * seq + t2) * c3 + c + h * hs;
          for (std::size_t i = 0; i < hs; ++i) {
            dq[i] += dpre * k[i];
            dk[i] += dpre * q[i];
          }
        }
      }
    }
  }
}

}  // namespace kernels

struct CrossEntropyResult {
  double sum = 0.0;        // summed NLL over included positions
  std::size_t count = 0;   // positions whose target is not PAD
  double mean() const { return count == 0 ? 0.0 : sum / static_cast<double>(count); }
};

/// Stable log-softmax cross-entropy over `n` rows of `vocab` logits.
/// Targets equal to `pad` are excluded. When `dlogits` is non-null it
/// receives (softmax - onehot) / count, zero on excluded rows.
template <typename T>
CrossEntropyResult cross_entropy(std::span<const T> logits,
                                 std::span<const TokenId> targets,
                                 std::size_t vocab, T* dlogits,
                                 TokenId pad = kPadId, bool ignore_pad = true) {
  const std::size_t n = targets.size();
  if (logits.size() != n * vocab) {
    throw Error(ErrorCode::kShapeMismatch, "logits / targets size mismatch");
  }
  CrossEntropyResult res;
  for (std::size_t r = 0; r < n; ++r) {
    if (targets[r] >= vocab) {
      throw Error(ErrorCode::kOutOfRange, "target id >= V");
    }
    if (!(ignore_pad && targets[r] == pad)) ++res.count;
  }
  if (res.count == 0) {
    throw Error(ErrorCode::kEmptyInput, "every target position is PAD");
  }
  const T inv_count = T{1} / static_cast<T>(res.count);
  for (std::size_t r = 0; r < n; ++r) {
    const T* l = logits.data() + r * vocab;
    const bool included = !(ignore_pad && targets[r] == pad);
    if (!included) {
      if (dlogits != nullptr) std::fill(dlogits + r * vocab, dlogits + (r + 1) * vocab, T{0});
      continue;
    }
    T maxval = l[0];
    for (std::size_t j = 1; j < vocab; ++j) maxval = std::max(maxval, l[j]);
    // exp(l - max) is computed once; with dlogits it is parked there.
    double sum = 0.0;
    if (dlogits != nullptr) {
      T* d = dlogits + r * vocab;
      for (std::size_t j = 0; j < vocab; ++j) {
        const double e = std::exp(static_cast<double>(l[j]) - static_cast<double>(maxval));
        d[j] = static_cast<T>(e);
        sum += e;
      }
      const T scale = static_cast<T>(1.0 / sum) * inv_count;
      for (std::size_t j = 0; j < vocab; ++j) d[j] *= scale;
      d[targets[r]] -= inv_count;
    } else {
      for (std::size_t j = 0; j < vocab; ++j) {
        sum += std::exp(static_cast<double>(l[j]) - static_cast<double>(maxval));
      }
    }
    const double log_z = std::log(sum) + static_cast<double>(maxval);
    res.sum += log_z - static_cast<double>(l[targets[r]]);
  }
  return res;
}

template <typename T>
class Model {
 public:
  // Tensor layout: wte, wpe, then per layer the kPerLayer tensors below,
  // then lnf.g, lnf.b, head.w.
  enum LayerTensor : std::size_t {
    kLn1G, kLn1B, kQkvW, kQkvB, kProjW, kProjB,
    kLn2G, kLn2B, kFcW, kFcB, kFcProjW, kFcProjB, kPerLayer
  };

  explicit Model(const ModelConfig& config) : config_(config) {
    config_.validate();
    const std::size_t V = config_.vocab_size;
    const std::size_t C = config_.d_model;
    const std::size_t L = config_.n_layers;
    add("wte", {V, C}, !is_frozen(config_.embedding_mode));
    add("wpe", {config_.block_size, C}, true);
    for (std::size_t l = 0; l < L; ++l) {
      const std::string p = "h" + std::to_string(l) + ".";
      add(p + "ln1.g", {C}, true);
      add(p + "ln1.b", {C}, true);
      add(p + "attn.qkv.w", {C, 3 * C}, true);
      add(p + "attn.qkv.b", {3 * C}, true);
      add(p + "attn.proj.w", {C, C}, true);
      add(p + "attn.proj.b", {C}, true);
      add(p + "ln2.g", {C}, true);
      add(p + "ln2.b", {C}, true);
      add(p + "mlp.fc.w", {C, 4 * C}, true);
      add(p + "mlp.fc.b", {4 * C}, true);
      add(p + "mlp.proj.w", {4 * C, C}, true);
      add(p + "mlp.proj.b", {C}, true);
    }
    add("lnf.g", {C}, true);
    add("lnf.b", {C}, true);
    add("head.w", {C, V}, true);
  }

  /// normal(0, 0.02) weights, residual projections scaled by
  /// 1/sqrt(2 n_layers), unit LN gains, zero biases. A frozen token
  /// embedding is left untouched.
  void init(std::uint64_t seed, double std_dev = 0.02) {
    Rng rng(seed);
    const double resid = std_dev / std::sqrt(2.0 * config_.n_layers);
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      auto& t = tensors_[i];
      if (i == kWte && !t.trainable) continue;
      const std::string_view name = t.name;
      const bool is_bias = name.ends_with(".b");
      const bool is_gain = name.ends_with(".g");
      const bool is_resid = name.ends_with("attn.proj.w") || name.ends_with("mlp.proj.w");
      for (auto& v : t.value) {
        if (is_gain) {
          v = T{1};
        } else if (is_bias) {
          v = T{0};
        } else {
          v = static_cast<T>(rng.normal() * (is_resid ? resid : std_dev));
        }
      }
    }
  }

  template <typename U>
  void set_token_embedding(std::span<const U> rows) {
    auto& wte = tensors_[kWte];
    if (rows.size() != wte.value.size()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "embedding matrix is " + std::to_string(rows.size()) +
                      " values, model expects " + std::to_string(wte.value.size()));
    }
    for (std::size_t i = 0; i < rows.size(); ++i) wte.value[i] = static_cast<T>(rows[i]);
  }

  const ModelConfig& config() const { return config_; }
  std::vector<Tensor<T>>& tensors() { return tensors_; }
  const std::vector<Tensor<T>>& tensors() const { return tensors_; }
  Tensor<T>& token_embedding() { return tensors_[kWte]; }
  const Tensor<T>& token_embedding() const { return tensors_[kWte]; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), T{0});
  }

  /// Runs the network on `inputs` (batch x seq). With targets, also
  /// computes the mean cross-entropy and caches dlogits for backward().
  /// Returns NaN when targets are empty.
  double forward(std::span<const TokenId> inputs,
                 std::span<const TokenId> targets, std::size_t batch,
                 std::size_t seq) {
    if (seq == 0 || seq > config_.block_size) {
      throw Error(ErrorCode::kInvalidArgument,
                  "sequence length " + std::to_string(seq) +
                      " outside [1, block_size=" +
                      std::to_string(config_.block_size) + "]");
    }
    if (inputs.size() != batch * seq) {
      throw Error(ErrorCode::kShapeMismatch, "inputs size != batch * seq");
    }
    for (TokenId id : inputs) {
      if (id >= config_.vocab_size) {
        throw Error(ErrorCode::kOutOfRange,
                    "token id " + std::to_string(id) + " >= V");
      }
    }
    ensure_capacity(batch, seq);
    batch_ = batch;
    seq_ = seq;
    inputs_.assign(inputs.begin(), inputs.end());
    have_targets_ = false;

    const std::size_t C = config_.d_model;
    const std::size_t V = config_.vocab_size;
    const std::size_t NH = config_.n_heads;
    const std::size_t N = batch * seq;

    const T* wte = tensors_[kWte].value.data();
    const T* wpe = tensors_[kWpe].value.data();
    T* x = acts_.encoded.data();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < seq; ++t) {
        T* o = x + (b * seq + t) * C;
        const T* e = wte + static_cast<std::size_t>(inputs[b * seq + t]) * C;
        const T* p = wpe + t * C;
        for (std::size_t i = 0; i < C; ++i) o[i] = e[i] + p[i];
      }
    }

    const T* residual = acts_.encoded.data();
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
      auto& la = acts_.layers[l];
      kernels::layernorm_forward(la.ln1.data(), la.ln1_mean.data(), la.ln1_rstd.data(),
                                 residual, p(l, kLn1G), p(l, kLn1B), N, C);
      kernels::matmul_forward(la.qkv.data(), la.ln1.data(), p(l, kQkvW), p(l, kQkvB),
                              N, C, 3 * C);
      kernels::attention_forward(la.atty.data(), la.att.data(), la.qkv.data(), batch,
                                 seq, C, NH);
      kernels::matmul_forward(la.attproj.data(), la.atty.data(), p(l, kProjW),
                              p(l, kProjB), N, C, C);
      for (std::size_t i = 0; i < N * C; ++i) la.residual2[i] = residual[i] + la.attproj[i];
      kernels::layernorm_forward(la.ln2.data(), la.ln2_mean.data(), la.ln2_rstd.data(),
                                 la.residual2.data(), p(l, kLn2G), p(l, kLn2B), N, C);
      kernels::matmul_forward(la.fch.data(), la.ln2.data(), p(l, kFcW), p(l, kFcB), N,
                              C, 4 * C);
      kernels::gelu_forward(la.fch_gelu.data(), la.fch.data(), N * 4 * C);
      kernels::matmul_forward(la.fcproj.data(), la.fch_gelu.data(), p(l, kFcProjW),
                              p(l, kFcProjB), N, 4 * C, C);
      for (std::size_t i = 0; i < N * C; ++i) {
        la.residual3[i] = la.residual2[i] + la.fcproj[i];
      }
      residual = la.residual3.data();
    }
    kernels::layernorm_forward(acts_.lnf.data(), acts_.lnf_mean.data(),
                               acts_.lnf_rstd.data(), residual,
                               tensors_[lnf_g()].value.data(),
                               tensors_[lnf_g() + 1].value.data(), N, C);
    kernels::matmul_forward(acts_.logits.data(), acts_.lnf.data(),
                            tensors_[head()].value.data(), static_cast<const T*>(nullptr),
                            N, C, V);

    if (targets.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (targets.size() != N) {
      throw Error(ErrorCode::kShapeMismatch, "targets size != batch * seq");
    }
    last_ce_ = cross_entropy<T>(std::span<const T>(acts_.logits.data(), N * V), targets,
                                V, acts_.dlogits.data());
    have_targets_ = true;
    return last_ce_.mean();
  }

  const CrossEntropyResult& last_cross_entropy() const { return last_ce_; }

  /// Accumulates parameter gradients of the last forward's mean loss.
  void backward() {
    if (!have_targets_) {
      throw Error(ErrorCode::kInvalidArgument, "backward() needs a forward with targets");
    }
    const std::size_t C = config_.d_model;
    const std::size_t V = config_.vocab_size;
    const std::size_t NH = config_.n_heads;
    const std::size_t N = batch_ * seq_;
    auto& g = grads_;
    auto zero = [N](std::vector<T>& v, std::size_t width) {
      std::fill(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(N * width), T{0});
    };

    zero(g.lnf, C);
    kernels::matmul_backward(g.lnf.data(), grad(head()), static_cast<T*>(nullptr),
                             acts_.dlogits.data(), acts_.lnf.data(),
                             tensors_[head()].value.data(), N, C, V);
    const T* last_residual = config_.n_layers == 0
                                 ? acts_.encoded.data()
                                 : acts_.layers.back().residual3.data();
    zero(g.residual, C);
    kernels::layernorm_backward(g.residual.data(), grad(lnf_g()), grad(lnf_g() + 1),
                                g.lnf.data(), last_residual,
                                tensors_[lnf_g()].value.data(), acts_.lnf_mean.data(),
                                acts_.lnf_rstd.data(), N, C);

    for (std::size_t l = config_.n_layers; l-- > 0;) {
      auto& la = acts_.layers[l];
      const T* residual_in = l == 0 ? acts_.encoded.data() : acts_.layers[l - 1].residual3.data();
      // g.residual holds d(residual3); it also flows unchanged into residual2.
      zero(g.fch_gelu, 4 * C);
      kernels::matmul_backward(g.fch_gelu.data(), grad(l, kFcProjW), grad(l, kFcProjB),
                               g.residual.data(), la.fch_gelu.data(), p(l, kFcProjW), N,
                               4 * C, C);
      zero(g.fch, 4 * C);
      kernels::gelu_backward(g.fch.data(), la.fch.data(), g.fch_gelu.data(), N * 4 * C);
      zero(g.ln, C);
      kernels::matmul_backward(g.ln.data(), grad(l, kFcW), grad(l, kFcB), g.fch.data(),
                               la.ln2.data(), p(l, kFcW), N, C, 4 * C);
      kernels::layernorm_backward(g.residual.data(), grad(l, kLn2G), grad(l, kLn2B),
                                  g.ln.data(), la.residual2.data(), p(l, kLn2G),
                                  la.ln2_mean.data(), la.ln2_rstd.data(), N, C);
      // g.residual now holds d(residual2).
      zero(g.atty, C);
      kernels::matmul_backward(g.atty.data(), grad(l, kProjW), grad(l, kProjB),
                               g.residual.data(), la.atty.data(), p(l, kProjW), N, C, C);
      zero(g.qkv, 3 * C);
      kernels::attention_backward(g.qkv.data(), g.atty.data(), la.qkv.data(), la.att.data(),
                                  batch_, seq_, C, NH);
      zero(g.ln, C);
      kernels::matmul_backward(g.ln.data(), grad(l, kQkvW), grad(l, kQkvB), g.qkv.data(),
                               la.ln1.data(), p(l, kQkvW), N, C, 3 * C);
      kernels::layernorm_backward(g.residual.data(), grad(l, kLn1G), grad(l, kLn1B),
                                  g.ln.data(), residual_in, p(l, kLn1G), la.ln1_mean.data(),
                                  la.ln1_rstd.data(), N, C);
    }

    T* dwte = tensors_[kWte].trainable ? tensors_[kWte].grad.data() : nullptr;
    T* dwpe = tensors_[kWpe].grad.data();
    for (std::size_t b = 0; b < batch_; ++b) {
      for (std::size_t t = 0; t < seq_; ++t) {
        const T* d = g.residual.data() + (b * seq_ + t) * C;
        T* dp = dwpe + t * C;
        for (std::size_t i = 0; i < C; ++i) dp[i] += d[i];
        if (dwte != nullptr) {
          T* de = dwte + static_cast<std::size_t>(inputs_[b * seq_ + t]) * C;
          for (std::size_t i = 0; i < C; ++i) de[i] += d[i];
        }
      }
    }
  }

  /// Logits of the last forward, (batch * seq) x V.
  std::span<const T> logits() const {
    return std::span<const T>(acts_.logits.data(),
                              batch_ * seq_ * config_.vocab_size);
  }

  /// Attention probabilities of layer `l` from the last forward,
  /// (batch, heads, seq, seq).
  std::span<const T> attention(std::size_t l) const {
    return std::span<const T>(acts_.layers.at(l).att.data(),
                              batch_ * config_.n_heads * seq_ * seq_);
  }

 private:
  static constexpr std::size_t kWte = 0;
  static constexpr std::size_t kWpe = 1;

  struct LayerActs {
    std::vector<T> ln1, ln1_mean, ln1_rstd, qkv, att, atty, attproj, residual2;
    std::vector<T> ln2, ln2_mean, ln2_rstd, fch, fch_gelu, fcproj, residual3;
  };
  struct Acts {
    std::vector<T> encoded;
    std::vector<LayerActs> layers;
    std::vector<T> lnf, lnf_mean, lnf_rstd, logits, dlogits;
  };
  struct Grads {
    std::vector<T> residual, ln, atty, qkv, fch, fch_gelu, lnf;
  };

  void add(std::string name, std::vector<std::size_t> shape, bool trainable) {
    Tensor<T> t;
    t.name = std::move(name);
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    t.shape = std::move(shape);
    t.trainable = trainable;
    t.value.assign(n, T{0});
    if (trainable) t.grad.assign(n, T{0});
    tensors_.push_back(std::move(t));
  }

  std::size_t idx(std::size_t l, std::size_t which) const {
    return 2 + l * kPerLayer + which;
  }
  const T* p(std::size_t l, std::size_t which) const {
    return tensors_[idx(l, which)].value.data();
  }
  T* grad(std::size_t l, std::size_t which) { return tensors_[idx(l, which)].grad.data(); }
  T* grad(std::size_t i) { return tensors_[i].grad.data(); }
  std::size_t lnf_g() const { return 2 + config_.n_layers * kPerLayer; }
  std::size_t head() const { return lnf_g() + 2; }

  void ensure_capacity(std::size_t batch, std::size_t seq) {
    const std::size_t n = batch * seq;
    if (n <= cap_tokens_ && batch * seq * seq <= cap_att_) return;
    cap_tokens_ = std::max(cap_tokens_, n);
    cap_att_ = std::max(cap_att_, batch * seq * seq);
    const std::size_t N = cap_tokens_;
    const std::size_t C = config_.d_model;
    const std::size_t V = config_.vocab_size;
    acts_.encoded.assign(N * C, T{0});
    acts_.layers.assign(config_.n_layers, LayerActs{});
    for (auto& la : acts_.layers) {
      la.ln1.assign(N * C, T{0});
      la.ln1_mean.assign(N, T{0});
      la.ln1_rstd.assign(N, T{0});
      la.qkv.assign(N * 3 * C, T{0});
      la.att.assign(cap_att_ * config_.n_heads, T{0});
      la.atty.assign(N * C, T{0});
      la.attproj.assign(N * C, T{0});
      la.residual2.assign(N * C, T{0});
      la.ln2.assign(N * C, T{0});
      la.ln2_mean.assign(N, T{0});
      la.ln2_rstd.assign(N, T{0});
      la.fch.assign(N * 4 * C, T{0});
      la.fch_gelu.assign(N * 4 * C, T{0});
      la.fcproj.assign(N * C, T{0});
      la.residual3.assign(N * C, T{0});
    }
    acts_.lnf.assign(N * C, T{0});
    acts_.lnf_mean.assign(N, T{0});
    acts_.lnf_rstd.assign(N, T{0});
    acts_.logits.assign(N * V, T{0});
    acts_.dlogits.assign(N * V, T{0});
    grads_.residual.assign(N * C, T{0});
    grads_.ln.assign(N * C, T{0});
    grads_.atty.assign(N * C, T{0});
    grads_.qkv.assign(N * 3 * C, T{0});
    grads_.fch.assign(N * 4 * C, T{0});
    grads_.fch_gelu.assign(N * 4 * C, T{0});
    grads_.lnf.assign(N * C, T{0});
  }

  ModelConfig config_;
  std::vector<Tensor<T>> tensors_;
  Acts acts_;
  Grads grads_;
  std::size_t cap_tokens_ = 0;
  std::size_t cap_att_ = 0;
  std::size_t batch_ = 0;
  std::size_t seq_ = 0;
  std::vector<TokenId> inputs_;
  bool have_targets_ = false;
  CrossEntropyResult last_ce_;
};

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam moments; buffers exist only for trainable tensors.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;

  template <typename T>
  static AdamState for_model(const Model<T>& model) {
    AdamState s;
    for (const auto& t : model.tensors()) {
      s.m.emplace_back(t.trainable ? t.numel() : 0, 0.0f);
      s.v.emplace_back(t.trainable ? t.numel() : 0, 0.0f);
    }
    return s;
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Scalar Adam rule with precomputed bias corrections bc1 = 1 - beta1^t
/// and bc2 = 1 - beta2^t. Updates the moments and returns the new value.
inline double adam_update(double value, float& m, float& v, double g,
                          double bc1, double bc2, const AdamHyper& hp) {
  const double mj = hp.beta1 * m + (1.0 - hp.beta1) * g;
  const double vj = hp.beta2 * v + (1.0 - hp.beta2) * g * g;
  m = static_cast<float>(mj);
  v = static_cast<float>(vj);
  return value - hp.lr * (mj / bc1) / (std::sqrt(vj / bc2) + hp.eps);
}

/// One bias-corrected Adam update from the accumulated gradients times
/// `grad_scale`. Returns false, leaving parameters and state untouched,
/// if any gradient is non-finite. Frozen tensors are never written.
template <typename T>
bool adam_step(Model<T>& model, AdamState& state, const AdamHyper& hp,
               double grad_scale = 1.0) {
  auto& tensors = model.tensors();
  for (const auto& t : tensors) {
    if (!t.trainable) continue;
    for (T gv : t.grad) {
      if (!std::isfinite(static_cast<double>(gv))) return false;
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& t = tensors[i];
    if (!t.trainable) continue;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < t.numel(); ++j) {
      const double gv = static_cast<double>(t.grad[j]) * grad_scale;
      t.value[j] = static_cast<T>(
          adam_update(static_cast<double>(t.value[j]), m[j], v[j], gv, bc1, bc2, hp));
    }
  }
  return true;
}

}  // namespace bvv
