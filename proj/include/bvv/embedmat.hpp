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

// Frozen embedding matrices and the BVVE file format.
//
// BVVE layout, all little-endian:
//   "BVVE" | version u32 | V u64 | d_model u32 | H u32 | provenance u8 |
//   frozen u8 | vocab_hash[32] | PCA mean D x f64 | PCA components
//   d_model x D f64 | rows V x d_model f32, with D = H * H.
//
// The random-bitmap ablation draws token t's H*H bits from xoshiro256**
// seeded (through SplitMix64) with seed ^ (t * 0x9E3779B97F4A7C15); bits
// are taken least-significant first from consecutive 64-bit outputs.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include "bvv/binio.hpp"
#include "bvv/error.hpp"
#include "bvv/fontstore.hpp"
#include "bvv/glyphrender.hpp"
#include "bvv/pca.hpp"
#include "bvv/rng.hpp"
#include "bvv/stats.hpp"
#include "bvv/univoc.hpp"

namespace bvv {

using Digest = std::array<std::uint8_t, 32>;

inline Digest sha256(std::string_view bytes) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(),
                 nullptr) != 1 ||
      len != out.size()) {
    throw Error(ErrorCode::kIo, "SHA-256 digest failed");
  }
  return out;
}

inline Digest vocab_hash(const Vocab& vocab) { return sha256(vocab.to_jsonl()); }

enum class Provenance : std::uint8_t {
  kVisual = 0,
  kRandomBitmap = 1,
  kLearned = 2,
};

constexpr std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kVisual: return "visual";
    case Provenance::kRandomBitmap: return "random_bitmap";
    case Provenance::kLearned: return "learned";
  }
  return "unknown";
}

struct EmbeddingMatrix {
  std::uint64_t vocab_size = 0;
  std::uint32_t d_model = 0;
  std::uint32_t side = 0;  // H; 0 for learned matrices without a PCA
  Provenance provenance = Provenance::kVisual;
  bool frozen = true;
  Digest vocab_hash{};
  std::vector<double> pca_mean;        // H*H
  std::vector<double> pca_components;  // d_model x H*H
  std::vector<float> rows;             // V x d_model

  std::size_t pca_dim() const { return std::size_t{side} * side; }

  std::span<const float> row(std::size_t id) const {
    return std::span<const float>(rows).subspan(id * d_model, d_model);
  }

  friend bool operator==(const EmbeddingMatrix&,
                         const EmbeddingMatrix&) = default;
};

/// V x H*H raw binary vectors, row-major.
inline std::vector<std::uint8_t> visual_raw_vectors(const Vocab& vocab,
                                                    const GlyphStore& store,
                                                    int side) {
  const std::size_t dim = static_cast<std::size_t>(side) * side;
  std::vector<std::uint8_t> raw(vocab.size() * dim);
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    const auto& e = vocab.entries()[id];
    const auto bits = token_raw_vector(e.text, store, side);
    std::copy(bits.begin(), bits.end(),
              raw.begin() + static_cast<std::ptrdiff_t>(id * dim));
  }
  return raw;
}

inline std::vector<std::uint8_t> random_raw_vectors(std::size_t vocab_size,
                                                    std::uint64_t seed,
                                                    int side) {
  const std::size_t dim = static_cast<std::size_t>(side) * side;
  std::vector<std::uint8_t> raw(vocab_size * dim);
  for (std::size_t id = 0; id < vocab_size; ++id) {
    Rng rng(seed ^ (static_cast<std::uint64_t>(id) * 0x9E3779B97F4A7C15ULL));
    std::uint64_t word = 0;
    for (std::size_t j = 0; j < dim; ++j) {
      if (j % 64 == 0) word = rng.next();
      raw[id * dim + j] = static_cast<std::uint8_t>((word >> (j % 64)) & 1);
    }
  }
  return raw;
}

/// PCA over all rows, project to d_model, L2-normalize. All-zero raw rows
/// (blank renders) and zero projections stay zero.
inline EmbeddingMatrix embeddings_from_raw(std::span<const std::uint8_t> raw,
                                           std::size_t vocab_size, int side,
                                           std::uint32_t d_model,
                                           Provenance provenance,
                                           const Digest& hash,
                                           PcaModel* fitted = nullptr) {
  const std::size_t dim = static_cast<std::size_t>(side) * side;
  if (side <= 0) throw Error(ErrorCode::kInvalidArgument, "H must be >= 1");
  if (d_model == 0 || d_model > dim) {
    throw Error(ErrorCode::kInvalidArgument,
                "d_model=" + std::to_string(d_model) + " must be in [1, H^2=" +
                    std::to_string(dim) + "]");
  }
  const auto pca = pca_fit(raw, vocab_size, dim, d_model);
  EmbeddingMatrix m;
  m.vocab_size = vocab_size;
  m.d_model = d_model;
  m.side = static_cast<std::uint32_t>(side);
  m.provenance = provenance;
  m.frozen = true;
  m.vocab_hash = hash;
  m.pca_mean = pca.mean;
  m.pca_components = pca.components;
  m.rows.assign(vocab_size * d_model, 0.0f);
  for (std::size_t id = 0; id < vocab_size; ++id) {
    const auto bits = raw.subspan(id * dim, dim);
    bool blank = true;
    for (auto b : bits) blank = blank && b == 0;
    if (blank) continue;
    const auto v = pca.transform(bits);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (std::size_t j = 0; j < d_model; ++j) {
      m.rows[id * d_model + j] = static_cast<float>(v[j] / norm);
    }
  }
  if (fitted != nullptr) *fitted = pca;
  return m;
}

inline EmbeddingMatrix build_visual_embeddings(const Vocab& vocab,
                                               const GlyphStore& store,
                                               int side, std::uint32_t d_model,
                                               PcaModel* fitted = nullptr) {
  if (side <= 0 || d_model > static_cast<std::uint32_t>(side * side)) {
    throw Error(ErrorCode::kInvalidArgument,
                "d_model must not exceed H^2");
  }
  const auto raw = visual_raw_vectors(vocab, store, side);
  return embeddings_from_raw(raw, vocab.size(), side, d_model,
                             Provenance::kVisual, vocab_hash(vocab), fitted);
}

inline EmbeddingMatrix build_random_embeddings(const Vocab& vocab,
                                               std::uint64_t seed, int side,
                                               std::uint32_t d_model,
                                               PcaModel* fitted = nullptr) {
  if (side <= 0 || d_model > static_cast<std::uint32_t>(side * side)) {
    throw Error(ErrorCode::kInvalidArgument,
                "d_model must not exceed H^2");
  }
  const auto raw = random_raw_vectors(vocab.size(), seed, side);
  return embeddings_from_raw(raw, vocab.size(), side, d_model,
                             Provenance::kRandomBitmap, vocab_hash(vocab),
                             fitted);
}

/// Pearson correlation between character length and raw ink density over
/// the multi-character tokens of a vocabulary.
inline double length_density_correlation(const Vocab& vocab,
                                         const GlyphStore& store, int side) {
  std::vector<double> lengths;
  std::vector<double> densities;
  for (const auto& e : vocab.entries()) {
    if (e.text.size() < 2) continue;
    lengths.push_back(static_cast<double>(e.text.size()));
    densities.push_back(ink_density(token_raw_vector(e.text, store, side)));
  }
  if (lengths.size() < 2) return 0.0;
  return pearson(lengths, densities);
}

inline constexpr char kEmbeddingMagic[4] = {'B', 'V', 'V', 'E'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

inline std::string serialize_embeddings(const EmbeddingMatrix& m) {
  const std::size_t dim = m.pca_dim();
  if (m.rows.size() != m.vocab_size * m.d_model ||
      m.pca_mean.size() != dim || m.pca_components.size() != m.d_model * dim) {
    throw Error(ErrorCode::kShapeMismatch,
                "embedding matrix fields disagree with its header");
  }
  binio::Writer w;
  w.put_bytes(std::string_view(kEmbeddingMagic, 4));
  w.put<std::uint32_t>(kEmbeddingVersion);
  w.put<std::uint64_t>(m.vocab_size);
  w.put<std::uint32_t>(m.d_model);
  w.put<std::uint32_t>(m.side);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(m.provenance));
  w.put<std::uint8_t>(m.frozen ? 1 : 0);
  w.put_span<std::uint8_t>(m.vocab_hash);
  w.put_span<double>(m.pca_mean);
  w.put_span<double>(m.pca_components);
  w.put_span<float>(m.rows);
  return w.take();
}

struct EmbeddingLoadResult {
  EmbeddingMatrix matrix;
  bool vocab_hash_mismatch = false;
};

/// Parses a BVVE image. A vocab hash mismatch against `expected_hash` is
/// reported, not thrown.
inline EmbeddingLoadResult parse_embeddings(
    std::string_view bytes, const Digest* expected_hash = nullptr) {
  binio::Reader r(bytes);
  if (bytes.size() < 4) {
    throw Error(ErrorCode::kTruncated, "file shorter than the magic number");
  }
  if (r.take(4) != std::string_view(kEmbeddingMagic, 4)) {
    throw Error(ErrorCode::kBadMagic, "not a BVVE embedding file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kEmbeddingVersion) {
    throw Error(ErrorCode::kUnsupportedVersion,
                "BVVE version " + std::to_string(version));
  }
  EmbeddingLoadResult out;
  auto& m = out.matrix;
  m.vocab_size = r.get<std::uint64_t>();
  m.d_model = r.get<std::uint32_t>();
  m.side = r.get<std::uint32_t>();
  const auto prov = r.get<std::uint8_t>();
  const auto frozen = r.get<std::uint8_t>();
  if (prov > static_cast<std::uint8_t>(Provenance::kLearned)) {
    throw Error(ErrorCode::kCorrupt, "unknown provenance " + std::to_string(prov));
  }
  if (frozen > 1) throw Error(ErrorCode::kCorrupt, "frozen flag not 0/1");
  m.provenance = static_cast<Provenance>(prov);
  m.frozen = frozen == 1;
  r.get_into<std::uint8_t>(m.vocab_hash);
  if (m.side > 65536 || m.d_model == 0 ||
      (m.side > 0 && m.d_model > std::uint64_t{m.side} * m.side)) {
    throw Error(ErrorCode::kCorrupt, "inconsistent d_model / H header");
  }
  const std::uint64_t dim = std::uint64_t{m.side} * m.side;
  const std::uint64_t need_bytes_hi = 8 * dim * (1 + std::uint64_t{m.d_model});
  if (m.vocab_size > (std::uint64_t{1} << 40)) {
    throw Error(ErrorCode::kCorrupt, "implausible vocabulary size");
  }
  const std::uint64_t need = need_bytes_hi + 4 * m.vocab_size * m.d_model;
  if (need > r.remaining()) {
    throw Error(ErrorCode::kTruncated,
                "payload needs " + std::to_string(need) + " bytes, file has " +
                    std::to_string(r.remaining()));
  }
  if (need < r.remaining()) {
    throw Error(ErrorCode::kTrailingData,
                std::to_string(r.remaining() - need) +
                    " unexpected bytes after payload");
  }
  m.pca_mean.resize(dim);
  m.pca_components.resize(dim * m.d_model);
  m.rows.resize(m.vocab_size * m.d_model);
  r.get_into<double>(m.pca_mean);
  r.get_into<double>(m.pca_components);
  r.get_into<float>(m.rows);
  if (expected_hash != nullptr && *expected_hash != m.vocab_hash) {
    out.vocab_hash_mismatch = true;
  }
  return out;
}

inline void save_embeddings(const std::string& path, const EmbeddingMatrix& m) {
  binio::write_file(path, serialize_embeddings(m));
}

inline EmbeddingLoadResult load_embeddings(
    const std::string& path, const Digest* expected_hash = nullptr) {
  return parse_embeddings(binio::read_file(path), expected_hash);
}

}  // namespace bvv
