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

// Unicode-centric tokenizer.
//
// Built-in layout (V = 65536 or 131072):
//   0x0000-0xD7FF, 0xF900-0xFFFF  identity: id == BMP codepoint
//   0xD800-0xDFFF                 surrogate escapes. A non-BMP codepoint is
//                                 the UTF-16 pair (high, low). A private-use
//                                 codepoint U+E000+k is the reversed pair
//                                 (low, high) carrying k, since its own id
//                                 slot holds an n-gram.
//   0xE000-0xF8FF                 first 6400 n-grams, in list order
//   0x10000-0x1FFFF               further n-grams (V = 131072 only)
// Unused n-gram slots are `special` entries with empty text.
//
// Imported layout: ids carry external token texts verbatim and every text,
// including single characters, goes through the longest-match trie.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bvv/error.hpp"
#include "bvv/unicode.hpp"

namespace bvv {

using TokenId = std::uint32_t;

enum class TokenKind : std::uint8_t {
  kCodepoint,
  kNgram,
  kSurrogateEscape,
  kSpecial,
};

constexpr std::string_view to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::kCodepoint: return "codepoint";
    case TokenKind::kNgram: return "ngram";
    case TokenKind::kSurrogateEscape: return "surrogate_escape";
    case TokenKind::kSpecial: return "special";
  }
  return "special";
}

inline TokenKind token_kind_from_string(std::string_view s) {
  if (s == "codepoint") return TokenKind::kCodepoint;
  if (s == "ngram") return TokenKind::kNgram;
  if (s == "surrogate_escape") return TokenKind::kSurrogateEscape;
  if (s == "special") return TokenKind::kSpecial;
  throw Error(ErrorCode::kParse, "unknown token kind '" + std::string(s) + "'");
}

struct TokenEntry {
  TokenId id = 0;
  TokenKind kind = TokenKind::kSpecial;
  std::u32string text;

  friend bool operator==(const TokenEntry&, const TokenEntry&) = default;
};

inline constexpr TokenId kPadId = 0;
inline constexpr std::uint32_t kProfile64K = 65536;
inline constexpr std::uint32_t kProfile128K = 131072;
inline constexpr char32_t kHighFirst = 0xD800;
inline constexpr char32_t kLowFirst = 0xDC00;
inline constexpr char32_t kPuaFirst = 0xE000;
inline constexpr char32_t kPuaLast = 0xF8FF;
inline constexpr std::uint32_t kPuaSlots = kPuaLast - kPuaFirst + 1;  // 6400
inline constexpr TokenId kPlane1First = 0x10000;
inline constexpr std::size_t kMinNgramLength = 2;
inline constexpr std::size_t kMaxNgramLength = 8;
inline constexpr std::size_t kMaxImportedSize = std::size_t{1} << 21;

/// Character trie for leftmost-longest matching. Edges live in one flat
/// hash map keyed by (node, codepoint).
class Trie {
 public:
  Trie() : terminal_(1, kNone) {}

  void insert(std::u32string_view text, TokenId id) {
    std::uint32_t node = 0;
    for (char32_t c : text) {
      const auto key = edge_key(node, c);
      auto it = edges_.find(key);
      if (it == edges_.end()) {
        const auto child = static_cast<std::uint32_t>(terminal_.size());
        terminal_.push_back(kNone);
        it = edges_.emplace(key, child).first;
      }
      node = it->second;
    }
    terminal_[node] = id;
  }

  /// Longest entry that is a prefix of `text`: (id, length), length 0 if
  /// none.
  std::pair<TokenId, std::size_t> longest_prefix(
      std::u32string_view text) const {
    std::uint32_t node = 0;
    std::pair<TokenId, std::size_t> best{0, 0};
    for (std::size_t i = 0; i < text.size(); ++i) {
      const auto it = edges_.find(edge_key(node, text[i]));
      if (it == edges_.end()) break;
      node = it->second;
      if (terminal_[node] != kNone) best = {terminal_[node], i + 1};
    }
    return best;
  }

 private:
  static constexpr TokenId kNone = ~TokenId{0};
  static constexpr std::uint64_t edge_key(std::uint32_t node, char32_t c) {
    return (static_cast<std::uint64_t>(node) << 21) | c;
  }

  std::unordered_map<std::uint64_t, std::uint32_t> edges_;
  std::vector<TokenId> terminal_;
};

class Vocab {
 public:
  enum class Layout : std::uint8_t { kBuiltin, kImported };

  /// Built-in layout with n-grams assigned in list order.
  static Vocab build(std::span<const std::u32string> ngrams,
                     std::uint32_t vocab_size) {
    if (vocab_size != kProfile64K && vocab_size != kProfile128K) {
      throw Error(ErrorCode::kInvalidArgument,
                  "built-in profile must be 65536 or 131072, got " +
                      std::to_string(vocab_size));
    }
    const std::size_t capacity =
        kPuaSlots + (vocab_size == kProfile128K ? vocab_size - kPlane1First : 0);
    if (ngrams.size() > capacity) {
      throw Error(ErrorCode::kCapacity,
                  std::to_string(ngrams.size()) + " n-grams exceed capacity " +
                      std::to_string(capacity));
    }
    Vocab v;
    v.layout_ = Layout::kBuiltin;
    v.entries_.resize(vocab_size);
    for (TokenId id = 0; id < vocab_size; ++id) {
      auto& e = v.entries_[id];
      e.id = id;
      if (id >= kHighFirst && id <= 0xDFFF) {
        e.kind = TokenKind::kSurrogateEscape;
      } else if (is_ngram_slot(id)) {
        e.kind = TokenKind::kSpecial;
      } else {
        e.kind = TokenKind::kCodepoint;
        e.text = std::u32string(1, static_cast<char32_t>(id));
      }
    }
    for (std::size_t i = 0; i < ngrams.size(); ++i) {
      const auto& text = ngrams[i];
      check_ngram_text(text);
      if (v.index_.contains(text)) {
        throw Error(ErrorCode::kDuplicate,
                    "duplicate n-gram '" + unicode::encode_utf8(text) + "'");
      }
      const TokenId id = ngram_slot(i);
      v.entries_[id] = {id, TokenKind::kNgram, text};
      v.index_.emplace(text, id);
      v.trie_.insert(text, id);
      ++v.ngram_count_;
    }
    return v;
  }

  /// Vocabulary carrying external token texts at their original ids.
  static Vocab import_external(std::span<const std::u32string> texts) {
    if (texts.empty()) {
      throw Error(ErrorCode::kEmptyInput, "external vocabulary is empty");
    }
    if (texts.size() > kMaxImportedSize) {
      throw Error(ErrorCode::kCapacity, "external vocabulary exceeds 2^21");
    }
    Vocab v;
    v.layout_ = Layout::kImported;
    v.entries_.resize(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const auto id = static_cast<TokenId>(i);
      const auto& text = texts[i];
      if (text.empty()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "empty token text at id " + std::to_string(i));
      }
      for (char32_t c : text) {
        if (!unicode::is_scalar(c)) {
          throw Error(ErrorCode::kInvalidArgument,
                      "non-scalar codepoint in token " + std::to_string(i));
        }
      }
      if (!v.index_.emplace(text, id).second) {
        throw Error(ErrorCode::kDuplicate,
                    "duplicate token text '" + unicode::encode_utf8(text) +
                        "' at id " + std::to_string(i));
      }
      const bool identity = text.size() == 1 && text[0] == id;
      v.entries_[i] = {id, identity ? TokenKind::kCodepoint : TokenKind::kNgram,
                       text};
      if (!identity) ++v.ngram_count_;
      v.trie_.insert(text, id);
    }
    return v;
  }

  std::vector<TokenId> encode(std::u32string_view text) const {
    std::vector<TokenId> out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
      const auto [id, len] = trie_.longest_prefix(text.substr(i));
      if (len > 0) {
        out.push_back(id);
        i += len;
        continue;
      }
      const char32_t cp = text[i];
      if (layout_ == Layout::kImported) {
        throw Error(ErrorCode::kUncoveredCharacter,
                    "no token covers U+" + hex(cp));
      }
      if (!unicode::is_scalar(cp)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "input contains non-scalar U+" + hex(cp));
      }
      if (cp >= 0x10000) {
        const char32_t v = cp - 0x10000;
        out.push_back(kHighFirst + (v >> 10));
        out.push_back(kLowFirst + (v & 0x3FF));
      } else if (cp >= kPuaFirst && cp <= kPuaLast) {
        const char32_t k = cp - kPuaFirst;
        out.push_back(kLowFirst + (k & 0x3FF));
        out.push_back(kHighFirst + (k >> 10));
      } else {
        out.push_back(cp);
      }
      ++i;
    }
    return out;
  }

  std::vector<TokenId> encode_utf8(std::string_view text) const {
    return encode(unicode::decode_utf8(text));
  }

  /// Strict inverse of encode. With `lenient`, ids that cannot be decoded
  /// (unused slots, broken escapes) become U+FFFD instead of throwing.
  std::u32string decode(std::span<const TokenId> ids,
                        bool lenient = false) const {
    std::u32string out;
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const TokenId id = ids[i];
      if (id >= entries_.size()) {
        if (lenient) {
          out.push_back(0xFFFD);
          continue;
        }
        throw Error(ErrorCode::kOutOfRange,
                    "token id " + std::to_string(id) + " >= V");
      }
      const auto& e = entries_[id];
      if (e.kind == TokenKind::kSurrogateEscape) {
        const bool high = id < kLowFirst;
        const TokenId next = i + 1 < ids.size() ? ids[i + 1] : 0;
        const bool next_ok = i + 1 < ids.size() &&
                             (high ? (next >= kLowFirst && next <= 0xDFFF)
                                   : (next >= kHighFirst && next < kLowFirst));
        char32_t cp = 0;
        if (next_ok) {
          const TokenId hi = high ? id : next;
          const TokenId lo = high ? next : id;
          const char32_t payload = ((hi - kHighFirst) << 10) | (lo - kLowFirst);
          cp = high ? 0x10000 + payload : kPuaFirst + payload;
        }
        if (!next_ok || (!high && cp > kPuaLast)) {
          if (lenient) {
            out.push_back(0xFFFD);
            continue;
          }
          throw Error(ErrorCode::kUnpairedSurrogate,
                      "unpaired surrogate escape id " + std::to_string(id) +
                          " at position " + std::to_string(i));
        }
        out.push_back(cp);
        ++i;
        continue;
      }
      if (e.text.empty()) {
        if (lenient) {
          out.push_back(0xFFFD);
          continue;
        }
        throw Error(ErrorCode::kInvalidArgument,
                    "token id " + std::to_string(id) + " has no text");
      }
      out += e.text;
    }
    return out;
  }

  std::string decode_utf8(std::span<const TokenId> ids,
                          bool lenient = false) const {
    return unicode::encode_utf8(decode(ids, lenient));
  }

  std::size_t size() const { return entries_.size(); }
  Layout layout() const { return layout_; }
  std::size_t ngram_count() const { return ngram_count_; }
  const TokenEntry& entry(TokenId id) const { return entries_.at(id); }
  const std::vector<TokenEntry>& entries() const { return entries_; }

  /// Id whose text equals `text` exactly (codepoint or n-gram kinds).
  std::optional<TokenId> find(std::u32string_view text) const {
    if (const auto it = index_.find(std::u32string(text)); it != index_.end()) {
      return it->second;
    }
    if (layout_ == Layout::kBuiltin && text.size() == 1) {
      const TokenId id = text[0];
      if (id < entries_.size() && entries_[id].kind == TokenKind::kCodepoint) {
        return id;
      }
    }
    return std::nullopt;
  }

  /// N-gram texts in id order.
  std::vector<std::u32string> ngrams() const {
    std::vector<std::u32string> out;
    for (const auto& e : entries_) {
      if (e.kind == TokenKind::kNgram) out.push_back(e.text);
    }
    return out;
  }

  /// JSON Lines, one {"id","kind","text"} object per token in id order.
  std::string to_jsonl() const {
    std::string out;
    for (const auto& e : entries_) {
      nlohmann::ordered_json j;
      j["id"] = e.id;
      j["kind"] = std::string(to_string(e.kind));
      j["text"] = unicode::encode_utf8(e.text);
      out += j.dump(-1, ' ', false);
      out.push_back('\n');
    }
    return out;
  }

  static Vocab from_jsonl(std::string_view data) {
    std::vector<TokenEntry> loaded;
    bool builtin = false;
    std::size_t pos = 0;
    while (pos < data.size()) {
      auto end = data.find('\n', pos);
      if (end == std::string_view::npos) end = data.size();
      const auto line = data.substr(pos, end - pos);
      pos = end + 1;
      if (line.empty()) continue;
      TokenEntry e;
      try {
        const auto j = nlohmann::json::parse(line);
        e.id = j.at("id").get<TokenId>();
        e.kind = token_kind_from_string(j.at("kind").get<std::string>());
        e.text = unicode::decode_utf8(j.at("text").get<std::string>());
      } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::kParse, std::string("vocab line: ") + ex.what());
      }
      if (e.id != loaded.size()) {
        throw Error(ErrorCode::kCorrupt,
                    "vocab ids must be dense and ordered; got " +
                        std::to_string(e.id) + " at line " +
                        std::to_string(loaded.size() + 1));
      }
      builtin = builtin || e.kind == TokenKind::kSurrogateEscape;
      loaded.push_back(std::move(e));
    }
    if (loaded.empty()) throw Error(ErrorCode::kEmptyInput, "empty vocab file");
    Vocab v;
    if (builtin) {
      std::vector<std::u32string> ngrams;
      for (const auto& e : loaded) {
        if (e.kind == TokenKind::kNgram) ngrams.push_back(e.text);
      }
      v = build(ngrams, static_cast<std::uint32_t>(loaded.size()));
    } else {
      std::vector<std::u32string> texts;
      texts.reserve(loaded.size());
      for (const auto& e : loaded) texts.push_back(e.text);
      v = import_external(texts);
    }
    if (v.entries_ != loaded) {
      throw Error(ErrorCode::kCorrupt,
                  "vocab file does not match the layout it declares");
    }
    return v;
  }

 private:
  static bool is_ngram_slot(TokenId id) {
    return (id >= kPuaFirst && id <= kPuaLast) || id >= kPlane1First;
  }

  static TokenId ngram_slot(std::size_t index) {
    return index < kPuaSlots
               ? static_cast<TokenId>(kPuaFirst + index)
               : static_cast<TokenId>(kPlane1First + (index - kPuaSlots));
  }

  static void check_ngram_text(const std::u32string& text) {
    if (text.size() < kMinNgramLength || text.size() > kMaxNgramLength) {
      throw Error(ErrorCode::kInvalidArgument,
                  "n-gram length " + std::to_string(text.size()) +
                      " outside [2, 8]: '" + unicode::encode_utf8(text) + "'");
    }
    for (char32_t c : text) {
      if (!unicode::is_scalar(c)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "n-gram contains a non-scalar codepoint");
      }
    }
  }

  static std::string hex(char32_t cp) {
    static constexpr char kDigits[] = "0123456789ABCDEF";
    std::string s;
    for (auto v = static_cast<std::uint32_t>(cp); v != 0 || s.size() < 4;
         v >>= 4) {
      s.insert(s.begin(), kDigits[v & 0xF]);
    }
    return s;
  }

  Layout layout_ = Layout::kBuiltin;
  std::vector<TokenEntry> entries_;
  std::unordered_map<std::u32string, TokenId> index_;
  Trie trie_;
  std::size_t ngram_count_ = 0;
};

/// Scalar characters per token of the encoded corpus.
inline double avg_chars_per_token(const Vocab& vocab,
                                  std::u32string_view corpus) {
  if (corpus.empty()) {
    throw Error(ErrorCode::kEmptyInput, "corpus is empty");
  }
  const auto ids = vocab.encode(corpus);
  return static_cast<double>(corpus.size()) / static_cast<double>(ids.size());
}

/// Top-k most frequent substrings of length [min_len, max_len] containing
/// no control characters. Order: count desc, length desc, codepoints asc.
/// Substrings seen only once are never returned.
inline std::vector<std::u32string> mine_ngrams(std::u32string_view corpus,
                                               std::size_t top_k,
                                               std::size_t min_len = 2,
                                               std::size_t max_len = 8) {
  struct Span {
    std::uint32_t offset;
    std::uint32_t length;
  };
  const auto view = [&](const Span& s) {
    return corpus.substr(s.offset, s.length);
  };
  const auto hasher = [&](const Span& s) {
    return std::hash<std::u32string_view>{}(view(s));
  };
  const auto equal = [&](const Span& a, const Span& b) {
    return view(a) == view(b);
  };
  std::unordered_map<Span, std::uint64_t, decltype(hasher), decltype(equal)>
      counts(corpus.size(), hasher, equal);
  const auto is_control = [](char32_t c) {
    return c < 0x20 || (c >= 0x7F && c <= 0x9F);
  };
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (std::size_t len = 1; len <= max_len && i + len <= corpus.size();
         ++len) {
      if (is_control(corpus[i + len - 1])) break;
      if (len < min_len) continue;
      ++counts[Span{static_cast<std::uint32_t>(i),
                    static_cast<std::uint32_t>(len)}];
    }
  }
  std::vector<std::pair<Span, std::uint64_t>> ranked;
  for (const auto& [span, count] : counts) {
    if (count >= 2) ranked.emplace_back(span, count);
  }
  const auto better = [&](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    if (a.first.length != b.first.length) return a.first.length > b.first.length;
    return view(a.first) < view(b.first);
  };
  const std::size_t keep = std::min(top_k, ranked.size());
  std::partial_sort(ranked.begin(),
                    ranked.begin() + static_cast<std::ptrdiff_t>(keep),
                    ranked.end(), better);
  std::vector<std::u32string> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    out.emplace_back(view(ranked[i].first));
  }
  return out;
}

/// Desk-scale imported vocabulary of exactly `vocab_size` tokens: U+0000
/// (PAD) at id 0, then every distinct corpus character in codepoint order,
/// then the most frequent corpus n-grams.
inline Vocab build_compact_vocab(std::u32string_view corpus,
                                 std::size_t vocab_size) {
  std::vector<char32_t> chars(corpus.begin(), corpus.end());
  std::sort(chars.begin(), chars.end());
  chars.erase(std::unique(chars.begin(), chars.end()), chars.end());
  std::vector<std::u32string> texts{std::u32string(1, U'\0')};
  for (char32_t c : chars) {
    if (c != 0) texts.emplace_back(1, c);
  }
  if (texts.size() > vocab_size) {
    throw Error(ErrorCode::kCapacity,
                "corpus has " + std::to_string(texts.size()) +
                    " distinct characters, more than V=" +
                    std::to_string(vocab_size));
  }
  const auto ngrams = mine_ngrams(corpus, vocab_size - texts.size());
  texts.insert(texts.end(), ngrams.begin(), ngrams.end());
  if (texts.size() < vocab_size) {
    throw Error(ErrorCode::kCapacity,
                "corpus too small to fill V=" + std::to_string(vocab_size));
  }
  return Vocab::import_external(texts);
}

/// N-gram list file: UTF-8, one entry per line, order = priority.
inline std::vector<std::u32string> parse_ngram_list(std::string_view data) {
  std::vector<std::u32string> out;
  std::size_t pos = 0;
  while (pos < data.size()) {
    auto end = data.find('\n', pos);
    if (end == std::string_view::npos) end = data.size();
    out.push_back(unicode::decode_utf8(data.substr(pos, end - pos)));
    pos = end + 1;
  }
  return out;
}

inline std::string format_ngram_list(std::span<const std::u32string> ngrams) {
  std::string out;
  for (const auto& g : ngrams) {
    out += unicode::encode_utf8(g);
    out.push_back('\n');
  }
  return out;
}

}  // namespace bvv
