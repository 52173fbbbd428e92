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

#include <map>
#include <set>
#include <string>
#include <vector>

#include "bvv/rng.hpp"
#include "bvv/univoc.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace {

using bvv::ErrorCode;
using bvv::TokenId;
using bvv::TokenKind;
using bvv::Vocab;
using testutil::error_code;
using Ids = std::vector<TokenId>;

Vocab plain64k() { return Vocab::build({}, bvv::kProfile64K); }

Vocab with_ngrams(std::vector<std::u32string> ngrams,
                  std::uint32_t v = bvv::kProfile64K) {
  return Vocab::build(ngrams, v);
}

TEST(BuildVocab, IdentityBmpLayout) {
  const auto v = plain64k();
  EXPECT_EQ(v.size(), 65536u);
  EXPECT_EQ(v.encode(U"A"), (Ids{0x41}));
  EXPECT_EQ(v.entry(0x41).kind, TokenKind::kCodepoint);
  EXPECT_EQ(v.entry(0x41).text, U"A");
  EXPECT_EQ(v.entry(0xD800).kind, TokenKind::kSurrogateEscape);
  EXPECT_EQ(v.entry(0xDFFF).kind, TokenKind::kSurrogateEscape);
  EXPECT_TRUE(v.entry(0xD800).text.empty());
  EXPECT_EQ(v.entry(0xE000).kind, TokenKind::kSpecial);
  EXPECT_EQ(v.entry(0xF900).kind, TokenKind::kCodepoint);
  EXPECT_EQ(v.ngram_count(), 0u);
}

TEST(BuildVocab, FirstNgramTakesFirstPuaSlot) {
  const auto v = with_ngrams({U"ing"});
  EXPECT_EQ(v.find(U"ing"), TokenId{0xE000});
  EXPECT_EQ(v.entry(0xE000).kind, TokenKind::kNgram);
}

TEST(BuildVocab, CapacityLimits) {
  std::vector<std::u32string> many;
  for (char32_t i = 0; i < 6401; ++i) many.push_back(std::u32string{U'a', 0x4E00 + i});
  EXPECT_EQ(error_code([&] { Vocab::build(many, bvv::kProfile64K); }), ErrorCode::kCapacity);
  many.pop_back();
  EXPECT_EQ(Vocab::build(many, bvv::kProfile64K).find(many.back()), TokenId{0xF8FF});
  many.push_back(U"zz");
  const auto big = Vocab::build(many, bvv::kProfile128K);
  EXPECT_EQ(big.size(), 131072u);
  EXPECT_EQ(big.find(U"zz"), TokenId{0x10000});
}

TEST(BuildVocab, RejectsBadNgrams) {
  EXPECT_EQ(error_code([] { with_ngrams({U"ab", U"ab"}); }), ErrorCode::kDuplicate);
  EXPECT_EQ(error_code([] { with_ngrams({U"a"}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code([] { with_ngrams({U"abcdefghi"}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code([] { with_ngrams({std::u32string{U'a', char32_t{0xD800}}}); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code([] { Vocab::build({}, 1000); }), ErrorCode::kInvalidArgument);
}

TEST(Encode, SurrogateEscapeMatchesUtf16) {
  const auto v = plain64k();
  EXPECT_EQ(v.encode(U"\U0001F600"), (Ids{0xD83D, 0xDE00}));
  EXPECT_EQ(v.decode(Ids{0xD83D, 0xDE00}), U"\U0001F600");
  for (char32_t cp : {char32_t{0x10000}, char32_t{0x10FFFF}, char32_t{0x2A6D6}}) {
    const std::u32string s(1, cp);
    const auto ref = oracle::utf16(s);
    EXPECT_EQ(v.encode(s), Ids(ref.begin(), ref.end()));
  }
}

TEST(Encode, LeftmostLongest) {
  const auto v = with_ngrams({U"ing"});
  EXPECT_EQ(v.encode(U"sing"), (Ids{0x73, 0xE000}));
  const auto w = with_ngrams({U"in", U"ing", U"ngs"});
  EXPECT_EQ(w.encode(U"ings"), (Ids{*w.find(U"ing"), U's'}));
}

TEST(Encode, PuaCharactersRoundTrip) {
  const auto v = with_ngrams({U"ing"});
  const std::u32string s = U"x";
  const auto ids = v.encode(s);
  EXPECT_EQ(ids.size(), 5u);
  EXPECT_EQ(v.decode(ids), s);
  EXPECT_NE(ids[0], TokenId{0xE000});
}

TEST(Encode, RejectsLoneSurrogateInput) {
  const auto v = plain64k();
  EXPECT_EQ(error_code([&] { v.encode(std::u32string(1, char32_t{0xDC00})); }),
            ErrorCode::kInvalidArgument);
}

TEST(Decode, Examples) {
  const auto v = plain64k();
  EXPECT_EQ(v.decode(Ids{0x41}), U"A");
  EXPECT_EQ(error_code([&] { v.decode(Ids{0xD83D}); }), ErrorCode::kUnpairedSurrogate);
  EXPECT_EQ(error_code([&] { v.decode(Ids{0xDE00, 0x41}); }), ErrorCode::kUnpairedSurrogate);
  EXPECT_EQ(error_code([&] { v.decode(Ids{65536}); }), ErrorCode::kOutOfRange);
  EXPECT_EQ(error_code([&] { v.decode(Ids{0xE000}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(v.decode(Ids{0xD83D, 0x41, 0xE000}, true), U"�A�");
}

TEST(RoundTrip, RandomMixedScriptStrings) {
  const auto v = with_ngrams({U"th", U"the", U"ing", U"中国", U"при", U"\U0001F600!"});
  bvv::Rng rng(7);
  for (int i = 0; i < 5000; ++i) {
    const auto s = oracle::random_unicode(rng, 40);
    ASSERT_EQ(v.decode(v.encode(s)), s) << "case " << i;
  }
}

TEST(RoundTrip, Utf8Interface) {
  const auto v = with_ngrams({U"ing"});
  const std::string s = "sing \xF0\x9F\x98\x80 ПРИВЕТ 中文";
  EXPECT_EQ(v.decode_utf8(v.encode_utf8(s)), s);
}

TEST(Injectivity, TextsMapToOneId) {
  const auto v = with_ngrams({U"ab", U"cd", U"ing"});
  std::map<std::u32string, TokenId> seen;
  for (const auto& e : v.entries()) {
    if (e.kind != TokenKind::kCodepoint && e.kind != TokenKind::kNgram) continue;
    ASSERT_TRUE(seen.emplace(e.text, e.id).second);
  }
}

TEST(Determinism, EncodeIsPure) {
  const auto a = with_ngrams({U"ab", U"bc"});
  const auto b = with_ngrams({U"ab", U"bc"});
  EXPECT_EQ(a.encode(U"abcabc"), b.encode(U"abcabc"));
  EXPECT_EQ(a.to_jsonl(), b.to_jsonl());
}

// Greedy matching is not monotone in the vocabulary: a longer leftmost match
// can block a better segmentation further right.
TEST(GreedyDominance, CounterexampleExists) {
  const auto both = Vocab::import_external({{U"a", U"b", U"c", U"d", U"ab", U"bcd"}});
  const auto without_ab = Vocab::import_external({{U"a", U"b", U"c", U"d", U"bcd"}});
  EXPECT_EQ(both.encode(U"abcd").size(), 3u);
  EXPECT_EQ(without_ab.encode(U"abcd").size(), 2u);
}

// What does hold: every n-gram match covers at least one character that
// would otherwise cost at least one id.
TEST(GreedyDominance, NeverWorseThanNoNgrams) {
  const auto v = with_ngrams({U"ab", U"bcd", U"中国", U"xyz"});
  const auto plain = plain64k();
  bvv::Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const auto s = oracle::random_unicode(rng, 30);
    ASSERT_LE(v.encode(s).size(), plain.encode(s).size());
  }
}

TEST(ImportExternal, Examples) {
  const auto v = Vocab::import_external({{U"a", U"b", U"ab"}});
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.encode(U"ab"), (Ids{2}));
  EXPECT_EQ(v.encode(U"ba"), (Ids{1, 0}));
  EXPECT_EQ(v.entry(2).kind, TokenKind::kNgram);
  std::vector<std::u32string> bad{U"a", U"b", U"c", U"d", U"e", U"", U"f"};
  EXPECT_EQ(error_code([&] { Vocab::import_external(bad); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code([] { Vocab::import_external({{U"a", U"a"}}); }), ErrorCode::kDuplicate);
  EXPECT_EQ(error_code([] { Vocab::import_external({}); }), ErrorCode::kEmptyInput);
  EXPECT_EQ(error_code([&] { v.encode(U"abc"); }), ErrorCode::kUncoveredCharacter);
}

TEST(ImportExternal, CodepointKindOnlyAtIdentityPosition) {
  std::vector<std::u32string> texts;
  for (char32_t c = 0; c < 0x42; ++c) texts.emplace_back(1, c);
  texts.push_back(U"Z");
  const auto v = Vocab::import_external(texts);
  EXPECT_EQ(v.entry(0x41).kind, TokenKind::kCodepoint);
  EXPECT_EQ(v.entry(0x42).kind, TokenKind::kNgram);
  EXPECT_EQ(v.encode(U"Z"), (Ids{0x42}));
}

TEST(AvgCharsPerToken, Examples) {
  EXPECT_DOUBLE_EQ(bvv::avg_chars_per_token(plain64k(), U"aaa"), 1.0);
  EXPECT_DOUBLE_EQ(bvv::avg_chars_per_token(with_ngrams({U"ing"}), U"inging"), 3.0);
  EXPECT_EQ(error_code([] { bvv::avg_chars_per_token(plain64k(), U""); }),
            ErrorCode::kEmptyInput);
  const auto v = with_ngrams({U"the", U"ing", U"中国", U"при", U"вет"});
  const double r = bvv::avg_chars_per_token(v, U"the thing: привет, 中国人 \U0001F600");
  EXPECT_GE(r, 1.0);
  EXPECT_LE(r, 8.0);
}

// Brute-force substring counts for the miner.
std::map<std::u32string, int> brute_counts(const std::u32string& s) {
  std::map<std::u32string, int> counts;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t len = 2; len <= 8 && i + len <= s.size(); ++len) {
      const auto sub = s.substr(i, len);
      bool ctrl = false;
      for (char32_t c : sub) ctrl = ctrl || c < 0x20 || (c >= 0x7F && c <= 0x9F);
      if (!ctrl) ++counts[sub];
    }
  }
  return counts;
}

TEST(MineNgrams, MatchesBruteForceCounts) {
  const std::u32string corpus = U"the cat sat on the mat.\nthe rat ate the hat; 猫猫猫 кот кот\n";
  const auto counts = brute_counts(corpus);
  std::vector<std::pair<std::u32string, int>> ranked;
  for (const auto& [s, c] : counts) {
    if (c >= 2) ranked.emplace_back(s, c);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    if (a.first.size() != b.first.size()) return a.first.size() > b.first.size();
    return a.first < b.first;
  });
  ASSERT_GT(ranked.size(), 15u);
  const auto mined = bvv::mine_ngrams(corpus, 15);
  ASSERT_EQ(mined.size(), 15u);
  for (std::size_t i = 0; i < mined.size(); ++i) EXPECT_EQ(mined[i], ranked[i].first) << i;
  const auto all = bvv::mine_ngrams(corpus, 100000);
  EXPECT_EQ(all.size(), ranked.size());
}

TEST(MineNgrams, TopKOnSyntheticCorpus) {
  std::u32string corpus;
  bvv::Rng rng(11);
  for (int i = 0; i < 4000; ++i) corpus.push_back(U'a' + static_cast<char32_t>(rng.below(6)));
  const auto mined = bvv::mine_ngrams(corpus, 1000);
  EXPECT_EQ(mined.size(), 1000u);
  const auto v = Vocab::build(mined, bvv::kProfile64K);
  EXPECT_EQ(v.ngram_count(), 1000u);
  EXPECT_EQ(v.decode(v.encode(corpus)), corpus);
}

TEST(CompactVocab, LayoutAndCoverage) {
  const std::u32string corpus = U"hello world, hello there. привет мир, привет. 你好你好";
  const std::set<char32_t> distinct(corpus.begin(), corpus.end());
  const std::size_t V = distinct.size() + 1 + 12;
  const auto v = bvv::build_compact_vocab(corpus, V);
  EXPECT_EQ(v.size(), V);
  std::size_t multi = 0;
  for (const auto& e : v.entries()) multi += e.text.size() >= 2;
  EXPECT_EQ(multi, 12u);
  EXPECT_EQ(v.layout(), Vocab::Layout::kImported);
  EXPECT_EQ(v.entry(0).text, std::u32string(1, U'\0'));
  EXPECT_EQ(v.decode(v.encode(corpus)), corpus);
  EXPECT_LT(v.encode(corpus).size(), corpus.size());
  EXPECT_EQ(error_code([&] { bvv::build_compact_vocab(corpus, distinct.size()); }),
            ErrorCode::kCapacity);
  EXPECT_EQ(error_code([&] { bvv::build_compact_vocab(U"abab", 64); }), ErrorCode::kCapacity);
}

TEST(VocabFile, JsonlRoundTripBuiltin) {
  const auto v = with_ngrams({U"ing", U"\"q\"", U"a\\b", U"中国", U"\U0001F600x"});
  const auto text = v.to_jsonl();
  const auto w = Vocab::from_jsonl(text);
  EXPECT_EQ(w.entries(), v.entries());
  EXPECT_EQ(w.to_jsonl(), text);
  EXPECT_EQ(w.encode(U"sing"), v.encode(U"sing"));
}

TEST(VocabFile, JsonlRoundTripImported) {
  const auto v = bvv::build_compact_vocab(U"abcabcabc xyz xyz\n", 20);
  const auto w = Vocab::from_jsonl(v.to_jsonl());
  EXPECT_EQ(w.layout(), Vocab::Layout::kImported);
  EXPECT_EQ(w.to_jsonl(), v.to_jsonl());
}

TEST(VocabFile, RejectsDamage) {
  const auto v = with_ngrams({U"ing"});
  auto text = v.to_jsonl();
  EXPECT_EQ(error_code([] { Vocab::from_jsonl(""); }), ErrorCode::kEmptyInput);
  EXPECT_EQ(error_code([] { Vocab::from_jsonl("{not json}\n"); }), ErrorCode::kParse);
  EXPECT_EQ(error_code([] { Vocab::from_jsonl(R"({"id":1,"kind":"ngram","text":"ab"})"); }),
            ErrorCode::kCorrupt);
  const auto pos = text.find(R"("text":"A")");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 10, R"("text":"B")");
  EXPECT_EQ(error_code([&] { Vocab::from_jsonl(text); }), ErrorCode::kCorrupt);
}

TEST(NgramList, RoundTrip) {
  const std::vector<std::u32string> list{U"ing", U"中国", U"при", U"\U0001F600x"};
  const auto text = bvv::format_ngram_list(list);
  EXPECT_EQ(bvv::parse_ngram_list(text), list);
  EXPECT_EQ(bvv::format_ngram_list(bvv::parse_ngram_list(text)), text);
}

}  // namespace
