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

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "bvv/binio.hpp"
#include "bvv/univoc.hpp"
#include "test_util.hpp"

namespace {

namespace fs = std::filesystem;

struct Run {
  int status = -1;
  std::string out;  // stdout and stderr
};

Run bvv_run(const std::string& args) {
  const std::string cmd = std::string(BVV_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) { return bvv::binio::read_file(p.string()); }

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// A small corpus, fixture vocab (V=64), and a matching config file.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = testutil::scratch_dir("cli");
    std::ofstream(dir_ / "corpus.txt")
        << "the cat sat on the mat. the dog sat on the log.\n"
           "кот сидел на коврике. собака сидела на бревне.\n";
    std::string big;
    for (int i = 0; i < 40; ++i) big += slurp(dir_ / "corpus.txt");
    std::ofstream(dir_ / "corpus.txt") << big;
    std::ofstream(dir_ / "exp.toml")
        << "[paths]\n"
        << "font = \"" << testutil::data_path("unifont-fixture.hex") << "\"\n"
        << "vocab = \"" << (dir_ / "vocab.jsonl").string() << "\"\n"
        << "corpus = \"" << (dir_ / "corpus.txt").string() << "\"\n"
        << "embeddings = \"" << (dir_ / "emb.bvve").string() << "\"\n"
        << "outdir = \"" << (dir_ / "out").string() << "\"\n"
        << "[model]\nvocab_size = 64\nH = 8\nd_model = 16\nn_layers = 1\nn_heads = 2\n"
        << "block_size = 16\n"
        << "[train]\nbatch = 4\nsteps = 20\neval_every = 10\nwarmup = 5\nlr = 0.01\n";
    const auto r = bvv_run(cfg() + "build-vocab --compact " + (dir_ / "corpus.txt").string());
    ASSERT_EQ(r.status, 0) << r.out;
  }
  static std::string cfg() { return "--config " + (dir_ / "exp.toml").string() + " "; }
  static fs::path dir_;
};

fs::path CliPipeline::dir_;

TEST_F(CliPipeline, MissingInputFileFails) {
  const auto r = bvv_run("build-vocab --ngrams /nonexistent/top.txt -o /tmp/never.jsonl");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.out.find("/nonexistent/top.txt"), std::string::npos) << r.out;
  const auto r2 = bvv_run(cfg() + "stats --vocab /nonexistent/v.jsonl");
  EXPECT_NE(r2.status, 0);
}

TEST_F(CliPipeline, UnknownConfigKeyFails) {
  std::ofstream(dir_ / "bad.toml") << "[model]\nwidth = 3\n";
  const auto r = bvv_run("--config " + (dir_ / "bad.toml").string() + " stats");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.out.find("width"), std::string::npos) << r.out;
}

TEST_F(CliPipeline, NoVerbFails) { EXPECT_NE(bvv_run("").status, 0); }

TEST_F(CliPipeline, MineTopWritesThatManyNgrams) {
  const auto list = dir_ / "mined.txt";
  const auto r = bvv_run("build-vocab --mine " + (dir_ / "corpus.txt").string() +
                         " --top 25 -o " + (dir_ / "mined.jsonl").string() + " --ngrams-out " +
                         list.string());
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("V=65536 ngrams=25"), std::string::npos) << r.out;
  const auto corpus = bvv::unicode::decode_utf8(slurp(dir_ / "corpus.txt"));
  EXPECT_EQ(bvv::parse_ngram_list(slurp(list)), bvv::mine_ngrams(corpus, 25));
  const auto v = bvv::Vocab::from_jsonl(slurp(dir_ / "mined.jsonl"));
  EXPECT_EQ(v.ngram_count(), 25u);
  EXPECT_EQ(v.entry(bvv::kPuaFirst).text, bvv::mine_ngrams(corpus, 1)[0]);
}

TEST_F(CliPipeline, ProfileWithNgramList) {
  std::ofstream(dir_ / "top.txt") << "the\nсид\n";
  const auto r = bvv_run("build-vocab --profile 131072 --ngrams " + (dir_ / "top.txt").string() +
                         " -o " + (dir_ / "p.jsonl").string());
  ASSERT_EQ(r.status, 0) << r.out;
  const auto v = bvv::Vocab::from_jsonl(slurp(dir_ / "p.jsonl"));
  EXPECT_EQ(v.size(), 131072u);
  EXPECT_EQ(v.entry(0xE001).text, U"сид");
  EXPECT_EQ(v.entry('A').text, U"A");
}

TEST_F(CliPipeline, BuildEmbeddingsByteLengthAndIdempotence) {
  const auto out1 = dir_ / "e1.bvve";
  const auto out2 = dir_ / "e2.bvve";
  ASSERT_EQ(bvv_run(cfg() + "build-emb -o " + out1.string()).status, 0);
  const auto r = bvv_run(cfg() + "build-emb -o " + out2.string());
  ASSERT_EQ(r.status, 0) << r.out;
  const std::size_t header = 58, dim = 64, d = 16, v = 64;
  EXPECT_EQ(fs::file_size(out1), header + dim * 8 + d * dim * 8 + v * d * 4);
  EXPECT_EQ(slurp(out1), slurp(out2));
  EXPECT_NE(r.out.find("variance ratios (top 10)"), std::string::npos);
  EXPECT_NE(r.out.find("density-length correlation"), std::string::npos);
}

TEST_F(CliPipeline, RandomBitmapsSameSeedSameFile) {
  const auto a = dir_ / "r1.bvve", b = dir_ / "r2.bvve", c = dir_ / "r3.bvve";
  ASSERT_EQ(bvv_run(cfg() + "--seed 7 build-emb --random -o " + a.string()).status, 0);
  ASSERT_EQ(bvv_run(cfg() + "build-emb --random --seed 7 -o " + b.string()).status, 0);
  ASSERT_EQ(bvv_run(cfg() + "build-emb --random --seed 8 -o " + c.string()).status, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_NE(slurp(a), slurp(c));
}

TEST_F(CliPipeline, EmbeddingWiderThanBitmapFails) {
  const auto r = bvv_run(cfg() + "build-emb --H 16 --d 512 -o " + (dir_ / "x.bvve").string());
  EXPECT_NE(r.status, 0);
  EXPECT_FALSE(fs::exists(dir_ / "x.bvve"));
}

TEST_F(CliPipeline, TrainModesResumeAndIdempotence) {
  ASSERT_EQ(bvv_run(cfg() + "build-emb").status, 0);
  const auto out = dir_ / "out";
  auto train = [&](const std::string& extra) {
    const auto r = bvv_run(cfg() + "--deterministic train " + extra);
    EXPECT_EQ(r.status, 0) << r.out;
    return r;
  };
  train("--mode frozen_visual --steps 40");
  const auto visual_csv = slurp(out / "frozen_visual" / "loss.csv");
  const auto visual_ckpt = slurp(out / "frozen_visual" / "checkpoint.bvvc");
  EXPECT_EQ(count_lines(visual_csv), 41u);

  train("--mode frozen_visual --steps 40");
  EXPECT_EQ(slurp(out / "frozen_visual" / "loss.csv"), visual_csv);
  EXPECT_EQ(slurp(out / "frozen_visual" / "checkpoint.bvvc"), visual_ckpt);

  train("--mode trainable --steps 40");
  EXPECT_NE(slurp(out / "trainable" / "loss.csv"), visual_csv);

  // Stop at 20, resume to 40: same bytes as the uninterrupted run.
  train("--mode frozen_visual --steps 20");
  fs::copy_file(out / "frozen_visual" / "checkpoint.bvvc", dir_ / "half.bvvc",
                fs::copy_options::overwrite_existing);
  train("--mode frozen_visual --steps 40 --resume " + (dir_ / "half.bvvc").string());
  EXPECT_EQ(slurp(out / "frozen_visual" / "loss.csv"), visual_csv);
  EXPECT_EQ(slurp(out / "frozen_visual" / "checkpoint.bvvc"), visual_ckpt);

  const auto ev = bvv_run(cfg() + "eval --checkpoint " + (out / "frozen_visual" / "checkpoint.bvvc").string());
  ASSERT_EQ(ev.status, 0) << ev.out;
  EXPECT_NE(ev.out.find("perplexity"), std::string::npos);

  const auto g1 = bvv_run(cfg() + "--seed 3 generate --checkpoint " +
                          (out / "trainable" / "checkpoint.bvvc").string() + " --prompt \"the \" -n 20");
  const auto g2 = bvv_run(cfg() + "--seed 3 generate --checkpoint " +
                          (out / "trainable" / "checkpoint.bvvc").string() + " --prompt \"the \" -n 20");
  ASSERT_EQ(g1.status, 0) << g1.out;
  EXPECT_EQ(g1.out, g2.out);
  EXPECT_EQ(g1.out.rfind("the ", 0), 0u);
}

TEST_F(CliPipeline, FrozenModeRejectsWrongEmbeddings) {
  ASSERT_EQ(bvv_run(cfg() + "build-emb --random -o " + (dir_ / "rnd.bvve").string()).status, 0);
  const auto r = bvv_run(cfg() + "train --mode frozen_visual --steps 2 --embeddings " +
                         (dir_ / "rnd.bvve").string());
  EXPECT_NE(r.status, 0);
}

TEST_F(CliPipeline, AblateReportsThreeRows) {
  const auto r = bvv_run(cfg() + "--deterministic ablate --steps 20 --outdir " + (dir_ / "abl").string());
  ASSERT_EQ(r.status, 0) << r.out;
  const auto table = slurp(dir_ / "abl" / "ablation.csv");
  EXPECT_EQ(count_lines(table), 4u);  // header + 3 modes
  for (const char* m : {"\ntrainable,", "\nfrozen_visual,", "\nfrozen_random,"}) {
    EXPECT_NE(table.find(m), std::string::npos) << table;
  }
  EXPECT_NE(r.out.find("slowdown random/visual"), std::string::npos);
}

TEST_F(CliPipeline, Project2dHasOneRowPerToken) {
  ASSERT_EQ(bvv_run(cfg() + "build-emb").status, 0);
  const auto a = dir_ / "p1.csv", b = dir_ / "p2.csv";
  const auto r = bvv_run(cfg() + "project2d -o " + a.string());
  ASSERT_EQ(r.status, 0) << r.out;
  ASSERT_EQ(bvv_run(cfg() + "project2d -o " + b.string()).status, 0);
  const auto csv = slurp(a);
  EXPECT_EQ(count_lines(csv), 65u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "id,token_text,char_len,x,y,ink_density");
  EXPECT_EQ(csv, slurp(b));
  EXPECT_NE(r.out.find("corr(char_len, ink_density)"), std::string::npos);
}

TEST_F(CliPipeline, StatsRoundTrip) {
  const auto r = bvv_run(cfg() + "stats");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("OK 100%"), std::string::npos) << r.out;

  // Pure ASCII with no n-grams: one char per token.
  std::ofstream(dir_ / "ascii.txt") << "plain ascii text\n";
  std::ofstream(dir_ / "empty.txt") << "";
  ASSERT_EQ(bvv_run("build-vocab --ngrams " + (dir_ / "empty.txt").string() + " -o " +
                    (dir_ / "plain.jsonl").string()).status, 0);
  const auto plain = bvv_run("stats --vocab " + (dir_ / "plain.jsonl").string() + " " +
                             (dir_ / "ascii.txt").string());
  EXPECT_NE(plain.out.find("chars/token 1.0000"), std::string::npos) << plain.out;

  // Registered trigram pushes it above one.
  std::ofstream(dir_ / "tri.txt") << "asc\n";
  ASSERT_EQ(bvv_run("build-vocab --ngrams " + (dir_ / "tri.txt").string() + " -o " +
                    (dir_ / "tri.jsonl").string()).status, 0);
  const auto tri = bvv_run("stats --vocab " + (dir_ / "tri.jsonl").string() + " " +
                           (dir_ / "ascii.txt").string());
  EXPECT_NE(tri.out.find("chars/token 1.1333"), std::string::npos) << tri.out;

  // A character the imported vocab cannot cover fails the check.
  std::ofstream(dir_ / "alien.txt") << "日本\n";
  const auto alien = bvv_run(cfg() + "stats " + (dir_ / "alien.txt").string());
  EXPECT_NE(alien.status, 0);
  EXPECT_NE(alien.out.find("FAIL"), std::string::npos) << alien.out;
}

}  // namespace
