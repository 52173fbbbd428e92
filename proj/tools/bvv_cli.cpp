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

// bvv: build vocabularies and embedding matrices, train and compare the
// three embedding modes, and export analysis CSVs.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bvv/binio.hpp"
#include "bvv/config.hpp"
#include "bvv/embedmat.hpp"
#include "bvv/experiment.hpp"
#include "bvv/fontstore.hpp"
#include "bvv/glyphrender.hpp"
#include "bvv/pca.hpp"
#include "bvv/stats.hpp"
#include "bvv/trainer.hpp"
#include "bvv/univoc.hpp"

namespace fs = std::filesystem;
using bvv::ErrorCode;
using bvv::TokenId;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::u32string read_text(const std::string& path) {
  return bvv::unicode::decode_utf8(bvv::binio::read_file(path));
}

bvv::Vocab read_vocab(const std::string& path) {
  return bvv::Vocab::from_jsonl(bvv::binio::read_file(path));
}

void write_output(const std::string& path, std::string_view bytes) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  bvv::binio::write_file(path, bytes);
}

/// Config layered as defaults < --config file < flags.
struct Session {
  std::string config_path;
  std::vector<std::pair<CLI::Option*, std::string>> keyed;
  std::deque<std::string> values;  // stable addresses for bound options
  bool deterministic = false;

  // Registers a flag that overrides a config key.
  CLI::Option* key(CLI::App* app, const std::string& flag, const std::string& config_key,
                   const std::string& help) {
    values.emplace_back();
    auto* opt = app->add_option(flag, values.back(), help);
    keyed.emplace_back(opt, config_key);
    return opt;
  }

  bvv::ExperimentConfig config() const {
    bvv::ExperimentConfig c;
    if (!config_path.empty()) c = bvv::load_config(config_path);
    for (std::size_t i = 0; i < keyed.size(); ++i) {
      if (keyed[i].first->count() > 0) c.set(keyed[i].second, values[i]);
    }
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------- vocab

struct VocabArgs {
  std::uint32_t profile = bvv::kProfile64K;
  std::string ngrams;
  std::string mine;
  std::size_t top = 1000;
  std::string compact;
  std::string import_path;
  std::string out;
  std::string list_out;
};

void print_coverage(const bvv::Vocab& vocab, const std::u32string& corpus) {
  const auto ids = vocab.encode(corpus);
  std::size_t ngram_tokens = 0;
  std::size_t ngram_chars = 0;
  for (TokenId id : ids) {
    const auto& e = vocab.entry(id);
    if (e.text.size() > 1) {
      ++ngram_tokens;
      ngram_chars += e.text.size();
    }
  }
  std::cout << "coverage: " << corpus.size() << " chars -> " << ids.size() << " tokens, "
            << fmt("%.4f", static_cast<double>(corpus.size()) / static_cast<double>(ids.size()))
            << " chars/token, n-gram tokens " << ngram_tokens << " covering "
            << fmt("%.2f", 100.0 * static_cast<double>(ngram_chars) /
                               static_cast<double>(corpus.size()))
            << "% of chars\n";
}

std::size_t multi_char_count(const bvv::Vocab& vocab) {
  return static_cast<std::size_t>(std::count_if(vocab.entries().begin(), vocab.entries().end(),
                                                [](const auto& e) { return e.text.size() > 1; }));
}

int cmd_build_vocab(const Session& s, const VocabArgs& a) {
  const auto cfg = s.config();
  const std::string out = a.out.empty() ? cfg.vocab : a.out;
  const int sources = !a.compact.empty() + !a.import_path.empty() +
                      (!a.ngrams.empty() || !a.mine.empty());
  if (sources != 1) {
    throw bvv::Error(ErrorCode::kInvalidArgument,
                     "give exactly one of --compact, --import, or --ngrams/--mine");
  }
  std::optional<std::u32string> corpus;
  bvv::Vocab vocab;
  if (!a.compact.empty()) {
    corpus = read_text(a.compact);
    vocab = bvv::build_compact_vocab(*corpus, cfg.vocab_size);
  } else if (!a.import_path.empty()) {
    vocab = bvv::Vocab::import_external(bvv::parse_ngram_list(bvv::binio::read_file(a.import_path)));
  } else {
    std::vector<std::u32string> list;
    if (!a.ngrams.empty()) list = bvv::parse_ngram_list(bvv::binio::read_file(a.ngrams));
    if (!a.mine.empty()) {
      corpus = read_text(a.mine);
      for (auto& g : bvv::mine_ngrams(*corpus, a.top)) {
        if (std::find(list.begin(), list.end(), g) == list.end()) list.push_back(std::move(g));
      }
    }
    vocab = bvv::Vocab::build(list, a.profile);
    if (!a.list_out.empty()) write_output(a.list_out, bvv::format_ngram_list(list));
  }
  const auto jsonl = vocab.to_jsonl();
  if (bvv::Vocab::from_jsonl(jsonl).to_jsonl() != jsonl) {
    throw bvv::Error(ErrorCode::kCorrupt, "vocabulary does not survive a JSONL round-trip");
  }
  write_output(out, jsonl);
  std::cout << "wrote " << out << "\n"
            << "V=" << vocab.size() << " ngrams=" << multi_char_count(vocab) << "\n";
  if (corpus) print_coverage(vocab, *corpus);
  return 0;
}

// ----------------------------------------------------------- embeddings

struct EmbArgs {
  bool random = false;
  std::string out;
};

void print_norm_stats(const bvv::EmbeddingMatrix& m) {
  double lo = INFINITY, hi = 0.0, sum = 0.0;
  std::size_t blank = 0;
  for (std::size_t id = 0; id < m.vocab_size; ++id) {
    double n2 = 0.0;
    for (float x : m.row(id)) n2 += static_cast<double>(x) * x;
    if (n2 == 0.0) {
      ++blank;
      continue;
    }
    const double n = std::sqrt(n2);
    lo = std::min(lo, n);
    hi = std::max(hi, n);
    sum += n;
  }
  const auto live = m.vocab_size - blank;
  std::cout << "row norms: min " << fmt("%.7f", live ? lo : 0.0) << " max "
            << fmt("%.7f", hi) << " mean " << fmt("%.7f", live ? sum / live : 0.0)
            << ", zero rows " << blank << "\n";
}

int cmd_build_emb(const Session& s, const EmbArgs& a) {
  const auto cfg = s.config();
  const std::string out = a.out.empty() ? cfg.embeddings : a.out;
  bvv::ExperimentConfig::require_files({&cfg.vocab});
  const auto vocab = read_vocab(cfg.vocab);
  const int side = static_cast<int>(cfg.side);
  bvv::PcaModel pca;
  bvv::EmbeddingMatrix m;
  std::optional<bvv::GlyphStore> font;
  if (a.random) {
    m = bvv::build_random_embeddings(vocab, cfg.seed, side, cfg.d_model, &pca);
  } else {
    bvv::ExperimentConfig::require_files({&cfg.font});
    font = bvv::load_font_file(cfg.font);
    m = bvv::build_visual_embeddings(vocab, *font, side, cfg.d_model, &pca);
  }
  const auto bytes = bvv::serialize_embeddings(m);
  if (bvv::serialize_embeddings(bvv::parse_embeddings(bytes).matrix) != bytes) {
    throw bvv::Error(ErrorCode::kCorrupt, "embedding file does not survive a round-trip");
  }
  write_output(out, bytes);
  std::cout << "wrote " << out << " (" << bytes.size() << " bytes, "
            << (a.random ? "random bitmaps" : "visual") << ", V=" << m.vocab_size
            << " H=" << side << " d=" << m.d_model << ")\n";
  print_norm_stats(m);
  if (font) {
    std::cout << "density-length correlation (multi-char tokens): "
              << fmt("%.4f", bvv::length_density_correlation(vocab, *font, side)) << "\n";
  }
  const auto ratios = pca.explained_variance_ratio();
  std::cout << "variance ratios (top " << std::min<std::size_t>(10, ratios.size()) << "):";
  for (std::size_t i = 0; i < ratios.size() && i < 10; ++i) std::cout << " " << fmt("%.4f", ratios[i]);
  double kept = 0.0;
  for (double r : ratios) kept += r;
  std::cout << "\nvariance kept by " << ratios.size() << " components: " << fmt("%.4f", kept)
            << "\n";
  return 0;
}

// -------------------------------------------------------------- training

struct Data {
  bvv::Vocab vocab;
  std::vector<TokenId> train;
  std::vector<TokenId> val;
};

Data load_data(const bvv::ExperimentConfig& cfg) {
  bvv::ExperimentConfig::require_files({&cfg.vocab, &cfg.corpus});
  Data d{read_vocab(cfg.vocab), {}, {}};
  if (d.vocab.size() != cfg.vocab_size) {
    throw bvv::Error(ErrorCode::kShapeMismatch,
                     "vocabulary has " + std::to_string(d.vocab.size()) +
                         " tokens, config says model.vocab_size=" +
                         std::to_string(cfg.vocab_size));
  }
  const auto ids = d.vocab.encode(read_text(cfg.corpus));
  auto split = bvv::split_tokens(ids, cfg.val_fraction);
  d.train = std::move(split.train);
  d.val = std::move(split.val);
  return d;
}

bvv::RunResult run_training(const bvv::ExperimentConfig& cfg, bool deterministic, const Data& data,
                        bvv::Model<float>& model, const fs::path& dir,
                        std::optional<bvv::TrainState> resume) {
  fs::create_directories(dir);
  const auto ckpt = (dir / "checkpoint.bvvc").string();
  const std::string mode(bvv::to_string(model.config().embedding_mode));
  bvv::Trainer trainer(model, bvv::train_hyper(cfg, !deterministic), data.train, data.val);
  if (resume) trainer.resume(std::move(*resume));
  trainer.run([&](const bvv::TrainState& st) {
    bvv::save_checkpoint(ckpt, model, &st);
    const auto& r = st.history.back();
    std::cout << "[" << mode << "] step " << r.step << " train " << fmt("%.4f", r.train_loss)
              << " val " << fmt("%.4f", r.val_loss) << std::endl;
  });
  write_output((dir / "loss.csv").string(), bvv::format_loss_csv(trainer.state().history));
  return bvv::summarize(trainer, model, data.val, bvv::loss_threshold(cfg));
}

std::string steps_text(const std::optional<std::uint64_t>& s) {
  return s ? std::to_string(*s) : std::string("not reached");
}

struct TrainArgs {
  std::string resume;
};

bvv::EmbeddingMatrix load_matching_embeddings(const bvv::ExperimentConfig& cfg,
                                              const bvv::Vocab& vocab) {
  bvv::ExperimentConfig::require_files({&cfg.embeddings});
  const auto hash = bvv::vocab_hash(vocab);
  auto loaded = bvv::load_embeddings(cfg.embeddings, &hash);
  if (loaded.vocab_hash_mismatch) {
    throw bvv::Error(ErrorCode::kShapeMismatch,
                     cfg.embeddings + " was built for a different vocabulary");
  }
  const auto want = cfg.embedding_mode == bvv::EmbeddingMode::kFrozenVisual
                        ? bvv::Provenance::kVisual
                        : bvv::Provenance::kRandomBitmap;
  if (loaded.matrix.provenance != want) {
    throw bvv::Error(ErrorCode::kInvalidArgument,
                     cfg.embeddings + " does not hold " + std::string(bvv::to_string(want)) +
                         " embeddings");
  }
  return std::move(loaded.matrix);
}

int cmd_train(const Session& s, const TrainArgs& a) {
  const auto cfg = s.config();
  const auto data = load_data(cfg);
  std::optional<bvv::TrainState> state;
  bvv::Model<float> model(cfg.model_config());
  if (!a.resume.empty()) {
    auto loaded = bvv::load_checkpoint(a.resume);
    if (!loaded.state) throw bvv::Error(ErrorCode::kInvalidArgument, a.resume + " has no training state");
    if (!(loaded.model.config() == cfg.model_config())) {
      throw bvv::Error(ErrorCode::kShapeMismatch, a.resume + " was trained with a different model config");
    }
    model = std::move(loaded.model);
    state = std::move(loaded.state);
  } else {
    std::optional<bvv::EmbeddingMatrix> emb;
    if (cfg.embedding_mode != bvv::EmbeddingMode::kTrainable) {
      emb = load_matching_embeddings(cfg, data.vocab);
    }
    model = bvv::make_model(cfg, cfg.embedding_mode, emb ? &*emb : nullptr);
  }
  const fs::path dir = fs::path(cfg.outdir) / std::string(bvv::to_string(cfg.embedding_mode));
  const auto r = run_training(cfg, s.deterministic, data, model, dir, std::move(state));
  std::cout << "final train loss (mean of last 50) " << fmt("%.4f", r.final_train)
            << ", val perplexity " << fmt("%.3f", r.val_ppl) << ", steps to "
            << fmt("%.3f", bvv::loss_threshold(cfg)) << ": " << steps_text(r.steps_to_threshold)
            << ", skipped steps " << r.skipped << "\n"
            << "wrote " << (dir / "loss.csv").string() << " and "
            << (dir / "checkpoint.bvvc").string() << "\n";
  return 0;
}

int cmd_ablate(const Session& s) {
  const auto base = s.config();
  const auto data = load_data(base);
  bvv::ExperimentConfig::require_files({&base.font});
  const auto font = bvv::load_font_file(base.font);
  const int side = static_cast<int>(base.side);
  const auto visual = bvv::build_visual_embeddings(data.vocab, font, side, base.d_model);
  const auto random = bvv::build_random_embeddings(data.vocab, base.seed, side, base.d_model);

  std::vector<bvv::RunResult> rows;
  for (auto mode : {bvv::EmbeddingMode::kTrainable, bvv::EmbeddingMode::kFrozenVisual,
                    bvv::EmbeddingMode::kFrozenRandom}) {
    auto cfg = base;
    cfg.embedding_mode = mode;
    const auto* emb = mode == bvv::EmbeddingMode::kFrozenVisual   ? &visual
                      : mode == bvv::EmbeddingMode::kFrozenRandom ? &random
                                                                  : nullptr;
    auto model = bvv::make_model(cfg, mode, emb);
    rows.push_back(run_training(cfg, s.deterministic, data, model,
                                fs::path(cfg.outdir) / std::string(bvv::to_string(mode)), {}));
  }

  std::ostringstream csv;
  csv << "mode,final_train_loss,val_perplexity,steps_to_threshold\n";
  std::cout << "\nthreshold " << fmt("%.4f", bvv::loss_threshold(base)) << " (mean of 50 steps)\n"
            << "mode            final_loss  val_ppl    steps_to_threshold\n";
  for (const auto& r : rows) {
    csv << bvv::to_string(r.mode) << "," << fmt("%.6f", r.final_train) << "," << fmt("%.4f", r.val_ppl) << ","
        << (r.steps_to_threshold ? std::to_string(*r.steps_to_threshold) : "") << "\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-15s %10.4f  %9.3f  %s\n", std::string(bvv::to_string(r.mode)).c_str(), r.final_train,
                  r.val_ppl, steps_text(r.steps_to_threshold).c_str());
    std::cout << line;
  }
  const auto& vis = rows[1].steps_to_threshold;
  const auto& rnd = rows[2].steps_to_threshold;
  std::cout << "slowdown random/visual: ";
  if (vis && rnd) {
    std::cout << fmt("%.3f", static_cast<double>(*rnd) / static_cast<double>(*vis)) << "\n";
  } else if (vis) {
    std::cout << "> " << fmt("%.3f", static_cast<double>(base.steps) / static_cast<double>(*vis))
              << " (random never reached the threshold)\n";
  } else {
    std::cout << "undefined (visual never reached the threshold)\n";
  }
  const auto path = (fs::path(base.outdir) / "ablation.csv").string();
  write_output(path, csv.str());
  std::cout << "wrote " << path << "\n";
  return 0;
}

// ------------------------------------------------- evaluation, sampling

struct CkptArgs {
  std::string checkpoint;
  std::string text;
  std::string prompt;
  std::size_t n = 200;
  double temperature = 0.8;
};

int cmd_eval(const Session& s, const CkptArgs& a) {
  const auto cfg = s.config();
  auto model = bvv::load_checkpoint(a.checkpoint).model;
  std::vector<TokenId> tokens;
  if (!a.text.empty()) {
    bvv::ExperimentConfig::require_files({&cfg.vocab});
    tokens = read_vocab(cfg.vocab).encode(read_text(a.text));
  } else {
    tokens = load_data(cfg).val;
  }
  const auto r = bvv::evaluate_nll(model, tokens);
  const double mean = r.sum / static_cast<double>(r.count);
  std::cout << "tokens " << r.count << " mean nll " << fmt("%.6f", mean) << " perplexity "
            << fmt("%.4f", std::exp(mean)) << "\n";
  return 0;
}

int cmd_generate(const Session& s, const CkptArgs& a) {
  const auto cfg = s.config();
  bvv::ExperimentConfig::require_files({&cfg.vocab});
  const auto vocab = read_vocab(cfg.vocab);
  auto model = bvv::load_checkpoint(a.checkpoint).model;
  const auto prompt = vocab.encode(bvv::unicode::decode_utf8(a.prompt));
  const auto out = bvv::generate(model, prompt, a.n, a.temperature, cfg.seed);
  std::cout << a.prompt << vocab.decode_utf8(out, /*lenient=*/true) << "\n";
  return 0;
}

// -------------------------------------------------------------- analysis

std::string csv_text(const std::u32string& text) {
  std::string body;
  for (char32_t c : text) {
    if (c == U'\\') {
      body += "\\\\";
    } else if (c == U'\n') {
      body += "\\n";
    } else if (c == U'\t') {
      body += "\\t";
    } else if (c < 0x20 || c == 0x7F) {
      char buf[12];
      std::snprintf(buf, sizeof buf, "\\u%04X", static_cast<unsigned>(c));
      body += buf;
    } else {
      bvv::unicode::append_utf8(body, c);
    }
  }
  std::string out = "\"";
  for (char ch : body) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

struct ProjectArgs {
  std::string out;
};

int cmd_project2d(const Session& s, const ProjectArgs& a) {
  const auto cfg = s.config();
  bvv::ExperimentConfig::require_files({&cfg.vocab, &cfg.embeddings, &cfg.font});
  const auto vocab = read_vocab(cfg.vocab);
  const auto hash = bvv::vocab_hash(vocab);
  const auto loaded = bvv::load_embeddings(cfg.embeddings, &hash);
  if (loaded.vocab_hash_mismatch) {
    throw bvv::Error(ErrorCode::kShapeMismatch, cfg.embeddings + " was built for a different vocabulary");
  }
  const auto& m = loaded.matrix;
  const int side = m.side != 0 ? static_cast<int>(m.side) : static_cast<int>(cfg.side);
  const auto font = bvv::load_font_file(cfg.font);
  const auto pca = bvv::pca_fit(std::span<const float>(m.rows), m.vocab_size, m.d_model, 2);

  std::ostringstream csv;
  csv << "id,token_text,char_len,x,y,ink_density\n";
  std::vector<double> lens, dens;
  for (std::size_t id = 0; id < m.vocab_size; ++id) {
    const auto& text = vocab.entry(static_cast<TokenId>(id)).text;
    const auto xy = pca.transform(m.row(id));
    const double density = text.empty() ? 0.0 : bvv::ink_density(bvv::token_raw_vector(text, font, side));
    csv << id << "," << csv_text(text) << "," << text.size() << "," << fmt("%.9g", xy[0]) << ","
        << fmt("%.9g", xy[1]) << "," << fmt("%.9g", density) << "\n";
    if (text.size() > 1) {
      lens.push_back(static_cast<double>(text.size()));
      dens.push_back(density);
    }
  }
  const std::string out = a.out.empty() ? (fs::path(cfg.outdir) / "project2d.csv").string() : a.out;
  write_output(out, csv.str());
  std::cout << "wrote " << out << " (" << m.vocab_size << " rows)\n";
  if (lens.size() >= 2) {
    std::cout << "corr(char_len, ink_density) over " << lens.size()
              << " multi-char tokens: " << fmt("%.4f", bvv::pearson(lens, dens)) << "\n";
  }
  return 0;
}

struct StatsArgs {
  std::vector<std::string> files;
};

int cmd_stats(const Session& s, const StatsArgs& a) {
  const auto cfg = s.config();
  bvv::ExperimentConfig::require_files({&cfg.vocab});
  const auto vocab = read_vocab(cfg.vocab);
  auto files = a.files;
  if (files.empty()) files.push_back(cfg.corpus);
  bool all_ok = true;
  for (const auto& f : files) {
    const auto text = read_text(f);
    if (text.empty()) throw bvv::Error(ErrorCode::kEmptyInput, f + " is empty");
    std::size_t lines = 0, good = 0, tokens = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto nl = text.find(U'\n', pos);
      nl = nl == std::u32string::npos ? text.size() : nl + 1;
      const std::u32string_view line(text.data() + pos, nl - pos);
      pos = nl;
      ++lines;
      try {
        const auto ids = vocab.encode(line);
        tokens += ids.size();
        if (vocab.decode(ids) == line) ++good;
      } catch (const bvv::Error&) {
      }
    }
    const bool ok = good == lines;
    all_ok = all_ok && ok;
    std::cout << f << ": chars " << text.size() << " tokens " << tokens << " chars/token "
              << fmt("%.4f", tokens ? static_cast<double>(text.size()) / static_cast<double>(tokens) : 0.0)
              << " round-trip " << (ok ? "OK" : "FAIL") << " "
              << fmt("%.0f", std::floor(100.0 * static_cast<double>(good) / static_cast<double>(lines)))
              << "% (" << good << "/" << lines << " lines)\n";
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual-embedding language model toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Session s;
  std::function<int()> action;
  app.add_option("--config", s.config_path, "key = value config file")->check(CLI::ExistingFile);
  s.key(&app, "--seed", "train.seed", "seed for init, sampling, random bitmaps");
  s.key(&app, "--outdir", "paths.outdir", "directory for run outputs");
  app.add_flag("--deterministic", s.deterministic, "write 0 seconds in loss logs so reruns are byte-identical");

  // Path and model keys shared by most verbs.
  auto paths = [&](CLI::App* sub) {
    s.key(sub, "--font", "paths.font", "Unifont .hex file");
    s.key(sub, "--vocab", "paths.vocab", "JSON Lines vocabulary");
    s.key(sub, "--corpus", "paths.corpus", "UTF-8 training corpus");
    s.key(sub, "--embeddings", "paths.embeddings", "BVVE embedding file");
  };
  auto model_keys = [&](CLI::App* sub) {
    s.key(sub, "--V", "model.vocab_size", "vocabulary size");
    s.key(sub, "--H", "model.H", "bitmap side");
    s.key(sub, "--d", "model.d_model", "embedding width");
    s.key(sub, "--layers", "model.n_layers", "transformer blocks");
    s.key(sub, "--heads", "model.n_heads", "attention heads");
    s.key(sub, "--block", "model.block_size", "context length");
  };
  auto train_keys = [&](CLI::App* sub) {
    s.key(sub, "--lr", "train.lr", "Adam learning rate");
    s.key(sub, "--batch", "train.batch", "sequences per step");
    s.key(sub, "--steps", "train.steps", "optimizer steps");
    s.key(sub, "--accum", "train.accum", "micro-batches per step");
    s.key(sub, "--eval-every", "train.eval_every", "validation interval");
    s.key(sub, "--warmup", "train.warmup", "linear warmup steps");
    s.key(sub, "--val-fraction", "train.val_fraction", "tail of the corpus held out");
    s.key(sub, "--threshold", "train.threshold", "loss for steps-to-threshold (0: 0.5 ln V)");
  };

  VocabArgs va;
  auto* bv = app.add_subcommand("build-vocab", "build a tokenizer vocabulary");
  bv->add_option("--profile", va.profile, "built-in layout size")->check(CLI::IsMember({65536, 131072}));
  bv->add_option("--ngrams", va.ngrams, "n-gram list, one per line, in priority order");
  bv->add_option("--mine", va.mine, "corpus to mine frequent n-grams from");
  bv->add_option("--top", va.top, "number of n-grams to mine");
  bv->add_option("--compact", va.compact, "corpus for a compact vocabulary of model.vocab_size tokens");
  bv->add_option("--import", va.import_path, "external token list, one per line, id = line number");
  bv->add_option("-o,--out", va.out, "output JSONL (default paths.vocab)");
  bv->add_option("--ngrams-out", va.list_out, "also write the final n-gram list");
  s.key(bv, "--V", "model.vocab_size", "compact vocabulary size");
  bv->callback([&] { action = [&] { return cmd_build_vocab(s, va); }; });

  EmbArgs ea;
  auto* be = app.add_subcommand("build-emb", "build a frozen embedding matrix");
  paths(be);
  model_keys(be);
  be->add_flag("--random", ea.random, "random black-and-white bitmaps instead of glyphs");
  be->add_option("-o,--out", ea.out, "output BVVE file (default paths.embeddings)");
  be->callback([&] { action = [&] { return cmd_build_emb(s, ea); }; });

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train one model");
  paths(tr);
  model_keys(tr);
  train_keys(tr);
  s.key(tr, "--mode", "model.embedding_mode", "frozen_visual | frozen_random | trainable");
  tr->add_option("--resume", ta.resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  tr->callback([&] { action = [&] { return cmd_train(s, ta); }; });

  auto* ab = app.add_subcommand("ablate", "train all three embedding modes and compare");
  paths(ab);
  model_keys(ab);
  train_keys(ab);
  ab->callback([&] { action = [&] { return cmd_ablate(s); }; });

  CkptArgs ca;
  auto* ev = app.add_subcommand("eval", "perplexity of a checkpoint");
  paths(ev);
  model_keys(ev);
  s.key(ev, "--val-fraction", "train.val_fraction", "tail of the corpus held out");
  ev->add_option("--checkpoint", ca.checkpoint, "BVVC file")->required()->check(CLI::ExistingFile);
  ev->add_option("--text", ca.text, "evaluate this file instead of the validation split");
  ev->callback([&] { action = [&] { return cmd_eval(s, ca); }; });

  auto* ge = app.add_subcommand("generate", "sample text from a checkpoint");
  paths(ge);
  ge->add_option("--checkpoint", ca.checkpoint, "BVVC file")->required()->check(CLI::ExistingFile);
  ge->add_option("--prompt", ca.prompt, "UTF-8 prompt")->required();
  ge->add_option("-n", ca.n, "tokens to generate");
  ge->add_option("--temperature", ca.temperature, "0 = greedy");
  ge->callback([&] { action = [&] { return cmd_generate(s, ca); }; });

  ProjectArgs pa;
  auto* pr = app.add_subcommand("project2d", "2-D PCA projection of an embedding matrix");
  paths(pr);
  model_keys(pr);
  pr->add_option("-o,--out", pa.out, "output CSV (default outdir/project2d.csv)");
  pr->callback([&] { action = [&] { return cmd_project2d(s, pa); }; });

  StatsArgs sa;
  auto* st = app.add_subcommand("stats", "tokenizer statistics and round-trip check");
  paths(st);
  s.key(st, "--V", "model.vocab_size", "vocabulary size");
  st->add_option("files", sa.files, "UTF-8 files (default paths.corpus)");
  st->callback([&] { action = [&] { return cmd_stats(s, sa); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return action();
  } catch (const bvv::Error& e) {
    std::cerr << "bvv: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "bvv: " << e.what() << "\n";
    return 1;
  }
}
