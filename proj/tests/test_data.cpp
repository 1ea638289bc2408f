#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "dmt/data.hpp"
#include "dmt/errors.hpp"
#include "dmt/rng.hpp"

using namespace dmt;
namespace fs = std::filesystem;

TEST_CASE("tokenize lowercases and splits on whitespace") {
  auto tokens = tokenize("  Hello\tWORLD  foo ");
  REQUIRE(tokens.size() == 3);
  CHECK(tokens[0] == "hello");
  CHECK(tokens[1] == "world");
  CHECK(tokens[2] == "foo");
  CHECK(detokenize(tokens) == "hello world foo");
  CHECK(tokenize("").empty());
}

TEST_CASE("vocab reserved ids and unknown fallback") {
  Vocab v;
  CHECK(v.size() == 4);
  CHECK(v.token(Vocab::kPad) == "<pad>");
  CHECK(v.token(Vocab::kBos) == "<bos>");
  CHECK(v.token(Vocab::kEos) == "<eos>");
  CHECK(v.token(Vocab::kUnk) == "<unk>");
  CHECK(v.id("never-seen") == Vocab::kUnk);

  v.add("apple");
  CHECK(v.id("apple") == 4);
  CHECK(v.token(4) == "apple");
}

TEST_CASE("build_vocab keeps most frequent tokens, ties lexicographic") {
  ParallelCorpus corpus;
  // counts: b=3, a=3, c=2 over both sides
  corpus.pairs.push_back({{"b", "a"}, {"b", "a"}});
  corpus.pairs.push_back({{"b", "c"}, {"a", "c"}});
  Vocab v = build_vocab(corpus, 6);  // room for exactly 2 content tokens
  CHECK(v.size() == 6);
  CHECK(v.id("a") == 4);  // tie with b broken lexicographically
  CHECK(v.id("b") == 5);
  CHECK(v.id("c") == Vocab::kUnk);

  CHECK_THROWS_AS(build_vocab(corpus, 4), ConfigError);
}

TEST_CASE("vocab save/load round-trip") {
  ParallelCorpus corpus;
  corpus.pairs.push_back({{"x", "y", "z"}, {"x"}});
  Vocab v = build_vocab(corpus, 16);
  fs::path path = fs::temp_directory_path() / "dmt_vocab_test.vocab";
  v.save(path);
  Vocab back = Vocab::load(path);
  CHECK(back.size() == v.size());
  for (int id = 0; id < v.size(); ++id) CHECK(back.token(id) == v.token(id));
  fs::remove(path);
}

TEST_CASE("encode/decode round-trip through ids") {
  ParallelCorpus corpus;
  corpus.pairs.push_back({{"foo", "bar"}, {"foo"}});
  Vocab v = build_vocab(corpus, 8);
  std::vector<std::string> tokens = {"foo", "bar", "baz"};
  auto ids = encode_tokens(v, tokens);
  REQUIRE(ids.size() == 3);
  CHECK(ids[2] == Vocab::kUnk);
  auto back = decode_tokens(v, ids);
  CHECK(back[0] == "foo");
  CHECK(back[2] == "<unk>");
}

TEST_CASE("load_corpus filters long and empty pairs") {
  fs::path src = fs::temp_directory_path() / "dmt_corpus_src.txt";
  fs::path tgt = fs::temp_directory_path() / "dmt_corpus_tgt.txt";
  {
    std::ofstream s(src), t(tgt);
    s << "A b c\n\nlong line\nok\n";
    t << "x y\n\nok\nok\n";
  }
  ParallelCorpus corpus = load_corpus(src, tgt, 2);
  // "a b c" exceeds max_len 2; empty line dropped; "long line" fits
  REQUIRE(corpus.pairs.size() == 2);
  CHECK(corpus.pairs[0].source[0] == "long");
  CHECK(corpus.pairs[1].source[0] == "ok");
  fs::remove(src);
  fs::remove(tgt);
}

TEST_CASE("synthetic tasks are deterministic under the seed") {
  SynthSpec spec;
  spec.task = "reverse";
  spec.size = 50;
  spec.seed = 42;
  auto a = synth_task_generate(spec);
  auto b = synth_task_generate(spec);
  REQUIRE(a.corpus.pairs.size() == 50);
  for (size_t i = 0; i < 50; ++i) {
    CHECK(a.corpus.pairs[i].source == b.corpus.pairs[i].source);
    CHECK(a.corpus.pairs[i].target == b.corpus.pairs[i].target);
  }
  spec.seed = 43;
  auto c = synth_task_generate(spec);
  bool any_diff = false;
  for (size_t i = 0; i < 50; ++i)
    if (a.corpus.pairs[i].source != c.corpus.pairs[i].source) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("copy and reverse tasks hold their defining relation") {
  SynthSpec spec;
  spec.size = 30;
  spec.seed = 7;

  spec.task = "copy";
  for (const auto& pair : synth_task_generate(spec).corpus.pairs)
    CHECK(pair.target == pair.source);

  spec.task = "reverse";
  for (const auto& pair : synth_task_generate(spec).corpus.pairs) {
    auto reversed = pair.source;
    std::reverse(reversed.begin(), reversed.end());
    CHECK(pair.target == reversed);
  }
}

TEST_CASE("ambiguous task draws synonyms uniformly from a fixed table") {
  SynthSpec spec;
  spec.task = "ambiguous";
  spec.size = 1500;
  spec.seed = 9;
  auto result = synth_task_generate(spec);
  REQUIRE(result.synonym_table.size() == size_t(spec.symbols));

  std::map<std::string, std::set<std::string>> allowed;
  for (const auto& [word, syns] : result.synonym_table) {
    CHECK(syns.size() == size_t(spec.synonyms));
    allowed[word] = std::set<std::string>(syns.begin(), syns.end());
  }

  long total = 0, first_synonym = 0;
  for (const auto& pair : result.corpus.pairs) {
    REQUIRE(pair.target.size() == pair.source.size());
    for (size_t t = 0; t < pair.source.size(); ++t) {
      CHECK(allowed[pair.source[t]].count(pair.target[t]) == 1);
      ++total;
      if (pair.target[t].back() == 'a') ++first_synonym;
    }
  }
  // uniform choice over 3 synonyms: frequency of the first within 4 sigma
  double frac = double(first_synonym) / double(total);
  double sigma = std::sqrt((1.0 / 3.0) * (2.0 / 3.0) / double(total));
  CHECK(std::fabs(frac - 1.0 / 3.0) < 4.0 * sigma);

  // the table is a pure function of symbols/synonyms, not the seed
  spec.seed = 10;
  auto other = synth_task_generate(spec);
  CHECK(other.synonym_table == result.synonym_table);
}

TEST_CASE("synthetic task input validation") {
  SynthSpec spec;
  spec.task = "unknown";
  CHECK_THROWS_AS(synth_task_generate(spec), ConfigError);
  spec.task = "copy";
  spec.size = 0;
  CHECK_THROWS_AS(synth_task_generate(spec), ConfigError);
  spec.size = 10;
  spec.min_len = 5;
  spec.max_len = 4;
  CHECK_THROWS_AS(synth_task_generate(spec), ConfigError);
}

TEST_CASE("single sentence with ample budget forms one batch") {
  ParallelCorpus corpus;
  corpus.pairs.push_back({{"a", "b"}, {"c", "d", "e"}});
  Vocab v = build_vocab(corpus, 16);
  auto batches = make_batches(corpus, v, 100, 1);
  REQUIRE(batches.size() == 1);
  CHECK(batches[0].size() == 1);
  CHECK(batches[0].token_count == 3);
}

TEST_CASE("over-budget sentence is an input error naming the sentence") {
  ParallelCorpus corpus;
  corpus.pairs.push_back({{"a"}, {"x", "y", "z", "w"}});
  Vocab v = build_vocab(corpus, 16);
  CHECK_THROWS_AS(make_batches(corpus, v, 3, 1), ConfigError);
}

TEST_CASE("batching partitions the corpus within budget across 1k random corpora") {
  for (uint64_t seed = 1; seed <= 1000; ++seed) {
    rng::Stream stream(seed);
    SynthSpec spec;
    spec.task = "copy";
    spec.size = 1 + stream.below(30);
    spec.seed = seed;
    spec.min_len = 1 + stream.below(4);
    spec.max_len = spec.min_len + stream.below(8);
    auto corpus = synth_task_generate(spec).corpus;
    Vocab v = build_vocab(corpus, 64);
    int max_tokens = 16 + stream.below(64);

    bool oversized = false;
    for (const auto& pair : corpus.pairs)
      if (int(pair.target.size()) > max_tokens) oversized = true;
    if (oversized) continue;

    auto batches = make_batches(corpus, v, max_tokens, seed * 31);

    long seen_tokens = 0;
    size_t seen_rows = 0;
    std::multiset<std::vector<int>> seen_sources;
    for (const auto& batch : batches) {
      REQUIRE(batch.size() > 0);
      size_t padded_tgt = batch.target[0].size();
      // budget respected on padded target tokens
      CHECK(long(batch.target.size() * padded_tgt) <= max_tokens);
      long batch_tokens = 0;
      for (int r = 0; r < batch.size(); ++r) {
        CHECK(batch.target[size_t(r)].size() == padded_tgt);
        auto src = unpadded_row(batch.source[size_t(r)], batch.source_mask[size_t(r)]);
        auto tgt = unpadded_row(batch.target[size_t(r)], batch.target_mask[size_t(r)]);
        batch_tokens += long(tgt.size());
        seen_sources.insert(src);
        ++seen_rows;
      }
      CHECK(batch_tokens == batch.token_count);
      seen_tokens += batch.token_count;
    }
    // every sentence exactly once and token counts partition the corpus
    CHECK(seen_rows == corpus.pairs.size());
    CHECK(seen_tokens == corpus_target_tokens(corpus));
    std::multiset<std::vector<int>> expect_sources;
    for (const auto& pair : corpus.pairs)
      expect_sources.insert(encode_tokens(v, pair.source));
    CHECK(seen_sources == expect_sources);
  }
}

TEST_CASE("batch shuffling is deterministic per seed and varies across seeds") {
  SynthSpec spec;
  spec.task = "copy";
  spec.size = 64;
  spec.seed = 3;
  auto corpus = synth_task_generate(spec).corpus;
  Vocab v = build_vocab(corpus, 64);

  auto a = make_batches(corpus, v, 64, 1);
  auto b = make_batches(corpus, v, 64, 1);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].source == b[i].source);

  auto c = make_batches(corpus, v, 64, 2);
  bool differs = a.size() != c.size();
  for (size_t i = 0; !differs && i < a.size(); ++i)
    if (a[i].source != c[i].source) differs = true;
  CHECK(differs);
}
