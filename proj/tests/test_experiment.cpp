#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "dmt/errors.hpp"
#include "dmt/experiment.hpp"

using namespace dmt;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "dmt_experiment_test";
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const std::string& filename, const std::string& text) {
  fs::path p = temp_dir() / filename;
  std::ofstream out(p);
  out << text;
  return p;
}

}  // namespace

TEST_CASE("config files parse keys, comments and defaults") {
  fs::path p = write_file("parse_me.cfg",
                          "# a comment line\n"
                          "task = reverse\n"
                          "\n"
                          "train_size=64\n"
                          "l2 = 12.5\n"
                          "shared_embeddings = false\n"
                          "sweep_l2 = 10,1000,100000\n");
  ExperimentConfig cfg = load_config(p);
  CHECK(cfg.name == "parse_me");  // stem becomes the artifact name
  CHECK(cfg.task == "reverse");
  CHECK(cfg.train_size == 64);
  CHECK(cfg.l2 == 12.5);
  CHECK_FALSE(cfg.shared_embeddings);
  REQUIRE(cfg.sweep_l2.size() == 3);
  CHECK(cfg.sweep_l2[0] == 10.0);
  CHECK(cfg.sweep_l2[2] == 100000.0);
  CHECK(cfg.test_size == 128);  // untouched default

  CHECK_THROWS_AS(load_config(temp_dir() / "missing.cfg"), ConfigError);

  fs::path bad = write_file("bad_line.cfg", "task=copy\nnot a key value line\n");
  CHECK_THROWS_AS(load_config(bad), ConfigError);
}

TEST_CASE("unknown keys and bad values are rejected by name") {
  ExperimentConfig cfg;
  CHECK_THROWS_WITH_AS(set_config_key(cfg, "leerning_rate", "0.1"),
                       doctest::Contains("leerning_rate"), ConfigError);
  CHECK_THROWS_WITH_AS(set_config_key(cfg, "train_size", "lots"),
                       doctest::Contains("train_size"), ConfigError);
  CHECK_THROWS_WITH_AS(set_config_key(cfg, "l2", "ten"), doctest::Contains("l2"),
                       ConfigError);

  set_config_key(cfg, "name", "renamed");
  CHECK(cfg.name == "renamed");
  set_config_key(cfg, "beam_size", "7");
  CHECK(cfg.beam_size == 7);
  set_config_key(cfg, "sweep_selections", "decoder13,decoder,encdec");
  REQUIRE(cfg.sweep_selections.size() == 3);
  CHECK(cfg.sweep_selections[1] == "decoder");
}

TEST_CASE("resolution fills seed-linked defaults and validates") {
  ExperimentConfig cfg;
  cfg.seed = 9;
  resolve_config(cfg);
  CHECK(cfg.finetune_seed == 9);
  CHECK(cfg.base_seed == 9);

  ExperimentConfig explicit_seeds;
  set_config_key(explicit_seeds, "seed", "9");
  set_config_key(explicit_seeds, "finetune_seed", "21");
  set_config_key(explicit_seeds, "base_seed", "33");
  resolve_config(explicit_seeds);
  CHECK(explicit_seeds.finetune_seed == 21);
  CHECK(explicit_seeds.base_seed == 33);

  ExperimentConfig bad_task;
  bad_task.task = "translate";
  CHECK_THROWS_AS(resolve_config(bad_task), ConfigError);

  ExperimentConfig files_missing;
  files_missing.task = "files";
  CHECK_THROWS_AS(resolve_config(files_missing), ConfigError);

  ExperimentConfig bad_sel;
  bad_sel.selection = "everything";
  CHECK_THROWS_AS(resolve_config(bad_sel), ConfigError);

  ExperimentConfig bad_groups;
  bad_groups.groups = 0;
  CHECK_THROWS_AS(resolve_config(bad_groups), ConfigError);

  ExperimentConfig bad_p;
  bad_p.gate_init_p = 1.0;
  CHECK_THROWS_AS(resolve_config(bad_p), ConfigError);

  ExperimentConfig bad_sweep;
  bad_sweep.sweep_selections = {"encdec", "nonsense"};
  CHECK_THROWS_AS(resolve_config(bad_sweep), ConfigError);
}

TEST_CASE("config echo is a complete, reparsable key=value dump") {
  ExperimentConfig cfg;
  cfg.task = "ambiguous";
  cfg.vocab_size = 96;
  cfg.l2 = 12.5;
  cfg.sweep_l2 = {10.0, 1000.0};
  resolve_config(cfg);

  std::string echo = config_echo(cfg);
  ExperimentConfig back;
  std::istringstream lines(echo);
  std::string line;
  int assignments = 0;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    REQUIRE(eq != std::string::npos);
    set_config_key(back, line.substr(0, eq), line.substr(eq + 1));
    ++assignments;
  }
  CHECK(assignments >= 40);  // every public knob appears
  CHECK(back.task == "ambiguous");
  CHECK(back.vocab_size == 96);
  CHECK(back.l2 == 12.5);
  REQUIRE(back.sweep_l2.size() == 2);
  CHECK(back.sweep_l2[1] == 1000.0);
  CHECK(back.base_seed == cfg.base_seed);
}

TEST_CASE("build_data produces synthetic train/test splits") {
  ExperimentConfig cfg;
  cfg.task = "copy";
  cfg.train_size = 40;
  cfg.test_size = 10;
  cfg.vocab_size = 32;
  resolve_config(cfg);

  DataBundle data = build_data(cfg);
  CHECK(data.train.pairs.size() == 40);
  CHECK(data.test.pairs.size() == 10);
  CHECK(data.vocab.size() >= 5);
  CHECK(data.synonym_table.empty());  // copy task has no synonym table

  // held-out sentences come from an offset seed, not from the training draw
  bool same_head = true;
  for (size_t i = 0; i < data.test.pairs.size(); ++i)
    if (data.test.pairs[i].source != data.train.pairs[i].source) same_head = false;
  CHECK_FALSE(same_head);

  for (const auto& pair : data.train.pairs) CHECK(pair.source == pair.target);
  for (const auto& pair : data.test.pairs) CHECK(pair.source == pair.target);
}

TEST_CASE("build_data for the ambiguous task carries the synonym table") {
  ExperimentConfig cfg;
  cfg.task = "ambiguous";
  cfg.train_size = 80;
  cfg.test_size = 8;
  cfg.symbols = 10;
  cfg.synonyms = 3;
  cfg.vocab_size = 64;  // 10 sources + 30 synonyms + reserved
  resolve_config(cfg);

  DataBundle data = build_data(cfg);
  REQUIRE(data.synonym_table.size() == 10);
  for (const auto& [word, alts] : data.synonym_table)
    CHECK(alts.size() == 3);

  // every test reference draws from the same synonym inventory as training,
  // so the vocabulary built on training covers the references
  for (const auto& pair : data.test.pairs)
    for (const auto& tok : pair.target) {
      bool known = data.vocab.id(tok) != Vocab::kUnk;
      CHECK(known);
    }
}

TEST_CASE("build_data reads aligned files when task=files") {
  fs::path src = write_file("train.src", "a b\nc d\n");
  fs::path tgt = write_file("train.tgt", "b a\nd c\n");
  fs::path tsrc = write_file("test.src", "a d\n");
  fs::path ttgt = write_file("test.tgt", "d a\n");

  ExperimentConfig cfg;
  cfg.task = "files";
  cfg.src_file = src.string();
  cfg.tgt_file = tgt.string();
  cfg.test_src_file = tsrc.string();
  cfg.test_tgt_file = ttgt.string();
  cfg.vocab_size = 16;
  resolve_config(cfg);

  DataBundle data = build_data(cfg);
  CHECK(data.train.pairs.size() == 2);
  CHECK(data.test.pairs.size() == 1);
  CHECK(data.train.pairs[0].source == std::vector<std::string>{"a", "b"});
  CHECK(data.test.pairs[0].target == std::vector<std::string>{"d", "a"});
}

TEST_CASE("group evaluation averages BLEU and scores diversity") {
  std::vector<std::vector<std::string>> refs = {{"the", "cat", "sat"},
                                                {"a", "dog", "ran"}};
  std::vector<std::vector<std::vector<std::string>>> identical = {refs, refs, refs};
  EvalResult same = evaluate_groups(identical, refs);
  CHECK(same.bleu == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(same.pairwise_bleu == doctest::Approx(100.0).epsilon(1e-12));
  REQUIRE(same.per_group.size() == 3);

  // one group perfect, one group imperfect: mean sits strictly between
  std::vector<std::vector<std::string>> off = {{"the", "cat", "sat"},
                                               {"a", "dog", "barked"}};
  EvalResult mixed = evaluate_groups({refs, off}, refs);
  CHECK(mixed.bleu < 100.0);
  CHECK(mixed.bleu > 0.0);
  CHECK(mixed.pairwise_bleu < 100.0);

  // a single group has no pairs to compare
  EvalResult solo = evaluate_groups({refs}, refs);
  CHECK(solo.pairwise_bleu == 100.0);

  CHECK_THROWS_AS(evaluate_groups({}, refs), ConfigError);
}
