#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dmt/data.hpp"
#include "dmt/inference.hpp"
#include "dmt/metrics.hpp"
#include "dmt/transformer.hpp"
#include "dmt/variational.hpp"

namespace dmt {

// Resolved run configuration, read from key=value lines ("#" comments).
// Unknown keys are rejected; every artifact embeds the resolved echo.
struct ExperimentConfig {
  std::string name = "run";  // artifact stem inside the output directory

  // data: synthetic task or aligned text files (task=files)
  std::string task = "copy";
  int train_size = 2000;
  int test_size = 128;
  uint64_t data_seed = 11;
  int symbols = 20;
  int synonyms = 3;
  int min_sent_len = 4;
  int max_sent_len = 12;
  std::string src_file, tgt_file, test_src_file, test_tgt_file;
  int vocab_size = 64;

  // model
  int num_layers = 2;
  int d_model = 32;
  int num_heads = 2;
  int d_ff = 64;
  int max_len = 64;
  bool shared_embeddings = true;

  // pre-training
  long steps = 1500;
  int warmup_steps = 400;
  double lr_scale = 1.0;
  int max_tokens = 512;
  double label_smoothing = 0.1;
  double dropout_p = 0.1;
  uint64_t seed = 1;
  int log_every = 10;

  // variational fine-tuning
  double l2 = 100.0;
  int epochs = 5;
  double finetune_lr = 1e-3;
  int mc_samples = 1;
  uint64_t finetune_seed = 0;  // follows seed unless set explicitly
  double gate_init_p = 0.1;
  double temperature = 0.1;
  double finetune_label_smoothing = 0.0;
  std::string selection = "encdec";

  // generation and evaluation
  int groups = 5;
  uint64_t base_seed = 0;  // follows seed unless set explicitly
  int beam_size = 4;
  double length_alpha = 1.0;

  // sweep axes; empty sweep_l2 falls back to {l2}, empty sweep_selections
  // to {selection}
  std::vector<double> sweep_l2;
  std::vector<std::string> sweep_selections;

  bool finetune_seed_set = false;
  bool base_seed_set = false;
};

ExperimentConfig load_config(const std::filesystem::path& path);

// applies one key=value assignment; unknown key or bad value -> ConfigError
void set_config_key(ExperimentConfig& cfg, const std::string& key,
                    const std::string& value);

// fills dependent defaults and validates cross-field constraints
void resolve_config(ExperimentConfig& cfg);

// fully resolved key=value lines in a fixed order
std::string config_echo(const ExperimentConfig& cfg);

// train/test corpora plus the vocabulary built on the training side
struct DataBundle {
  ParallelCorpus train;
  ParallelCorpus test;
  Vocab vocab;
  std::vector<std::pair<std::string, std::vector<std::string>>> synonym_table;
};

DataBundle build_data(const ExperimentConfig& cfg);

// group-level evaluation shared by cmd_evaluate and cmd_sweep
struct EvalResult {
  double bleu = 0.0;          // mean corpus BLEU across groups
  double pairwise_bleu = 0.0;
  std::vector<BleuReport> per_group;
};

EvalResult evaluate_groups(
    const std::vector<std::vector<std::vector<std::string>>>& groups,
    const std::vector<std::vector<std::string>>& references);

// Commands behind the CLI subcommands. Each reads/writes artifacts named
// <out_dir>/<name>.<suffix> and throws ConfigError (usage, exit 2) or
// NumericError (numeric failure, exit 3).
void cmd_pretrain(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void cmd_finetune(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void cmd_generate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void cmd_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void cmd_analyze(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace dmt
