#include "dmt/experiment.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"

#include "dmt/checkpoint.hpp"
#include "dmt/dropout_gate.hpp"
#include "dmt/errors.hpp"
#include "dmt/importance.hpp"
#include "dmt/rng.hpp"

namespace dmt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// shortest round-trip formatting keeps echoes and CSVs byte-stable
std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

long parse_long(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected integer, got '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  return int(parse_long(key, value));
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected unsigned integer, got '" +
                      value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ConfigError("config key '" + key + "': expected 0/1/true/false, got '" +
                    value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back(sep);
    out += parts[i];
  }
  return out;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string() + " (run the producing command first)");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string echo_comment(const ExperimentConfig& cfg) {
  std::istringstream in(config_echo(cfg));
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) out << "# " << line << "\n";
  return out.str();
}

fs::path artifact(const ExperimentConfig& cfg, const fs::path& out_dir,
                  const std::string& suffix) {
  return out_dir / (cfg.name + suffix);
}

TransformerConfig model_config(const ExperimentConfig& cfg, int vocab) {
  TransformerConfig mc;
  mc.num_layers = cfg.num_layers;
  mc.d_model = cfg.d_model;
  mc.num_heads = cfg.num_heads;
  mc.d_ff = cfg.d_ff;
  mc.vocab_size = vocab;
  mc.max_len = cfg.max_len;
  mc.label_smoothing = cfg.label_smoothing;
  mc.baseline_dropout = cfg.dropout_p;
  mc.shared_embeddings = cfg.shared_embeddings;
  mc.validate();
  return mc;
}

VariationalConfig variational_config(const ExperimentConfig& cfg) {
  VariationalConfig vc;
  vc.l2 = cfg.l2;
  vc.epochs = cfg.epochs;
  vc.learning_rate = cfg.finetune_lr;
  vc.mc_samples = cfg.mc_samples;
  vc.max_tokens = cfg.max_tokens;
  vc.label_smoothing = cfg.finetune_label_smoothing;
  vc.seed = cfg.finetune_seed;
  vc.progress = true;
  return vc;
}

BeamConfig beam_config(const ExperimentConfig& cfg) {
  BeamConfig bc;
  bc.beam_size = cfg.beam_size;
  bc.length_alpha = cfg.length_alpha;
  return bc;
}

std::vector<std::vector<int>> encode_sources(const ParallelCorpus& corpus,
                                             const Vocab& vocab) {
  std::vector<std::vector<int>> out;
  out.reserve(corpus.pairs.size());
  for (const auto& pair : corpus.pairs) out.push_back(encode_tokens(vocab, pair.source));
  return out;
}

std::vector<std::vector<std::string>> reference_tokens(const ParallelCorpus& corpus) {
  std::vector<std::vector<std::string>> out;
  out.reserve(corpus.pairs.size());
  for (const auto& pair : corpus.pairs) out.push_back(pair.target);
  return out;
}

TransformerParams load_params(const ExperimentConfig& cfg, const fs::path& out_dir,
                              const std::string& suffix, Checkpoint* raw = nullptr) {
  fs::path path = artifact(cfg, out_dir, suffix);
  if (!fs::exists(path))
    throw ConfigError("missing checkpoint " + path.string() +
                      " (run the producing command first)");
  Checkpoint ck = Checkpoint::load(path);
  if (raw) *raw = ck;
  return TransformerParams::from_checkpoint(ck);
}

// gates rebuilt from the config selection with logits restored from the
// fine-tuned checkpoint
std::vector<DropoutGate> load_gates(const ExperimentConfig& cfg,
                                    const TransformerParams& params,
                                    const Checkpoint& ck) {
  auto gates = gate_placement(params, GateSelection::preset(cfg.selection),
                              cfg.gate_init_p, cfg.temperature);
  for (auto& gate : gates) {
    std::string name = gate.id.array_name();
    if (!ck.has(name))
      throw ConfigError("checkpoint lacks trained gate '" + name +
                        "'; selection does not match the fine-tuned run");
    Tensor logits = ck.tensor(name);
    if (logits.cols() != gate.logits.cols() || logits.rows() != 1)
      throw ConfigError("gate '" + name + "' has unexpected shape in checkpoint");
    gate.logits = logits;
  }
  return gates;
}

// in-memory fine-tune + generate + evaluate used by the sweep
struct PointResult {
  double bleu = 0.0;
  double pairwise = 0.0;
};

PointResult run_point(const ExperimentConfig& cfg, TransformerParams& params,
                      const DataBundle& data) {
  auto gates = gate_placement(params, GateSelection::preset(cfg.selection),
                              cfg.gate_init_p, cfg.temperature);
  finetune_dropout(params, gates, data.train, data.vocab, variational_config(cfg));

  auto sources = encode_sources(data.test, data.vocab);
  params.set_requires_grad(false);
  auto groups = generate_diverse(sources, params, gates, cfg.groups, cfg.base_seed,
                                 beam_config(cfg));
  params.set_requires_grad(true);

  std::vector<std::vector<std::vector<std::string>>> group_tokens;
  for (const auto& group : groups) {
    std::vector<std::vector<std::string>> sentences;
    for (const auto& tokens : group.sentences)
      sentences.push_back(strip_and_decode(data.vocab, tokens));
    group_tokens.push_back(std::move(sentences));
  }
  EvalResult eval = evaluate_groups(group_tokens, reference_tokens(data.test));
  return {eval.bleu, eval.pairwise_bleu};
}

}  // namespace

void set_config_key(ExperimentConfig& cfg, const std::string& key,
                    const std::string& value) {
  using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"name", [](ExperimentConfig& c, const std::string& v) { c.name = v; }},
      {"task", [](ExperimentConfig& c, const std::string& v) { c.task = v; }},
      {"train_size", [](ExperimentConfig& c, const std::string& v) { c.train_size = parse_int("train_size", v); }},
      {"test_size", [](ExperimentConfig& c, const std::string& v) { c.test_size = parse_int("test_size", v); }},
      {"data_seed", [](ExperimentConfig& c, const std::string& v) { c.data_seed = parse_u64("data_seed", v); }},
      {"symbols", [](ExperimentConfig& c, const std::string& v) { c.symbols = parse_int("symbols", v); }},
      {"synonyms", [](ExperimentConfig& c, const std::string& v) { c.synonyms = parse_int("synonyms", v); }},
      {"min_sent_len", [](ExperimentConfig& c, const std::string& v) { c.min_sent_len = parse_int("min_sent_len", v); }},
      {"max_sent_len", [](ExperimentConfig& c, const std::string& v) { c.max_sent_len = parse_int("max_sent_len", v); }},
      {"src_file", [](ExperimentConfig& c, const std::string& v) { c.src_file = v; }},
      {"tgt_file", [](ExperimentConfig& c, const std::string& v) { c.tgt_file = v; }},
      {"test_src_file", [](ExperimentConfig& c, const std::string& v) { c.test_src_file = v; }},
      {"test_tgt_file", [](ExperimentConfig& c, const std::string& v) { c.test_tgt_file = v; }},
      {"vocab_size", [](ExperimentConfig& c, const std::string& v) { c.vocab_size = parse_int("vocab_size", v); }},
      {"num_layers", [](ExperimentConfig& c, const std::string& v) { c.num_layers = parse_int("num_layers", v); }},
      {"d_model", [](ExperimentConfig& c, const std::string& v) { c.d_model = parse_int("d_model", v); }},
      {"num_heads", [](ExperimentConfig& c, const std::string& v) { c.num_heads = parse_int("num_heads", v); }},
      {"d_ff", [](ExperimentConfig& c, const std::string& v) { c.d_ff = parse_int("d_ff", v); }},
      {"max_len", [](ExperimentConfig& c, const std::string& v) { c.max_len = parse_int("max_len", v); }},
      {"shared_embeddings", [](ExperimentConfig& c, const std::string& v) { c.shared_embeddings = parse_bool("shared_embeddings", v); }},
      {"steps", [](ExperimentConfig& c, const std::string& v) { c.steps = parse_long("steps", v); }},
      {"warmup_steps", [](ExperimentConfig& c, const std::string& v) { c.warmup_steps = parse_int("warmup_steps", v); }},
      {"lr_scale", [](ExperimentConfig& c, const std::string& v) { c.lr_scale = parse_double("lr_scale", v); }},
      {"max_tokens", [](ExperimentConfig& c, const std::string& v) { c.max_tokens = parse_int("max_tokens", v); }},
      {"label_smoothing", [](ExperimentConfig& c, const std::string& v) { c.label_smoothing = parse_double("label_smoothing", v); }},
      {"dropout_p", [](ExperimentConfig& c, const std::string& v) { c.dropout_p = parse_double("dropout_p", v); }},
      {"seed", [](ExperimentConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }},
      {"log_every", [](ExperimentConfig& c, const std::string& v) { c.log_every = parse_int("log_every", v); }},
      {"l2", [](ExperimentConfig& c, const std::string& v) { c.l2 = parse_double("l2", v); }},
      {"epochs", [](ExperimentConfig& c, const std::string& v) { c.epochs = parse_int("epochs", v); }},
      {"finetune_lr", [](ExperimentConfig& c, const std::string& v) { c.finetune_lr = parse_double("finetune_lr", v); }},
      {"mc_samples", [](ExperimentConfig& c, const std::string& v) { c.mc_samples = parse_int("mc_samples", v); }},
      {"finetune_seed", [](ExperimentConfig& c, const std::string& v) {
         c.finetune_seed = parse_u64("finetune_seed", v);
         c.finetune_seed_set = true;
       }},
      {"gate_init_p", [](ExperimentConfig& c, const std::string& v) { c.gate_init_p = parse_double("gate_init_p", v); }},
      {"temperature", [](ExperimentConfig& c, const std::string& v) { c.temperature = parse_double("temperature", v); }},
      {"finetune_label_smoothing", [](ExperimentConfig& c, const std::string& v) { c.finetune_label_smoothing = parse_double("finetune_label_smoothing", v); }},
      {"selection", [](ExperimentConfig& c, const std::string& v) { c.selection = v; }},
      {"groups", [](ExperimentConfig& c, const std::string& v) { c.groups = parse_int("groups", v); }},
      {"base_seed", [](ExperimentConfig& c, const std::string& v) {
         c.base_seed = parse_u64("base_seed", v);
         c.base_seed_set = true;
       }},
      {"beam_size", [](ExperimentConfig& c, const std::string& v) { c.beam_size = parse_int("beam_size", v); }},
      {"length_alpha", [](ExperimentConfig& c, const std::string& v) { c.length_alpha = parse_double("length_alpha", v); }},
      {"sweep_l2", [](ExperimentConfig& c, const std::string& v) {
         c.sweep_l2.clear();
         for (const auto& item : split_list(v))
           c.sweep_l2.push_back(parse_double("sweep_l2", item));
       }},
      {"sweep_selections", [](ExperimentConfig& c, const std::string& v) { c.sweep_selections = split_list(v); }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(cfg, value);
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  ExperimentConfig cfg;
  cfg.name = path.stem().string();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    size_t eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config " + path.string() + ":" + std::to_string(lineno) +
                        ": expected key=value, got '" + text + "'");
    set_config_key(cfg, trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
  }
  return cfg;
}

void resolve_config(ExperimentConfig& cfg) {
  if (!cfg.finetune_seed_set) cfg.finetune_seed = cfg.seed;
  if (!cfg.base_seed_set) cfg.base_seed = cfg.seed;
  if (cfg.name.empty()) throw ConfigError("config key 'name' must not be empty");
  if (cfg.task == "files") {
    if (cfg.src_file.empty() || cfg.tgt_file.empty() || cfg.test_src_file.empty() ||
        cfg.test_tgt_file.empty())
      throw ConfigError("task=files requires src_file, tgt_file, test_src_file and tgt side");
  } else if (cfg.task != "copy" && cfg.task != "reverse" && cfg.task != "ambiguous") {
    throw ConfigError("config key 'task': unknown task '" + cfg.task + "'");
  }
  if (cfg.groups < 1) throw ConfigError("config key 'groups' must be at least 1");
  if (cfg.beam_size < 1) throw ConfigError("config key 'beam_size' must be at least 1");
  if (cfg.gate_init_p <= 0.0 || cfg.gate_init_p >= 1.0)
    throw ConfigError("config key 'gate_init_p' must lie in (0,1)");
  if (cfg.temperature <= 0.0) throw ConfigError("config key 'temperature' must be positive");
  GateSelection::preset(cfg.selection);  // validates the name
  for (const auto& sel : cfg.sweep_selections) GateSelection::preset(sel);
}

std::string config_echo(const ExperimentConfig& cfg) {
  std::ostringstream out;
  auto kv = [&out](const char* key, const std::string& value) {
    out << key << "=" << value << "\n";
  };
  kv("name", cfg.name);
  kv("task", cfg.task);
  kv("train_size", std::to_string(cfg.train_size));
  kv("test_size", std::to_string(cfg.test_size));
  kv("data_seed", std::to_string(cfg.data_seed));
  kv("symbols", std::to_string(cfg.symbols));
  kv("synonyms", std::to_string(cfg.synonyms));
  kv("min_sent_len", std::to_string(cfg.min_sent_len));
  kv("max_sent_len", std::to_string(cfg.max_sent_len));
  kv("src_file", cfg.src_file);
  kv("tgt_file", cfg.tgt_file);
  kv("test_src_file", cfg.test_src_file);
  kv("test_tgt_file", cfg.test_tgt_file);
  kv("vocab_size", std::to_string(cfg.vocab_size));
  kv("num_layers", std::to_string(cfg.num_layers));
  kv("d_model", std::to_string(cfg.d_model));
  kv("num_heads", std::to_string(cfg.num_heads));
  kv("d_ff", std::to_string(cfg.d_ff));
  kv("max_len", std::to_string(cfg.max_len));
  kv("shared_embeddings", cfg.shared_embeddings ? "1" : "0");
  kv("steps", std::to_string(cfg.steps));
  kv("warmup_steps", std::to_string(cfg.warmup_steps));
  kv("lr_scale", fmt_double(cfg.lr_scale));
  kv("max_tokens", std::to_string(cfg.max_tokens));
  kv("label_smoothing", fmt_double(cfg.label_smoothing));
  kv("dropout_p", fmt_double(cfg.dropout_p));
  kv("seed", std::to_string(cfg.seed));
  kv("log_every", std::to_string(cfg.log_every));
  kv("l2", fmt_double(cfg.l2));
  kv("epochs", std::to_string(cfg.epochs));
  kv("finetune_lr", fmt_double(cfg.finetune_lr));
  kv("mc_samples", std::to_string(cfg.mc_samples));
  kv("finetune_seed", std::to_string(cfg.finetune_seed));
  kv("gate_init_p", fmt_double(cfg.gate_init_p));
  kv("temperature", fmt_double(cfg.temperature));
  kv("finetune_label_smoothing", fmt_double(cfg.finetune_label_smoothing));
  kv("selection", cfg.selection);
  kv("groups", std::to_string(cfg.groups));
  kv("base_seed", std::to_string(cfg.base_seed));
  kv("beam_size", std::to_string(cfg.beam_size));
  kv("length_alpha", fmt_double(cfg.length_alpha));
  std::vector<std::string> l2s;
  for (double v : cfg.sweep_l2) l2s.push_back(fmt_double(v));
  kv("sweep_l2", join(l2s, ','));
  kv("sweep_selections", join(cfg.sweep_selections, ','));
  return out.str();
}

DataBundle build_data(const ExperimentConfig& cfg) {
  DataBundle data;
  if (cfg.task == "files") {
    data.train = load_corpus(cfg.src_file, cfg.tgt_file);
    data.test = load_corpus(cfg.test_src_file, cfg.test_tgt_file);
  } else {
    SynthSpec spec;
    spec.task = cfg.task;
    spec.symbols = cfg.symbols;
    spec.synonyms = cfg.synonyms;
    spec.min_len = cfg.min_sent_len;
    spec.max_len = cfg.max_sent_len;
    spec.size = cfg.train_size;
    spec.seed = cfg.data_seed;
    SynthResult train = synth_task_generate(spec);
    spec.size = cfg.test_size;
    spec.seed = cfg.data_seed + 1000003;  // held-out draw, same synonym table
    SynthResult test = synth_task_generate(spec);
    data.train = std::move(train.corpus);
    data.test = std::move(test.corpus);
    data.synonym_table = std::move(train.synonym_table);
  }
  if (data.train.pairs.empty()) throw ConfigError("training corpus is empty");
  if (data.test.pairs.empty()) throw ConfigError("test corpus is empty");
  data.vocab = build_vocab(data.train, cfg.vocab_size);
  return data;
}

EvalResult evaluate_groups(
    const std::vector<std::vector<std::vector<std::string>>>& groups,
    const std::vector<std::vector<std::string>>& references) {
  if (groups.empty()) throw ConfigError("evaluate: no groups");
  EvalResult result;
  for (const auto& group : groups) {
    BleuReport report = corpus_bleu(group, references);
    result.bleu += report.bleu;
    result.per_group.push_back(report);
  }
  result.bleu /= double(groups.size());
  result.pairwise_bleu = groups.size() > 1 ? pairwise_bleu(groups) : 100.0;
  return result;
}

void cmd_pretrain(const ExperimentConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  DataBundle data = build_data(cfg);

  TransformerParams params =
      TransformerParams::init(model_config(cfg, data.vocab.size()), cfg.seed);

  PretrainConfig pc;
  pc.steps = cfg.steps;
  pc.warmup_steps = cfg.warmup_steps;
  pc.lr_scale = cfg.lr_scale;
  pc.max_tokens = cfg.max_tokens;
  pc.seed = cfg.seed;
  pc.log_every = cfg.log_every;
  pc.progress = true;
  auto log = pretrain(params, data.train, data.vocab, pc);

  params.to_checkpoint().save(artifact(cfg, out_dir, ".dmt1"));
  data.vocab.save(artifact(cfg, out_dir, ".vocab"));

  std::ostringstream csv;
  csv << echo_comment(cfg) << "step,loss\n";
  for (const auto& row : log)
    csv << row.step << "," << fmt_double(row.loss) << "\n";
  write_text(artifact(cfg, out_dir, ".train.csv"), csv.str());

  std::ostringstream src, ref;
  for (const auto& pair : data.test.pairs) {
    src << detokenize(pair.source) << "\n";
    ref << detokenize(pair.target) << "\n";
  }
  write_text(artifact(cfg, out_dir, ".src.txt"), src.str());
  write_text(artifact(cfg, out_dir, ".ref.txt"), ref.str());

  if (!data.synonym_table.empty()) {
    std::ostringstream syn;
    for (const auto& [word, alts] : data.synonym_table)
      syn << word << " " << join(alts, ' ') << "\n";
    write_text(artifact(cfg, out_dir, ".synonyms.txt"), syn.str());
  }
}

void cmd_finetune(const ExperimentConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  TransformerParams params = load_params(cfg, out_dir, ".dmt1");
  Vocab vocab = Vocab::load(artifact(cfg, out_dir, ".vocab"));
  DataBundle data = build_data(cfg);

  auto gates = gate_placement(params, GateSelection::preset(cfg.selection),
                              cfg.gate_init_p, cfg.temperature);
  auto log = finetune_dropout(params, gates, data.train, vocab, variational_config(cfg));

  Checkpoint ck = params.to_checkpoint();
  for (const auto& gate : gates) ck.add(gate.id.array_name(), gate.logits);
  ck.save(artifact(cfg, out_dir, ".ft.dmt1"));

  std::ostringstream csv;
  csv << echo_comment(cfg) << "epoch,nll,kl";
  if (!log.empty())
    for (const auto& [kind, p] : log.front().mean_p) csv << ",mean_p_" << kind;
  csv << "\n";
  for (const auto& row : log) {
    csv << row.epoch << "," << fmt_double(row.nll) << "," << fmt_double(row.kl);
    for (const auto& [kind, p] : row.mean_p) csv << "," << fmt_double(p);
    csv << "\n";
  }
  write_text(artifact(cfg, out_dir, ".ft.csv"), csv.str());
}

void cmd_generate(const ExperimentConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  Checkpoint raw;
  TransformerParams params = load_params(cfg, out_dir, ".ft.dmt1", &raw);
  Vocab vocab = Vocab::load(artifact(cfg, out_dir, ".vocab"));
  auto gates = load_gates(cfg, params, raw);
  DataBundle data = build_data(cfg);

  params.set_requires_grad(false);
  auto sources = encode_sources(data.test, vocab);
  auto groups = generate_diverse(sources, params, gates, cfg.groups, cfg.base_seed,
                                 beam_config(cfg));

  std::ostringstream manifest;
  for (const auto& group : groups) {
    std::ostringstream text;
    for (const auto& tokens : group.sentences)
      text << detokenize(strip_and_decode(vocab, tokens)) << "\n";
    write_text(artifact(cfg, out_dir, ".group" + std::to_string(group.group) + ".txt"),
               text.str());
    json line = {{"g", group.group}, {"seed", group.seed}, {"beam_size", cfg.beam_size}};
    manifest << line.dump() << "\n";
  }
  write_text(artifact(cfg, out_dir, ".manifest.jsonl"), manifest.str());
}

void cmd_evaluate(const ExperimentConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  DataBundle data = build_data(cfg);

  std::vector<std::vector<std::vector<std::string>>> groups;
  for (int g = 1; g <= cfg.groups; ++g) {
    auto lines = read_lines(artifact(cfg, out_dir, ".group" + std::to_string(g) + ".txt"));
    if (lines.size() != data.test.pairs.size())
      throw ConfigError("group " + std::to_string(g) + " has " +
                        std::to_string(lines.size()) + " lines, expected " +
                        std::to_string(data.test.pairs.size()));
    std::vector<std::vector<std::string>> sentences;
    for (const auto& line : lines) sentences.push_back(tokenize(line));
    groups.push_back(std::move(sentences));
  }

  EvalResult eval = evaluate_groups(groups, reference_tokens(data.test));

  json report;
  report["bleu"] = eval.bleu;
  report["pairwise_bleu"] = eval.pairwise_bleu;
  report["groups"] = cfg.groups;
  std::array<double, 4> mean_prec = {0, 0, 0, 0};
  double mean_bp = 0.0;
  json per_group = json::array();
  for (const auto& rep : eval.per_group) {
    for (size_t n = 0; n < 4; ++n) mean_prec[n] += rep.precisions[n];
    mean_bp += rep.brevity_penalty;
    per_group.push_back({{"bleu", rep.bleu},
                         {"precisions", rep.precisions},
                         {"bp", rep.brevity_penalty}});
  }
  for (auto& p : mean_prec) p /= double(eval.per_group.size());
  mean_bp /= double(eval.per_group.size());
  report["precisions"] = mean_prec;
  report["bp"] = mean_bp;
  report["per_group"] = per_group;
  json cfg_json;
  std::istringstream echo(config_echo(cfg));
  std::string line;
  while (std::getline(echo, line)) {
    size_t eq = line.find('=');
    cfg_json[line.substr(0, eq)] = line.substr(eq + 1);
  }
  report["config"] = cfg_json;
  write_text(artifact(cfg, out_dir, ".metrics.json"), report.dump(2) + "\n");
}

void cmd_sweep(const ExperimentConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<double> l2s = cfg.sweep_l2.empty() ? std::vector<double>{cfg.l2}
                                                 : cfg.sweep_l2;
  std::vector<std::string> selections = cfg.sweep_selections.empty()
                                            ? std::vector<std::string>{cfg.selection}
                                            : cfg.sweep_selections;
  if (l2s.size() * selections.size() < 2)
    throw ConfigError("sweep needs at least 2 points (selection x l2)");

  TransformerParams params = load_params(cfg, out_dir, ".dmt1");
  Vocab vocab = Vocab::load(artifact(cfg, out_dir, ".vocab"));
  DataBundle data = build_data(cfg);
  data.vocab = vocab;

  std::ostringstream csv;
  csv << echo_comment(cfg) << "selection,l2,bleu,pairwise_bleu\n";
  for (const auto& selection : selections) {
    for (double l2 : l2s) {
      ExperimentConfig point = cfg;
      point.selection = selection;
      point.l2 = l2;
      try {
        PointResult res = run_point(point, params, data);
        csv << selection << "," << fmt_double(l2) << "," << fmt_double(res.bleu)
            << "," << fmt_double(res.pairwise) << "\n";
      } catch (const std::exception&) {
        csv << selection << "," << fmt_double(l2) << ",error,error\n";
      }
    }
  }
  write_text(artifact(cfg, out_dir, ".sweep.csv"), csv.str());
}

void cmd_analyze(const ExperimentConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  Checkpoint raw;
  TransformerParams params = load_params(cfg, out_dir, ".ft.dmt1", &raw);
  Vocab vocab = Vocab::load(artifact(cfg, out_dir, ".vocab"));
  auto gates = load_gates(cfg, params, raw);
  DataBundle data = build_data(cfg);

  params.set_requires_grad(false);
  auto sources = encode_sources(data.test, vocab);
  ModuleImportanceReport report = importance_report(
      sources, reference_tokens(data.test), params, vocab, gates, beam_config(cfg));

  std::map<std::string, int> layer_counts;
  for (const auto& row : report.rows) layer_counts[row.id.kind_name()] += 1;
  std::ostringstream warnings;
  for (const auto& [kind, count] : layer_counts)
    if (count < 2)
      warnings << "# warning: kind '" << kind
               << "' has a single gate; correlation omitted\n";
  for (const auto& [kind, reason] : report.rho_omitted)
    warnings << "# warning: kind '" << kind << "' correlation omitted: " << reason
             << "\n";

  write_text(artifact(cfg, out_dir, ".analysis.txt"),
             echo_comment(cfg) + warnings.str() + format_importance_table(report));
  write_text(artifact(cfg, out_dir, ".analysis.csv"),
             echo_comment(cfg) + importance_csv(report));
}

}  // namespace dmt
