#include "dmt/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "dmt/errors.hpp"
#include "dmt/rng.hpp"

namespace dmt {

std::string lowercase(std::string s) {
  for (auto& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream in(lowercase(line));
  std::vector<std::string> tokens;
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

ParallelCorpus load_corpus(const std::filesystem::path& src_path,
                           const std::filesystem::path& tgt_path, int max_len) {
  std::ifstream src(src_path), tgt(tgt_path);
  if (!src) throw ConfigError("corpus: cannot open source file: " + src_path.string());
  if (!tgt) throw ConfigError("corpus: cannot open target file: " + tgt_path.string());
  ParallelCorpus corpus;
  corpus.provenance = "files:" + src_path.string() + "," + tgt_path.string();
  std::string sline, tline;
  while (true) {
    bool got_s = bool(std::getline(src, sline));
    bool got_t = bool(std::getline(tgt, tline));
    if (!got_s && !got_t) break;
    if (got_s != got_t)
      throw ConfigError("corpus: line counts differ between " + src_path.string() +
                        " and " + tgt_path.string());
    SentencePair pair{tokenize(sline), tokenize(tline)};
    if (pair.source.empty() || pair.target.empty()) continue;
    if (int(pair.source.size()) > max_len || int(pair.target.size()) > max_len)
      continue;
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

Vocab::Vocab() {
  add("<pad>");
  add("<bos>");
  add("<eos>");
  add("<unk>");
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size())
    throw std::invalid_argument("vocab: id " + std::to_string(id) + " out of range");
  return id_to_token_[size_t(id)];
}

void Vocab::add(const std::string& token) {
  if (token_to_id_.count(token)) return;
  token_to_id_[token] = size();
  id_to_token_.push_back(token);
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("vocab: cannot open for writing: " + path.string());
  out << "# one token per line; token id = line index + 4\n";
  out << "# ids 0..3 are reserved: <pad> <bos> <eos> <unk>\n";
  for (int i = 4; i < size(); ++i) out << id_to_token_[size_t(i)] << "\n";
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("vocab: cannot open: " + path.string());
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    v.add(line);
  }
  return v;
}

Vocab build_vocab(const ParallelCorpus& corpus, int max_size) {
  if (max_size < 5)
    throw ConfigError("vocab: size " + std::to_string(max_size) +
                      " leaves no room for content tokens (minimum is 5)");
  std::map<std::string, long> freq;  // ordered map gives the lexicographic tie-break
  for (const auto& pair : corpus.pairs) {
    for (const auto& t : pair.source) ++freq[t];
    for (const auto& t : pair.target) ++freq[t];
  }
  std::vector<std::pair<std::string, long>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  int room = max_size - 4;
  for (int i = 0; i < room && i < int(ranked.size()); ++i) v.add(ranked[size_t(i)].first);
  return v;
}

std::vector<int> encode_tokens(const Vocab& vocab, std::span<const std::string> tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id(t));
  return ids;
}

std::vector<std::string> decode_tokens(const Vocab& vocab, std::span<const int> ids) {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int id : ids) tokens.push_back(vocab.token(id));
  return tokens;
}

namespace {

std::string symbol_name(const char* stem, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%02d", stem, i);
  return buf;
}

}  // namespace

SynthResult synth_task_generate(const SynthSpec& spec) {
  if (spec.task != "copy" && spec.task != "reverse" && spec.task != "ambiguous")
    throw ConfigError("synthetic task '" + spec.task +
                      "' unknown (expected copy, reverse or ambiguous)");
  if (spec.size <= 0) throw ConfigError("synthetic task: size must be positive");
  if (spec.symbols <= 0) throw ConfigError("synthetic task: symbols must be positive");
  if (spec.min_len <= 0 || spec.max_len < spec.min_len)
    throw ConfigError("synthetic task: bad sentence length range");
  if (spec.task == "ambiguous" && spec.synonyms < 2)
    throw ConfigError("synthetic task: ambiguous needs at least 2 synonyms");

  SynthResult result;
  std::vector<std::string> alphabet;
  for (int i = 0; i < spec.symbols; ++i) alphabet.push_back(symbol_name("w", i));

  if (spec.task == "ambiguous") {
    for (int i = 0; i < spec.symbols; ++i) {
      std::vector<std::string> syns;
      for (int k = 0; k < spec.synonyms; ++k)
        syns.push_back(symbol_name("w", i) + std::string(1, char('a' + k)));
      result.synonym_table.emplace_back(alphabet[size_t(i)], std::move(syns));
    }
  }

  rng::Stream stream(rng::mix(spec.seed, rng::fnv1a64(spec.task)));
  result.corpus.provenance = "synthetic:" + spec.task +
                             " seed=" + std::to_string(spec.seed) +
                             " size=" + std::to_string(spec.size);
  for (int n = 0; n < spec.size; ++n) {
    int len = spec.min_len + stream.below(spec.max_len - spec.min_len + 1);
    SentencePair pair;
    for (int t = 0; t < len; ++t)
      pair.source.push_back(alphabet[size_t(stream.below(spec.symbols))]);
    if (spec.task == "copy") {
      pair.target = pair.source;
    } else if (spec.task == "reverse") {
      pair.target.assign(pair.source.rbegin(), pair.source.rend());
    } else {
      for (const auto& s : pair.source) {
        int sym = std::stoi(s.substr(1));
        const auto& syns = result.synonym_table[size_t(sym)].second;
        pair.target.push_back(syns[size_t(stream.below(spec.synonyms))]);
      }
    }
    result.corpus.pairs.push_back(std::move(pair));
  }
  return result;
}

std::vector<Batch> make_batches(const ParallelCorpus& corpus, const Vocab& vocab,
                                int max_tokens, uint64_t seed) {
  if (max_tokens <= 0) throw ConfigError("batching: max_tokens must be positive");

  std::vector<size_t> order(corpus.pairs.size());
  std::iota(order.begin(), order.end(), size_t(0));
  rng::Stream stream(rng::mix(seed, 0xBA7C4));
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[size_t(stream.below(int(i)))]);

  std::vector<Batch> batches;
  std::vector<size_t> current;
  int current_max_tgt = 0;

  auto flush = [&] {
    if (current.empty()) return;
    Batch b;
    int max_src = 0, max_tgt = 0;
    for (size_t idx : current) {
      max_src = std::max(max_src, int(corpus.pairs[idx].source.size()));
      max_tgt = std::max(max_tgt, int(corpus.pairs[idx].target.size()));
    }
    for (size_t idx : current) {
      const auto& pair = corpus.pairs[idx];
      auto src = encode_tokens(vocab, pair.source);
      auto tgt = encode_tokens(vocab, pair.target);
      b.token_count += long(tgt.size());
      std::vector<uint8_t> smask(max_src, 0), tmask(max_tgt, 0);
      std::fill(smask.begin(), smask.begin() + long(src.size()), uint8_t(1));
      std::fill(tmask.begin(), tmask.begin() + long(tgt.size()), uint8_t(1));
      src.resize(size_t(max_src), Vocab::kPad);
      tgt.resize(size_t(max_tgt), Vocab::kPad);
      b.source.push_back(std::move(src));
      b.target.push_back(std::move(tgt));
      b.source_mask.push_back(std::move(smask));
      b.target_mask.push_back(std::move(tmask));
    }
    batches.push_back(std::move(b));
    current.clear();
    current_max_tgt = 0;
  };

  for (size_t idx : order) {
    int tgt_len = int(corpus.pairs[idx].target.size());
    if (tgt_len > max_tokens)
      throw ConfigError("batching: sentence " + std::to_string(idx) + " ('" +
                        detokenize(corpus.pairs[idx].target) + "') has " +
                        std::to_string(tgt_len) + " target tokens, over the " +
                        std::to_string(max_tokens) + " token budget");
    int new_max = std::max(current_max_tgt, tgt_len);
    long padded = long(current.size() + 1) * new_max;
    if (!current.empty() && padded > max_tokens) flush();
    current.push_back(idx);
    current_max_tgt = std::max(current_max_tgt, tgt_len);
  }
  flush();
  return batches;
}

long corpus_target_tokens(const ParallelCorpus& corpus) {
  long n = 0;
  for (const auto& pair : corpus.pairs) n += long(pair.target.size());
  return n;
}

std::vector<int> unpadded_row(const std::vector<int>& row,
                              const std::vector<uint8_t>& mask) {
  std::vector<int> out;
  for (size_t i = 0; i < row.size(); ++i)
    if (mask[i]) out.push_back(row[i]);
  return out;
}

}  // namespace dmt
