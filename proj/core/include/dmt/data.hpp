#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dmt {

// Whitespace tokenization over lowercased text.
std::vector<std::string> tokenize(const std::string& line);
std::string lowercase(std::string s);
std::string detokenize(std::span<const std::string> tokens);

struct SentencePair {
  std::vector<std::string> source;
  std::vector<std::string> target;
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;
  std::string provenance;  // file paths or generator spec plus seed
};

// Reads two aligned files, lowercases, tokenizes, drops pairs where either
// side is empty or longer than max_len tokens.
ParallelCorpus load_corpus(const std::filesystem::path& src_path,
                           const std::filesystem::path& tgt_path,
                           int max_len = 100);

// Token ids. The first four ids are reserved and fixed.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocab();

  int size() const { return int(id_to_token_.size()); }
  int id(const std::string& token) const;  // unknown tokens map to kUnk
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  void add(const std::string& token);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

// K-4 most frequent tokens over both sides plus the reserved ids; frequency
// ties break lexicographically. K < 5 leaves no room for content tokens.
Vocab build_vocab(const ParallelCorpus& corpus, int max_size);

std::vector<int> encode_tokens(const Vocab& vocab, std::span<const std::string> tokens);
std::vector<std::string> decode_tokens(const Vocab& vocab, std::span<const int> ids);

// Synthetic task generator. Tasks: "copy", "reverse", "ambiguous". The
// ambiguous task maps each source symbol to one of `synonyms` target symbols
// chosen uniformly, and reports the full synonym table.
struct SynthSpec {
  std::string task = "copy";
  int size = 1000;
  uint64_t seed = 1;
  int symbols = 20;    // source alphabet size
  int synonyms = 3;    // ambiguous task only
  int min_len = 4;
  int max_len = 12;
};

struct SynthResult {
  ParallelCorpus corpus;
  // source symbol -> its target synonyms (ambiguous task; empty otherwise)
  std::vector<std::pair<std::string, std::vector<std::string>>> synonym_table;
};

SynthResult synth_task_generate(const SynthSpec& spec);

// Token-budgeted batch: rows padded with kPad to the batch maximum.
struct Batch {
  std::vector<std::vector<int>> source;
  std::vector<std::vector<int>> target;
  std::vector<std::vector<uint8_t>> source_mask;  // 1 = real token
  std::vector<std::vector<uint8_t>> target_mask;
  long token_count = 0;  // non-pad target tokens in the batch

  int size() const { return int(source.size()); }
};

// Shuffles sentence order with the seeded stream, then packs greedily so the
// padded target token count stays within max_tokens. Every sentence appears
// exactly once; a single sentence over budget is an input error.
std::vector<Batch> make_batches(const ParallelCorpus& corpus, const Vocab& vocab,
                                int max_tokens, uint64_t seed);

long corpus_target_tokens(const ParallelCorpus& corpus);

// strips padding from one batch row
std::vector<int> unpadded_row(const std::vector<int>& row,
                              const std::vector<uint8_t>& mask);

}  // namespace dmt
