#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dmt/data.hpp"
#include "dmt/dropout_gate.hpp"
#include "dmt/transformer.hpp"

namespace dmt {

struct BeamConfig {
  int beam_size = 4;
  double length_alpha = 1.0;  // score = sum log-probs / length^alpha
  int max_len = 0;            // 0 means the default cap 2 * source_len + 8
};

// One decoded candidate. `tokens` excludes BOS and includes the terminal EOS
// when the hypothesis finished; `score` divides the log-prob sum (which
// covers every stored token) by tokens.size()^alpha.
struct BeamHypothesis {
  std::vector<int> tokens;
  double sum_logprob = 0.0;
  double score = 0.0;
  bool finished = false;
  int finish_step = 0;  // decode step at which EOS was produced
};

// next-token log-probabilities given the generated prefix (BOS excluded)
using NextLogprobs = std::function<std::vector<double>(const std::vector<int>&)>;

// Length-complete beam search over an arbitrary next-token distribution.
// Each step expands every live hypothesis over the full vocabulary and keeps
// the beam_size best by cumulative log-prob; hypotheses that produce EOS
// retire to the finished pool. Returns up to beam_size finished hypotheses
// sorted by score descending (ties: earlier finish, then lexicographic
// tokens); if nothing finishes within the cap, the capped live set is
// returned with finished = false. beam_size = 1 reduces to greedy argmax.
std::vector<BeamHypothesis> beam_search_fn(const NextLogprobs& next, int cap,
                                           const BeamConfig& cfg);

// beam search over the decoder distribution against cached encoder memory
std::vector<BeamHypothesis> beam_search(const Tensor& memory, int source_len,
                                        const TransformerParams& params,
                                        const BeamConfig& cfg,
                                        const ForwardHooks& hooks = {});

// encodes the source once, then runs beam_search against the cached memory
std::vector<BeamHypothesis> beam_search_tokens(std::span<const int> src,
                                               const TransformerParams& params,
                                               const BeamConfig& cfg,
                                               const ForwardHooks& hooks = {});

// One concrete model drawn from the trained gate distribution: a hard mask
// per gate, reproducible from the seed, applied to every sentence it decodes.
struct SampledModel {
  uint64_t seed = 0;
  MaskSet masks;
};

SampledModel sample_model(const std::vector<DropoutGate>& gates, uint64_t seed);

struct TranslationGroup {
  int group = 0;       // g in [1..G]
  uint64_t seed = 0;   // base_seed + g
  std::vector<std::vector<int>> sentences;  // one token sequence per input
};

// G independent sampled models, each beam-decoding the whole test set; group
// g uses seed base_seed + g and keeps the top-1 hypothesis per sentence.
std::vector<TranslationGroup> generate_diverse(
    const std::vector<std::vector<int>>& sources, const TransformerParams& params,
    const std::vector<DropoutGate>& gates, int groups, uint64_t base_seed,
    const BeamConfig& cfg);

// top-1 decode of every source under fixed hooks, detokenized via the vocab
// (terminal EOS stripped)
std::vector<std::vector<std::string>> decode_corpus_tokens(
    const std::vector<std::vector<int>>& sources, const TransformerParams& params,
    const Vocab& vocab, const BeamConfig& cfg, const ForwardHooks& hooks = {});

// strips one trailing EOS if present and maps ids back to token strings
std::vector<std::string> strip_and_decode(const Vocab& vocab,
                                          std::span<const int> tokens);

}  // namespace dmt
