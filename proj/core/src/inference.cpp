#include "dmt/inference.hpp"

#include <algorithm>
#include <cmath>

#include "dmt/errors.hpp"

namespace dmt {

namespace {

double length_normalized(double sum_logprob, size_t len, double alpha) {
  return sum_logprob / std::pow(double(std::max<size_t>(len, 1)), alpha);
}

// final ranking: score desc, earlier finish first, then lexicographic tokens
bool ranked_before(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.finish_step != b.finish_step) return a.finish_step < b.finish_step;
  return a.tokens < b.tokens;
}

struct Candidate {
  size_t hyp;
  int token;
  double cum;
};

}  // namespace

std::vector<BeamHypothesis> beam_search_fn(const NextLogprobs& next, int cap,
                                           const BeamConfig& cfg) {
  if (cfg.beam_size < 1) throw ConfigError("beam_search: beam_size must be at least 1");

  std::vector<BeamHypothesis> live(1);  // the empty prefix
  std::vector<BeamHypothesis> finished;

  for (int step = 1; step <= cap && !live.empty(); ++step) {
    std::vector<Candidate> candidates;
    for (size_t h = 0; h < live.size(); ++h) {
      std::vector<double> logprobs = next(live[h].tokens);
      for (int v = 0; v < int(logprobs.size()); ++v) {
        double cum = live[h].sum_logprob + logprobs[size_t(v)];
        if (std::isfinite(cum)) candidates.push_back({h, v, cum});
      }
    }
    if (candidates.empty()) break;

    // live prefixes all share one length, so (prefix, token) compares
    // candidate sequences lexicographically
    std::sort(candidates.begin(), candidates.end(),
              [&](const Candidate& a, const Candidate& b) {
                if (a.cum != b.cum) return a.cum > b.cum;
                if (live[a.hyp].tokens != live[b.hyp].tokens)
                  return live[a.hyp].tokens < live[b.hyp].tokens;
                return a.token < b.token;
              });
    if (candidates.size() > size_t(cfg.beam_size))
      candidates.resize(size_t(cfg.beam_size));

    std::vector<BeamHypothesis> next;
    for (const Candidate& c : candidates) {
      BeamHypothesis hyp = live[c.hyp];
      hyp.tokens.push_back(c.token);
      hyp.sum_logprob = c.cum;
      if (c.token == Vocab::kEos) {
        hyp.finished = true;
        hyp.finish_step = step;
        hyp.score = length_normalized(c.cum, hyp.tokens.size(), cfg.length_alpha);
        finished.push_back(std::move(hyp));
      } else {
        next.push_back(std::move(hyp));
      }
    }
    live = std::move(next);
  }

  std::vector<BeamHypothesis> out;
  if (!finished.empty()) {
    out = std::move(finished);
  } else {
    // nothing reached EOS within the cap; report the capped live set
    for (auto& hyp : live) {
      hyp.finish_step = cap + 1;
      hyp.score = length_normalized(hyp.sum_logprob, hyp.tokens.size(), cfg.length_alpha);
      out.push_back(std::move(hyp));
    }
  }
  std::sort(out.begin(), out.end(), ranked_before);
  if (out.size() > size_t(cfg.beam_size)) out.resize(size_t(cfg.beam_size));
  return out;
}

std::vector<BeamHypothesis> beam_search(const Tensor& memory, int source_len,
                                        const TransformerParams& params,
                                        const BeamConfig& cfg,
                                        const ForwardHooks& hooks) {
  const int cap = cfg.max_len > 0 ? cfg.max_len : 2 * source_len + 8;
  auto next = [&](const std::vector<int>& tokens) {
    std::vector<int> prefix;
    prefix.reserve(tokens.size() + 1);
    prefix.push_back(Vocab::kBos);
    prefix.insert(prefix.end(), tokens.begin(), tokens.end());
    Tensor rows = decode_logprob_rows(memory, prefix, params, hooks);
    const int last = rows.rows() - 1;
    std::vector<double> out(size_t(params.config.vocab_size));
    for (int v = 0; v < params.config.vocab_size; ++v) out[size_t(v)] = rows.at(last, v);
    return out;
  };
  return beam_search_fn(next, cap, cfg);
}

std::vector<BeamHypothesis> beam_search_tokens(std::span<const int> src,
                                               const TransformerParams& params,
                                               const BeamConfig& cfg,
                                               const ForwardHooks& hooks) {
  Tensor memory = encode_source(src, params, hooks);
  return beam_search(memory, int(src.size()), params, cfg, hooks);
}

SampledModel sample_model(const std::vector<DropoutGate>& gates, uint64_t seed) {
  SampledModel model;
  model.seed = seed;
  model.masks = sampled_mask_set(gates, seed);
  return model;
}

std::vector<TranslationGroup> generate_diverse(
    const std::vector<std::vector<int>>& sources, const TransformerParams& params,
    const std::vector<DropoutGate>& gates, int groups, uint64_t base_seed,
    const BeamConfig& cfg) {
  if (groups < 1) throw ConfigError("generate_diverse: need at least one group");
  std::vector<TranslationGroup> out;
  out.reserve(size_t(groups));
  for (int g = 1; g <= groups; ++g) {
    TranslationGroup group;
    group.group = g;
    group.seed = base_seed + uint64_t(g);
    SampledModel model = sample_model(gates, group.seed);
    ForwardHooks hooks;
    hooks.masks = &model.masks;
    for (size_t i = 0; i < sources.size(); ++i) {
      auto ranked = beam_search_tokens(sources[i], params, cfg, hooks);
      if (ranked.empty())
        throw NumericError("generate_diverse: no hypothesis for sentence " +
                           std::to_string(i) + " in group " + std::to_string(g));
      group.sentences.push_back(std::move(ranked.front().tokens));
    }
    out.push_back(std::move(group));
  }
  return out;
}

std::vector<std::string> strip_and_decode(const Vocab& vocab,
                                          std::span<const int> tokens) {
  std::span<const int> body = tokens;
  if (!body.empty() && body.back() == Vocab::kEos) body = body.first(body.size() - 1);
  return decode_tokens(vocab, body);
}

std::vector<std::vector<std::string>> decode_corpus_tokens(
    const std::vector<std::vector<int>>& sources, const TransformerParams& params,
    const Vocab& vocab, const BeamConfig& cfg, const ForwardHooks& hooks) {
  std::vector<std::vector<std::string>> out;
  out.reserve(sources.size());
  for (size_t i = 0; i < sources.size(); ++i) {
    auto ranked = beam_search_tokens(sources[i], params, cfg, hooks);
    if (ranked.empty())
      throw NumericError("decode: no hypothesis for sentence " + std::to_string(i));
    out.push_back(strip_and_decode(vocab, ranked.front().tokens));
  }
  return out;
}

}  // namespace dmt
