#include "dmt/variational.hpp"

#include <cmath>
#include <iostream>

#include "dmt/errors.hpp"
#include "dmt/optim.hpp"

namespace dmt {

double column_regularizer(double p, std::span<const double> column, double l2) {
  if (l2 <= 0.0) throw std::invalid_argument("column_regularizer: l2 must be positive");
  double sumsq = 0.0;
  for (double w : column) sumsq += w * w;
  // no clamp here: the formula is log-free, and R must vanish as p -> 1
  return (1.0 - p) * 0.5 * l2 * sumsq;
}

double bernoulli_entropy(double p) {
  p = clamp_prob(p);
  return -(p * std::log(p) + (1.0 - p) * std::log(1.0 - p));
}

double total_kl(const std::vector<DropoutGate>& gates, double l2) {
  double kl = 0.0;
  for (const auto& g : gates)
    for (int j = 0; j < g.columns(); ++j) {
      double p = g.probability(j);
      kl += (1.0 - p) * 0.5 * l2 * g.column_sumsq(j) - bernoulli_entropy(p);
    }
  return kl;
}

Tensor kl_expr(const std::vector<DropoutGate>& gates, double l2) {
  Tensor kl;
  for (const auto& g : gates) {
    std::vector<double> scaled_sumsq(size_t(g.columns()));
    for (int j = 0; j < g.columns(); ++j)
      scaled_sumsq[size_t(j)] = 0.5 * l2 * g.column_sumsq(j);
    Tensor p = clamped_sigmoid(g.logits, kProbEps);
    Tensor one_minus = affine(p, -1.0, 1.0);
    Tensor r = mul(one_minus, Tensor::row(std::move(scaled_sumsq)));
    // H = -(p log p + (1-p) log (1-p)); KL column = R - H
    Tensor neg_h = add(mul(p, log_elem(p)), mul(one_minus, log_elem(one_minus)));
    Tensor part = sum_all(add(r, neg_h));
    kl = kl.defined() ? add(kl, part) : part;
  }
  if (!kl.defined()) return Tensor::scalar(0.0);
  return kl;
}

ElboLoss elbo_batch_loss(const Batch& batch, const TransformerParams& params,
                         const std::vector<DropoutGate>& gates,
                         const VariationalConfig& cfg, long corpus_tokens,
                         const std::vector<std::vector<std::vector<double>>>& draws) {
  if (draws.empty())
    throw std::invalid_argument("elbo: at least one mask sample required");
  if (corpus_tokens <= 0) throw std::invalid_argument("elbo: empty corpus");

  ElboLoss out;
  Tensor nll_sum;
  for (const auto& sample : draws) {
    if (sample.size() != gates.size())
      throw std::invalid_argument("elbo: one uniform vector per gate required");
    MaskSet masks;
    for (size_t g = 0; g < gates.size(); ++g)
      masks.keep.emplace(gates[g].id, relaxed_keep_expr(gates[g], sample[g]));
    ForwardHooks hooks;
    hooks.masks = &masks;
    BatchLoss bl = batch_nll(batch, params, cfg.label_smoothing, hooks);
    out.predictions = bl.predictions;
    nll_sum = nll_sum.defined() ? add(nll_sum, bl.loss) : bl.loss;
  }
  Tensor nll = affine(nll_sum, 1.0 / double(draws.size()), 0.0);
  Tensor kl = kl_expr(gates, cfg.l2);
  out.nll = nll.value();
  out.kl = kl.value();
  double share = double(batch.token_count) / double(corpus_tokens);
  out.loss = add(nll, affine(kl, share, 0.0));
  return out;
}

std::map<std::string, double> mean_p_by_kind(const std::vector<DropoutGate>& gates) {
  std::map<std::string, std::pair<double, long>> acc;
  for (const auto& g : gates) {
    auto& [sum, count] = acc[g.id.kind_name()];
    for (double p : g.probabilities()) {
      sum += p;
      ++count;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [kind, sc] : acc) out[kind] = sc.first / double(sc.second);
  return out;
}

std::vector<FinetuneLogRow> finetune_dropout(TransformerParams& params,
                                             std::vector<DropoutGate>& gates,
                                             const ParallelCorpus& corpus,
                                             const Vocab& vocab,
                                             const VariationalConfig& cfg) {
  if (gates.empty()) throw ConfigError("finetune: no gates to train");
  if (cfg.epochs < 0) throw ConfigError("finetune: epochs must be non-negative");
  if (cfg.mc_samples < 1) throw ConfigError("finetune: mc_samples must be at least 1");
  if (corpus.pairs.empty()) throw ConfigError("finetune: empty corpus");

  // Algorithm: weights stay frozen; only the gate logits move.
  params.set_requires_grad(false);
  std::vector<Tensor> logits;
  for (auto& g : gates) {
    g.logits.set_requires_grad(true);
    logits.push_back(g.logits);
  }
  long corpus_tokens = corpus_target_tokens(corpus);
  Adam adam(logits, {0.9, 0.98, 1e-9, cfg.learning_rate}, constant_schedule(1.0));
  rng::Stream mask_rng(rng::mix(cfg.seed, 0xF17E));

  std::vector<FinetuneLogRow> log;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto batches = make_batches(corpus, vocab, cfg.max_tokens,
                                rng::mix(cfg.seed, 2000 + uint64_t(epoch)));
    double nll_sum = 0.0;
    long pred_sum = 0;
    for (const auto& batch : batches) {
      std::vector<std::vector<std::vector<double>>> draws(size_t(cfg.mc_samples));
      for (auto& sample : draws)
        for (const auto& g : gates)
          sample.push_back(draw_uniforms(g.columns(), mask_rng));
      ElboLoss el = elbo_batch_loss(batch, params, gates, cfg, corpus_tokens, draws);
      if (!std::isfinite(el.loss.value()))
        throw NumericError("finetune: loss diverged in epoch " + std::to_string(epoch));
      // scale by the batch token count so the step size is stable across batches
      backward(affine(el.loss, 1.0 / double(batch.token_count), 0.0));
      adam.step();
      adam.zero_grads();
      nll_sum += el.nll;
      pred_sum += el.predictions;
    }
    FinetuneLogRow row;
    row.epoch = epoch;
    row.nll = nll_sum / double(pred_sum);
    row.kl = total_kl(gates, cfg.l2);
    row.mean_p = mean_p_by_kind(gates);
    if (cfg.progress) {
      std::cerr << "epoch " << epoch << "/" << cfg.epochs << " nll " << row.nll
                << " kl " << row.kl << "\n";
    }
    log.push_back(std::move(row));
  }
  params.set_requires_grad(true);
  for (auto& g : gates) g.logits.set_requires_grad(false);
  return log;
}

}  // namespace dmt
