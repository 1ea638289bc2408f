#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dmt/data.hpp"
#include "dmt/dropout_gate.hpp"
#include "dmt/tensor.hpp"
#include "dmt/transformer.hpp"

namespace dmt {

// Matrix-Gaussian prior with scale l on both sides enters the KL through
// l^2 only, so the configuration carries l2 directly (the sweep axis).
struct VariationalConfig {
  double l2 = 100.0;
  int epochs = 5;
  double learning_rate = 1e-3;  // constant; gate logits are few
  int mc_samples = 1;
  int max_tokens = 512;
  double label_smoothing = 0.0;  // fine-tuning scores the plain likelihood
  uint64_t seed = 1;
  bool progress = false;  // echo epoch rows to stderr as they appear
};

// KL(q || prior) of one gated column splits into a weight-norm term R and the
// Bernoulli entropy H:
//   R = (1 - p) * l2/2 * sum_i w_i^2
//   H = -(p log p + (1-p) log(1-p))
double column_regularizer(double p, std::span<const double> column, double l2);
double bernoulli_entropy(double p);

// Sum of R - H over every column of every gate (only the trained gates are
// passed in, so only they contribute). Zero for an empty gate list.
double total_kl(const std::vector<DropoutGate>& gates, double l2);

// Same KL as a graph expression over the gate logits.
Tensor kl_expr(const std::vector<DropoutGate>& gates, double l2);

struct ElboLoss {
  Tensor loss;          // NLL(batch under masked forward) + (M_j/N) * total_kl
  double nll = 0.0;     // value of the likelihood part
  double kl = 0.0;      // value of the KL part (unscaled)
  long predictions = 0;
};

// One relaxed mask sample per gate per Monte-Carlo draw; `draws[s][g]` holds
// the uniform vector for gate g in sample s. Gradients flow to the gate
// logits both through the masked forward and through the KL.
ElboLoss elbo_batch_loss(const Batch& batch, const TransformerParams& params,
                         const std::vector<DropoutGate>& gates,
                         const VariationalConfig& cfg, long corpus_tokens,
                         const std::vector<std::vector<std::vector<double>>>& draws);

struct FinetuneLogRow {
  int epoch;
  double nll;  // per predicted token
  double kl;
  std::map<std::string, double> mean_p;  // by module kind name
};

// Variational fine-tuning of the gate logits with every weight frozen: one
// mask sample per batch, Adam at a constant rate, KL scaled by the batch
// share M_j/N. Weights are bit-identical afterwards.
std::vector<FinetuneLogRow> finetune_dropout(TransformerParams& params,
                                             std::vector<DropoutGate>& gates,
                                             const ParallelCorpus& corpus,
                                             const Vocab& vocab,
                                             const VariationalConfig& cfg);

// mean trained drop probability per module kind name
std::map<std::string, double> mean_p_by_kind(const std::vector<DropoutGate>& gates);

}  // namespace dmt
