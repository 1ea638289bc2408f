#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dmt/gate_id.hpp"
#include "dmt/tensor.hpp"
#include "dmt/transformer.hpp"

namespace dmt {

// probabilities stay clamped inside (kProbEps, 1-kProbEps); uniform draws
// feeding the concrete relaxation stay inside (kDrawEps, 1-kDrawEps)
inline constexpr double kProbEps = 1e-6;
inline constexpr double kDrawEps = 1e-7;

double clamp_prob(double p);
double logit(double p);

// One trained dropout gate over the columns of a module's effective weight
// matrix. Columns index the module's output dimensions:
//   embedding  columns of the table read as (dims x vocab)^T, i.e. one
//              column per embedding dimension across the whole vocabulary
//   attention  columns of wo
//   ffn        columns of w2 with the matching b2 entry appended, so the
//              bias drops together with its output dimension
struct DropoutGate {
  GateId id;
  Tensor logits;       // 1 x n, trainable during fine-tuning
  double temperature = 0.1;
  // parts of the effective matrix; each part has n columns and the column
  // squared-norm sums over all parts
  std::vector<Tensor> weight_parts;

  int columns() const { return logits.cols(); }
  double probability(int j) const;              // clamped sigmoid of logit j
  std::vector<double> probabilities() const;
  double column_sumsq(int j) const;
};

// A drawn mask: keep factors per column. Hard masks hold exact {0,1}; relaxed
// masks hold keep = 1 - z with z from the concrete relaxation.
struct MaskSample {
  GateId gate;
  bool hard = true;
  std::vector<double> keep;
};

// Instantiates one gate per selected module of the model, logits initialised
// to logit(init_p). An empty selection is a configuration error.
std::vector<DropoutGate> gate_placement(const TransformerParams& params,
                                        const GateSelection& selection,
                                        double init_p = 0.1,
                                        double temperature = 0.1);

// Bernoulli draw per column from a stream keyed by (seed, gate id, column),
// so the same seed always yields the same mask for a given gate.
MaskSample hard_mask(const DropoutGate& gate, uint64_t seed);

// Concrete relaxation z = sigmoid((log p - log(1-p) + log u - log(1-u)) / t)
// per column; z is the drop indicator, the stored keep factor is 1 - z.
MaskSample relaxed_mask(const DropoutGate& gate, std::span<const double> draws);

// Same relaxation as a graph expression so gradients reach the gate logits.
Tensor relaxed_keep_expr(const DropoutGate& gate, std::span<const double> draws);

// draws one uniform vector per column for relaxed masks
std::vector<double> draw_uniforms(int n, rng::Stream& stream);

// multiplies a module output by the keep factors (no 1/(1-p) rescaling in
// either mode)
Tensor apply_mask(const MaskSample& mask, const Tensor& module_output);

// hard masks for every gate, keyed by one seed; used to sample a model
MaskSet sampled_mask_set(const std::vector<DropoutGate>& gates, uint64_t seed);

// all-drop mask set for one gate (module pruning)
MaskSet prune_mask_set(const DropoutGate& gate);

const DropoutGate* find_gate(const std::vector<DropoutGate>& gates, const GateId& id);

}  // namespace dmt
