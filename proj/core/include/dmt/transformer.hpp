#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dmt/checkpoint.hpp"
#include "dmt/data.hpp"
#include "dmt/gate_id.hpp"
#include "dmt/rng.hpp"
#include "dmt/tensor.hpp"

namespace dmt {

struct TransformerConfig {
  int num_layers = 2;
  int d_model = 32;
  int num_heads = 2;
  int d_ff = 64;
  int vocab_size = 0;   // set from the vocabulary at init time
  int max_len = 64;     // positional table length
  double label_smoothing = 0.1;
  double baseline_dropout = 0.1;  // pre-training only
  bool shared_embeddings = true;

  int d_k() const { return d_model / num_heads; }
  void validate() const;
};

struct AttentionParams {
  std::vector<Tensor> wq, wk, wv;  // one d_model x d_k projection per head
  Tensor wo;                       // d_model x d_model, shared across heads
};

struct LayerNormParams {
  Tensor gain, bias;  // 1 x d_model
};

struct FfnParams {
  Tensor w1, b1;  // d_model x d_ff, 1 x d_ff
  Tensor w2, b2;  // d_ff x d_model, 1 x d_model
};

struct EncoderLayerParams {
  AttentionParams self_attn;
  LayerNormParams ln1;
  FfnParams ffn;
  LayerNormParams ln2;
};

struct DecoderLayerParams {
  AttentionParams self_attn;
  LayerNormParams ln1;
  AttentionParams cross_attn;
  LayerNormParams ln2;
  FfnParams ffn;
  LayerNormParams ln3;
};

// All weights of the model. The decoder projects to vocabulary logits with
// the transpose of the target embedding table (no separate output matrix);
// with shared embeddings one table serves source, target and projection.
struct TransformerParams {
  TransformerConfig config;
  Tensor src_embed;  // vocab x d_model
  Tensor tgt_embed;  // undefined when config.shared_embeddings
  std::vector<EncoderLayerParams> encoder;
  std::vector<DecoderLayerParams> decoder;
  Tensor positional;  // max_len x d_model, not trainable

  static TransformerParams init(const TransformerConfig& config, uint64_t seed);

  const Tensor& target_embedding() const {
    return config.shared_embeddings ? src_embed : tgt_embed;
  }
  Tensor& target_embedding() {
    return config.shared_embeddings ? src_embed : tgt_embed;
  }

  // canonical (name, tensor) enumeration; fixes checkpoint array order
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
  std::vector<Tensor> trainable() const;
  void set_requires_grad(bool on);

  Checkpoint to_checkpoint() const;
  static TransformerParams from_checkpoint(const Checkpoint& ck);
};

// Per-column keep factors applied to gated module outputs; a keep tensor is
// 1 x d_model and may be connected to the gradient graph (relaxed training
// masks) or constant (sampled hard masks).
struct MaskSet {
  std::map<GateId, Tensor> keep;

  const Tensor* find(const GateId& id) const {
    auto it = keep.find(id);
    return it == keep.end() ? nullptr : &it->second;
  }
};

// Optional behaviours of a forward pass. Pre-training uses baseline
// elementwise dropout; fine-tuning and sampled decoding use gate masks.
struct ForwardHooks {
  const MaskSet* masks = nullptr;
  double dropout_p = 0.0;
  rng::Stream* dropout_rng = nullptr;
};

// softmax(Q K^T / sqrt(d_k)) V; `allowed`, when non-empty, is a q x k 0/1
// matrix and disallowed positions get exactly zero attention weight.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const std::vector<uint8_t>& allowed = {});

// heads are computed with per-head projections, concatenated, then mixed by
// wo. `allowed` masks key positions as in scaled_dot_attention.
Tensor multi_head_attention(const Tensor& x_q, const Tensor& x_kv,
                            const AttentionParams& params,
                            const std::vector<uint8_t>& allowed = {});

Tensor feed_forward(const Tensor& x, const FfnParams& params);

std::vector<uint8_t> causal_mask(int n);

// encoder stack over one source sentence; rows are source positions
Tensor encode_source(std::span<const int> src, const TransformerParams& params,
                     const ForwardHooks& hooks = {});

// decoder stack over a BOS-led prefix against encoded memory; row t holds
// log P(y | prefix[0..t], source) over the vocabulary
Tensor decode_logprob_rows(const Tensor& memory, std::span<const int> tgt_prefix,
                           const TransformerParams& params,
                           const ForwardHooks& hooks = {});

Tensor forward_logprobs(std::span<const int> src, std::span<const int> tgt_prefix,
                        const TransformerParams& params,
                        const ForwardHooks& hooks = {});

// label-smoothed NLL over one sentence (see nll_label_smoothed); pad targets
// are excluded
Tensor nll_loss_label_smoothed(const Tensor& logprobs, std::span<const int> targets,
                               double eps);

// summed label-smoothed NLL over a batch under the hooks, plus the number of
// predicted tokens (targets + one EOS per sentence)
struct BatchLoss {
  Tensor loss;
  long predictions = 0;
};
BatchLoss batch_nll(const Batch& batch, const TransformerParams& params,
                    double label_smoothing, const ForwardHooks& hooks = {});

struct PretrainConfig {
  long steps = 1000;
  int warmup_steps = 400;
  double lr_scale = 1.0;
  int max_tokens = 512;
  uint64_t seed = 1;
  int log_every = 10;
  bool progress = false;  // echo log rows to stderr as they appear
};

struct TrainLogRow {
  long step;
  double loss;  // per predicted token
};

// Adam + warmup-schedule training of all weights with baseline dropout
// active. Runs exactly cfg.steps steps; aborts via NumericError if the loss
// goes non-finite.
std::vector<TrainLogRow> pretrain(TransformerParams& params,
                                  const ParallelCorpus& corpus, const Vocab& vocab,
                                  const PretrainConfig& cfg);

}  // namespace dmt
