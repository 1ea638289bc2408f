#include "dmt/transformer.hpp"

#include <cmath>
#include <iostream>

#include "dmt/errors.hpp"
#include "dmt/optim.hpp"

namespace dmt {

void TransformerConfig::validate() const {
  if (num_layers <= 0) throw ConfigError("model: num_layers must be positive");
  if (d_model <= 0 || d_ff <= 0) throw ConfigError("model: dimensions must be positive");
  if (num_heads <= 0 || d_model % num_heads != 0)
    throw ConfigError("model: d_model (" + std::to_string(d_model) +
                      ") must be divisible by num_heads (" + std::to_string(num_heads) + ")");
  if (vocab_size < 5) throw ConfigError("model: vocab_size must be at least 5");
  if (max_len < 2) throw ConfigError("model: max_len must be at least 2");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw ConfigError("model: label_smoothing must lie in [0,1)");
  if (baseline_dropout < 0.0 || baseline_dropout >= 1.0)
    throw ConfigError("model: baseline_dropout must lie in [0,1)");
}

namespace {

Tensor xavier(int rows, int cols, rng::Stream& stream) {
  double bound = std::sqrt(6.0 / double(rows + cols));
  std::vector<double> vals(size_t(rows) * cols);
  for (auto& v : vals) v = stream.range(-bound, bound);
  return Tensor::from(rows, cols, std::move(vals), true);
}

AttentionParams init_attention(const TransformerConfig& cfg, rng::Stream& stream) {
  AttentionParams p;
  for (int h = 0; h < cfg.num_heads; ++h) {
    p.wq.push_back(xavier(cfg.d_model, cfg.d_k(), stream));
    p.wk.push_back(xavier(cfg.d_model, cfg.d_k(), stream));
    p.wv.push_back(xavier(cfg.d_model, cfg.d_k(), stream));
  }
  p.wo = xavier(cfg.d_model, cfg.d_model, stream);
  return p;
}

LayerNormParams init_layer_norm(int d) {
  return {Tensor::full(1, d, 1.0, true), Tensor::zeros(1, d, true)};
}

FfnParams init_ffn(const TransformerConfig& cfg, rng::Stream& stream) {
  FfnParams p;
  p.w1 = xavier(cfg.d_model, cfg.d_ff, stream);
  p.b1 = Tensor::zeros(1, cfg.d_ff, true);
  p.w2 = xavier(cfg.d_ff, cfg.d_model, stream);
  p.b2 = Tensor::zeros(1, cfg.d_model, true);
  return p;
}

Tensor sinusoidal_table(int max_len, int d_model) {
  std::vector<double> vals(size_t(max_len) * d_model);
  for (int pos = 0; pos < max_len; ++pos)
    for (int i = 0; i < d_model; ++i) {
      double rate = std::pow(10000.0, double(2 * (i / 2)) / double(d_model));
      double angle = double(pos) / rate;
      vals[size_t(pos) * d_model + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return Tensor::from(max_len, d_model, std::move(vals), false);
}

// detached copy of the first n positional rows
Tensor positional_rows(const Tensor& table, int n) {
  int d = table.cols();
  std::vector<double> vals(size_t(n) * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) vals[size_t(i) * d + j] = table.at(i, j);
  return Tensor::from(n, d, std::move(vals), false);
}

void named_attention(std::vector<std::pair<std::string, Tensor>>& out,
                     const std::string& prefix, const AttentionParams& p) {
  for (size_t h = 0; h < p.wq.size(); ++h) {
    out.emplace_back(prefix + "/wq" + std::to_string(h), p.wq[h]);
    out.emplace_back(prefix + "/wk" + std::to_string(h), p.wk[h]);
    out.emplace_back(prefix + "/wv" + std::to_string(h), p.wv[h]);
  }
  out.emplace_back(prefix + "/wo", p.wo);
}

void named_ln(std::vector<std::pair<std::string, Tensor>>& out,
              const std::string& prefix, const LayerNormParams& p) {
  out.emplace_back(prefix + "/gain", p.gain);
  out.emplace_back(prefix + "/bias", p.bias);
}

void named_ffn(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix, const FfnParams& p) {
  out.emplace_back(prefix + "/w1", p.w1);
  out.emplace_back(prefix + "/b1", p.b1);
  out.emplace_back(prefix + "/w2", p.w2);
  out.emplace_back(prefix + "/b2", p.b2);
}

// gated module output: gate mask first, then baseline dropout if active
Tensor site(const Tensor& x, const GateId& id, const ForwardHooks& hooks) {
  Tensor out = x;
  if (hooks.masks)
    if (const Tensor* keep = hooks.masks->find(id)) out = mul_rowvec(out, *keep);
  if (hooks.dropout_p > 0.0 && hooks.dropout_rng)
    out = dropout_elements(out, hooks.dropout_p, *hooks.dropout_rng);
  return out;
}

GateId embedding_gate_id(const TransformerConfig& cfg, Side side) {
  return {ModuleKind::Embedding, cfg.shared_embeddings ? Side::Shared : side, 0};
}

Tensor embed_tokens(std::span<const int> ids, const Tensor& table,
                    const TransformerParams& params, Side side,
                    const ForwardHooks& hooks) {
  if (int(ids.size()) > params.config.max_len)
    throw ConfigError("model: sentence of " + std::to_string(ids.size()) +
                      " tokens exceeds the positional table (max_len=" +
                      std::to_string(params.config.max_len) + ")");
  Tensor e = embedding_rows(table, ids);
  e = affine(e, std::sqrt(double(params.config.d_model)), 0.0);
  // gate applies to the embedding output itself, before positions are added
  e = site(e, embedding_gate_id(params.config, side), hooks);
  return add(e, positional_rows(params.positional, int(ids.size())));
}

}  // namespace

TransformerParams TransformerParams::init(const TransformerConfig& config,
                                          uint64_t seed) {
  config.validate();
  TransformerParams p;
  p.config = config;
  rng::Stream stream(rng::mix(seed, 0x1417));
  p.src_embed = xavier(config.vocab_size, config.d_model, stream);
  if (!config.shared_embeddings)
    p.tgt_embed = xavier(config.vocab_size, config.d_model, stream);
  for (int l = 0; l < config.num_layers; ++l) {
    EncoderLayerParams enc;
    enc.self_attn = init_attention(config, stream);
    enc.ln1 = init_layer_norm(config.d_model);
    enc.ffn = init_ffn(config, stream);
    enc.ln2 = init_layer_norm(config.d_model);
    p.encoder.push_back(std::move(enc));
  }
  for (int l = 0; l < config.num_layers; ++l) {
    DecoderLayerParams dec;
    dec.self_attn = init_attention(config, stream);
    dec.ln1 = init_layer_norm(config.d_model);
    dec.cross_attn = init_attention(config, stream);
    dec.ln2 = init_layer_norm(config.d_model);
    dec.ffn = init_ffn(config, stream);
    dec.ln3 = init_layer_norm(config.d_model);
    p.decoder.push_back(std::move(dec));
  }
  p.positional = sinusoidal_table(config.max_len, config.d_model);
  return p;
}

std::vector<std::pair<std::string, Tensor>> TransformerParams::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embed/src", src_embed);
  if (!config.shared_embeddings) out.emplace_back("embed/tgt", tgt_embed);
  for (size_t l = 0; l < encoder.size(); ++l) {
    std::string base = "enc/" + std::to_string(l + 1);
    named_attention(out, base + "/self-attn", encoder[l].self_attn);
    named_ln(out, base + "/ln1", encoder[l].ln1);
    named_ffn(out, base + "/ffn", encoder[l].ffn);
    named_ln(out, base + "/ln2", encoder[l].ln2);
  }
  for (size_t l = 0; l < decoder.size(); ++l) {
    std::string base = "dec/" + std::to_string(l + 1);
    named_attention(out, base + "/self-attn", decoder[l].self_attn);
    named_ln(out, base + "/ln1", decoder[l].ln1);
    named_attention(out, base + "/cross-attn", decoder[l].cross_attn);
    named_ln(out, base + "/ln2", decoder[l].ln2);
    named_ffn(out, base + "/ffn", decoder[l].ffn);
    named_ln(out, base + "/ln3", decoder[l].ln3);
  }
  return out;
}

std::vector<Tensor> TransformerParams::trainable() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_tensors()) out.push_back(t);
  return out;
}

void TransformerParams::set_requires_grad(bool on) {
  for (auto& t : trainable()) t.set_requires_grad(on);
}

Checkpoint TransformerParams::to_checkpoint() const {
  Checkpoint ck;
  ck.add_scalar("meta/num_layers", float(config.num_layers));
  ck.add_scalar("meta/d_model", float(config.d_model));
  ck.add_scalar("meta/num_heads", float(config.num_heads));
  ck.add_scalar("meta/d_ff", float(config.d_ff));
  ck.add_scalar("meta/vocab_size", float(config.vocab_size));
  ck.add_scalar("meta/max_len", float(config.max_len));
  ck.add_scalar("meta/shared_embeddings", config.shared_embeddings ? 1.0f : 0.0f);
  for (const auto& [name, t] : named_tensors()) ck.add(name, t);
  return ck;
}

TransformerParams TransformerParams::from_checkpoint(const Checkpoint& ck) {
  TransformerConfig cfg;
  cfg.num_layers = int(ck.scalar("meta/num_layers"));
  cfg.d_model = int(ck.scalar("meta/d_model"));
  cfg.num_heads = int(ck.scalar("meta/num_heads"));
  cfg.d_ff = int(ck.scalar("meta/d_ff"));
  cfg.vocab_size = int(ck.scalar("meta/vocab_size"));
  cfg.max_len = int(ck.scalar("meta/max_len"));
  cfg.shared_embeddings = ck.scalar("meta/shared_embeddings") != 0.0f;
  cfg.validate();
  TransformerParams p = TransformerParams::init(cfg, 0);
  for (auto& [name, t] : p.named_tensors()) {
    Tensor loaded = ck.tensor(name, true);
    if (loaded.rows() != t.rows() || loaded.cols() != t.cols())
      throw ConfigError("checkpoint: array '" + name + "' has unexpected shape");
    t.mutable_values() = loaded.values();
  }
  return p;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const std::vector<uint8_t>& allowed) {
  if (q.cols() != k.cols())
    throw std::invalid_argument("attention: query/key width mismatch");
  if (k.rows() != v.rows())
    throw std::invalid_argument("attention: key/value length mismatch");
  Tensor scores = affine(matmul(q, transpose(k)), 1.0 / std::sqrt(double(q.cols())), 0.0);
  Tensor weights = softmax_rows(scores, allowed);
  return matmul(weights, v);
}

Tensor multi_head_attention(const Tensor& x_q, const Tensor& x_kv,
                            const AttentionParams& params,
                            const std::vector<uint8_t>& allowed) {
  std::vector<Tensor> heads;
  heads.reserve(params.wq.size());
  for (size_t h = 0; h < params.wq.size(); ++h)
    heads.push_back(scaled_dot_attention(matmul(x_q, params.wq[h]),
                                         matmul(x_kv, params.wk[h]),
                                         matmul(x_kv, params.wv[h]), allowed));
  Tensor cat = heads.size() == 1 ? heads[0] : concat_cols(heads);
  return matmul(cat, params.wo);
}

Tensor feed_forward(const Tensor& x, const FfnParams& params) {
  Tensor h = relu(add_rowvec(matmul(x, params.w1), params.b1));
  return add_rowvec(matmul(h, params.w2), params.b2);
}

std::vector<uint8_t> causal_mask(int n) {
  std::vector<uint8_t> mask(size_t(n) * n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) mask[size_t(i) * n + j] = 1;
  return mask;
}

Tensor encode_source(std::span<const int> src, const TransformerParams& params,
                     const ForwardHooks& hooks) {
  if (src.empty()) throw std::invalid_argument("encode_source: empty sentence");
  Tensor x = embed_tokens(src, params.src_embed, params, Side::Encoder, hooks);
  for (size_t l = 0; l < params.encoder.size(); ++l) {
    const auto& layer = params.encoder[l];
    int ln = int(l) + 1;
    Tensor a = multi_head_attention(x, x, layer.self_attn);
    a = site(a, {ModuleKind::EncSelfAttn, Side::Encoder, ln}, hooks);
    x = layer_norm_rows(add(x, a), layer.ln1.gain, layer.ln1.bias);
    Tensor f = feed_forward(x, layer.ffn);
    f = site(f, {ModuleKind::Ffn, Side::Encoder, ln}, hooks);
    x = layer_norm_rows(add(x, f), layer.ln2.gain, layer.ln2.bias);
  }
  return x;
}

Tensor decode_logprob_rows(const Tensor& memory, std::span<const int> tgt_prefix,
                           const TransformerParams& params,
                           const ForwardHooks& hooks) {
  if (tgt_prefix.empty() || tgt_prefix[0] != Vocab::kBos)
    throw std::invalid_argument("decode: target prefix must start with <bos>");
  Tensor x = embed_tokens(tgt_prefix, params.target_embedding(), params,
                          Side::Decoder, hooks);
  auto self_mask = causal_mask(int(tgt_prefix.size()));
  for (size_t l = 0; l < params.decoder.size(); ++l) {
    const auto& layer = params.decoder[l];
    int ln = int(l) + 1;
    Tensor a = multi_head_attention(x, x, layer.self_attn, self_mask);
    a = site(a, {ModuleKind::DecSelfAttn, Side::Decoder, ln}, hooks);
    x = layer_norm_rows(add(x, a), layer.ln1.gain, layer.ln1.bias);
    Tensor c = multi_head_attention(x, memory, layer.cross_attn);
    c = site(c, {ModuleKind::EncDecAttn, Side::Decoder, ln}, hooks);
    x = layer_norm_rows(add(x, c), layer.ln2.gain, layer.ln2.bias);
    Tensor f = feed_forward(x, layer.ffn);
    f = site(f, {ModuleKind::Ffn, Side::Decoder, ln}, hooks);
    x = layer_norm_rows(add(x, f), layer.ln3.gain, layer.ln3.bias);
  }
  // logits through the transposed target embedding; the projection itself is
  // not a gated module output, so no mask applies here
  Tensor logits = matmul(x, transpose(params.target_embedding()));
  return log_softmax_rows(logits);
}

Tensor forward_logprobs(std::span<const int> src, std::span<const int> tgt_prefix,
                        const TransformerParams& params, const ForwardHooks& hooks) {
  return decode_logprob_rows(encode_source(src, params, hooks), tgt_prefix, params,
                             hooks);
}

Tensor nll_loss_label_smoothed(const Tensor& logprobs, std::span<const int> targets,
                               double eps) {
  return nll_label_smoothed(logprobs, targets, eps, Vocab::kPad);
}

BatchLoss batch_nll(const Batch& batch, const TransformerParams& params,
                    double label_smoothing, const ForwardHooks& hooks) {
  if (batch.size() == 0) throw std::invalid_argument("batch_nll: empty batch");
  BatchLoss out;
  for (int i = 0; i < batch.size(); ++i) {
    auto src = unpadded_row(batch.source[size_t(i)], batch.source_mask[size_t(i)]);
    auto tgt = unpadded_row(batch.target[size_t(i)], batch.target_mask[size_t(i)]);
    std::vector<int> prefix;
    prefix.reserve(tgt.size() + 1);
    prefix.push_back(Vocab::kBos);
    prefix.insert(prefix.end(), tgt.begin(), tgt.end());
    std::vector<int> gold(tgt);
    gold.push_back(Vocab::kEos);
    Tensor lp = forward_logprobs(src, prefix, params, hooks);
    Tensor nll = nll_loss_label_smoothed(lp, gold, label_smoothing);
    out.loss = out.loss.defined() ? add(out.loss, nll) : nll;
    out.predictions += long(gold.size());
  }
  return out;
}

std::vector<TrainLogRow> pretrain(TransformerParams& params,
                                  const ParallelCorpus& corpus, const Vocab& vocab,
                                  const PretrainConfig& cfg) {
  if (corpus.pairs.empty()) throw ConfigError("pretrain: empty corpus");
  if (cfg.steps < 0) throw ConfigError("pretrain: steps must be non-negative");
  auto weights = params.trainable();
  Adam adam(weights, {0.9, 0.98, 1e-9, cfg.lr_scale},
            warmup_schedule(params.config.d_model, cfg.warmup_steps));
  rng::Stream drop_rng(rng::mix(cfg.seed, 0xD201));
  std::vector<TrainLogRow> log;
  long step = 0;
  int epoch = 0;
  while (step < cfg.steps) {
    auto batches = make_batches(corpus, vocab, cfg.max_tokens,
                                rng::mix(cfg.seed, 1000 + uint64_t(epoch)));
    for (const auto& batch : batches) {
      if (step >= cfg.steps) break;
      ++step;
      ForwardHooks hooks;
      hooks.dropout_p = params.config.baseline_dropout;
      hooks.dropout_rng = &drop_rng;
      BatchLoss bl = batch_nll(batch, params, params.config.label_smoothing, hooks);
      Tensor loss = affine(bl.loss, 1.0 / double(bl.predictions), 0.0);
      double lv = loss.value();
      if (!std::isfinite(lv))
        throw NumericError("pretrain: loss diverged at step " + std::to_string(step));
      backward(loss);
      adam.step();
      adam.zero_grads();
      if (step % cfg.log_every == 0 || step == cfg.steps || step == 1) {
        log.push_back({step, lv});
        if (cfg.progress)
          std::cerr << "step " << step << "/" << cfg.steps << " loss " << lv << "\n";
      }
    }
    ++epoch;
  }
  return log;
}

}  // namespace dmt
