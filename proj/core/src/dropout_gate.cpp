#include "dmt/dropout_gate.hpp"

#include <cmath>

#include "dmt/errors.hpp"

namespace dmt {

std::string module_kind_name(ModuleKind kind, Side side) {
  switch (kind) {
    case ModuleKind::EncSelfAttn:
      return "enc-self-attn";
    case ModuleKind::DecSelfAttn:
      return "dec-self-attn";
    case ModuleKind::EncDecAttn:
      return "enc-dec-attn";
    case ModuleKind::Ffn:
      return side == Side::Encoder ? "enc-ffn" : "dec-ffn";
    case ModuleKind::Embedding:
      if (side == Side::Encoder) return "src-embedding";
      if (side == Side::Decoder) return "tgt-embedding";
      return "embedding";
  }
  throw std::logic_error("module_kind_name: unhandled kind");
}

GateSelection GateSelection::preset(const std::string& name) {
  GateSelection s;
  s.kinds = {ModuleKind::Embedding, ModuleKind::EncSelfAttn, ModuleKind::DecSelfAttn,
             ModuleKind::EncDecAttn, ModuleKind::Ffn};
  if (name == "encdec") return s;
  if (name == "decoder") {
    s.encoder_side = false;
    return s;
  }
  if (name == "decoder13") {
    s.encoder_side = false;
    s.include_embedding = false;
    s.max_layer = 3;
    return s;
  }
  throw ConfigError("selection '" + name +
                    "' unknown (expected decoder13, decoder or encdec)");
}

double clamp_prob(double p) {
  if (p < kProbEps) return kProbEps;
  if (p > 1.0 - kProbEps) return 1.0 - kProbEps;
  return p;
}

double logit(double p) {
  p = clamp_prob(p);
  return std::log(p) - std::log(1.0 - p);
}

double DropoutGate::probability(int j) const {
  return clamp_prob(1.0 / (1.0 + std::exp(-logits.at(0, j))));
}

std::vector<double> DropoutGate::probabilities() const {
  std::vector<double> p(static_cast<size_t>(columns()));
  for (int j = 0; j < columns(); ++j) p[size_t(j)] = probability(j);
  return p;
}

double DropoutGate::column_sumsq(int j) const {
  if (j < 0 || j >= columns())
    throw std::invalid_argument("gate: column index out of range");
  double s = 0.0;
  for (const auto& part : weight_parts)
    for (int i = 0; i < part.rows(); ++i) {
      double w = part.at(i, j);
      s += w * w;
    }
  return s;
}

namespace {

DropoutGate make_gate(GateId id, std::vector<Tensor> parts, double init_p,
                      double temperature) {
  DropoutGate g;
  g.id = id;
  g.weight_parts = std::move(parts);
  int n = g.weight_parts[0].cols();
  for (const auto& part : g.weight_parts)
    if (part.cols() != n)
      throw std::logic_error("gate: effective-matrix parts disagree on columns");
  g.logits = Tensor::full(1, n, logit(init_p));
  g.temperature = temperature;
  return g;
}

bool layer_selected(const GateSelection& sel, int layer) {
  return layer >= sel.min_layer && layer <= sel.max_layer;
}

}  // namespace

std::vector<DropoutGate> gate_placement(const TransformerParams& params,
                                        const GateSelection& selection,
                                        double init_p, double temperature) {
  if (selection.empty())
    throw ConfigError("gate placement: empty module selection");
  if (init_p <= 0.0 || init_p >= 1.0)
    throw ConfigError("gate placement: init_p must lie in (0,1)");
  if (temperature <= 0.0)
    throw ConfigError("gate placement: temperature must be positive");
  if (!selection.encoder_side && !selection.decoder_side)
    throw ConfigError("gate placement: no side selected");

  std::vector<DropoutGate> gates;
  bool want_embed =
      selection.kinds.count(ModuleKind::Embedding) && selection.include_embedding;
  if (want_embed) {
    if (params.config.shared_embeddings) {
      // one table serving both sides: gate it only in full-model selections
      if (selection.encoder_side && selection.decoder_side)
        gates.push_back(make_gate({ModuleKind::Embedding, Side::Shared, 0},
                                  {params.src_embed}, init_p, temperature));
    } else {
      if (selection.encoder_side)
        gates.push_back(make_gate({ModuleKind::Embedding, Side::Encoder, 0},
                                  {params.src_embed}, init_p, temperature));
      if (selection.decoder_side)
        gates.push_back(make_gate({ModuleKind::Embedding, Side::Decoder, 0},
                                  {params.tgt_embed}, init_p, temperature));
    }
  }
  for (size_t l = 0; l < params.encoder.size(); ++l) {
    int ln = int(l) + 1;
    if (!selection.encoder_side || !layer_selected(selection, ln)) continue;
    if (selection.kinds.count(ModuleKind::EncSelfAttn))
      gates.push_back(make_gate({ModuleKind::EncSelfAttn, Side::Encoder, ln},
                                {params.encoder[l].self_attn.wo}, init_p, temperature));
    if (selection.kinds.count(ModuleKind::Ffn))
      gates.push_back(make_gate({ModuleKind::Ffn, Side::Encoder, ln},
                                {params.encoder[l].ffn.w2, params.encoder[l].ffn.b2},
                                init_p, temperature));
  }
  for (size_t l = 0; l < params.decoder.size(); ++l) {
    int ln = int(l) + 1;
    if (!selection.decoder_side || !layer_selected(selection, ln)) continue;
    if (selection.kinds.count(ModuleKind::DecSelfAttn))
      gates.push_back(make_gate({ModuleKind::DecSelfAttn, Side::Decoder, ln},
                                {params.decoder[l].self_attn.wo}, init_p, temperature));
    if (selection.kinds.count(ModuleKind::EncDecAttn))
      gates.push_back(make_gate({ModuleKind::EncDecAttn, Side::Decoder, ln},
                                {params.decoder[l].cross_attn.wo}, init_p, temperature));
    if (selection.kinds.count(ModuleKind::Ffn))
      gates.push_back(make_gate({ModuleKind::Ffn, Side::Decoder, ln},
                                {params.decoder[l].ffn.w2, params.decoder[l].ffn.b2},
                                init_p, temperature));
  }
  if (gates.empty())
    throw ConfigError("gate placement: selection matches no module of this model");
  return gates;
}

MaskSample hard_mask(const DropoutGate& gate, uint64_t seed) {
  MaskSample m;
  m.gate = gate.id;
  m.hard = true;
  m.keep.resize(size_t(gate.columns()));
  uint64_t key = rng::splitmix64(rng::splitmix64(seed ^ 0xD1B54A32D192ED03ULL) ^
                                 rng::fnv1a64(gate.id.str()));
  for (int j = 0; j < gate.columns(); ++j) {
    double u = rng::to_unit(
        rng::splitmix64(key + 0x9e3779b97f4a7c15ULL * uint64_t(j + 1)));
    m.keep[size_t(j)] = u < gate.probability(j) ? 0.0 : 1.0;
  }
  return m;
}

MaskSample relaxed_mask(const DropoutGate& gate, std::span<const double> draws) {
  Tensor keep = relaxed_keep_expr(gate, draws);
  MaskSample m;
  m.gate = gate.id;
  m.hard = false;
  m.keep = keep.values();
  return m;
}

Tensor relaxed_keep_expr(const DropoutGate& gate, std::span<const double> draws) {
  if (int(draws.size()) != gate.columns())
    throw std::invalid_argument("relaxed mask: one uniform draw per column required");
  std::vector<double> noise(draws.size());
  for (size_t j = 0; j < draws.size(); ++j) {
    double u = draws[j];
    if (u < kDrawEps) u = kDrawEps;
    if (u > 1.0 - kDrawEps) u = 1.0 - kDrawEps;
    noise[j] = std::log(u) - std::log1p(-u);
  }
  Tensor p = clamped_sigmoid(gate.logits, kProbEps);
  Tensor log_odds = sub(log_elem(p), log_elem(affine(p, -1.0, 1.0)));
  Tensor z = sigmoid(affine(add(log_odds, Tensor::row(std::move(noise))),
                            1.0 / gate.temperature, 0.0));
  return affine(z, -1.0, 1.0);  // keep = 1 - z
}

std::vector<double> draw_uniforms(int n, rng::Stream& stream) {
  std::vector<double> u(static_cast<size_t>(n));
  for (auto& v : u) v = stream.uniform_open(kDrawEps);
  return u;
}

Tensor apply_mask(const MaskSample& mask, const Tensor& module_output) {
  if (int(mask.keep.size()) != module_output.cols())
    throw std::invalid_argument("apply_mask: keep width " +
                                std::to_string(mask.keep.size()) +
                                " does not match output width " +
                                std::to_string(module_output.cols()));
  return mul_rowvec(module_output, Tensor::row(mask.keep));
}

MaskSet sampled_mask_set(const std::vector<DropoutGate>& gates, uint64_t seed) {
  MaskSet set;
  for (const auto& g : gates)
    set.keep.emplace(g.id, Tensor::row(hard_mask(g, seed).keep));
  return set;
}

MaskSet prune_mask_set(const DropoutGate& gate) {
  MaskSet set;
  set.keep.emplace(gate.id, Tensor::zeros(1, gate.columns()));
  return set;
}

const DropoutGate* find_gate(const std::vector<DropoutGate>& gates, const GateId& id) {
  for (const auto& g : gates)
    if (g.id == id) return &g;
  return nullptr;
}

}  // namespace dmt
