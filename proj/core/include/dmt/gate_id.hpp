#pragma once

#include <compare>
#include <limits>
#include <set>
#include <string>

namespace dmt {

// Gated module kinds. "ffn" and "embedding" occur on both sides of the
// model, so a gate instance also carries a side; the attention kinds imply
// theirs. A shared embedding table is one module serving both sides.
enum class ModuleKind { Embedding, EncSelfAttn, DecSelfAttn, EncDecAttn, Ffn };
enum class Side { Shared, Encoder, Decoder };

std::string module_kind_name(ModuleKind kind, Side side);

struct GateId {
  ModuleKind kind = ModuleKind::Embedding;
  Side side = Side::Shared;
  int layer = 0;  // 1-based for layered kinds, 0 for embeddings

  auto operator<=>(const GateId&) const = default;

  std::string kind_name() const { return module_kind_name(kind, side); }
  // serialized array name, e.g. "gate/dec-self-attn/2/logits"
  std::string array_name() const {
    return "gate/" + kind_name() + "/" + std::to_string(layer) + "/logits";
  }
  std::string str() const { return kind_name() + "/" + std::to_string(layer); }
};

// Which modules receive trained gates. Presets mirror the sweep axes:
//   "encdec"    every module kind on both sides
//   "decoder"   every decoder-side module (plus the target embedding when
//               embeddings are unshared; a shared table belongs to both
//               sides and is only gated by full-model selections)
//   "decoder13" decoder layers 1-3, attention and ffn only
struct GateSelection {
  std::set<ModuleKind> kinds;
  bool encoder_side = true;
  bool decoder_side = true;
  bool include_embedding = true;  // layer-restricted presets leave it out
  int min_layer = 1;
  int max_layer = std::numeric_limits<int>::max();

  bool empty() const { return kinds.empty(); }
  static GateSelection preset(const std::string& name);
};

}  // namespace dmt
