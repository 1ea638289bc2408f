#include "dmt/importance.hpp"

#include <cstdio>
#include <sstream>

#include "dmt/errors.hpp"
#include "dmt/metrics.hpp"

namespace dmt {

double average_dropout_probability(const DropoutGate& gate) {
  double sum = 0.0;
  for (double p : gate.probabilities()) sum += p;
  return sum / double(gate.columns());
}

double prune_module_bleu(const std::vector<std::vector<int>>& sources,
                         const std::vector<std::vector<std::string>>& references,
                         const TransformerParams& params, const Vocab& vocab,
                         const std::vector<DropoutGate>& gates, const GateId& module,
                         const BeamConfig& beam) {
  const DropoutGate* gate = find_gate(gates, module);
  if (!gate) throw ConfigError("prune: unknown module " + module.str());
  MaskSet masks = prune_mask_set(*gate);
  ForwardHooks hooks;
  hooks.masks = &masks;
  auto hyps = decode_corpus_tokens(sources, params, vocab, beam, hooks);
  return corpus_bleu(hyps, references).bleu;
}

double importance_correlation(const std::string& kind,
                              std::span<const double> mean_p,
                              std::span<const double> pruned_bleu) {
  try {
    return pearson_corr(mean_p, pruned_bleu);
  } catch (const NumericError& e) {
    throw NumericError("importance: correlation over kind '" + kind +
                       "' failed: " + e.what());
  }
}

ModuleImportanceReport importance_report(const std::vector<std::vector<int>>& sources,
                                         const std::vector<std::vector<std::string>>& references,
                                         const TransformerParams& params,
                                         const Vocab& vocab,
                                         const std::vector<DropoutGate>& gates,
                                         const BeamConfig& beam) {
  if (gates.empty()) throw ConfigError("importance: no trained gates");
  ModuleImportanceReport report;
  auto baseline = decode_corpus_tokens(sources, params, vocab, beam);
  report.baseline_bleu = corpus_bleu(baseline, references).bleu;

  for (const auto& gate : gates) {
    ImportanceRow row;
    row.id = gate.id;
    row.mean_p = average_dropout_probability(gate);
    row.pruned_bleu = prune_module_bleu(sources, references, params, vocab, gates,
                                        gate.id, beam);
    report.rows.push_back(row);
  }

  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_kind;
  for (const auto& row : report.rows) {
    auto& [ps, bleus] = by_kind[row.id.kind_name()];
    ps.push_back(row.mean_p);
    bleus.push_back(row.pruned_bleu);
  }
  for (const auto& [kind, series] : by_kind) {
    if (series.first.size() < 2) continue;
    try {
      report.rho[kind] = importance_correlation(kind, series.first, series.second);
    } catch (const NumericError& e) {
      // a flat kind (every layer prunes to the same BLEU) leaves its rho
      // undefined without invalidating the rest of the report
      report.rho_omitted[kind] = e.what();
    }
  }
  return report;
}

std::string format_importance_table(const ModuleImportanceReport& report) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-16s %5s %8s %12s\n", "module", "layer",
                "mean_p", "pruned_bleu");
  out << line;
  for (const auto& row : report.rows) {
    std::snprintf(line, sizeof(line), "%-16s %5d %8.4f %12.2f\n",
                  row.id.kind_name().c_str(), row.id.layer, row.mean_p,
                  row.pruned_bleu);
    out << line;
  }
  std::snprintf(line, sizeof(line), "baseline_bleu %.2f\n", report.baseline_bleu);
  out << line;
  for (const auto& [kind, rho] : report.rho) {
    std::snprintf(line, sizeof(line), "rho(%s) = %.4f\n", kind.c_str(), rho);
    out << line;
  }
  for (const auto& [kind, reason] : report.rho_omitted)
    out << "rho(" << kind << ") omitted: " << reason << "\n";
  return out.str();
}

std::string importance_csv(const ModuleImportanceReport& report) {
  std::ostringstream out;
  out << "kind,layer,mean_p,pruned_bleu\n";
  char line[128];
  for (const auto& row : report.rows) {
    std::snprintf(line, sizeof(line), "%s,%d,%.6f,%.4f\n",
                  row.id.kind_name().c_str(), row.id.layer, row.mean_p,
                  row.pruned_bleu);
    out << line;
  }
  for (const auto& [kind, rho] : report.rho) {
    std::snprintf(line, sizeof(line), "rho,%s,%.6f,\n", kind.c_str(), rho);
    out << line;
  }
  for (const auto& kv : report.rho_omitted) out << "rho," << kv.first << ",omitted,\n";
  return out.str();
}

}  // namespace dmt
