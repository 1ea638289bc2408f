#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "dmt/data.hpp"
#include "dmt/dropout_gate.hpp"
#include "dmt/inference.hpp"

namespace dmt {

// arithmetic mean of the trained drop probabilities over the gate's columns
double average_dropout_probability(const DropoutGate& gate);

// Corpus BLEU of the test set decoded with the named module's output forced
// to zero (every column dropped) and every other module unmasked.
double prune_module_bleu(const std::vector<std::vector<int>>& sources,
                         const std::vector<std::vector<std::string>>& references,
                         const TransformerParams& params, const Vocab& vocab,
                         const std::vector<DropoutGate>& gates, const GateId& module,
                         const BeamConfig& beam);

struct ImportanceRow {
  GateId id;
  double mean_p = 0.0;
  double pruned_bleu = 0.0;
};

// Pearson correlation of (mean_p, pruned_bleu) across the layers of one
// module kind; throws NumericError naming the kind when either series has
// zero variance.
double importance_correlation(const std::string& kind,
                              std::span<const double> mean_p,
                              std::span<const double> pruned_bleu);

struct ModuleImportanceReport {
  double baseline_bleu = 0.0;
  std::vector<ImportanceRow> rows;  // one per trained gate, gate order
  // Pearson correlation of (mean_p, pruned_bleu) across the layers of each
  // module kind; kinds with a single gate carry no entry.
  std::map<std::string, double> rho;
  // kinds whose correlation is undefined (zero variance), with the reason;
  // the report stays usable for every other kind
  std::map<std::string, std::string> rho_omitted;
};

// full per-module importance pipeline over one trained model
ModuleImportanceReport importance_report(const std::vector<std::vector<int>>& sources,
                                         const std::vector<std::vector<std::string>>& references,
                                         const TransformerParams& params,
                                         const Vocab& vocab,
                                         const std::vector<DropoutGate>& gates,
                                         const BeamConfig& beam);

// text table mirroring the report (kind, layer, mean_p, pruned BLEU, rho)
std::string format_importance_table(const ModuleImportanceReport& report);

// machine-readable form: kind,layer,mean_p,pruned_bleu rows plus rho rows
std::string importance_csv(const ModuleImportanceReport& report);

}  // namespace dmt
