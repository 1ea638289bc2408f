#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace dmt {

struct BleuReport {
  double bleu = 0.0;                      // 0..100
  std::array<double, 4> precisions{};    // clipped n-gram precisions
  double brevity_penalty = 1.0;
  long hyp_tokens = 0;
  long ref_tokens = 0;
};

// Corpus-level BLEU with clipped n-gram precisions up to 4, uniform weights,
// and the standard brevity penalty. Matching is case-insensitive (tokens are
// lowercased first). An order with zero matches over the corpus substitutes
// 1/(2 * hyp_ngram_count) to keep the geometric mean defined.
BleuReport corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                       const std::vector<std::vector<std::string>>& references);

// Mean corpus BLEU over all ordered pairs (i, j), i != j, scoring group i
// against group j as the reference. Needs at least two groups.
double pairwise_bleu(const std::vector<std::vector<std::vector<std::string>>>& groups);

// Sample Pearson correlation; both sides need non-zero variance.
double pearson_corr(std::span<const double> x, std::span<const double> y);

}  // namespace dmt
