#include "dmt/metrics.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "dmt/data.hpp"
#include "dmt/errors.hpp"

namespace dmt {

namespace {

// joined n-gram -> count; tokens are already lowercased by the caller
std::map<std::string, long> ngram_counts(const std::vector<std::string>& tokens, int n) {
  std::map<std::string, long> counts;
  if (int(tokens.size()) < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int k = 1; k < n; ++k) {
      key += '\x1f';
      key += tokens[i + k];
    }
    ++counts[key];
  }
  return counts;
}

std::vector<std::string> lowered(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(lowercase(t));
  return out;
}

}  // namespace

BleuReport corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                       const std::vector<std::vector<std::string>>& references) {
  if (hypotheses.size() != references.size())
    throw ConfigError("bleu: hypothesis and reference line counts differ (" +
                      std::to_string(hypotheses.size()) + " vs " +
                      std::to_string(references.size()) + ")");
  if (hypotheses.empty()) throw ConfigError("bleu: empty corpus");

  BleuReport report;
  std::array<long, 4> matched{}, total{};
  for (size_t s = 0; s < hypotheses.size(); ++s) {
    auto hyp = lowered(hypotheses[s]);
    auto ref = lowered(references[s]);
    report.hyp_tokens += long(hyp.size());
    report.ref_tokens += long(ref.size());
    for (int n = 1; n <= 4; ++n) {
      auto hyp_counts = ngram_counts(hyp, n);
      auto ref_counts = ngram_counts(ref, n);
      for (const auto& [key, count] : hyp_counts) {
        total[size_t(n - 1)] += count;
        auto it = ref_counts.find(key);
        if (it != ref_counts.end())
          matched[size_t(n - 1)] += std::min(count, it->second);
      }
    }
  }

  double log_prec_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    double p;
    if (total[size_t(n)] == 0) {
      // no candidate n-grams of this order exist (all lines shorter than n),
      // so the order carries no evidence either way
      p = 1.0;
    } else if (matched[size_t(n)] > 0) {
      p = double(matched[size_t(n)]) / double(total[size_t(n)]);
    } else {
      // zero-match smoothing keeps the geometric mean defined
      p = 1.0 / (2.0 * double(total[size_t(n)]));
    }
    report.precisions[size_t(n)] = p;
    log_prec_sum += std::log(p);
  }

  report.brevity_penalty =
      (report.hyp_tokens == 0)
          ? 0.0
          : (report.hyp_tokens >= report.ref_tokens
                 ? 1.0
                 : std::exp(1.0 - double(report.ref_tokens) / double(report.hyp_tokens)));
  report.bleu = 100.0 * report.brevity_penalty * std::exp(log_prec_sum / 4.0);
  return report;
}

double pairwise_bleu(const std::vector<std::vector<std::vector<std::string>>>& groups) {
  if (groups.size() < 2)
    throw ConfigError("pairwise bleu: needs at least 2 groups, got " +
                      std::to_string(groups.size()));
  double sum = 0.0;
  long pairs = 0;
  for (size_t i = 0; i < groups.size(); ++i)
    for (size_t j = 0; j < groups.size(); ++j) {
      if (i == j) continue;
      sum += corpus_bleu(groups[i], groups[j]).bleu;
      ++pairs;
    }
  return sum / double(pairs);
}

double pearson_corr(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ConfigError("pearson: needs two equally sized series of length >= 2");
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(x.size());
  my /= double(y.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw NumericError("pearson: zero variance makes the correlation undefined");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace dmt
