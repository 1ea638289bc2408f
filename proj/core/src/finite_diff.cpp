#include "dmt/finite_diff.hpp"

#include <cmath>

#include "dmt/errors.hpp"

namespace dmt {

std::vector<std::vector<double>> finite_diff_grad(
    const std::function<double()>& f, std::vector<Tensor> params, double step) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (auto& p : params) {
    auto& vals = p.mutable_values();
    std::vector<double> g(vals.size());
    for (size_t i = 0; i < vals.size(); ++i) {
      double saved = vals[i];
      vals[i] = saved + step;
      double hi = f();
      vals[i] = saved - step;
      double lo = f();
      vals[i] = saved;
      if (!std::isfinite(hi) || !std::isfinite(lo))
        throw NumericError("finite_diff_grad: non-finite function value");
      g[i] = (hi - lo) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace dmt
