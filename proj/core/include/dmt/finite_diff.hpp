#pragma once

#include <functional>
#include <vector>

#include "dmt/tensor.hpp"

namespace dmt {

// Central-difference gradient oracle. `f` must be a deterministic function of
// the current parameter values (fix any random draws before calling). Returns
// one gradient vector per parameter tensor, in the given order. Non-finite
// function values raise a NumericError.
std::vector<std::vector<double>> finite_diff_grad(
    const std::function<double()>& f, std::vector<Tensor> params,
    double step = 1e-4);

}  // namespace dmt
