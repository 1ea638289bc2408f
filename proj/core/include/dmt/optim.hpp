#pragma once

#include <functional>
#include <vector>

#include "dmt/tensor.hpp"

namespace dmt {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double base_lr = 1.0;  // scale applied on top of the schedule
};

// rate(step) = d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)
double warmup_rate(int d_model, int warmup_steps, long step);

// schedule factory for Adam; `scale` multiplies the warmup rate
std::function<double(long)> warmup_schedule(int d_model, int warmup_steps);
std::function<double(long)> constant_schedule(double rate);

// Adam with bias correction. Holds first/second moments and the step counter
// per parameter tensor; the learning rate for step t is
// base_lr * schedule(t).
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg,
       std::function<double(long)> schedule);

  void step();
  void zero_grads();
  long step_count() const { return t_; }
  double last_rate() const { return last_rate_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::function<double(long)> schedule_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
  double last_rate_ = 0.0;
};

}  // namespace dmt
