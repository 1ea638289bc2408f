#include "dmt/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dmt {

double warmup_rate(int d_model, int warmup_steps, long step) {
  if (step < 1) throw std::invalid_argument("warmup_rate: step counts from 1");
  double s = double(step);
  double w = double(warmup_steps);
  return std::pow(double(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

std::function<double(long)> warmup_schedule(int d_model, int warmup_steps) {
  return [d_model, warmup_steps](long step) {
    return warmup_rate(d_model, warmup_steps, step);
  };
}

std::function<double(long)> constant_schedule(double rate) {
  return [rate](long) { return rate; };
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg,
           std::function<double(long)> schedule)
    : params_(std::move(params)), cfg_(cfg), schedule_(std::move(schedule)) {
  for (auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  double lr = cfg_.base_lr * schedule_(t_);
  last_rate_ = lr;
  double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].mutable_values();
    const auto& g = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grads() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace dmt
