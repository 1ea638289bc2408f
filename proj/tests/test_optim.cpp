#include <cmath>

#include "doctest.h"
#include "dmt/optim.hpp"
#include "dmt/tensor.hpp"

using namespace dmt;

TEST_CASE("warmup rate hand values") {
  const int d = 64, w = 400;
  // linear ramp below the warmup knee: rate(100)/rate(400) = 1/4
  CHECK(warmup_rate(d, w, 100) / warmup_rate(d, w, 400) ==
        doctest::Approx(0.25).epsilon(1e-12));
  // knee: both branches agree at step = warmup
  CHECK(warmup_rate(d, w, 400) ==
        doctest::Approx(std::pow(d, -0.5) * std::pow(400.0, -0.5)).epsilon(1e-12));
  // inverse square root afterwards
  CHECK(warmup_rate(d, w, 1600) / warmup_rate(d, w, 400) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(warmup_rate(d, w, 0), std::invalid_argument);
}

TEST_CASE("schedules") {
  auto warm = warmup_schedule(64, 400);
  CHECK(warm(100) == doctest::Approx(warmup_rate(64, 400, 100)).epsilon(1e-12));
  auto flat = constant_schedule(1e-3);
  CHECK(flat(1) == 1e-3);
  CHECK(flat(100000) == 1e-3);
}

TEST_CASE("adam first step hand value") {
  // m_hat = g, v_hat = g^2 at t=1, so the update is lr * g / (|g| + eps)
  Tensor w = Tensor::from(1, 1, {1.0}, true);
  Adam adam({w}, {0.9, 0.98, 1e-9, 0.1}, constant_schedule(1.0));

  backward(affine(mul(w, w), 1.0, 0.0));  // d/dw w^2 = 2w = 2
  adam.step();
  CHECK(adam.step_count() == 1);
  CHECK(adam.last_rate() == doctest::Approx(0.1).epsilon(1e-12));
  double expect = 1.0 - 0.1 * (2.0 / (2.0 + 1e-9));
  CHECK(w.value() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("adam minimizes a quadratic") {
  Tensor w = Tensor::from(1, 1, {-4.0}, true);
  Adam adam({w}, {0.9, 0.98, 1e-9, 0.05}, constant_schedule(1.0));
  for (int i = 0; i < 500; ++i) {
    adam.zero_grads();
    Tensor diff = affine(w, 1.0, -3.0);
    backward(mul(diff, diff));
    adam.step();
  }
  CHECK(w.value() == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("zero_grads clears accumulated gradients") {
  Tensor w = Tensor::from(1, 2, {1.0, 2.0}, true);
  Adam adam({w}, {}, constant_schedule(1.0));
  backward(sum_all(mul(w, w)));
  CHECK(w.grad_at(0, 1) != 0.0);
  adam.zero_grads();
  CHECK(w.grad_at(0, 0) == 0.0);
  CHECK(w.grad_at(0, 1) == 0.0);
}
