#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dmt/rng.hpp"

namespace dmt {

struct TensorImpl;
using TensorImplPtr = std::shared_ptr<TensorImpl>;

// Graph node behind a Tensor handle. Interior nodes keep their parents alive
// and carry a closure that scatters the node's gradient into them. Nodes own
// parents but never children, so the graph is acyclic by construction.
struct TensorImpl {
  std::array<int, 2> shape{1, 1};  // rows, cols; scalars are 1x1
  std::vector<double> values;      // row-major
  std::vector<double> grad;        // allocated on first use
  bool requires_grad = false;
  std::vector<TensorImplPtr> parents;
  std::function<void()> backprop;

  long size() const { return long(shape[0]) * shape[1]; }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

// Dense row-major matrix of doubles with reverse-mode autodiff. Handles are
// cheap to copy and share the node. All arithmetic is 64-bit; only the
// checkpoint container narrows to f32.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(TensorImplPtr impl) : impl_(std::move(impl)) {}

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor full(int rows, int cols, double value, bool requires_grad = false);
  static Tensor from(int rows, int cols, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  int rows() const { return impl_->shape[0]; }
  int cols() const { return impl_->shape[1]; }
  long size() const { return impl_->size(); }

  double at(int r, int c) const { return impl_->values[size_t(r) * cols() + c]; }
  void set(int r, int c, double v) { impl_->values[size_t(r) * cols() + c] = v; }
  double value() const;  // scalar convenience, throws unless 1x1

  const std::vector<double>& values() const { return impl_->values; }
  std::vector<double>& mutable_values() { return impl_->values; }

  const std::vector<double>& grad() const;
  double grad_at(int r, int c) const { return grad()[size_t(r) * cols() + c]; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  void zero_grad() {
    if (impl_) impl_->grad.assign(impl_->values.size(), 0.0);
  }

  TensorImpl* impl() const { return impl_.get(); }
  const TensorImplPtr& ptr() const { return impl_; }

 private:
  TensorImplPtr impl_;
};

// --- elementwise and shape ops -------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);        // same shape
Tensor sub(const Tensor& a, const Tensor& b);        // same shape
Tensor mul(const Tensor& a, const Tensor& b);        // same shape, Hadamard
Tensor affine(const Tensor& a, double alpha, double beta);  // alpha*a + beta
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// sigmoid clamped to [eps, 1-eps]; derivative is zero in the clamped region
Tensor clamped_sigmoid(const Tensor& a, double eps);
Tensor log_elem(const Tensor& a);                    // domain: strictly positive
Tensor transpose(const Tensor& a);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, int start, int n);
Tensor sum_all(const Tensor& a);                     // scalar

// broadcast a 1 x n row across the rows of an m x n matrix
Tensor add_rowvec(const Tensor& a, const Tensor& v);
Tensor mul_rowvec(const Tensor& a, const Tensor& v);

Tensor matmul(const Tensor& a, const Tensor& b);

// rows of `table` selected by token id; gradient scatters back into the rows
Tensor embedding_rows(const Tensor& table, std::span<const int> ids);

// row-wise layer norm with learned gain/bias (1 x n each)
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-6);

// row-wise softmax; `allowed`, when non-empty, is a row-major 0/1 matrix of
// the same shape and masked-out entries get exactly zero weight. A row with
// no allowed entry is a contract violation.
Tensor softmax_rows(const Tensor& x, const std::vector<uint8_t>& allowed = {});
Tensor log_softmax_rows(const Tensor& x);

// label-smoothed negative log-likelihood, summed over rows whose target is
// not `ignore_index`: mass 1-eps on the gold id, eps/(K-1) on every other id
Tensor nll_label_smoothed(const Tensor& logprobs, std::span<const int> targets,
                          double eps, int ignore_index = -1);

// standard inverted dropout over every element, draws taken from `stream`
Tensor dropout_elements(const Tensor& a, double drop_p, rng::Stream& stream);

// --- reverse pass ---------------------------------------------------------

// Seeds d(loss)/d(loss)=1 and propagates through the graph in reverse
// topological order. `loss` must be scalar. Leaf gradients accumulate; the
// caller zeroes them between steps.
void backward(const Tensor& loss);

}  // namespace dmt
