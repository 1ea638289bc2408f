#include "dmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace dmt {

namespace {

TensorImplPtr make_node(int rows, int cols) {
  if (rows <= 0 || cols <= 0)
    throw std::invalid_argument("tensor: dimensions must be positive");
  auto n = std::make_shared<TensorImpl>();
  n->shape = {rows, cols};
  n->values.assign(size_t(rows) * cols, 0.0);
  return n;
}

bool same_shape(const Tensor& a, const Tensor& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              shape_str(a) + " vs " + shape_str(b));
}

// Attach parents and the backprop closure only when a gradient path exists.
void track(const TensorImplPtr& out, std::vector<TensorImplPtr> parents,
           std::function<void()> fn) {
  bool needed = false;
  for (const auto& p : parents) needed = needed || p->requires_grad;
  if (!needed) return;
  out->requires_grad = true;
  out->parents = std::move(parents);
  out->backprop = std::move(fn);
}

}  // namespace

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  auto n = make_node(rows, cols);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::full(int rows, int cols, double value, bool requires_grad) {
  auto n = make_node(rows, cols);
  std::fill(n->values.begin(), n->values.end(), value);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from(int rows, int cols, std::vector<double> values,
                    bool requires_grad) {
  auto n = make_node(rows, cols);
  if (long(values.size()) != n->size())
    throw std::invalid_argument("tensor: value count does not match shape");
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  int n = int(values.size());
  return from(1, n, std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value) { return from(1, 1, {value}); }

double Tensor::value() const {
  if (size() != 1) throw std::logic_error("tensor: value() requires a 1x1 tensor");
  return impl_->values[0];
}

const std::vector<double>& Tensor::grad() const {
  impl_->ensure_grad();
  return impl_->grad;
}

// --- binary elementwise ----------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) shape_error("add", a, b);
  auto out = make_node(a.rows(), a.cols());
  for (long i = 0; i < a.size(); ++i) out->values[i] = a.values()[i] + b.values()[i];
  TensorImpl* o = out.get();
  TensorImpl* pa = a.impl();
  TensorImpl* pb = b.impl();
  track(out, {a.ptr(), b.ptr()}, [o, pa, pb] {
    pa->ensure_grad();
    pb->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) {
      pa->grad[i] += o->grad[i];
      pb->grad[i] += o->grad[i];
    }
  });
  return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) shape_error("sub", a, b);
  auto out = make_node(a.rows(), a.cols());
  for (long i = 0; i < a.size(); ++i) out->values[i] = a.values()[i] - b.values()[i];
  TensorImpl* o = out.get();
  TensorImpl* pa = a.impl();
  TensorImpl* pb = b.impl();
  track(out, {a.ptr(), b.ptr()}, [o, pa, pb] {
    pa->ensure_grad();
    pb->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) {
      pa->grad[i] += o->grad[i];
      pb->grad[i] -= o->grad[i];
    }
  });
  return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) shape_error("mul", a, b);
  auto out = make_node(a.rows(), a.cols());
  for (long i = 0; i < a.size(); ++i) out->values[i] = a.values()[i] * b.values()[i];
  TensorImpl* o = out.get();
  TensorImpl* pa = a.impl();
  TensorImpl* pb = b.impl();
  track(out, {a.ptr(), b.ptr()}, [o, pa, pb] {
    pa->ensure_grad();
    pb->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) {
      pa->grad[i] += o->grad[i] * pb->values[i];
      pb->grad[i] += o->grad[i] * pa->values[i];
    }
  });
  return Tensor(out);
}

Tensor affine(const Tensor& a, double alpha, double beta) {
  auto out = make_node(a.rows(), a.cols());
  for (long i = 0; i < a.size(); ++i) out->values[i] = alpha * a.values()[i] + beta;
  TensorImpl* o = out.get();
  TensorImpl* pa = a.impl();
  track(out, {a.ptr()}, [o, pa, alpha] {
    pa->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += alpha * o->grad[i];
  });
  return Tensor(out);
}

// --- unary elementwise ------------------------------------------------------

Tensor relu(const Tensor& a) {
  auto out = make_node(a.rows(), a.cols());
  for (long i = 0; i < a.size(); ++i)
    out->values[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  TensorImpl* o = out.get();
  TensorImpl* pa = a.impl();
  track(out, {a.ptr()}, [o, pa] {
    pa->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i)
      if (pa->values[i] > 0.0) pa->grad[i] += o->grad[i];
  });
  return Tensor(out);
}

Tensor sigmoid(const Tensor& a) {
  auto out = make_node(a.rows(), a.cols());
  for (long i = 0; i < a.size(); ++i)
    out->values[i] = 1.0 / (1.0 + std::exp(-a.values()[i]));
  TensorImpl* o = out.get();
  TensorImpl* pa = a.impl();
  track(out, {a.ptr()}, [o, pa] {
    pa->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) {
      double y = o->values[i];
      pa->grad[i] += o->grad[i] * y * (1.0 - y);
    }
  });
  return Tensor(out);
}

Tensor clamped_sigmoid(const Tensor& a, double eps) {
  if (eps <= 0.0 || eps >= 0.5)
    throw std::invalid_argument("clamped_sigmoid: eps must lie in (0, 0.5)");
  auto out = make_node(a.rows(), a.cols());
  std::vector<uint8_t> clamped(a.size(), 0);
  for (long i = 0; i < a.size(); ++i) {
    double y = 1.0 / (1.0 + std::exp(-a.values()[i]));
    if (y < eps) {
      y = eps;
      clamped[i] = 1;
    } else if (y > 1.0 - eps) {
      y = 1.0 - eps;
      clamped[i] = 1;
    }
    out->values[i] = y;
  }
  TensorImpl* o = out.get();
  TensorImpl* pa = a.impl();
  track(out, {a.ptr()}, [o, pa, clamped = std::move(clamped)] {
    pa->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) {
      if (clamped[i]) continue;  // flat in the clamped region
      double y = o->values[i];
      pa->grad[i] += o->grad[i] * y * (1.0 - y);
    }
  });
  return Tensor(out);
}

Tensor log_elem(const Tensor& a) {
  auto out = make_node(a.rows(), a.cols());
  for (long i = 0; i < a.size(); ++i) {
    if (a.values()[i] <= 0.0)
      throw std::invalid_argument("log_elem: domain requires strictly positive values");
    out->values[i] = std::log(a.values()[i]);
  }
  TensorImpl* o = out.get();
  TensorImpl* pa = a.impl();
  track(out, {a.ptr()}, [o, pa] {
    pa->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i)
      pa->grad[i] += o->grad[i] / pa->values[i];
  });
  return Tensor(out);
}

// --- shape ops ---------------------------------------------------------------

Tensor transpose(const Tensor& a) {
  int r = a.rows(), c = a.cols();
  auto out = make_node(c, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out->values[size_t(j) * r + i] = a.at(i, j);
  TensorImpl* o = out.get();
  TensorImpl* pa = a.impl();
  track(out, {a.ptr()}, [o, pa, r, c] {
    pa->ensure_grad();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        pa->grad[size_t(i) * c + j] += o->grad[size_t(j) * r + i];
  });
  return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  int r = parts[0].rows();
  int total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw std::invalid_argument("concat_cols: row mismatch");
    total += p.cols();
  }
  auto out = make_node(r, total);
  int off = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < p.cols(); ++j)
        out->values[size_t(i) * total + off + j] = p.at(i, j);
    off += p.cols();
  }
  TensorImpl* o = out.get();
  std::vector<TensorImplPtr> parents;
  for (const auto& p : parts) parents.push_back(p.ptr());
  std::vector<TensorImpl*> raw;
  for (const auto& p : parts) raw.push_back(p.impl());
  track(out, parents, [o, raw, r, total] {
    int off2 = 0;
    for (TensorImpl* p : raw) {
      p->ensure_grad();
      int pc = p->shape[1];
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < pc; ++j)
          p->grad[size_t(i) * pc + j] += o->grad[size_t(i) * total + off2 + j];
      off2 += pc;
    }
  });
  return Tensor(out);
}

Tensor slice_cols(const Tensor& a, int start, int n) {
  if (start < 0 || n <= 0 || start + n > a.cols())
    throw std::invalid_argument("slice_cols: range out of bounds");
  int r = a.rows(), c = a.cols();
  auto out = make_node(r, n);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < n; ++j) out->values[size_t(i) * n + j] = a.at(i, start + j);
  TensorImpl* o = out.get();
  TensorImpl* pa = a.impl();
  track(out, {a.ptr()}, [o, pa, start, n, r, c] {
    pa->ensure_grad();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < n; ++j)
        pa->grad[size_t(i) * c + start + j] += o->grad[size_t(i) * n + j];
  });
  return Tensor(out);
}

Tensor sum_all(const Tensor& a) {
  auto out = make_node(1, 1);
  double s = 0.0;
  for (long i = 0; i < a.size(); ++i) s += a.values()[i];
  out->values[0] = s;
  TensorImpl* o = out.get();
  TensorImpl* pa = a.impl();
  track(out, {a.ptr()}, [o, pa] {
    pa->ensure_grad();
    for (size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += o->grad[0];
  });
  return Tensor(out);
}

// --- row broadcasts ----------------------------------------------------------

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  if (v.rows() != 1 || v.cols() != a.cols()) shape_error("add_rowvec", a, v);
  int r = a.rows(), c = a.cols();
  auto out = make_node(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out->values[size_t(i) * c + j] = a.at(i, j) + v.at(0, j);
  TensorImpl* o = out.get();
  TensorImpl* pa = a.impl();
  TensorImpl* pv = v.impl();
  track(out, {a.ptr(), v.ptr()}, [o, pa, pv, r, c] {
    pa->ensure_grad();
    pv->ensure_grad();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) {
        double g = o->grad[size_t(i) * c + j];
        pa->grad[size_t(i) * c + j] += g;
        pv->grad[j] += g;
      }
  });
  return Tensor(out);
}

Tensor mul_rowvec(const Tensor& a, const Tensor& v) {
  if (v.rows() != 1 || v.cols() != a.cols()) shape_error("mul_rowvec", a, v);
  int r = a.rows(), c = a.cols();
  auto out = make_node(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out->values[size_t(i) * c + j] = a.at(i, j) * v.at(0, j);
  TensorImpl* o = out.get();
  TensorImpl* pa = a.impl();
  TensorImpl* pv = v.impl();
  track(out, {a.ptr(), v.ptr()}, [o, pa, pv, r, c] {
    pa->ensure_grad();
    pv->ensure_grad();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) {
        double g = o->grad[size_t(i) * c + j];
        pa->grad[size_t(i) * c + j] += g * pv->values[j];
        pv->grad[j] += g * pa->values[size_t(i) * c + j];
      }
  });
  return Tensor(out);
}

// --- matmul ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  int m = a.rows(), k = a.cols(), n = b.cols();
  auto out = make_node(m, n);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out->values.data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double aip = av[size_t(i) * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv + size_t(p) * n;
      double* orow = ov + size_t(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  TensorImpl* o = out.get();
  TensorImpl* pa = a.impl();
  TensorImpl* pb = b.impl();
  track(out, {a.ptr(), b.ptr()}, [o, pa, pb, m, k, n] {
    pa->ensure_grad();
    pb->ensure_grad();
    // dA = g . B^T ; dB = A^T . g
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double g = o->grad[size_t(i) * n + j];
        if (g == 0.0) continue;
        for (int p = 0; p < k; ++p) {
          pa->grad[size_t(i) * k + p] += g * pb->values[size_t(p) * n + j];
          pb->grad[size_t(p) * n + j] += g * pa->values[size_t(i) * k + p];
        }
      }
  });
  return Tensor(out);
}

// --- embedding ----------------------------------------------------------------

Tensor embedding_rows(const Tensor& table, std::span<const int> ids) {
  int K = table.rows(), d = table.cols();
  if (ids.empty()) throw std::invalid_argument("embedding_rows: empty id list");
  for (int id : ids)
    if (id < 0 || id >= K)
      throw std::invalid_argument("embedding_rows: token id " + std::to_string(id) +
                                  " out of range [0," + std::to_string(K) + ")");
  int T = int(ids.size());
  auto out = make_node(T, d);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < d; ++j)
      out->values[size_t(t) * d + j] = table.at(ids[t], j);
  TensorImpl* o = out.get();
  TensorImpl* pt = table.impl();
  std::vector<int> idv(ids.begin(), ids.end());
  track(out, {table.ptr()}, [o, pt, idv = std::move(idv), d] {
    pt->ensure_grad();
    for (size_t t = 0; t < idv.size(); ++t)
      for (int j = 0; j < d; ++j)
        pt->grad[size_t(idv[t]) * d + j] += o->grad[t * d + j];
  });
  return Tensor(out);
}

// --- layer norm ----------------------------------------------------------------

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps) {
  int r = x.rows(), c = x.cols();
  if (gain.rows() != 1 || gain.cols() != c) shape_error("layer_norm_rows", x, gain);
  if (bias.rows() != 1 || bias.cols() != c) shape_error("layer_norm_rows", x, bias);
  auto out = make_node(r, c);
  std::vector<double> xhat(size_t(r) * c);
  std::vector<double> inv_sd(r);
  for (int i = 0; i < r; ++i) {
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += x.at(i, j);
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      double d = x.at(i, j) - mu;
      var += d * d;
    }
    var /= c;
    double inv = 1.0 / std::sqrt(var + eps);
    inv_sd[i] = inv;
    for (int j = 0; j < c; ++j) {
      double h = (x.at(i, j) - mu) * inv;
      xhat[size_t(i) * c + j] = h;
      out->values[size_t(i) * c + j] = gain.at(0, j) * h + bias.at(0, j);
    }
  }
  TensorImpl* o = out.get();
  TensorImpl* px = x.impl();
  TensorImpl* pg = gain.impl();
  TensorImpl* pb = bias.impl();
  track(out, {x.ptr(), gain.ptr(), bias.ptr()},
        [o, px, pg, pb, xhat = std::move(xhat), inv_sd = std::move(inv_sd), r, c] {
          px->ensure_grad();
          pg->ensure_grad();
          pb->ensure_grad();
          for (int i = 0; i < r; ++i) {
            double mean_dh = 0.0, mean_dh_xhat = 0.0;
            for (int j = 0; j < c; ++j) {
              size_t idx = size_t(i) * c + j;
              double g = o->grad[idx];
              pg->grad[j] += g * xhat[idx];
              pb->grad[j] += g;
              double dh = g * pg->values[j];
              mean_dh += dh;
              mean_dh_xhat += dh * xhat[idx];
            }
            mean_dh /= c;
            mean_dh_xhat /= c;
            for (int j = 0; j < c; ++j) {
              size_t idx = size_t(i) * c + j;
              double dh = o->grad[idx] * pg->values[j];
              px->grad[idx] += inv_sd[i] * (dh - mean_dh - xhat[idx] * mean_dh_xhat);
            }
          }
        });
  return Tensor(out);
}

// --- softmax family --------------------------------------------------------------

Tensor softmax_rows(const Tensor& x, const std::vector<uint8_t>& allowed) {
  int r = x.rows(), c = x.cols();
  if (!allowed.empty() && long(allowed.size()) != x.size())
    throw std::invalid_argument("softmax_rows: mask size mismatch");
  auto out = make_node(r, c);
  for (int i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j)
      if (allowed.empty() || allowed[size_t(i) * c + j]) mx = std::max(mx, x.at(i, j));
    if (!std::isfinite(mx))
      throw std::runtime_error("softmax_rows: all positions masked for a row");
    double z = 0.0;
    for (int j = 0; j < c; ++j) {
      size_t idx = size_t(i) * c + j;
      if (allowed.empty() || allowed[idx]) {
        out->values[idx] = std::exp(x.at(i, j) - mx);
        z += out->values[idx];
      }
    }
    for (int j = 0; j < c; ++j) out->values[size_t(i) * c + j] /= z;
  }
  TensorImpl* o = out.get();
  TensorImpl* px = x.impl();
  track(out, {x.ptr()}, [o, px, r, c] {
    px->ensure_grad();
    for (int i = 0; i < r; ++i) {
      double dot = 0.0;
      for (int j = 0; j < c; ++j) {
        size_t idx = size_t(i) * c + j;
        dot += o->grad[idx] * o->values[idx];
      }
      for (int j = 0; j < c; ++j) {
        size_t idx = size_t(i) * c + j;
        px->grad[idx] += o->values[idx] * (o->grad[idx] - dot);
      }
    }
  });
  return Tensor(out);
}

Tensor log_softmax_rows(const Tensor& x) {
  int r = x.rows(), c = x.cols();
  auto out = make_node(r, c);
  for (int i = 0; i < r; ++i) {
    double mx = x.at(i, 0);
    for (int j = 1; j < c; ++j) mx = std::max(mx, x.at(i, j));
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(x.at(i, j) - mx);
    double lz = mx + std::log(z);
    for (int j = 0; j < c; ++j) out->values[size_t(i) * c + j] = x.at(i, j) - lz;
  }
  TensorImpl* o = out.get();
  TensorImpl* px = x.impl();
  track(out, {x.ptr()}, [o, px, r, c] {
    px->ensure_grad();
    for (int i = 0; i < r; ++i) {
      double gsum = 0.0;
      for (int j = 0; j < c; ++j) gsum += o->grad[size_t(i) * c + j];
      for (int j = 0; j < c; ++j) {
        size_t idx = size_t(i) * c + j;
        px->grad[idx] += o->grad[idx] - std::exp(o->values[idx]) * gsum;
      }
    }
  });
  return Tensor(out);
}

// --- loss -------------------------------------------------------------------------

Tensor nll_label_smoothed(const Tensor& logprobs, std::span<const int> targets,
                          double eps, int ignore_index) {
  int T = logprobs.rows(), K = logprobs.cols();
  if (long(targets.size()) != T)
    throw std::invalid_argument("nll_label_smoothed: one target per row required");
  if (eps < 0.0 || eps >= 1.0)
    throw std::invalid_argument("nll_label_smoothed: eps must lie in [0,1)");
  if (eps > 0.0 && K < 2)
    throw std::invalid_argument("nll_label_smoothed: smoothing needs at least 2 classes");
  double off = eps > 0.0 ? eps / double(K - 1) : 0.0;
  double gold_mass = 1.0 - eps;
  auto out = make_node(1, 1);
  double loss = 0.0;
  for (int t = 0; t < T; ++t) {
    int y = targets[t];
    if (y == ignore_index) continue;
    if (y < 0 || y >= K)
      throw std::invalid_argument("nll_label_smoothed: target id out of range");
    double row_sum = 0.0;
    if (off > 0.0)
      for (int j = 0; j < K; ++j) row_sum += logprobs.at(t, j);
    // -[ (1-eps) lp_gold + eps/(K-1) sum_{j != gold} lp_j ]
    loss -= gold_mass * logprobs.at(t, y) + off * (row_sum - logprobs.at(t, y));
  }
  out->values[0] = loss;
  TensorImpl* o = out.get();
  TensorImpl* pl = logprobs.impl();
  std::vector<int> tg(targets.begin(), targets.end());
  track(out, {logprobs.ptr()},
        [o, pl, tg = std::move(tg), gold_mass, off, K, ignore_index] {
          pl->ensure_grad();
          double g = o->grad[0];
          for (size_t t = 0; t < tg.size(); ++t) {
            int y = tg[t];
            if (y == ignore_index) continue;
            for (int j = 0; j < K; ++j) {
              double q = (j == y) ? gold_mass : off;
              pl->grad[t * K + j] -= g * q;
            }
          }
        });
  return Tensor(out);
}

// --- dropout -------------------------------------------------------------------------

Tensor dropout_elements(const Tensor& a, double drop_p, rng::Stream& stream) {
  if (drop_p < 0.0 || drop_p >= 1.0)
    throw std::invalid_argument("dropout_elements: drop probability must lie in [0,1)");
  if (drop_p == 0.0) return a;
  double keep_scale = 1.0 / (1.0 - drop_p);
  auto out = make_node(a.rows(), a.cols());
  std::vector<double> factor(a.size());
  for (long i = 0; i < a.size(); ++i) {
    factor[i] = stream.uniform() < drop_p ? 0.0 : keep_scale;
    out->values[i] = a.values()[i] * factor[i];
  }
  TensorImpl* o = out.get();
  TensorImpl* pa = a.impl();
  track(out, {a.ptr()}, [o, pa, factor = std::move(factor)] {
    pa->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i] * factor[i];
  });
  return Tensor(out);
}

// --- reverse pass -----------------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a defined scalar");
  // Iterative post-order DFS; the graph is a DAG by construction (ops only
  // ever link new nodes to existing ones), so no cycle check is needed.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.emplace_back(loss.impl(), 0);
  seen.insert(loss.impl());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop();
}

}  // namespace dmt
