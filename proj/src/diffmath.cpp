/* Copyright 2026 The protofs Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "protofs/diffmath.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "protofs/error.hpp"

namespace protofs::ad {
namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw Error(ErrorCode::kShapeMismatch, std::string(op) + ": " + detail);
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    shape_error(op, "expected rank " + std::to_string(rank) + ", got " +
                        shape_string(t.shape()));
  }
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_error(op, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

std::size_t bias_length(const char* op, const Tensor& bias) {
  if (bias.rank() == 1) return bias.dim(0);
  if (bias.rank() == 2 && bias.dim(0) == 1) return bias.dim(1);
  shape_error(op, "bias must be [n] or [1, n], got " +
                      shape_string(bias.shape()));
}

}  // namespace

namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    shape_error("matmul", shape_string(a.shape()) + " x " +
                              shape_string(b.shape()));
  }
  Tensor out({m, n});
  std::vector<double> acc(n);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const float* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += aip * brow[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = static_cast<float>(acc[j]);
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank("add_bias", x, 2);
  const std::size_t n = bias_length("add_bias", bias);
  if (n != x.cols()) {
    shape_error("add_bias", shape_string(x.shape()) + " + " +
                                shape_string(bias.shape()));
  }
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = static_cast<float>(static_cast<double>(x[i * n + j]) +
                                          static_cast<double>(bias[j]));
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out = a;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(a[i]) +
                                static_cast<double>(b[i]));
  }
  return out;
}

Tensor neg(const Tensor& a) {
  Tensor out = a;
  for (float& v : out.data()) v = -v;
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = a;
  for (float& v : out.data()) {
    v = static_cast<float>(static_cast<double>(v) * factor);
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor log(const Tensor& x) {
  Tensor out = x;
  for (float& v : out.data()) {
    v = static_cast<float>(std::log(static_cast<double>(v)));
  }
  return out;
}

Tensor clamp_min(const Tensor& x, double floor) {
  Tensor out = x;
  const auto f = static_cast<float>(floor);
  for (float& v : out.data()) v = v >= f ? v : f;
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", weight, 4);
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2),
                    w = x.dim(3);
  const std::size_t cout = weight.dim(0);
  if (weight.dim(1) != cin || weight.dim(2) != 3 || weight.dim(3) != 3) {
    shape_error("conv2d", "weight " + shape_string(weight.shape()) +
                              " incompatible with input " +
                              shape_string(x.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != cout) {
    shape_error("conv2d", "bias " + shape_string(bias.shape()));
  }
  Tensor out({batch, cout, h, w});
  const auto xv = x.data();
  const auto wv = weight.data();
  std::vector<double> acc(h * w);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      std::fill(acc.begin(), acc.end(), static_cast<double>(bias[co]));
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const float* plane = xv.data() + (b * cin + ci) * h * w;
        const float* kernel = wv.data() + (co * cin + ci) * 9;
        for (std::size_t r = 0; r < h; ++r) {
          for (std::size_t c = 0; c < w; ++c) {
            double s = 0.0;
            for (std::size_t kr = 0; kr < 3; ++kr) {
              const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(r + kr) - 1;
              if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kc = 0; kc < 3; ++kc) {
                const std::ptrdiff_t cc =
                    static_cast<std::ptrdiff_t>(c + kc) - 1;
                if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(w)) continue;
                s += static_cast<double>(kernel[kr * 3 + kc]) *
                     plane[static_cast<std::size_t>(rr) * w +
                           static_cast<std::size_t>(cc)];
              }
            }
            acc[r * w + c] += s;
          }
        }
      }
      float* dst = out.data().data() + (b * cout + co) * h * w;
      for (std::size_t i = 0; i < h * w; ++i) {
        dst[i] = static_cast<float>(acc[i]);
      }
    }
  }
  return out;
}

Tensor mean_rows(const Tensor& x) {
  require_rank("mean_rows", x, 2);
  const std::size_t m = x.rows(), n = x.cols();
  if (m == 0) shape_error("mean_rows", "no rows");
  std::vector<double> acc(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) acc[j] += x[i * n + j];
  }
  Tensor out({1, n});
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = static_cast<float>(acc[j] / static_cast<double>(m));
  }
  return out;
}

Tensor group_mean_rows(const Tensor& x, std::span<const std::size_t> groups,
                       std::size_t num_groups) {
  require_rank("group_mean_rows", x, 2);
  const std::size_t m = x.rows(), n = x.cols();
  if (groups.size() != m) {
    shape_error("group_mean_rows", "expected " + std::to_string(m) +
                                       " group ids, got " +
                                       std::to_string(groups.size()));
  }
  std::vector<double> acc(num_groups * n, 0.0);
  std::vector<std::size_t> count(num_groups, 0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t g = groups[i];
    if (g >= num_groups) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  "group id " + std::to_string(g) + " >= " +
                      std::to_string(num_groups));
    }
    ++count[g];
    for (std::size_t j = 0; j < n; ++j) acc[g * n + j] += x[i * n + j];
  }
  Tensor out({num_groups, n});
  for (std::size_t g = 0; g < num_groups; ++g) {
    if (count[g] == 0) {
      throw Error(ErrorCode::kEmptyClass,
                  "group " + std::to_string(g) + " has no rows");
    }
    for (std::size_t j = 0; j < n; ++j) {
      out[g * n + j] =
          static_cast<float>(acc[g * n + j] / static_cast<double>(count[g]));
    }
  }
  return out;
}

Tensor l2norm_rows(const Tensor& x) {
  require_rank("l2norm_rows", x, 2);
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out = x;
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = x[i * n + j];
      ss += v * v;
    }
    const double norm = std::sqrt(ss);
    if (!(norm > 0.0)) {
      throw Error(ErrorCode::kZeroNormRow,
                  "row " + std::to_string(i) + " has zero norm");
    }
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = static_cast<float>(x[i * n + j] / norm);
    }
  }
  return out;
}

Tensor sq_euclidean(const Tensor& x, const Tensor& y) {
  require_rank("sq_euclidean", x, 2);
  require_rank("sq_euclidean", y, 2);
  const std::size_t m = x.rows(), n = y.rows(), c = x.cols();
  if (y.cols() != c) {
    shape_error("sq_euclidean", shape_string(x.shape()) + " vs " +
                                    shape_string(y.shape()));
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const float* xi = x.data().data() + i * c;
    for (std::size_t j = 0; j < n; ++j) {
      const float* yj = y.data().data() + j * c;
      double s = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        const double d = static_cast<double>(xi[k]) - yj[k];
        s += d * d;
      }
      out[i * n + j] = static_cast<float>(s);
    }
  }
  return out;
}

namespace {

// Per-row max and log-sum-exp in float64.
void row_lse(std::span<const float> row, double& max_out, double& lse_out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (float v : row) mx = std::max(mx, static_cast<double>(v));
  double s = 0.0;
  for (float v : row) s += std::exp(static_cast<double>(v) - mx);
  max_out = mx;
  lse_out = mx + std::log(s);
}

}  // namespace

Tensor logsumexp_rows(const Tensor& x) {
  require_rank("logsumexp_rows", x, 2);
  Tensor out({x.rows(), 1});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx, lse;
    row_lse(x.row(i), mx, lse);
    out[i] = static_cast<float>(lse);
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank("softmax_rows", x, 2);
  const std::size_t n = x.cols();
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx, lse;
    row_lse(x.row(i), mx, lse);
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] =
          static_cast<float>(std::exp(static_cast<double>(x[i * n + j]) - lse));
    }
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& x) {
  require_rank("log_softmax_rows", x, 2);
  const std::size_t n = x.cols();
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx, lse;
    row_lse(x.row(i), mx, lse);
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = static_cast<float>(static_cast<double>(x[i * n + j]) - lse);
    }
  }
  return out;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_same_shape("dot", a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    s += static_cast<double>(a[i]) * b[i];
  }
  return Tensor::scalar(static_cast<float>(s));
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) shape_error("mean", "empty tensor");
  double s = 0.0;
  for (float v : x.data()) s += v;
  return Tensor::scalar(static_cast<float>(s / static_cast<double>(x.numel())));
}

Tensor pick(const Tensor& x, std::span<const std::size_t> index) {
  require_rank("pick", x, 2);
  if (index.size() != x.rows()) {
    shape_error("pick", "expected " + std::to_string(x.rows()) +
                            " indices, got " + std::to_string(index.size()));
  }
  Tensor out({x.rows(), 1});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (index[i] >= x.cols()) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  "pick index " + std::to_string(index[i]) + " >= " +
                      std::to_string(x.cols()));
    }
    out[i] = x.at(i, index[i]);
  }
  return out;
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const {
  if (tape_ == nullptr) {
    throw Error(ErrorCode::kDetachedTensor, "Var is not bound to a tape");
  }
  return tape_->value(*this);
}

void Tape::check_owned(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw Error(ErrorCode::kDetachedTensor,
                "Var does not belong to this tape");
  }
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), requires_grad, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> parents,
                 BackwardFn backward) {
  bool needs_grad = false;
  for (const Var& p : parents) {
    check_owned(p);
    needs_grad = needs_grad || nodes_[p.id_].requires_grad;
  }
#ifndef NDEBUG
  if (!value.all_finite()) {
    throw Error(ErrorCode::kNonFinite, "op produced a non-finite value");
  }
#endif
  nodes_.push_back(Node{std::move(value), needs_grad,
                        needs_grad ? std::move(backward) : BackwardFn{}, {}});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  check_owned(loss);
  if (nodes_[loss.id_].value.numel() != 1) {
    throw Error(ErrorCode::kNotScalarLoss,
                "loss has shape " + shape_string(nodes_[loss.id_].value.shape()));
  }
  for (Node& n : nodes_) n.grad.clear();
  visits_ = 0;
  nodes_[loss.id_].grad.assign(1, 1.0);
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    // Closures only write to parent grads, so this span stays valid.
    n.backward(*this, n.grad);
    ++visits_;
  }
}

bool Tape::requires_grad(Var v) const {
  check_owned(v);
  return nodes_[v.id_].requires_grad;
}

const Tensor& Tape::value(Var v) const {
  check_owned(v);
  return nodes_[v.id_].value;
}

Tensor Tape::grad(Var v) const {
  check_owned(v);
  const Node& n = nodes_[v.id_];
  Tensor out(n.value.shape());
  for (std::size_t i = 0; i < n.grad.size(); ++i) {
    out[i] = static_cast<float>(n.grad[i]);
  }
  return out;
}

std::span<const double> Tape::grad64(Var v) const {
  check_owned(v);
  return nodes_[v.id_].grad;
}

std::span<double> Tape::grad_buffer(Var target) {
  check_owned(target);
  Node& n = nodes_[target.id_];
  if (n.grad.empty()) n.grad.assign(n.value.numel(), 0.0);
  return n.grad;
}

void Tape::accumulate(Var target, std::span<const double> contribution) {
  if (!requires_grad(target)) return;
  auto g = grad_buffer(target);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += contribution[i];
}

// ---------------------------------------------------------------------------
// Recording ops

namespace {

Tape& same_tape(std::initializer_list<Var> vars) {
  Tape* tape = vars.begin()->tape();
  if (tape == nullptr) {
    throw Error(ErrorCode::kDetachedTensor, "Var is not bound to a tape");
  }
  for (const Var& v : vars) tape->check_owned(v);
  return *tape;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  const Var parents[] = {a, b};
  return tape.record(
      kernels::matmul(a.value(), b.value()), parents,
      [a, b](Tape& t, std::span<const double> g) {
        const Tensor& av = a.value();
        const Tensor& bv = b.value();
        const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
        if (t.requires_grad(a)) {
          auto ga = t.grad_buffer(a);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
              ga[i * k + p] += s;
            }
          }
        }
        if (t.requires_grad(b)) {
          auto gb = t.grad_buffer(b);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = av[i * k + p];
              for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
            }
          }
        }
      });
}

Var transpose(Var a) {
  Tape& tape = same_tape({a});
  const Var parents[] = {a};
  return tape.record(kernels::transpose(a.value()), parents,
                     [a](Tape& t, std::span<const double> g) {
                       const std::size_t m = a.value().rows();
                       const std::size_t n = a.value().cols();
                       auto ga = t.grad_buffer(a);
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < n; ++j) {
                           ga[i * n + j] += g[j * m + i];
                         }
                       }
                     });
}

Var add_bias(Var x, Var bias) {
  Tape& tape = same_tape({x, bias});
  const Var parents[] = {x, bias};
  return tape.record(kernels::add_bias(x.value(), bias.value()), parents,
                     [x, bias](Tape& t, std::span<const double> g) {
                       t.accumulate(x, g);
                       if (t.requires_grad(bias)) {
                         const std::size_t m = x.value().rows();
                         const std::size_t n = x.value().cols();
                         auto gb = t.grad_buffer(bias);
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                         }
                       }
                     });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  const Var parents[] = {a, b};
  return tape.record(kernels::add(a.value(), b.value()), parents,
                     [a, b](Tape& t, std::span<const double> g) {
                       t.accumulate(a, g);
                       t.accumulate(b, g);
                     });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double factor) {
  Tape& tape = same_tape({a});
  const Var parents[] = {a};
  return tape.record(kernels::scale(a.value(), factor), parents,
                     [a, factor](Tape& t, std::span<const double> g) {
                       auto ga = t.grad_buffer(a);
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * factor;
                     });
}

Var relu(Var x) {
  Tape& tape = same_tape({x});
  const Var parents[] = {x};
  return tape.record(kernels::relu(x.value()), parents,
                     [x](Tape& t, std::span<const double> g) {
                       const Tensor& xv = x.value();
                       auto gx = t.grad_buffer(x);
                       for (std::size_t i = 0; i < gx.size(); ++i) {
                         if (xv[i] > 0.0f) gx[i] += g[i];
                       }
                     });
}

Var log(Var x) {
  Tape& tape = same_tape({x});
  const Var parents[] = {x};
  return tape.record(kernels::log(x.value()), parents,
                     [x](Tape& t, std::span<const double> g) {
                       const Tensor& xv = x.value();
                       auto gx = t.grad_buffer(x);
                       for (std::size_t i = 0; i < gx.size(); ++i) {
                         gx[i] += g[i] / static_cast<double>(xv[i]);
                       }
                     });
}

Var clamp_min(Var x, double floor) {
  Tape& tape = same_tape({x});
  const Var parents[] = {x};
  return tape.record(kernels::clamp_min(x.value(), floor), parents,
                     [x, floor](Tape& t, std::span<const double> g) {
                       const Tensor& xv = x.value();
                       const auto f = static_cast<float>(floor);
                       auto gx = t.grad_buffer(x);
                       for (std::size_t i = 0; i < gx.size(); ++i) {
                         if (xv[i] >= f) gx[i] += g[i];
                       }
                     });
}

Var conv2d(Var x, Var weight, Var bias) {
  Tape& tape = same_tape({x, weight, bias});
  const Var parents[] = {x, weight, bias};
  return tape.record(
      kernels::conv2d(x.value(), weight.value(), bias.value()), parents,
      [x, weight, bias](Tape& t, std::span<const double> g) {
        const Tensor& xv = x.value();
        const Tensor& wv = weight.value();
        const std::size_t batch = xv.dim(0), cin = xv.dim(1), h = xv.dim(2),
                          w = xv.dim(3), cout = wv.dim(0);
        const bool want_x = t.requires_grad(x);
        const bool want_w = t.requires_grad(weight);
        std::span<double> gx, gw;
        if (want_x) gx = t.grad_buffer(x);
        if (want_w) gw = t.grad_buffer(weight);
        if (t.requires_grad(bias)) {
          auto gb = t.grad_buffer(bias);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t co = 0; co < cout; ++co) {
              const double* go = g.data() + (b * cout + co) * h * w;
              double s = 0.0;
              for (std::size_t i = 0; i < h * w; ++i) s += go[i];
              gb[co] += s;
            }
          }
        }
        if (!want_x && !want_w) return;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t co = 0; co < cout; ++co) {
            const double* go = g.data() + (b * cout + co) * h * w;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const std::size_t plane = (b * cin + ci) * h * w;
              const std::size_t kbase = (co * cin + ci) * 9;
              for (std::size_t r = 0; r < h; ++r) {
                for (std::size_t c = 0; c < w; ++c) {
                  const double up = go[r * w + c];
                  if (up == 0.0) continue;
                  for (std::size_t kr = 0; kr < 3; ++kr) {
                    const std::ptrdiff_t rr =
                        static_cast<std::ptrdiff_t>(r + kr) - 1;
                    if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t kc = 0; kc < 3; ++kc) {
                      const std::ptrdiff_t cc =
                          static_cast<std::ptrdiff_t>(c + kc) - 1;
                      if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(w)) continue;
                      const std::size_t xi = plane +
                                             static_cast<std::size_t>(rr) * w +
                                             static_cast<std::size_t>(cc);
                      const std::size_t wi = kbase + kr * 3 + kc;
                      if (want_x) gx[xi] += up * wv[wi];
                      if (want_w) gw[wi] += up * xv[xi];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

Var mean_rows(Var x) {
  Tape& tape = same_tape({x});
  const Var parents[] = {x};
  return tape.record(kernels::mean_rows(x.value()), parents,
                     [x](Tape& t, std::span<const double> g) {
                       const std::size_t m = x.value().rows();
                       const std::size_t n = x.value().cols();
                       auto gx = t.grad_buffer(x);
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < n; ++j) {
                           gx[i * n + j] += g[j] / static_cast<double>(m);
                         }
                       }
                     });
}

Var group_mean_rows(Var x, std::span<const std::size_t> groups,
                    std::size_t num_groups) {
  Tape& tape = same_tape({x});
  const Var parents[] = {x};
  std::vector<std::size_t> ids(groups.begin(), groups.end());
  Tensor out = kernels::group_mean_rows(x.value(), ids, num_groups);
  std::vector<double> count(num_groups, 0.0);
  for (std::size_t id : ids) count[id] += 1.0;
  return tape.record(
      std::move(out), parents,
      [x, ids = std::move(ids), count = std::move(count)](
          Tape& t, std::span<const double> g) {
        const std::size_t n = x.value().cols();
        auto gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          const double inv = 1.0 / count[ids[i]];
          for (std::size_t j = 0; j < n; ++j) {
            gx[i * n + j] += g[ids[i] * n + j] * inv;
          }
        }
      });
}

Var l2norm_rows(Var x) {
  Tape& tape = same_tape({x});
  const Var parents[] = {x};
  return tape.record(
      kernels::l2norm_rows(x.value()), parents,
      [x](Tape& t, std::span<const double> g) {
        const Tensor& xv = x.value();
        const std::size_t m = xv.rows(), n = xv.cols();
        auto gx = t.grad_buffer(x);
        std::vector<double> y(n);
        for (std::size_t i = 0; i < m; ++i) {
          double ss = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double v = xv[i * n + j];
            ss += v * v;
          }
          const double norm = std::sqrt(ss);
          double yg = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            y[j] = xv[i * n + j] / norm;
            yg += y[j] * g[i * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            gx[i * n + j] += (g[i * n + j] - y[j] * yg) / norm;
          }
        }
      });
}

Var sq_euclidean(Var x, Var y) {
  Tape& tape = same_tape({x, y});
  const Var parents[] = {x, y};
  return tape.record(
      kernels::sq_euclidean(x.value(), y.value()), parents,
      [x, y](Tape& t, std::span<const double> g) {
        const Tensor& xv = x.value();
        const Tensor& yv = y.value();
        const std::size_t m = xv.rows(), n = yv.rows(), c = xv.cols();
        const bool want_x = t.requires_grad(x);
        const bool want_y = t.requires_grad(y);
        std::span<double> gx, gy;
        if (want_x) gx = t.grad_buffer(x);
        if (want_y) gy = t.grad_buffer(y);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const double up = 2.0 * g[i * n + j];
            for (std::size_t k = 0; k < c; ++k) {
              const double d = static_cast<double>(xv[i * c + k]) - yv[j * c + k];
              if (want_x) gx[i * c + k] += up * d;
              if (want_y) gy[j * c + k] -= up * d;
            }
          }
        }
      });
}

namespace {

// Softmax of row i recomputed in float64 from the op's input.
void softmax_row64(const Tensor& x, std::size_t i, std::vector<double>& p) {
  const std::size_t n = x.cols();
  p.resize(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(x[i * n + j]));
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    p[j] = std::exp(static_cast<double>(x[i * n + j]) - mx);
    s += p[j];
  }
  for (double& v : p) v /= s;
}

}  // namespace

Var logsumexp_rows(Var x) {
  Tape& tape = same_tape({x});
  const Var parents[] = {x};
  return tape.record(kernels::logsumexp_rows(x.value()), parents,
                     [x](Tape& t, std::span<const double> g) {
                       const Tensor& xv = x.value();
                       const std::size_t n = xv.cols();
                       auto gx = t.grad_buffer(x);
                       std::vector<double> p;
                       for (std::size_t i = 0; i < xv.rows(); ++i) {
                         softmax_row64(xv, i, p);
                         for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i] * p[j];
                       }
                     });
}

Var softmax_rows(Var x) {
  Tape& tape = same_tape({x});
  const Var parents[] = {x};
  return tape.record(kernels::softmax_rows(x.value()), parents,
                     [x](Tape& t, std::span<const double> g) {
                       const Tensor& xv = x.value();
                       const std::size_t n = xv.cols();
                       auto gx = t.grad_buffer(x);
                       std::vector<double> p;
                       for (std::size_t i = 0; i < xv.rows(); ++i) {
                         softmax_row64(xv, i, p);
                         double pg = 0.0;
                         for (std::size_t j = 0; j < n; ++j) pg += p[j] * g[i * n + j];
                         for (std::size_t j = 0; j < n; ++j) {
                           gx[i * n + j] += p[j] * (g[i * n + j] - pg);
                         }
                       }
                     });
}

Var log_softmax_rows(Var x) {
  Tape& tape = same_tape({x});
  const Var parents[] = {x};
  return tape.record(kernels::log_softmax_rows(x.value()), parents,
                     [x](Tape& t, std::span<const double> g) {
                       const Tensor& xv = x.value();
                       const std::size_t n = xv.cols();
                       auto gx = t.grad_buffer(x);
                       std::vector<double> p;
                       for (std::size_t i = 0; i < xv.rows(); ++i) {
                         softmax_row64(xv, i, p);
                         double gs = 0.0;
                         for (std::size_t j = 0; j < n; ++j) gs += g[i * n + j];
                         for (std::size_t j = 0; j < n; ++j) {
                           gx[i * n + j] += g[i * n + j] - p[j] * gs;
                         }
                       }
                     });
}

Var dot(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  const Var parents[] = {a, b};
  return tape.record(kernels::dot(a.value(), b.value()), parents,
                     [a, b](Tape& t, std::span<const double> g) {
                       const Tensor& av = a.value();
                       const Tensor& bv = b.value();
                       if (t.requires_grad(a)) {
                         auto ga = t.grad_buffer(a);
                         for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * bv[i];
                       }
                       if (t.requires_grad(b)) {
                         auto gb = t.grad_buffer(b);
                         for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[0] * av[i];
                       }
                     });
}

Var mean(Var x) {
  Tape& tape = same_tape({x});
  const Var parents[] = {x};
  return tape.record(kernels::mean(x.value()), parents,
                     [x](Tape& t, std::span<const double> g) {
                       auto gx = t.grad_buffer(x);
                       const double share = g[0] / static_cast<double>(gx.size());
                       for (double& v : gx) v += share;
                     });
}

Var pick(Var x, std::span<const std::size_t> index) {
  Tape& tape = same_tape({x});
  const Var parents[] = {x};
  std::vector<std::size_t> ids(index.begin(), index.end());
  Tensor out = kernels::pick(x.value(), ids);
  return tape.record(std::move(out), parents,
                     [x, ids = std::move(ids)](Tape& t, std::span<const double> g) {
                       const std::size_t n = x.value().cols();
                       auto gx = t.grad_buffer(x);
                       for (std::size_t i = 0; i < ids.size(); ++i) gx[i * n + ids[i]] += g[i];
                     });
}

Var reshape(Var x, Shape shape) {
  Tape& tape = same_tape({x});
  const Var parents[] = {x};
  return tape.record(x.value().reshaped(std::move(shape)), parents,
                     [x](Tape& t, std::span<const double> g) { t.accumulate(x, g); });
}

}  // namespace protofs::ad
