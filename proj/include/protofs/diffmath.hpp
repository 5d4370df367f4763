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

// Reverse-mode differentiation over the small, fixed set of dense ops the
// classifier needs. Forward values are float32; every reduction accumulates
// in float64, and gradients are accumulated in float64 on the tape.
//
// Each op exists twice: a pure kernel in `kernels` (Tensor -> Tensor) and a
// recording wrapper operating on Var handles. The recording wrapper always
// calls the kernel for its forward value, so code that evaluates a model
// without a tape gets bitwise-identical numbers.

#ifndef PROTOFS_DIFFMATH_HPP_
#define PROTOFS_DIFFMATH_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "protofs/tensor.hpp"

namespace protofs::ad {

namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor add(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& x);
Tensor log(const Tensor& x);
Tensor clamp_min(const Tensor& x, double floor);
// x: [B, Cin, H, W], weight: [Cout, Cin, 3, 3], bias: [Cout].
// Stride 1, zero padding 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor mean_rows(const Tensor& x);
Tensor group_mean_rows(const Tensor& x, std::span<const std::size_t> groups,
                       std::size_t num_groups);
Tensor l2norm_rows(const Tensor& x);
// Pairwise squared Euclidean distances: [m, c] x [n, c] -> [m, n].
Tensor sq_euclidean(const Tensor& x, const Tensor& y);
Tensor logsumexp_rows(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor mean(const Tensor& x);
// Selects x[i, index[i]] for every row i -> [m, 1].
Tensor pick(const Tensor& x, std::span<const std::size_t> index);

}  // namespace kernels

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the upstream gradient of the node's output and pushes
  // contributions into its parents through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, std::span<const double>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Records an op output. `backward` is dropped when no parent needs a
  /// gradient.
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates through every recorded op in
  /// reverse order. Gradients of earlier backward calls are cleared first.
  void backward(Var loss);

  bool requires_grad(Var v) const;
  const Tensor& value(Var v) const;

  /// Gradient truncated to float32; zeros when none reached the node.
  Tensor grad(Var v) const;
  std::span<const double> grad64(Var v) const;

  void accumulate(Var target, std::span<const double> contribution);
  std::span<double> grad_buffer(Var target);

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Number of backward closures invoked by the last backward() call.
  std::size_t last_backward_visits() const noexcept { return visits_; }

  void check_owned(Var v) const;

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    BackwardFn backward;
    std::vector<double> grad;
  };

  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
};

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add_bias(Var x, Var bias);
Var add(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double factor);
Var relu(Var x);
Var log(Var x);
Var clamp_min(Var x, double floor);
Var conv2d(Var x, Var weight, Var bias);
Var mean_rows(Var x);
Var group_mean_rows(Var x, std::span<const std::size_t> groups,
                    std::size_t num_groups);
Var l2norm_rows(Var x);
Var sq_euclidean(Var x, Var y);
Var logsumexp_rows(Var x);
Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
Var dot(Var a, Var b);
Var mean(Var x);
Var pick(Var x, std::span<const std::size_t> index);
Var reshape(Var x, Shape shape);

}  // namespace protofs::ad

#endif  // PROTOFS_DIFFMATH_HPP_
