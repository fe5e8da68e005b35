// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

// Dense float64 tensors with a tape-based reverse-mode autodiff.
//
// A Tensor is a cheap handle onto shared storage: copies alias the same
// buffer. Operations record onto the thread's active GradTape (see
// TapeScope) only when one of their inputs participates in gradients.
// Without an active tape every operation is a plain forward evaluation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace icx {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class GradTape;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;
  // Set only for tensors produced by a recorded operation.
  std::optional<std::size_t> node_id;
  const GradTape* tape = nullptr;
};

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Builds a [rows.size() x cols] matrix; every row must have `cols` entries.
  static Tensor matrix(const std::vector<std::vector<double>>& rows);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  /// Size of the last axis (1 for scalars).
  std::size_t cols() const;
  /// Product of all leading axes.
  std::size_t rows() const;

  std::span<const double> data() const { return impl_->data; }
  /// Writable view used by initializers and optimizers. Never call this on a
  /// tensor recorded on a live tape.
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  const std::optional<std::vector<double>>& grad() const { return impl_->grad; }
  void zero_grad();
  std::optional<std::size_t> node_id() const { return impl_->node_id; }

  /// Deep copy with no gradient state and no tape membership.
  Tensor detach() const;
  /// Deep copy that keeps requires_grad but drops grad and tape membership.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Receives the output gradient and accumulates into input gradients.
/// Entries of `input_grads` are null for inputs that do not need gradients.
using BackwardFn = std::function<void(std::span<const double> out_grad,
                                      std::span<std::vector<double>* const> input_grads)>;

struct TapeNode {
  std::string_view rule;
  std::vector<std::size_t> inputs;
  std::size_t output = 0;
  BackwardFn backward;
};

/// Append-only record of differentiable operations. Single-threaded.
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;
  ~GradTape();

  std::size_t size() const { return nodes_.size(); }
  const TapeNode& node(std::size_t id) const { return nodes_.at(id); }
  /// Drops all nodes and detaches every tensor produced on this tape.
  void clear();

  /// Registers `out` as the result of `rule` applied to `inputs`.
  void record(std::string_view rule, std::span<const Tensor> inputs, Tensor& out,
              BackwardFn backward);

  /// Reverse-mode sweep from a scalar loss recorded on this tape. Leaf
  /// gradients accumulate across calls; use Tensor::zero_grad to reset.
  void backward(const Tensor& loss);

  /// True when `t` participates in gradients on this tape.
  bool tracks(const Tensor& t) const;

 private:
  std::size_t leaf_id(const Tensor& t);

  std::vector<TapeNode> nodes_;
  std::vector<std::shared_ptr<TensorImpl>> values_;
  std::unordered_map<const TensorImpl*, std::size_t> leaves_;
};

/// Makes `tape` the active recording tape for the current thread.
class TapeScope {
 public:
  explicit TapeScope(GradTape& tape);
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope();

 private:
  GradTape* previous_;
};

GradTape* active_tape();

void backward(GradTape& tape, const Tensor& loss);
void zero_grad(std::span<Tensor> params);

/// Thread-local floating-point operation counter fed by every kernel. The
/// per-kernel costs live in `flop_cost` so analytic models can reuse them.
namespace flops {
std::uint64_t read();
void reset();
void add(std::uint64_t n);
}  // namespace flops

namespace flop_cost {
inline constexpr std::uint64_t kGeluPerElement = 8;
inline constexpr std::uint64_t kLayerNormPerElement = 8;
inline constexpr std::uint64_t kSoftmaxPerElement = 4;
// Per (query row, key, head): max-subtract, exp, normalize, plus bookkeeping.
inline constexpr std::uint64_t kAttentionSoftmaxPerKey = 5;
inline constexpr std::uint64_t matmul(std::uint64_t m, std::uint64_t k, std::uint64_t n) {
  return 2 * m * k * n;
}
}  // namespace flop_cost

// Differentiable primitives. Matrices are rank-2 row-major tensors.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
/// x[..., n] + bias[n] broadcast over leading axes.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);
Tensor gelu(const Tensor& x);
/// Softmax over the last axis, max-subtracted.
Tensor softmax(const Tensor& logits);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);
inline constexpr double kLayerNormEpsilon = 1e-5;
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Rows [begin, begin + count) of a matrix.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
/// Columns [begin, begin + count) of a matrix.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
/// out[i] = table[indices[i]].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);
/// Mean negative log-likelihood of `labels` under softmax(logits).
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

/// Multi-head attention with the in-context mask: rows [0, n_context) attend
/// to context rows only; every later row attends to the context rows and to
/// itself. q, k, v are [n x d] with d divisible by n_heads. Context keys are
/// visited in a canonical content order, so permuting context rows permutes
/// context outputs and leaves the other rows bit-identical.
Tensor context_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                         std::size_t n_heads, std::size_t n_context);

// Tanh-approximation GELU on scalars, shared by the tensor op and tests.
double gelu_scalar(double x);
double gelu_grad_scalar(double x);

}  // namespace icx
