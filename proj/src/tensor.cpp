// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "icx/tensor.hpp"

#if defined(__AVX2__) || defined(__AVX512F__)
#include <immintrin.h>
#endif

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "icx/error.hpp"

namespace icx {

namespace {

constexpr std::size_t kUntracked = std::numeric_limits<std::size_t>::max();

thread_local GradTape* g_active_tape = nullptr;
thread_local std::uint64_t g_flops = 0;

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.front().size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::cols() const { return rank() == 0 ? 1 : shape().back(); }

std::size_t Tensor::rows() const {
  const std::size_t c = cols();
  return c == 0 ? 0 : numel() / c;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

void Tensor::zero_grad() { impl_->grad.reset(); }

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data, impl_->requires_grad); }

// ---------------------------------------------------------------- tape

GradTape::~GradTape() { clear(); }

void GradTape::clear() {
  for (auto& v : values_) {
    if (v->tape == this) {
      v->tape = nullptr;
      v->node_id.reset();
    }
  }
  nodes_.clear();
  values_.clear();
  leaves_.clear();
}

bool GradTape::tracks(const Tensor& t) const {
  const auto& impl = t.impl();
  return (impl->tape == this && impl->node_id) || impl->requires_grad;
}

std::size_t GradTape::leaf_id(const Tensor& t) {
  const auto* key = t.impl().get();
  if (auto it = leaves_.find(key); it != leaves_.end()) return it->second;
  const std::size_t id = nodes_.size();
  nodes_.push_back(TapeNode{"leaf", {}, id, nullptr});
  values_.push_back(t.impl());
  leaves_.emplace(key, id);
  return id;
}

void GradTape::record(std::string_view rule, std::span<const Tensor> inputs, Tensor& out,
                      BackwardFn backward) {
  TapeNode node;
  node.rule = rule;
  for (const auto& in : inputs) {
    const auto& impl = in.impl();
    if (impl->tape == this && impl->node_id) {
      node.inputs.push_back(*impl->node_id);
    } else if (impl->requires_grad) {
      node.inputs.push_back(leaf_id(in));
    } else {
      node.inputs.push_back(kUntracked);
    }
  }
  node.output = nodes_.size();
  node.backward = std::move(backward);
  out.impl()->requires_grad = true;
  out.impl()->node_id = node.output;
  out.impl()->tape = this;
  nodes_.push_back(std::move(node));
  values_.push_back(out.impl());
}

void GradTape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  const auto& limpl = loss.impl();
  std::size_t root;
  if (limpl->tape == this && limpl->node_id) {
    root = *limpl->node_id;
  } else if (limpl->requires_grad) {
    root = leaf_id(loss);
  } else {
    throw ContractError("backward: loss is not recorded on this tape");
  }

  std::vector<std::vector<double>> grads(nodes_.size());
  grads[root].assign(1, 1.0);
  std::vector<std::vector<double>*> in_grads;
  for (std::size_t id = root + 1; id-- > 0;) {
    auto& g = grads[id];
    if (g.empty()) continue;
    const TapeNode& node = nodes_[id];
    auto& value = values_[id];
    if (!node.backward) {
      if (!value->requires_grad) continue;
      if (!value->grad) value->grad.emplace(value->data.size(), 0.0);
      auto& dst = *value->grad;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
      continue;
    }
    in_grads.assign(node.inputs.size(), nullptr);
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      const std::size_t in = node.inputs[j];
      if (in == kUntracked) continue;
      if (grads[in].empty()) grads[in].assign(values_[in]->data.size(), 0.0);
      in_grads[j] = &grads[in];
    }
    node.backward(g, in_grads);
    // Free intermediate buffers as soon as they are consumed.
    std::vector<double>().swap(g);
  }
}

TapeScope::TapeScope(GradTape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

GradTape* active_tape() { return g_active_tape; }

void backward(GradTape& tape, const Tensor& loss) { tape.backward(loss); }

void zero_grad(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

namespace flops {
std::uint64_t read() { return g_flops; }
void reset() { g_flops = 0; }
void add(std::uint64_t n) { g_flops += n; }
}  // namespace flops

// ---------------------------------------------------------------- helpers

namespace {

bool needs_record(std::initializer_list<const Tensor*> inputs) {
  GradTape* tape = g_active_tape;
  if (!tape) return false;
  for (const Tensor* t : inputs) {
    if (tape->tracks(*t)) return true;
  }
  return false;
}

void record(std::string_view rule, std::vector<Tensor> inputs, Tensor& out, BackwardFn fn) {
  g_active_tape->record(rule, inputs, out, std::move(fn));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

// c[m x n] += a[m x k] * b[k x n]
// C += A * B. Every C entry accumulates its k products in ascending order
// with separately rounded multiply and add, so every code path below gives
// the same bits and no row depends on another.
void gemm_edge(const double* a, const double* b, double* c, std::size_t rows, std::size_t cols, std::size_t k,
               std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = c[r * n + j];
      for (std::size_t p = 0; p < k; ++p) acc += a[r * k + p] * b[p * n + j];
      c[r * n + j] = acc;
    }
  }
}

#if defined(__AVX512F__)
constexpr std::size_t kGemmCols = 16;

template <int MR>
void gemm_tile(const double* a, const double* b, double* c, std::size_t k, std::size_t n) {
  __m512d lo[MR], hi[MR];
  for (int r = 0; r < MR; ++r) {
    lo[r] = _mm512_loadu_pd(c + r * n);
    hi[r] = _mm512_loadu_pd(c + r * n + 8);
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m512d b0 = _mm512_loadu_pd(b + p * n), b1 = _mm512_loadu_pd(b + p * n + 8);
    for (int r = 0; r < MR; ++r) {
      const __m512d av = _mm512_set1_pd(a[r * k + p]);
      lo[r] = _mm512_add_pd(lo[r], _mm512_mul_pd(av, b0));
      hi[r] = _mm512_add_pd(hi[r], _mm512_mul_pd(av, b1));
    }
  }
  for (int r = 0; r < MR; ++r) {
    _mm512_storeu_pd(c + r * n, lo[r]);
    _mm512_storeu_pd(c + r * n + 8, hi[r]);
  }
}
#elif defined(__AVX2__)
constexpr std::size_t kGemmCols = 8;

template <int MR>
void gemm_tile(const double* a, const double* b, double* c, std::size_t k, std::size_t n) {
  __m256d lo[MR], hi[MR];
  for (int r = 0; r < MR; ++r) {
    lo[r] = _mm256_loadu_pd(c + r * n);
    hi[r] = _mm256_loadu_pd(c + r * n + 4);
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * n), b1 = _mm256_loadu_pd(b + p * n + 4);
    for (int r = 0; r < MR; ++r) {
      const __m256d av = _mm256_set1_pd(a[r * k + p]);
      lo[r] = _mm256_add_pd(lo[r], _mm256_mul_pd(av, b0));
      hi[r] = _mm256_add_pd(hi[r], _mm256_mul_pd(av, b1));
    }
  }
  for (int r = 0; r < MR; ++r) {
    _mm256_storeu_pd(c + r * n, lo[r]);
    _mm256_storeu_pd(c + r * n + 4, hi[r]);
  }
}
#else
constexpr std::size_t kGemmCols = 8;

template <int MR>
void gemm_tile(const double* a, const double* b, double* c, std::size_t k, std::size_t n) {
  gemm_edge(a, b, c, MR, kGemmCols, k, n);
}
#endif

template <int MR>
void gemm_rows(const double* a, const double* b, double* c, std::size_t k, std::size_t n) {
  const std::size_t nb = n - n % kGemmCols;
  for (std::size_t j = 0; j < nb; j += kGemmCols) gemm_tile<MR>(a, b + j, c + j, k, n);
  if (nb < n) gemm_edge(a, b + nb, c + nb, MR, n - nb, k, n);
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= m; i += 8) gemm_rows<8>(a + i * k, b, c + i * n, k, n);
  for (; i + 4 <= m; i += 4) gemm_rows<4>(a + i * k, b, c + i * n, k, n);
  for (; i < m; ++i) gemm_rows<1>(a + i * k, b, c + i * n, k, n);
}

std::vector<double> transpose(std::span<const double> x, std::size_t r, std::size_t c) {
  std::vector<double> t(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t[j * r + i] = x[i * c + j];
  return t;
}

}  // namespace

double gelu_scalar(double x) {
  constexpr double kAlpha = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(kAlpha * (x + 0.044715 * x * x * x)));
}

double gelu_grad_scalar(double x) {
  constexpr double kAlpha = 0.7978845608028654;
  const double u = kAlpha * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = kAlpha * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

// ---------------------------------------------------------------- ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  flops::add(flop_cost::matmul(m, k, n));
  Tensor result({m, n}, std::move(out));
  if (needs_record({&a, &b})) {
    record("matmul", {a, b}, result,
           [a, b, m, k, n](std::span<const double> g, std::span<std::vector<double>* const> in) {
             if (in[0]) {  // dA = dC * B^T
               const auto bt = transpose(b.data(), k, n);
               gemm_nn(g.data(), bt.data(), in[0]->data(), m, n, k);
               flops::add(flop_cost::matmul(m, n, k));
             }
             if (in[1]) {  // dB = A^T * dC
               const auto at = transpose(a.data(), m, k);
               gemm_nn(at.data(), g.data(), in[1]->data(), k, m, n);
               flops::add(flop_cost::matmul(k, m, n));
             }
           });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes differ, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(a.numel());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  flops::add(out.size());
  Tensor result(a.shape(), std::move(out));
  if (needs_record({&a, &b})) {
    record("add", {a, b}, result,
           [](std::span<const double> g, std::span<std::vector<double>* const> in) {
             for (auto* dst : in) {
               if (!dst) continue;
               for (std::size_t i = 0; i < g.size(); ++i) (*dst)[i] += g[i];
             }
           });
  }
  return result;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = x.cols();
  if (bias.rank() != 1 || bias.numel() != n || x.rank() == 0) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(x.shape()));
  }
  const std::size_t rows = x.rows();
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bd[j];
  flops::add(out.size());
  Tensor result(x.shape(), std::move(out));
  if (needs_record({&x, &bias})) {
    record("add_bias", {x, bias}, result,
           [rows, n](std::span<const double> g, std::span<std::vector<double>* const> in) {
             if (in[0]) {
               for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i];
             }
             if (in[1]) {
               auto& db = *in[1];
               for (std::size_t r = 0; r < rows; ++r)
                 for (std::size_t j = 0; j < n; ++j) db[j] += g[r * n + j];
             }
           });
  }
  return result;
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * factor;
  flops::add(out.size());
  Tensor result(x.shape(), std::move(out));
  if (needs_record({&x})) {
    record("scale", {x}, result,
           [factor](std::span<const double> g, std::span<std::vector<double>* const> in) {
             for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i] * factor;
           });
  }
  return result;
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_scalar(xd[i]);
  flops::add(out.size() * flop_cost::kGeluPerElement);
  Tensor result(x.shape(), std::move(out));
  if (needs_record({&x})) {
    record("gelu", {x}, result,
           [x](std::span<const double> g, std::span<std::vector<double>* const> in) {
             const auto xd = x.data();
             for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i] * gelu_grad_scalar(xd[i]);
           });
  }
  return result;
}

Tensor softmax(const Tensor& logits) {
  const std::size_t k = logits.cols();
  if (k == 0 || logits.rank() == 0) {
    throw DimensionError("softmax: needs a non-empty last axis, got " +
                         shape_string(logits.shape()));
  }
  const auto xd = logits.data();
  for (double v : xd) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite logit");
  }
  const std::size_t rows = logits.rows();
  std::vector<double> out(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = xd.data() + r * k;
    double* y = out.data() + r * k;
    const double m = *std::max_element(x, x + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      y[j] = std::exp(x[j] - m);
      z += y[j];
    }
    for (std::size_t j = 0; j < k; ++j) y[j] /= z;
  }
  flops::add(out.size() * flop_cost::kSoftmaxPerElement);
  Tensor result(logits.shape(), std::move(out));
  if (needs_record({&logits})) {
    Tensor probs = result.detach();
    record("softmax", {logits}, result,
           [probs, rows, k](std::span<const double> g, std::span<std::vector<double>* const> in) {
             const auto p = probs.data();
             auto& dx = *in[0];
             for (std::size_t r = 0; r < rows; ++r) {
               double dot = 0.0;
               for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * p[r * k + j];
               for (std::size_t j = 0; j < k; ++j)
                 dx[r * k + j] += p[r * k + j] * (g[r * k + j] - dot);
             }
           });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  const std::size_t d = x.cols();
  if (x.rank() == 0 || d == 0 || gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                         shape_string(bias.shape()) + " do not match " + shape_string(x.shape()));
  }
  const std::size_t rows = x.rows();
  const auto xd = x.data(), gd = gain.data(), bd = bias.data();
  std::vector<double> out(xd.size());
  std::vector<double> xhat(xd.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* v = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += v[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (v[j] - mu) * (v[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (v[j] - mu) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gd[j] + bd[j];
    }
  }
  flops::add(xd.size() * flop_cost::kLayerNormPerElement);
  Tensor result(x.shape(), std::move(out));
  if (needs_record({&x, &gain, &bias})) {
    record("layer_norm", {x, gain, bias}, result,
           [xhat = std::move(xhat), inv_std = std::move(inv_std), gain, rows, d](
               std::span<const double> g, std::span<std::vector<double>* const> in) {
             const auto gd = gain.data();
             if (in[0]) {
               auto& dx = *in[0];
               for (std::size_t r = 0; r < rows; ++r) {
                 double m1 = 0.0, m2 = 0.0;
                 for (std::size_t j = 0; j < d; ++j) {
                   const double dh = g[r * d + j] * gd[j];
                   m1 += dh;
                   m2 += dh * xhat[r * d + j];
                 }
                 m1 /= static_cast<double>(d);
                 m2 /= static_cast<double>(d);
                 for (std::size_t j = 0; j < d; ++j) {
                   const double dh = g[r * d + j] * gd[j];
                   dx[r * d + j] += inv_std[r] * (dh - m1 - xhat[r * d + j] * m2);
                 }
               }
             }
             if (in[1]) {
               for (std::size_t r = 0; r < rows; ++r)
                 for (std::size_t j = 0; j < d; ++j) (*in[1])[j] += g[r * d + j] * xhat[r * d + j];
             }
             if (in[2]) {
               for (std::size_t r = 0; r < rows; ++r)
                 for (std::size_t j = 0; j < d; ++j) (*in[2])[j] += g[r * d + j];
             }
           });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  flops::add(x.numel());
  Tensor result = Tensor::scalar(s);
  if (needs_record({&x})) {
    record("sum", {x}, result, [](std::span<const double> g, std::span<std::vector<double>* const> in) {
      for (auto& v : *in[0]) v += g[0];
    });
  }
  return result;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_rows");
  const std::size_t c = x.shape()[1];
  if (begin + count > x.shape()[0]) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_string(x.shape()));
  }
  const auto xd = x.data();
  std::vector<double> out(xd.begin() + begin * c, xd.begin() + (begin + count) * c);
  Tensor result({count, c}, std::move(out));
  if (needs_record({&x})) {
    record("slice_rows", {x}, result,
           [begin, c](std::span<const double> g, std::span<std::vector<double>* const> in) {
             auto& dx = *in[0];
             for (std::size_t i = 0; i < g.size(); ++i) dx[begin * c + i] += g[i];
           });
  }
  return result;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  if (begin + count > c) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_string(x.shape()));
  }
  const auto xd = x.data();
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = xd[i * c + begin + j];
  Tensor result({r, count}, std::move(out));
  if (needs_record({&x})) {
    record("slice_cols", {x}, result,
           [r, c, begin, count](std::span<const double> g, std::span<std::vector<double>* const> in) {
             auto& dx = *in[0];
             for (std::size_t i = 0; i < r; ++i)
               for (std::size_t j = 0; j < count; ++j) dx[i * c + begin + j] += g[i * count + j];
           });
  }
  return result;
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
  require_matrix(table, "gather_rows");
  const std::size_t n = table.shape()[0], d = table.shape()[1];
  const auto td = table.data();
  std::vector<double> out(indices.size() * d);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= n) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) + " out of " +
                           shape_string(table.shape()));
    }
    std::copy_n(td.begin() + indices[i] * d, d, out.begin() + i * d);
  }
  Tensor result({indices.size(), d}, std::move(out));
  if (needs_record({&table})) {
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    record("gather_rows", {table}, result,
           [idx = std::move(idx), d](std::span<const double> g, std::span<std::vector<double>* const> in) {
             auto& dt = *in[0];
             for (std::size_t i = 0; i < idx.size(); ++i)
               for (std::size_t j = 0; j < d; ++j) dt[idx[i] * d + j] += g[i * d + j];
           });
  }
  return result;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_matrix(logits, "cross_entropy");
  const std::size_t n = logits.shape()[0], k = logits.shape()[1];
  if (labels.size() != n || n == 0) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         shape_string(logits.shape()));
  }
  Tensor probs = softmax(logits.detach());
  const auto p = probs.data();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= k) throw DimensionError("cross_entropy: label out of range");
    loss -= std::log(p[i * k + labels[i]]);
  }
  loss /= static_cast<double>(n);
  Tensor result = Tensor::scalar(loss);
  if (needs_record({&logits})) {
    std::vector<std::size_t> lab(labels.begin(), labels.end());
    record("cross_entropy", {logits}, result,
           [probs, lab = std::move(lab), n, k](std::span<const double> g,
                                               std::span<std::vector<double>* const> in) {
             const auto p = probs.data();
             auto& dx = *in[0];
             const double s = g[0] / static_cast<double>(n);
             for (std::size_t i = 0; i < n; ++i)
               for (std::size_t j = 0; j < k; ++j)
                 dx[i * k + j] += s * (p[i * k + j] - (j == lab[i] ? 1.0 : 0.0));
           });
  }
  return result;
}

// ---------------------------------------------------------------- attention

namespace {

// Canonical visiting order of context rows: lexicographic on (k row, v row).
std::vector<std::size_t> canonical_context_order(std::span<const double> k,
                                                 std::span<const double> v, std::size_t d,
                                                 std::size_t n_context) {
  std::vector<std::size_t> order(n_context);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    for (std::size_t j = 0; j < d; ++j) {
      const double x = k[a * d + j], y = k[b * d + j];
      if (x != y) return x < y;
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double x = v[a * d + j], y = v[b * d + j];
      if (x != y) return x < y;
    }
    return a < b;
  });
  return order;
}

struct AttentionSaved {
  std::vector<std::size_t> order;
  // probs[h][row] holds one weight per visited key, in visiting order.
  std::vector<std::vector<double>> probs;
};

}  // namespace

namespace {

// Copies one head's columns of the context rows, in `order`, as a
// [dh x n_context] block.
void gather_head_transposed(std::span<const double> x, const std::vector<std::size_t>& order, std::size_t d,
                            std::size_t off, std::size_t dh, std::vector<double>& out) {
  const std::size_t nc = order.size();
  for (std::size_t s = 0; s < nc; ++s) {
    const double* row = x.data() + order[s] * d + off;
    for (std::size_t c = 0; c < dh; ++c) out[c * nc + s] = row[c];
  }
}

// out[s] = sum_c a[c] * bt[c][s], summed over c in ascending order.
void dots_transposed(const double* a, const double* bt, std::size_t dh, std::size_t nc, double* out) {
  std::fill(out, out + nc, 0.0);
  for (std::size_t c = 0; c < dh; ++c) {
    const double ac = a[c];
    const double* __restrict brow = bt + c * nc;
    double* __restrict o = out;
    for (std::size_t s = 0; s < nc; ++s) o[s] += ac * brow[s];
  }
}

}  // namespace

Tensor context_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads,
                         std::size_t n_context) {
  require_matrix(q, "context_attention");
  if (k.shape() != q.shape() || v.shape() != q.shape()) {
    throw DimensionError("context_attention: q " + shape_string(q.shape()) + ", k " +
                         shape_string(k.shape()) + ", v " + shape_string(v.shape()));
  }
  const std::size_t n = q.shape()[0], d = q.shape()[1];
  if (n_heads == 0 || d % n_heads != 0) {
    throw DimensionError("context_attention: width " + std::to_string(d) +
                         " not divisible by " + std::to_string(n_heads) + " heads");
  }
  if (n_context == 0 || n_context > n) {
    throw DimensionError("context_attention: context size " + std::to_string(n_context) +
                         " invalid for " + std::to_string(n) + " rows");
  }
  const std::size_t dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto qd = q.data(), kd = k.data(), vd = v.data();

  auto saved = std::make_shared<AttentionSaved>();
  saved->order = canonical_context_order(kd, vd, d, n_context);
  const auto& order = saved->order;
  saved->probs.assign(n_heads, std::vector<double>());

  std::vector<double> out(n * d, 0.0);
  std::vector<double> scores(n_context + 1);
  std::vector<double> kt(dh * n_context);
  std::uint64_t visited = 0;
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t off = h * dh;
    gather_head_transposed(kd, order, d, off, dh, kt);
    auto& probs_h = saved->probs[h];
    probs_h.reserve(n * (n_context + 1));
    for (std::size_t r = 0; r < n; ++r) {
      const bool self = r >= n_context;
      const std::size_t n_keys = n_context + (self ? 1 : 0);
      const double* qr = qd.data() + r * d + off;
      dots_transposed(qr, kt.data(), dh, n_context, scores.data());
      if (self) {
        const double* kr = kd.data() + r * d + off;
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += qr[c] * kr[c];
        scores[n_context] = dot;
      }
      for (std::size_t s = 0; s < n_keys; ++s) scores[s] *= inv_sqrt;
      const double m = *std::max_element(scores.begin(), scores.begin() + n_keys);
      double z = 0.0;
      for (std::size_t s = 0; s < n_keys; ++s) {
        scores[s] = std::exp(scores[s] - m);
        z += scores[s];
      }
      double* orow = out.data() + r * d + off;
      for (std::size_t s = 0; s < n_keys; ++s) {
        const double p = scores[s] / z;
        probs_h.push_back(p);
        const std::size_t key = s < n_context ? order[s] : r;
        const double* vr = vd.data() + key * d + off;
        for (std::size_t c = 0; c < dh; ++c) orow[c] += p * vr[c];
      }
      visited += n_keys;
    }
  }
  flops::add(visited * (4 * dh + flop_cost::kAttentionSoftmaxPerKey));

  Tensor result({n, d}, std::move(out));
  if (needs_record({&q, &k, &v})) {
    record("context_attention", {q, k, v}, result,
           [q, k, v, saved, n, d, dh, n_heads, n_context, inv_sqrt](
               std::span<const double> g, std::span<std::vector<double>* const> in) {
             const auto qd = q.data(), kd = k.data(), vd = v.data();
             const auto& order = saved->order;
             std::vector<double> dp(n_context + 1);
             std::vector<double> vt(dh * n_context);
             for (std::size_t h = 0; h < n_heads; ++h) {
               const std::size_t off = h * dh;
               gather_head_transposed(vd, order, d, off, dh, vt);
               const auto& probs_h = saved->probs[h];
               std::size_t cursor = 0;
               for (std::size_t r = 0; r < n; ++r) {
                 const std::size_t n_keys = n_context + (r >= n_context ? 1 : 0);
                 const double* gr = g.data() + r * d + off;
                 const double* p = probs_h.data() + cursor;
                 dots_transposed(gr, vt.data(), dh, n_context, dp.data());
                 if (n_keys > n_context) {
                   const double* vr = vd.data() + r * d + off;
                   double dot = 0.0;
                   for (std::size_t c = 0; c < dh; ++c) dot += gr[c] * vr[c];
                   dp[n_context] = dot;
                 }
                 double weighted = 0.0;
                 for (std::size_t s = 0; s < n_keys; ++s) {
                   const std::size_t key = s < n_context ? order[s] : r;
                   weighted += p[s] * dp[s];
                   if (in[2]) {
                     double* dv = in[2]->data() + key * d + off;
                     for (std::size_t c = 0; c < dh; ++c) dv[c] += p[s] * gr[c];
                   }
                 }
                 const double* qr = qd.data() + r * d + off;
                 for (std::size_t s = 0; s < n_keys; ++s) {
                   const double ds = p[s] * (dp[s] - weighted) * inv_sqrt;
                   const std::size_t key = s < n_context ? order[s] : r;
                   if (in[0]) {
                     double* dq = in[0]->data() + r * d + off;
                     const double* kr = kd.data() + key * d + off;
                     for (std::size_t c = 0; c < dh; ++c) dq[c] += ds * kr[c];
                   }
                   if (in[1]) {
                     double* dk = in[1]->data() + key * d + off;
                     for (std::size_t c = 0; c < dh; ++c) dk[c] += ds * qr[c];
                   }
                 }
                 cursor += n_keys;
               }
             }
           });
  }
  return result;
}

}  // namespace icx
