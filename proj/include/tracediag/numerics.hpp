#pragma once

// Numerical kernels for the graph and linear models: dense matrices, GCN
// adjacency normalization, activations, weighted losses with analytic
// gradients, AdamW, noisy-OR pooling and a finite-difference oracle.
//
// All reductions run sequentially in row-major order so results are
// bit-reproducible.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tracediag/common.hpp"

namespace tracediag {

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw ContractError("DenseMatrix: data length != rows*cols");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

inline void require_shape(bool ok, const char* what) {
  if (!ok) throw ContractError(std::string("shape mismatch: ") + what);
}

/// C = A * B
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  require_shape(a.cols() == b.rows(), "matmul");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

/// C = A^T * B
inline DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  require_shape(a.rows() == b.rows(), "matmul_tn");
  DenseMatrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto ak = a.row(k);
    auto bk = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      auto ci = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

/// C = A * B^T
inline DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  require_shape(a.cols() == b.cols(), "matmul_nt");
  DenseMatrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ai = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto bj = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
      c(i, j) = s;
    }
  }
  return c;
}

inline void add_row_bias(DenseMatrix& m, std::span<const double> bias) {
  require_shape(bias.size() == m.cols(), "add_row_bias");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) r[j] += bias[j];
  }
}

inline std::vector<double> column_sums(const DenseMatrix& m) {
  std::vector<double> s(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) s[j] += r[j];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Adjacency
// ---------------------------------------------------------------------------

struct AdjacencyEntry {
  std::size_t row, col;
  double weight;
};

/// Coordinate-list form of D^-1/2 (A' + I) D^-1/2, sorted by (row, col).
struct NormalizedAdjacency {
  std::size_t n = 0;
  std::vector<AdjacencyEntry> entries;
};

/// With symmetrize, A' = A ∪ A^T; otherwise A' = A. Self-loops are added to
/// every node and duplicate pairs collapse. deg(i) counts the non-zeros in
/// row i of A' + I.
inline NormalizedAdjacency normalize_adjacency(const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                               std::size_t n, bool symmetrize = true) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(edges.size() * 2 + n);
  for (auto [s, d] : edges) {
    if (s >= n || d >= n) throw ContractError("normalize_adjacency: index out of range");
    if (s == d) continue;
    pairs.emplace_back(s, d);
    if (symmetrize) pairs.emplace_back(d, s);
  }
  for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(i, i);
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  std::vector<double> deg(n, 0.0);
  for (auto [r, c] : pairs) deg[r] += 1.0;
  NormalizedAdjacency adj;
  adj.n = n;
  adj.entries.reserve(pairs.size());
  for (auto [r, c] : pairs) adj.entries.push_back({r, c, 1.0 / std::sqrt(deg[r] * deg[c])});
  return adj;
}

/// Y = Â X
inline DenseMatrix apply_adjacency(const NormalizedAdjacency& adj, const DenseMatrix& x) {
  require_shape(x.rows() == adj.n, "apply_adjacency");
  DenseMatrix y(adj.n, x.cols());
  for (const auto& e : adj.entries) {
    auto yr = y.row(e.row);
    auto xc = x.row(e.col);
    for (std::size_t j = 0; j < x.cols(); ++j) yr[j] += e.weight * xc[j];
  }
  return y;
}

/// Y = Â^T X
inline DenseMatrix apply_adjacency_transposed(const NormalizedAdjacency& adj, const DenseMatrix& x) {
  require_shape(x.rows() == adj.n, "apply_adjacency_transposed");
  DenseMatrix y(adj.n, x.cols());
  for (const auto& e : adj.entries) {
    auto yc = y.row(e.col);
    auto xr = x.row(e.row);
    for (std::size_t j = 0; j < x.cols(); ++j) yc[j] += e.weight * xr[j];
  }
  return y;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline DenseMatrix relu(DenseMatrix m) {
  for (auto& v : m.data()) v = relu(v);
  return m;
}

inline std::vector<double> relu(std::vector<double> v) {
  for (auto& x : v) x = relu(x);
  return v;
}

inline std::vector<double> sigmoid(std::vector<double> v) {
  for (auto& x : v) x = sigmoid(x);
  return v;
}

inline std::vector<double> softmax(std::span<const double> row) {
  std::vector<double> out(row.begin(), row.end());
  if (out.empty()) return out;
  const double mx = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (auto& v : out) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : out) v /= sum;
  return out;
}

inline DenseMatrix softmax_rows(const DenseMatrix& m) {
  DenseMatrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto s = softmax(m.row(i));
    std::copy(s.begin(), s.end(), out.row(i).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;
  std::vector<double> dlogits;  // same layout as the logits
};

/// Mean over i of  pos_weight*y*softplus(-z) + (1-y)*softplus(z),
/// i.e. weighted binary cross-entropy on logits.
inline LossResult loss_bce_weighted(std::span<const double> logits, std::span<const double> labels,
                                    double pos_weight) {
  if (logits.size() != labels.size()) throw ContractError("loss_bce_weighted: length mismatch");
  if (!(pos_weight > 0.0)) throw ContractError("loss_bce_weighted: pos_weight must be positive");
  LossResult r;
  r.dlogits.resize(logits.size());
  if (logits.empty()) return r;
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i], y = labels[i];
    r.loss += pos_weight * y * softplus(-z) + (1.0 - y) * softplus(z);
    const double s = sigmoid(z);
    r.dlogits[i] = (pos_weight * y * (s - 1.0) + (1.0 - y) * s) * inv_n;
  }
  r.loss *= inv_n;
  return r;
}

/// Class-weighted softmax cross-entropy, normalized by the summed weights of
/// the targets. dlogits is row-major B×K.
inline LossResult loss_ce_weighted(const DenseMatrix& logits, std::span<const std::size_t> labels,
                                   std::span<const double> class_weights) {
  const std::size_t k = logits.cols();
  if (labels.size() != logits.rows()) throw ContractError("loss_ce_weighted: label count != rows");
  if (class_weights.size() != k) throw ContractError("loss_ce_weighted: weight count != classes");
  LossResult r;
  r.dlogits.assign(logits.size(), 0.0);
  double wsum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= k) throw ContractError("loss_ce_weighted: label out of range");
    wsum += class_weights[labels[i]];
  }
  if (labels.empty() || wsum <= 0.0) return r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    const double log_z = mx + std::log(sum);
    const double w = class_weights[labels[i]];
    r.loss += w * (log_z - row[labels[i]]);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(row[j] - log_z);
      r.dlogits[i * k + j] = w * (p - (j == labels[i] ? 1.0 : 0.0)) / wsum;
    }
  }
  r.loss /= wsum;
  return r;
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

struct AdamWHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  std::uint64_t step = 0;
  std::vector<double> m, v;
  AdamWHyper hyper;

  AdamWState() = default;
  AdamWState(std::size_t n, AdamWHyper h) : m(n, 0.0), v(n, 0.0), hyper(h) {}
};

/// Adam moments with bias correction and decoupled weight decay:
/// θ ← θ − lr·m̂/(√v̂+ε) − lr·wd·θ.
inline void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ContractError("adamw_step: shape mismatch");
  const auto& h = state.hyper;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    const double theta = params[i];
    params[i] = theta - h.lr * (m_hat / (std::sqrt(v_hat) + h.eps)) - h.lr * h.weight_decay * theta;
  }
}

// ---------------------------------------------------------------------------
// Pooling and verification helpers
// ---------------------------------------------------------------------------

/// 1 − Π(1 − p_i)
inline double noisy_or(std::span<const double> scores) {
  if (scores.empty()) throw ContractError("noisy_or: empty score vector");
  // a ∨ b = a + b(1 − a), folded left; equals 1 − Π(1 − p) but keeps
  // noisy_or({p}) == p exactly
  double acc = 0.0;
  for (double p : scores) {
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("noisy_or: score outside [0,1]");
    acc = std::min(1.0, acc + p * (1.0 - acc));
  }
  return acc;
}

/// Central differences (f(x+εe_i) − f(x−εe_i)) / 2ε per coordinate.
inline std::vector<double> finite_difference_gradient(const std::function<double(std::span<const double>)>& f,
                                                      std::vector<double> x, double eps = 1e-5) {
  if (!(eps > 0.0)) throw ContractError("finite_difference_gradient: eps must be positive");
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double fp = f(x);
    x[i] = orig - eps;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

}  // namespace tracediag
