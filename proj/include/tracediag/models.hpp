#pragma once

// Classifiers: a two-layer GCN with global mean pooling and a linear head
// (structure-only or hybrid, depending on the node features it is fed), and
// the message-count-vector + logistic-regression baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tracediag/common.hpp"
#include "tracediag/core_model.hpp"
#include "tracediag/graph_builder.hpp"
#include "tracediag/numerics.hpp"

namespace tracediag {

enum class Task { AnomalyDetection, FaultClassification };

inline std::string to_string(Task t) { return t == Task::AnomalyDetection ? "ad" : "fc"; }

inline Task parse_task(std::string_view s) {
  if (s == "ad") return Task::AnomalyDetection;
  if (s == "fc") return Task::FaultClassification;
  throw DataError("unknown task '" + std::string(s) + "' (expected ad|fc)");
}

/// Anomaly detection: logit > 0 (sigmoid > 0.5, strict) means abnormal (1).
/// Fault classification: argmax, ties to the lowest index.
inline std::size_t predict_from_logits(std::span<const double> logits, Task task) {
  if (task == Task::AnomalyDetection) {
    if (logits.size() != 1) throw ContractError("anomaly detection expects one logit");
    return sigmoid(logits[0]) > 0.5 ? 1 : 0;
  }
  if (logits.empty()) throw ContractError("fault classification expects at least one logit");
  std::size_t best = 0;
  for (std::size_t j = 1; j < logits.size(); ++j)
    if (logits[j] > logits[best]) best = j;
  return best;
}

inline std::vector<std::size_t> predict_rows(const DenseMatrix& logits, Task task) {
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) out[i] = predict_from_logits(logits.row(i), task);
  return out;
}

// ---------------------------------------------------------------------------
// Graph convolutional classifier
// ---------------------------------------------------------------------------

struct GcnModel {
  DenseMatrix w1;          // f × h
  std::vector<double> b1;  // h
  DenseMatrix w2;          // h × h
  std::vector<double> b2;  // h
  DenseMatrix w_out;       // h × K
  std::vector<double> b_out;  // K
  bool symmetrize = true;

  std::size_t in_features() const noexcept { return w1.rows(); }
  std::size_t hidden() const noexcept { return w1.cols(); }
  std::size_t outputs() const noexcept { return w_out.cols(); }

  std::size_t parameter_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size() + w_out.size() + b_out.size();
  }

  /// Layout: W1, b1, W2, b2, W_out, b_out, each row-major.
  std::vector<double> flatten() const {
    std::vector<double> p;
    p.reserve(parameter_count());
    auto put = [&](const std::vector<double>& v) { p.insert(p.end(), v.begin(), v.end()); };
    put(w1.data());
    put(b1);
    put(w2.data());
    put(b2);
    put(w_out.data());
    put(b_out);
    return p;
  }

  void unflatten(std::span<const double> p) {
    if (p.size() != parameter_count()) throw ContractError("GcnModel::unflatten: size mismatch");
    std::size_t off = 0;
    auto take = [&](std::vector<double>& v) {
      std::copy(p.begin() + static_cast<std::ptrdiff_t>(off), p.begin() + static_cast<std::ptrdiff_t>(off + v.size()),
                v.begin());
      off += v.size();
    };
    take(w1.data());
    take(b1);
    take(w2.data());
    take(b2);
    take(w_out.data());
    take(b_out);
  }

  /// Zero-valued model of the same shape, used as a gradient container.
  GcnModel zeros_like() const {
    GcnModel g;
    g.w1 = DenseMatrix(w1.rows(), w1.cols());
    g.b1.assign(b1.size(), 0.0);
    g.w2 = DenseMatrix(w2.rows(), w2.cols());
    g.b2.assign(b2.size(), 0.0);
    g.w_out = DenseMatrix(w_out.rows(), w_out.cols());
    g.b_out.assign(b_out.size(), 0.0);
    g.symmetrize = symmetrize;
    return g;
  }

  friend bool operator==(const GcnModel&, const GcnModel&) = default;
};

inline DenseMatrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  DenseMatrix m(fan_in, fan_out);
  for (auto& v : m.data()) v = rng.uniform(-limit, limit);
  return m;
}

/// The last `embedding_dim` input rows of W1 (the embedding block) start at
/// zero, so a hybrid model begins as the structure-only model of the same
/// seed: structural rows, W2 and W_out are bit-identical to it.
inline GcnModel gcn_init(std::size_t in_features, std::size_t hidden, std::size_t outputs, std::uint64_t seed,
                         bool symmetrize = true, std::size_t embedding_dim = 0) {
  if (in_features == 0 || hidden == 0 || outputs == 0) throw ContractError("gcn_init: dimensions must be positive");
  if (embedding_dim >= in_features) throw ContractError("gcn_init: embedding block leaves no structural rows");
  Rng rng(seed);
  GcnModel m;
  const auto w1s = glorot_uniform(in_features - embedding_dim, hidden, rng);
  m.w1 = DenseMatrix(in_features, hidden);
  std::copy(w1s.data().begin(), w1s.data().end(), m.w1.data().begin());
  m.b1.assign(hidden, 0.0);
  m.w2 = glorot_uniform(hidden, hidden, rng);
  m.b2.assign(hidden, 0.0);
  m.w_out = glorot_uniform(hidden, outputs, rng);
  m.b_out.assign(outputs, 0.0);
  m.symmetrize = symmetrize;
  return m;
}

/// Block-diagonal union of several graphs.
struct GraphBatch {
  DenseMatrix features;                   // N × f
  NormalizedAdjacency adjacency;          // over all N nodes
  std::vector<std::size_t> graph_assignment;  // node -> graph
  std::vector<std::size_t> graph_sizes;

  std::size_t num_graphs() const noexcept { return graph_sizes.size(); }
};

inline GraphBatch make_batch(std::span<const TraceGraph* const> graphs, bool symmetrize = true) {
  GraphBatch b;
  if (graphs.empty()) throw ContractError("make_batch: no graphs");
  const std::size_t f = graphs.front()->features.cols();
  std::size_t total = 0;
  for (const auto* g : graphs) {
    if (g->num_nodes() == 0) throw ContractError("make_batch: graph without nodes");
    if (g->features.cols() != f) throw ContractError("make_batch: inconsistent feature width");
    total += g->num_nodes();
  }
  b.features = DenseMatrix(total, f);
  b.adjacency.n = total;
  std::size_t off = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const auto& g = *graphs[gi];
    std::copy(g.features.data().begin(), g.features.data().end(),
              b.features.data().begin() + static_cast<std::ptrdiff_t>(off * f));
    const auto local = normalize_adjacency(g.edges, g.num_nodes(), symmetrize);
    for (const auto& e : local.entries) b.adjacency.entries.push_back({e.row + off, e.col + off, e.weight});
    b.graph_assignment.insert(b.graph_assignment.end(), g.num_nodes(), gi);
    b.graph_sizes.push_back(g.num_nodes());
    off += g.num_nodes();
  }
  return b;
}

inline GraphBatch make_batch(const std::vector<TraceGraph>& graphs, bool symmetrize = true) {
  std::vector<const TraceGraph*> ptrs;
  for (const auto& g : graphs) ptrs.push_back(&g);
  return make_batch(std::span<const TraceGraph* const>(ptrs), symmetrize);
}

struct GcnCache {
  DenseMatrix ax;      // Â X
  DenseMatrix pre1;    // Â X W1 + b1
  DenseMatrix h1;      // relu(pre1)
  DenseMatrix ah1;     // Â H1
  DenseMatrix pre2;    // Â H1 W2 + b2
  DenseMatrix h2;      // relu(pre2)
  DenseMatrix pooled;  // B × h
  std::vector<std::size_t> graph_assignment;
  std::vector<std::size_t> graph_sizes;
};

struct GcnOutput {
  DenseMatrix logits;  // B × K
  GcnCache cache;
};

inline GcnOutput gcn_forward(const GcnModel& m, const GraphBatch& batch) {
  require_shape(batch.features.cols() == m.in_features(), "gcn_forward: feature width != model input");
  GcnOutput out;
  auto& c = out.cache;
  c.ax = apply_adjacency(batch.adjacency, batch.features);
  c.pre1 = matmul(c.ax, m.w1);
  add_row_bias(c.pre1, m.b1);
  c.h1 = relu(c.pre1);
  c.ah1 = apply_adjacency(batch.adjacency, c.h1);
  c.pre2 = matmul(c.ah1, m.w2);
  add_row_bias(c.pre2, m.b2);
  c.h2 = relu(c.pre2);

  const std::size_t h = m.hidden();
  c.pooled = DenseMatrix(batch.num_graphs(), h);
  for (std::size_t i = 0; i < c.h2.rows(); ++i) {
    auto dst = c.pooled.row(batch.graph_assignment[i]);
    auto src = c.h2.row(i);
    for (std::size_t j = 0; j < h; ++j) dst[j] += src[j];
  }
  for (std::size_t g = 0; g < batch.num_graphs(); ++g) {
    const double inv = 1.0 / static_cast<double>(batch.graph_sizes[g]);
    for (auto& v : c.pooled.row(g)) v *= inv;
  }
  out.logits = matmul(c.pooled, m.w_out);
  add_row_bias(out.logits, m.b_out);
  c.graph_assignment = batch.graph_assignment;
  c.graph_sizes = batch.graph_sizes;
  return out;
}

/// Exact gradients of all six parameter blocks given dL/dlogits.
inline GcnModel gcn_backward(const GcnModel& m, const GraphBatch& batch, const GcnCache& c,
                             const DenseMatrix& dlogits) {
  if (dlogits.rows() != c.pooled.rows() || dlogits.cols() != m.outputs() || c.h2.rows() != batch.features.rows() ||
      c.h2.cols() != m.hidden())
    throw ContractError("gcn_backward: cache does not match model/batch");
  GcnModel g = m.zeros_like();
  g.w_out = matmul_tn(c.pooled, dlogits);
  g.b_out = column_sums(dlogits);
  const DenseMatrix dpooled = matmul_nt(dlogits, m.w_out);  // B × h

  const std::size_t h = m.hidden();
  DenseMatrix dpre2(c.h2.rows(), h);
  for (std::size_t i = 0; i < c.h2.rows(); ++i) {
    const std::size_t gi = c.graph_assignment[i];
    const double inv = 1.0 / static_cast<double>(c.graph_sizes[gi]);
    auto src = dpooled.row(gi);
    auto pre = c.pre2.row(i);
    auto dst = dpre2.row(i);
    for (std::size_t j = 0; j < h; ++j) dst[j] = pre[j] > 0.0 ? src[j] * inv : 0.0;
  }
  g.w2 = matmul_tn(c.ah1, dpre2);
  g.b2 = column_sums(dpre2);
  const DenseMatrix dah1 = matmul_nt(dpre2, m.w2);
  DenseMatrix dh1 = apply_adjacency_transposed(batch.adjacency, dah1);
  for (std::size_t i = 0; i < dh1.size(); ++i)
    if (!(c.pre1.data()[i] > 0.0)) dh1.data()[i] = 0.0;
  g.w1 = matmul_tn(c.ax, dh1);
  g.b1 = column_sums(dh1);
  return g;
}

// ---------------------------------------------------------------------------
// Message count vectors
// ---------------------------------------------------------------------------

/// Event key used by the count-vector baseline.
enum class McvKey { OpName, OpDescription, Description };

inline std::string to_string(McvKey k) {
  switch (k) {
    case McvKey::OpName: return "op";
    case McvKey::OpDescription: return "op-desc";
    case McvKey::Description: return "desc";
  }
  return "op-desc";
}

inline McvKey parse_mcv_key(std::string_view s) {
  if (s == "op") return McvKey::OpName;
  if (s == "op-desc") return McvKey::OpDescription;
  if (s == "desc") return McvKey::Description;
  throw DataError("unknown MCV key '" + std::string(s) + "' (expected op|op-desc|desc)");
}

/// TraceBench: "op:description", the same unit as the trace text encoding.
/// BGL: the event template.
inline McvKey default_mcv_key(DatasetKind kind) {
  return kind == DatasetKind::Bgl ? McvKey::Description : McvKey::OpDescription;
}

inline std::string mcv_event_key(const EventRecord& e, McvKey key) {
  switch (key) {
    case McvKey::OpName: return e.op_name;
    case McvKey::OpDescription: return e.op_name + ":" + e.description;
    case McvKey::Description: return e.description;
  }
  return e.description;
}

/// Sorted unique keys of the training traces; the OOV slot is implicit and
/// always last (index == keys.size()).
struct McvVocabulary {
  std::vector<std::string> keys;
  McvKey key_mode = McvKey::OpDescription;

  std::size_t size() const noexcept { return keys.size() + 1; }
  std::size_t oov_index() const noexcept { return keys.size(); }

  std::size_t index_of(const std::string& k) const {
    auto it = std::lower_bound(keys.begin(), keys.end(), k);
    return (it != keys.end() && *it == k) ? static_cast<std::size_t>(it - keys.begin()) : oov_index();
  }

  friend bool operator==(const McvVocabulary&, const McvVocabulary&) = default;
};

inline McvVocabulary mcv_build_vocab(std::span<const TraceSlice> train, McvKey key_mode) {
  McvVocabulary v;
  v.key_mode = key_mode;
  for (const auto& s : train)
    for (const auto& e : s.events) v.keys.push_back(mcv_event_key(e, key_mode));
  std::sort(v.keys.begin(), v.keys.end());
  v.keys.erase(std::unique(v.keys.begin(), v.keys.end()), v.keys.end());
  return v;
}

inline McvVocabulary mcv_build_vocab(std::span<const TraceSlice> train, DatasetKind kind) {
  return mcv_build_vocab(train, default_mcv_key(kind));
}

inline std::vector<double> mcv_vectorize(const TraceSlice& slice, const McvVocabulary& vocab) {
  std::vector<double> x(vocab.size(), 0.0);
  for (const auto& e : slice.events) x[vocab.index_of(mcv_event_key(e, vocab.key_mode))] += 1.0;
  return x;
}

inline DenseMatrix mcv_matrix(std::span<const TraceSlice> slices, const McvVocabulary& vocab) {
  DenseMatrix x(slices.size(), vocab.size());
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const auto v = mcv_vectorize(slices[i], vocab);
    std::copy(v.begin(), v.end(), x.row(i).begin());
  }
  return x;
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

/// logits = X W + b. K = 1 is binary (sigmoid), K > 1 multinomial (softmax).
struct LinearModel {
  DenseMatrix w;  // V × K
  std::vector<double> b;

  std::size_t inputs() const noexcept { return w.rows(); }
  std::size_t outputs() const noexcept { return w.cols(); }

  DenseMatrix logits(const DenseMatrix& x) const {
    DenseMatrix z = matmul(x, w);
    add_row_bias(z, b);
    return z;
  }

  std::vector<double> flatten() const {
    std::vector<double> p(w.data());
    p.insert(p.end(), b.begin(), b.end());
    return p;
  }

  void unflatten(std::span<const double> p) {
    if (p.size() != w.size() + b.size()) throw ContractError("LinearModel::unflatten: size mismatch");
    std::copy(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(w.size()), w.data().begin());
    std::copy(p.begin() + static_cast<std::ptrdiff_t>(w.size()), p.end(), b.begin());
  }

  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

struct McvModel {
  McvVocabulary vocab;
  LinearModel linear;

  friend bool operator==(const McvModel&, const McvModel&) = default;
};

struct LrConfig {
  std::size_t epochs = 200;
  AdamWHyper hyper{};
};

/// Loss and gradient of a class-weighted objective for either a single
/// logit (pos_weight = class_weights[0]) or K softmax logits.
struct WeightedObjective {
  std::vector<double> class_weights;

  LossResult operator()(const DenseMatrix& logits, std::span<const std::size_t> labels) const {
    if (logits.cols() == 1) {
      std::vector<double> y(labels.begin(), labels.end());
      return loss_bce_weighted(logits.data(), y, class_weights.at(0));
    }
    return loss_ce_weighted(logits, labels, class_weights);
  }
};

/// Full-batch AdamW on the weighted loss. Parameters start at zero, so the
/// trajectory is deterministic.
class LrTrainer {
 public:
  LrTrainer(const DenseMatrix& x, std::vector<std::size_t> labels, std::vector<double> class_weights,
            std::size_t outputs, AdamWHyper hyper)
      : x_(x), labels_(std::move(labels)), objective_{std::move(class_weights)} {
    if (labels_.size() != x_.rows()) throw ContractError("LrTrainer: label count != rows");
    if (outputs == 0) throw ContractError("LrTrainer: outputs must be positive");
    model_.w = DenseMatrix(x_.cols(), outputs);
    model_.b.assign(outputs, 0.0);
    state_ = AdamWState(model_.w.size() + model_.b.size(), hyper);
  }

  /// One optimizer step; returns the loss at the parameters before the step.
  double step() {
    const DenseMatrix z = model_.logits(x_);
    const auto r = objective_(z, labels_);
    const DenseMatrix dz(z.rows(), z.cols(), r.dlogits);
    const DenseMatrix dw = matmul_tn(x_, dz);
    const auto db = column_sums(dz);
    std::vector<double> grad(dw.data());
    grad.insert(grad.end(), db.begin(), db.end());
    auto p = model_.flatten();
    adamw_step(p, grad, state_);
    model_.unflatten(p);
    return r.loss;
  }

  double loss() const { return objective_(model_.logits(x_), labels_).loss; }

  const LinearModel& model() const noexcept { return model_; }

 private:
  const DenseMatrix& x_;
  std::vector<std::size_t> labels_;
  WeightedObjective objective_;
  LinearModel model_;
  AdamWState state_;
};

struct LrTrainResult {
  LinearModel model;
  std::vector<double> loss_history;  // loss before each step, then the final loss
};

/// Binary (outputs = 1, class_weights = {pos_weight}) or multinomial
/// (outputs = K, class_weights of length K) logistic regression.
inline LrTrainResult lr_train(const DenseMatrix& x, const std::vector<std::size_t>& labels,
                              const std::vector<double>& class_weights, std::size_t outputs,
                              const LrConfig& config = {}) {
  LrTrainer trainer(x, labels, class_weights, outputs, config.hyper);
  LrTrainResult r;
  for (std::size_t e = 0; e < config.epochs; ++e) r.loss_history.push_back(trainer.step());
  r.loss_history.push_back(trainer.loss());
  r.model = trainer.model();
  return r;
}

inline std::size_t predict(const McvModel& m, const TraceSlice& slice, Task task) {
  const DenseMatrix x(1, m.vocab.size(), mcv_vectorize(slice, m.vocab));
  return predict_from_logits(m.linear.logits(x).row(0), task);
}

inline std::size_t predict(const GcnModel& m, const TraceGraph& g, Task task) {
  const TraceGraph* ptr = &g;
  const auto batch = make_batch(std::span<const TraceGraph* const>(&ptr, 1), m.symmetrize);
  return predict_from_logits(gcn_forward(m, batch).logits.row(0), task);
}

}  // namespace tracediag
