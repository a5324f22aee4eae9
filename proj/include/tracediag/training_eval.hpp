#pragma once

// Stratified splits, class weights, metrics, the epoch-driven training loops
// with best-validation-F1 selection, and JSON reports.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tracediag/common.hpp"
#include "tracediag/core_model.hpp"
#include "tracediag/graph_builder.hpp"
#include "tracediag/models.hpp"
#include "tracediag/numerics.hpp"

namespace tracediag {

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
  std::uint64_t seed = 0;
  SplitRatios ratios;
  std::vector<std::string> warnings;

  friend bool operator==(const SplitIndices& a, const SplitIndices& b) {
    return a.train == b.train && a.val == b.val && a.test == b.test && a.seed == b.seed;
  }
};

/// Per class: shuffle that class's indices with a seeded generator, then cut
/// at floor(train·n_c) and floor((train+val)·n_c). Classes with fewer than
/// three members go entirely to train. Output lists are sorted.
inline SplitIndices stratified_split(std::span<const std::size_t> labels, std::uint64_t seed,
                                     SplitRatios ratios = {}) {
  if (labels.empty()) throw DataError("stratified_split: no labels");
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  SplitIndices s;
  s.seed = seed;
  s.ratios = ratios;
  constexpr double kCutSlack = 1e-9;  // keeps floor(0.7 * 100) at 70
  for (auto& [cls, idx] : by_class) {
    if (idx.size() < 3) {
      s.warnings.push_back("class " + std::to_string(cls) + " has " + std::to_string(idx.size()) +
                           " member(s); placed entirely in train");
      s.train.insert(s.train.end(), idx.begin(), idx.end());
      continue;
    }
    Rng rng(derive_seed(seed, "split/class/" + std::to_string(cls)));
    rng.shuffle(idx);
    const double n = static_cast<double>(idx.size());
    const auto cut1 = static_cast<std::size_t>(std::floor(ratios.train * n + kCutSlack));
    const auto cut2 = static_cast<std::size_t>(std::floor((ratios.train + ratios.val) * n + kCutSlack));
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut1));
    s.val.insert(s.val.end(), idx.begin() + static_cast<std::ptrdiff_t>(cut1),
                 idx.begin() + static_cast<std::ptrdiff_t>(cut2));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(cut2), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

/// w_c = N / (K · N_c); classes absent from training get 0.
inline std::vector<double> compute_class_weights(std::span<const std::size_t> train_labels, std::size_t k,
                                                 std::vector<std::string>* warnings = nullptr) {
  std::vector<double> counts(k, 0.0);
  for (auto y : train_labels) {
    if (y >= k) throw ContractError("compute_class_weights: label out of range");
    counts[y] += 1.0;
  }
  const double n = static_cast<double>(train_labels.size());
  std::vector<double> w(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0.0) {
      w[c] = n / (static_cast<double>(k) * counts[c]);
    } else if (warnings) {
      warnings->push_back("class " + std::to_string(c) + " absent from training; weight 0");
    }
  }
  return w;
}

/// Binary form: negatives / positives (1 when either side is empty).
inline double compute_pos_weight(std::span<const std::size_t> train_labels) {
  double pos = 0.0, neg = 0.0;
  for (auto y : train_labels) (y == 1 ? pos : neg) += 1.0;
  if (pos == 0.0 || neg == 0.0) return 1.0;
  return neg / pos;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

enum class MetricMode { Binary, Macro };

struct ClassMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::size_t support = 0;
};

struct Metrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  MetricMode mode = MetricMode::Binary;
  std::vector<ClassMetrics> per_class;
};

inline double f1_from(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

inline ClassMetrics one_vs_rest(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                                std::size_t positive) {
  std::size_t tp = 0, fp = 0, fn = 0, support = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == positive, y = labels[i] == positive;
    tp += p && y;
    fp += p && !y;
    fn += !p && y;
    support += y;
  }
  ClassMetrics m;
  m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = f1_from(m.precision, m.recall);
  m.support = support;
  return m;
}

/// Abnormal (label 1) is the positive class. Zero denominators give 0.
inline Metrics binary_metrics(std::span<const std::size_t> preds, std::span<const std::size_t> labels) {
  if (preds.size() != labels.size()) throw ContractError("binary_metrics: length mismatch");
  const auto c = one_vs_rest(preds, labels, 1);
  Metrics m;
  m.mode = MetricMode::Binary;
  m.precision = c.precision;
  m.recall = c.recall;
  m.f1 = c.f1;
  return m;
}

/// Unweighted mean over all K classes of one-vs-rest precision/recall/F1.
inline Metrics macro_metrics(std::span<const std::size_t> preds, std::span<const std::size_t> labels, std::size_t k) {
  if (preds.size() != labels.size()) throw ContractError("macro_metrics: length mismatch");
  if (k == 0) throw ContractError("macro_metrics: K must be positive");
  Metrics m;
  m.mode = MetricMode::Macro;
  for (std::size_t c = 0; c < k; ++c) {
    const auto cm = one_vs_rest(preds, labels, c);
    m.precision += cm.precision;
    m.recall += cm.recall;
    m.f1 += cm.f1;
    m.per_class.push_back(cm);
  }
  m.precision /= static_cast<double>(k);
  m.recall /= static_cast<double>(k);
  m.f1 /= static_cast<double>(k);
  return m;
}

inline Metrics task_metrics(std::span<const std::size_t> preds, std::span<const std::size_t> labels, Task task,
                            std::size_t num_classes) {
  return task == Task::AnomalyDetection ? binary_metrics(preds, labels) : macro_metrics(preds, labels, num_classes);
}

// ---------------------------------------------------------------------------
// Task labels
// ---------------------------------------------------------------------------

/// The traces a task trains on and their class indices. AD uses every trace
/// (0 normal, 1 abnormal); FC uses abnormal traces only, with classes being
/// the sorted fault kinds.
struct TaskData {
  Task task = Task::AnomalyDetection;
  std::vector<std::size_t> trace_indices;  // rows of MasterTables::traces
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  /// Logit count of the classifier head.
  std::size_t outputs() const noexcept { return task == Task::AnomalyDetection ? 1 : class_names.size(); }
};

inline TaskData make_task_data(const MasterTables& t, Task task) {
  TaskData d;
  d.task = task;
  if (task == Task::AnomalyDetection) {
    d.class_names = {"normal", "abnormal"};
    for (std::size_t i = 0; i < t.traces.size(); ++i) {
      d.trace_indices.push_back(i);
      d.labels.push_back(t.traces[i].label.is_fault() ? 1 : 0);
    }
    return d;
  }
  std::set<std::string> kinds;
  for (const auto& r : t.traces)
    if (r.label.is_fault()) kinds.insert(r.label.fault_kind());
  d.class_names.assign(kinds.begin(), kinds.end());
  if (d.class_names.empty()) throw DataError("fault classification needs abnormal traces");
  for (std::size_t i = 0; i < t.traces.size(); ++i) {
    if (!t.traces[i].label.is_fault()) continue;
    d.trace_indices.push_back(i);
    const auto it = std::lower_bound(d.class_names.begin(), d.class_names.end(), t.traces[i].label.fault_kind());
    d.labels.push_back(static_cast<std::size_t>(it - d.class_names.begin()));
  }
  return d;
}

/// Split over TaskData rows (not trace-table rows).
inline SplitIndices split_task(const TaskData& d, std::uint64_t seed) {
  return stratified_split(d.labels, derive_seed(seed, "split"));
}

// splits.tsv: "# seed=<n>" comment, then TraceId<TAB>Split rows.
inline void write_splits(const std::filesystem::path& path, const MasterTables& t, const TaskData& d,
                         const SplitIndices& s) {
  std::vector<std::pair<std::size_t, std::string>> rows;
  for (auto i : s.train) rows.emplace_back(i, "train");
  for (auto i : s.val) rows.emplace_back(i, "val");
  for (auto i : s.test) rows.emplace_back(i, "test");
  std::sort(rows.begin(), rows.end());
  std::string out = "# seed=" + std::to_string(s.seed) + "\nTraceId\tSplit\n";
  for (const auto& [i, name] : rows) out += tsv_escape(t.traces[d.trace_indices[i]].trace_id) + '\t' + name + '\n';
  write_file_atomic(path, out);
}

inline SplitIndices read_splits(const std::filesystem::path& path, const MasterTables& t, const TaskData& d) {
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < d.trace_indices.size(); ++i) row_of.emplace(t.traces[d.trace_indices[i]].trace_id, i);
  const auto content = read_file(path);
  SplitIndices s;
  if (content.rfind("# seed=", 0) == 0) {
    const auto eol = content.find('\n');
    if (auto v = parse_int64(content.substr(7, eol - 7))) s.seed = static_cast<std::uint64_t>(*v);
  }
  std::istringstream in(content);
  const auto tab = parse_delimited(in, path.string());
  const auto c_id = tab.require_column("TraceId"), c_split = tab.require_column("Split");
  std::vector<bool> seen(d.trace_indices.size(), false);
  for (std::size_t r = 0; r < tab.rows.size(); ++r) {
    const auto& row = tab.rows[r];
    auto it = row_of.find(row[c_id]);
    if (it == row_of.end())
      throw SchemaError(tab.source, tab.line_numbers[r], "trace '" + row[c_id] + "' is not part of this task");
    if (seen[it->second]) throw SchemaError(tab.source, tab.line_numbers[r], "trace listed twice");
    seen[it->second] = true;
    if (row[c_split] == "train") s.train.push_back(it->second);
    else if (row[c_split] == "val") s.val.push_back(it->second);
    else if (row[c_split] == "test") s.test.push_back(it->second);
    else throw SchemaError(tab.source, tab.line_numbers[r], "Split must be train|val|test");
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw DataError(path.string() + " does not cover every trace of the task");
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class ModelKind { Baseline, Gcn, Hybrid };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Baseline: return "baseline";
    case ModelKind::Gcn: return "gcn";
    case ModelKind::Hybrid: return "hybrid";
  }
  return "gcn";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "baseline") return ModelKind::Baseline;
  if (s == "gcn") return ModelKind::Gcn;
  if (s == "hybrid") return ModelKind::Hybrid;
  throw DataError("unknown model '" + std::string(s) + "' (expected baseline|gcn|hybrid)");
}

struct TrainConfig {
  Task task = Task::AnomalyDetection;
  ModelKind model_kind = ModelKind::Gcn;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  AdamWHyper hyper{};
  std::size_t hidden = 64;
  bool symmetrize = true;

  static TrainConfig defaults_for(ModelKind kind, Task task) {
    TrainConfig c;
    c.task = task;
    c.model_kind = kind;
    c.epochs = kind == ModelKind::Baseline ? 200 : 30;
    return c;
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  Metrics val;
};

/// Index of the maximum validation F1, earliest on ties.
inline std::size_t select_best_epoch(std::span<const double> val_f1) {
  if (val_f1.empty()) throw ContractError("select_best_epoch: empty sequence");
  std::size_t best = 0;
  for (std::size_t i = 1; i < val_f1.size(); ++i)
    if (val_f1[i] > val_f1[best]) best = i;
  return best;
}

template <typename Model>
struct TrainResult {
  Model best_model;
  std::size_t best_epoch = 0;  // 1-based
  std::vector<EpochRecord> epoch_log;
};

inline std::vector<double> loss_weights(const TaskData& d, std::span<const std::size_t> train_rows) {
  std::vector<std::size_t> y;
  for (auto i : train_rows) y.push_back(d.labels[i]);
  if (d.task == Task::AnomalyDetection) return {compute_pos_weight(y)};
  auto w = compute_class_weights(y, d.num_classes());
  // absent classes never appear as targets, but the loss requires positive weights
  for (auto& v : w)
    if (v == 0.0) v = 1.0;
  return w;
}

inline DenseMatrix gcn_logits(const GcnModel& m, const std::vector<TraceGraph>& graphs,
                              std::span<const std::size_t> rows, std::size_t chunk = 256) {
  DenseMatrix out(rows.size(), m.outputs());
  for (std::size_t start = 0; start < rows.size(); start += chunk) {
    const std::size_t end = std::min(rows.size(), start + chunk);
    std::vector<const TraceGraph*> ptrs;
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&graphs[rows[i]]);
    const auto batch = make_batch(std::span<const TraceGraph* const>(ptrs), m.symmetrize);
    const auto fwd = gcn_forward(m, batch);
    std::copy(fwd.logits.data().begin(), fwd.logits.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(start * m.outputs()));
  }
  return out;
}

inline Metrics evaluate_gcn(const GcnModel& m, const std::vector<TraceGraph>& graphs, const TaskData& d,
                            std::span<const std::size_t> rows) {
  const auto preds = predict_rows(gcn_logits(m, graphs, rows), d.task);
  std::vector<std::size_t> y;
  for (auto i : rows) y.push_back(d.labels[i]);
  return task_metrics(preds, y, d.task, d.num_classes());
}

/// Mini-batch AdamW over graphs[i] for i in split.train, graphs aligned with
/// TaskData rows. Batches are drawn in a freshly shuffled order every epoch.
inline TrainResult<GcnModel> train_gcn(const std::vector<TraceGraph>& graphs, const TaskData& d,
                                       const SplitIndices& split, const TrainConfig& cfg) {
  if (split.train.empty()) throw DataError("training split is empty");
  if (graphs.size() != d.labels.size()) throw ContractError("train_gcn: graphs not aligned with task rows");
  if (cfg.epochs == 0 || cfg.batch_size == 0) throw ContractError("train_gcn: epochs and batch_size must be positive");
  const std::size_t f = graphs[split.train.front()].features.cols();
  GcnModel model = gcn_init(f, cfg.hidden, d.outputs(), derive_seed(cfg.seed, "gcn/init"), cfg.symmetrize,
                            f - kStructuralFeatures);
  AdamWState opt(model.parameter_count(), cfg.hyper);
  const WeightedObjective objective{loss_weights(d, split.train)};
  Rng order_rng(derive_seed(cfg.seed, "gcn/batches"));

  TrainResult<GcnModel> result;
  std::vector<std::size_t> order = split.train;
  std::vector<double> val_f1;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const TraceGraph*> ptrs;
      std::vector<std::size_t> y;
      for (std::size_t i = start; i < end; ++i) {
        ptrs.push_back(&graphs[order[i]]);
        y.push_back(d.labels[order[i]]);
      }
      const auto batch = make_batch(std::span<const TraceGraph* const>(ptrs), cfg.symmetrize);
      const auto fwd = gcn_forward(model, batch);
      const auto loss = objective(fwd.logits, y);
      const DenseMatrix dlogits(fwd.logits.rows(), fwd.logits.cols(), loss.dlogits);
      const auto grads = gcn_backward(model, batch, fwd.cache, dlogits).flatten();
      auto params = model.flatten();
      adamw_step(params, grads, opt);
      model.unflatten(params);
      loss_sum += loss.loss;
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.val = evaluate_gcn(model, graphs, d, split.val);
    val_f1.push_back(rec.val.f1);
    if (epoch == 1 || rec.val.f1 > result.epoch_log[result.best_epoch - 1].val.f1) {
      result.best_model = model;
      result.best_epoch = epoch;
    }
    result.epoch_log.push_back(std::move(rec));
  }
  return result;
}

inline Metrics evaluate_linear(const LinearModel& m, const DenseMatrix& x, const TaskData& d,
                               std::span<const std::size_t> rows) {
  DenseMatrix sub(rows.size(), x.cols());
  std::vector<std::size_t> y;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), sub.row(i).begin());
    y.push_back(d.labels[rows[i]]);
  }
  return task_metrics(predict_rows(m.logits(sub), d.task), y, d.task, d.num_classes());
}

/// Count-vector baseline. `slices` are aligned with TaskData rows; the
/// vocabulary is built from the training split only.
inline TrainResult<McvModel> train_baseline(const std::vector<TraceSlice>& slices, const TaskData& d,
                                            const SplitIndices& split, const TrainConfig& cfg, McvKey key_mode) {
  if (split.train.empty()) throw DataError("training split is empty");
  if (cfg.epochs == 0) throw ContractError("train_baseline: epochs must be positive");
  std::vector<TraceSlice> train_slices;
  for (auto i : split.train) train_slices.push_back(slices[i]);
  McvModel mcv;
  mcv.vocab = mcv_build_vocab(train_slices, key_mode);
  const DenseMatrix x = mcv_matrix(slices, mcv.vocab);
  DenseMatrix x_train(split.train.size(), x.cols());
  std::vector<std::size_t> y_train;
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    std::copy(x.row(split.train[i]).begin(), x.row(split.train[i]).end(), x_train.row(i).begin());
    y_train.push_back(d.labels[split.train[i]]);
  }
  LrTrainer trainer(x_train, y_train, loss_weights(d, split.train), d.outputs(), cfg.hyper);

  TrainResult<McvModel> result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = trainer.step();
    rec.val = evaluate_linear(trainer.model(), x, d, split.val);
    if (epoch == 1 || rec.val.f1 > result.epoch_log[result.best_epoch - 1].val.f1) {
      result.best_model = McvModel{mcv.vocab, trainer.model()};
      result.best_epoch = epoch;
    }
    result.epoch_log.push_back(std::move(rec));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const Metrics& m) {
  nlohmann::json j;
  j["mode"] = m.mode == MetricMode::Binary ? "binary" : "macro";
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  if (m.mode == MetricMode::Macro) {
    j["per_class"] = nlohmann::json::array();
    for (const auto& c : m.per_class)
      j["per_class"].push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  }
  return j;
}

struct RunReport {
  std::string dataset;
  Task task = Task::AnomalyDetection;
  ModelKind model_kind = ModelKind::Gcn;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> class_names;
  std::map<std::string, Metrics> metrics;  // split name -> metrics
  std::vector<EpochRecord> epoch_log;
  std::size_t best_epoch = 0;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Keys are emitted sorted; only "timestamp" differs between identical runs.
inline nlohmann::json report_json(const RunReport& r, const std::string& timestamp) {
  nlohmann::json j;
  j["dataset"] = r.dataset;
  j["task"] = to_string(r.task);
  j["model_kind"] = to_string(r.model_kind);
  j["seed"] = r.seed;
  j["config"] = r.config;
  j["classes"] = r.class_names;
  j["metrics"] = nlohmann::json::object();
  for (const auto& [split, m] : r.metrics) j["metrics"][split] = to_json(m);
  if (auto it = r.metrics.find("test"); it != r.metrics.end()) j["test_metrics"] = to_json(it->second);
  j["best_epoch"] = r.best_epoch;
  j["epoch_log"] = nlohmann::json::array();
  for (const auto& e : r.epoch_log)
    j["epoch_log"].push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val", to_json(e.val)}});
  j["tool_version"] = std::string(kToolVersion);
  j["timestamp"] = timestamp;
  return j;
}

inline void write_report(const RunReport& r, const std::filesystem::path& out_path,
                         const std::string& timestamp = utc_timestamp()) {
  try {
    write_file_atomic(out_path, report_json(r, timestamp).dump(2) + "\n");
  } catch (const std::filesystem::filesystem_error& e) {
    throw DataError(std::string("cannot write report: ") + e.what());
  }
}

}  // namespace tracediag
