#pragma once

// End-to-end glue shared by the CLI and the acceptance suite: build model
// inputs for a task, train one model family, evaluate a checkpoint.

#include <optional>
#include <string>
#include <vector>

#include "tracediag/checkpoint.hpp"
#include "tracediag/core_model.hpp"
#include "tracediag/graph_builder.hpp"
#include "tracediag/models.hpp"
#include "tracediag/training_eval.hpp"

namespace tracediag {

/// Graphs aligned with TaskData rows; embeddings are attached when given.
inline std::vector<TraceGraph> task_graphs(const MasterTables& t, const TaskData& d,
                                           const EmbeddingTable* embeddings = nullptr, unsigned threads = 1) {
  const auto slices = all_trace_views(t);
  std::vector<TraceGraph> out(d.trace_indices.size());
  parallel_for(out.size(), threads, [&](std::size_t i) {
    const auto row = d.trace_indices[i];
    auto g = build_trace_graph(slices[row], t.traces[row].label);
    out[i] = embeddings ? attach_embeddings(std::move(g), *embeddings) : std::move(g);
  });
  return out;
}

inline std::vector<TraceSlice> task_slices(const MasterTables& t, const TaskData& d) {
  auto all = all_trace_views(t);
  std::vector<TraceSlice> out;
  out.reserve(d.trace_indices.size());
  for (auto row : d.trace_indices) out.push_back(std::move(all[row]));
  return out;
}

struct TrainingRun {
  Checkpoint checkpoint;
  RunReport report;
};

struct TrainingInputs {
  const MasterTables* tables = nullptr;
  const TaskData* task = nullptr;
  const SplitIndices* split = nullptr;
  /// Required for hybrid models.
  const EmbeddingTable* embeddings = nullptr;
  std::string embedding_source = "none";
  std::optional<McvKey> mcv_key;
  unsigned threads = 1;
};

inline Metrics evaluate_checkpoint(const Checkpoint& c, const MasterTables& t, const TaskData& d,
                                   std::span<const std::size_t> rows, const EmbeddingTable* embeddings = nullptr,
                                   unsigned threads = 1) {
  if (c.task != d.task) throw DataError("checkpoint task '" + to_string(c.task) + "' does not match '" + to_string(d.task) + "'");
  if (c.class_names != d.class_names) throw DataError("checkpoint classes do not match the data's classes");
  if (c.model_kind == ModelKind::Baseline) {
    const auto slices = task_slices(t, d);
    const auto x = mcv_matrix(slices, c.mcv->vocab);
    return evaluate_linear(c.mcv->linear, x, d, rows);
  }
  if (c.embedding_dim > 0 && (!embeddings || embeddings->dim != c.embedding_dim))
    throw DataError("checkpoint expects " + std::to_string(c.embedding_dim) + "-dimensional embeddings");
  const auto graphs = task_graphs(t, d, c.embedding_dim > 0 ? embeddings : nullptr, threads);
  return evaluate_gcn(*c.gcn, graphs, d, rows);
}

inline TrainingRun run_training(const TrainingInputs& in, const TrainConfig& cfg) {
  const auto& t = *in.tables;
  const auto& d = *in.task;
  const auto& split = *in.split;
  if (d.task != cfg.task) throw ContractError("run_training: task mismatch");
  TrainingRun run;
  auto& c = run.checkpoint;
  c.model_kind = cfg.model_kind;
  c.task = cfg.task;
  c.dataset = t.dataset_kind;
  c.class_names = d.class_names;

  auto& r = run.report;
  r.dataset = to_string(t.dataset_kind);
  r.task = cfg.task;
  r.model_kind = cfg.model_kind;
  r.seed = cfg.seed;
  r.class_names = d.class_names;
  r.config = {{"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"hidden", cfg.hidden},
              {"symmetrize", cfg.symmetrize},
              {"lr", cfg.hyper.lr},
              {"beta1", cfg.hyper.beta1},
              {"beta2", cfg.hyper.beta2},
              {"eps", cfg.hyper.eps},
              {"weight_decay", cfg.hyper.weight_decay},
              {"split_sizes", {{"train", split.train.size()}, {"val", split.val.size()}, {"test", split.test.size()}}}};

  if (cfg.model_kind == ModelKind::Baseline) {
    const auto key = in.mcv_key.value_or(default_mcv_key(t.dataset_kind));
    r.config["mcv_key"] = to_string(key);
    const auto slices = task_slices(t, d);
    auto res = train_baseline(slices, d, split, cfg, key);
    c.mcv = std::move(res.best_model);
    r.epoch_log = std::move(res.epoch_log);
    r.best_epoch = res.best_epoch;
    const auto x = mcv_matrix(slices, c.mcv->vocab);
    r.metrics["train"] = evaluate_linear(c.mcv->linear, x, d, split.train);
    r.metrics["val"] = evaluate_linear(c.mcv->linear, x, d, split.val);
    r.metrics["test"] = evaluate_linear(c.mcv->linear, x, d, split.test);
    return run;
  }

  const EmbeddingTable* emb = nullptr;
  if (cfg.model_kind == ModelKind::Hybrid) {
    if (!in.embeddings) throw DataError("hybrid model needs an embedding table");
    emb = in.embeddings;
    c.embedding_dim = emb->dim;
    c.embedding_source = in.embedding_source;
  } else {
    c.embedding_source = "none";
  }
  r.config["embedding_dim"] = c.embedding_dim;
  r.config["embedding_source"] = c.embedding_source;
  const auto graphs = task_graphs(t, d, emb, in.threads);
  auto res = train_gcn(graphs, d, split, cfg);
  c.gcn = std::move(res.best_model);
  r.epoch_log = std::move(res.epoch_log);
  r.best_epoch = res.best_epoch;
  r.metrics["train"] = evaluate_gcn(*c.gcn, graphs, d, split.train);
  r.metrics["val"] = evaluate_gcn(*c.gcn, graphs, d, split.val);
  r.metrics["test"] = evaluate_gcn(*c.gcn, graphs, d, split.test);
  return run;
}

}  // namespace tracediag
