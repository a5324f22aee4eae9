#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"
#include "support.hpp"
#include "tracediag/pipeline.hpp"
#include "tracediag/synthgen.hpp"

using namespace tracediag;

namespace {

std::vector<std::size_t> labels_of(std::initializer_list<std::pair<std::size_t, std::size_t>> counts) {
  std::vector<std::size_t> y;
  for (auto [cls, n] : counts) y.insert(y.end(), n, cls);
  return y;
}

}  // namespace

TEST(Split, TenAndTen) {
  const auto y = labels_of({{0, 10}, {1, 10}});
  const auto s = stratified_split(y, 1);
  EXPECT_EQ(s.train.size(), 14u);
  EXPECT_EQ(s.val.size(), 2u);
  EXPECT_EQ(s.test.size(), 4u);
  for (std::size_t c : {0u, 1u}) {
    auto count = [&](const std::vector<std::size_t>& part) {
      return std::count_if(part.begin(), part.end(), [&](std::size_t i) { return y[i] == c; });
    };
    EXPECT_EQ(count(s.train), 7);
    EXPECT_EQ(count(s.val), 1);
    EXPECT_EQ(count(s.test), 2);
  }
}

TEST(Split, HundredOfOneClass) {
  const auto s = stratified_split(labels_of({{0, 100}}), 3);
  EXPECT_EQ(s.train.size(), 70u);
  EXPECT_EQ(s.val.size(), 15u);
  EXPECT_EQ(s.test.size(), 15u);
}

TEST(Split, PartitionAndDeterminism) {
  const auto y = labels_of({{0, 37}, {1, 11}, {2, 5}});
  const auto a = stratified_split(y, 9), b = stratified_split(y, 9), c = stratified_split(y, 10);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a.train == c.train && a.val == c.val);
  std::set<std::size_t> all;
  for (const auto* part : {&a.train, &a.val, &a.test}) all.insert(part->begin(), part->end());
  EXPECT_EQ(all.size(), y.size());
  EXPECT_EQ(a.train.size() + a.val.size() + a.test.size(), y.size());
}

TEST(Split, TinyClassesGoToTrain) {
  const auto y = labels_of({{0, 20}, {1, 2}});
  const auto s = stratified_split(y, 4);
  EXPECT_TRUE(std::count(s.train.begin(), s.train.end(), 20u));
  EXPECT_TRUE(std::count(s.train.begin(), s.train.end(), 21u));
  EXPECT_EQ(s.warnings.size(), 1u);
}

TEST(Weights, ClassWeightsAndPosWeight) {
  const auto y = labels_of({{0, 90}, {1, 10}});
  const auto w = compute_class_weights(y, 2);
  EXPECT_NEAR(w[0], 100.0 / 180.0, 1e-12);
  EXPECT_NEAR(w[1], 5.0, 1e-12);
  EXPECT_NEAR(compute_pos_weight(y), 9.0, 1e-12);
  std::vector<std::string> warn;
  const auto w3 = compute_class_weights(y, 3, &warn);
  EXPECT_EQ(w3[2], 0.0);
  EXPECT_EQ(warn.size(), 1u);
}

TEST(Metrics, BinaryExample) {
  const std::vector<std::size_t> preds{1, 1, 1}, labels{1, 1, 0};
  const auto m = binary_metrics(preds, labels);
  EXPECT_NEAR(m.precision, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_NEAR(m.f1, 0.8, 1e-15);
}

TEST(Metrics, ZeroDivisionGivesZero) {
  const std::vector<std::size_t> preds{0, 0}, labels{0, 0};
  const auto m = binary_metrics(preds, labels);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.f1, 0.0);
}

TEST(Metrics, MacroExample) {
  const std::vector<std::size_t> preds{0, 0, 0}, labels{0, 1, 2};
  const auto m = macro_metrics(preds, labels, 3);
  ASSERT_EQ(m.per_class.size(), 3u);
  EXPECT_NEAR(m.per_class[0].f1, 0.5, 1e-15);
  EXPECT_EQ(m.per_class[1].f1, 0.0);
  EXPECT_NEAR(m.f1, 1.0 / 6.0, 1e-15);
  EXPECT_EQ(m.per_class[0].support, 1u);
}

TEST(Metrics, AgreeWithConfusionOracle) {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(50), k = 2 + rng.below(12);
    std::vector<std::size_t> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.below(k);
      y[i] = rng.below(k);
    }
    const oracle::Confusion conf(p, y, k);
    const auto macro = macro_metrics(p, y, k);
    double mp = 0, mr = 0, mf = 0;
    for (std::size_t c = 0; c < k; ++c) {
      ASSERT_NEAR(macro.per_class[c].precision, conf.precision(c), 1e-12);
      ASSERT_NEAR(macro.per_class[c].recall, conf.recall(c), 1e-12);
      ASSERT_NEAR(macro.per_class[c].f1, conf.f1(c), 1e-12);
      mp += conf.precision(c);
      mr += conf.recall(c);
      mf += conf.f1(c);
    }
    ASSERT_NEAR(macro.precision, mp / k, 1e-12);
    ASSERT_NEAR(macro.recall, mr / k, 1e-12);
    ASSERT_NEAR(macro.f1, mf / k, 1e-12);
  }
}

TEST(Selection, EarliestMaximum) {
  EXPECT_EQ(select_best_epoch(std::vector<double>{0.5, 0.9, 0.9, 0.7}), 1u);  // 0-based: epoch 2
  EXPECT_EQ(select_best_epoch(std::vector<double>{0.1, 0.2, 0.3}), 2u);
  EXPECT_THROW(select_best_epoch(std::vector<double>{}), ContractError);
}

TEST(TaskData, AdAndFcRows) {
  MasterTables t;
  tdtest::add_chain(t, "a", 2);
  tdtest::add_chain(t, "b", 2, TraceLabel::fault("zeta"));
  tdtest::add_chain(t, "c", 2, TraceLabel::fault("alpha"));
  const auto ad = make_task_data(t, Task::AnomalyDetection);
  EXPECT_EQ(ad.labels, (std::vector<std::size_t>{0, 1, 1}));
  EXPECT_EQ(ad.outputs(), 1u);
  const auto fc = make_task_data(t, Task::FaultClassification);
  EXPECT_EQ(fc.class_names, (std::vector<std::string>{"alpha", "zeta"}));
  EXPECT_EQ(fc.trace_indices, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(fc.labels, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(fc.outputs(), 2u);
}

TEST(SplitsFile, RoundTrip) {
  tdtest::TempDir dir("splits");
  MasterTables t;
  for (int i = 0; i < 30; ++i) tdtest::add_chain(t, "t" + std::to_string(i), 1, i % 3 ? TraceLabel::normal() : TraceLabel::fault("x"));
  const auto d = make_task_data(t, Task::AnomalyDetection);
  const auto s = split_task(d, 5);
  write_splits(dir / "splits.tsv", t, d, s);
  EXPECT_EQ(read_splits(dir / "splits.tsv", t, d), s);
}

namespace {

struct SmallRun {
  MasterTables tables;
  TaskData task;
  SplitIndices split;
};

SmallRun small_run() {
  SynthConfig c;
  c.n_traces = 120;
  c.events_min = 6;
  c.events_max = 10;
  c.seed = 3;
  c.fault_mix = {{SynthFaultKind::CorruptDescription, 0.3}};
  SmallRun r;
  r.tables = generate_dataset(c);
  r.task = make_task_data(r.tables, Task::AnomalyDetection);
  r.split = split_task(r.task, 1);
  return r;
}

}  // namespace

TEST(Training, GcnLogMatchesSelection) {
  const auto r = small_run();
  auto cfg = TrainConfig::defaults_for(ModelKind::Gcn, Task::AnomalyDetection);
  cfg.epochs = 4;
  cfg.hidden = 8;
  const auto graphs = task_graphs(r.tables, r.task);
  const auto res = train_gcn(graphs, r.task, r.split, cfg);
  ASSERT_EQ(res.epoch_log.size(), 4u);
  std::vector<double> f1;
  for (const auto& e : res.epoch_log) f1.push_back(e.val.f1);
  EXPECT_EQ(res.best_epoch, select_best_epoch(f1) + 1);
  const auto again = train_gcn(graphs, r.task, r.split, cfg);
  EXPECT_EQ(again.best_model, res.best_model);
}

TEST(Training, BaselineBeatsChanceOnTextFaults) {
  const auto r = small_run();
  TrainingInputs in;
  in.tables = &r.tables;
  in.task = &r.task;
  in.split = &r.split;
  const auto run = run_training(in, TrainConfig::defaults_for(ModelKind::Baseline, Task::AnomalyDetection));
  EXPECT_EQ(run.report.epoch_log.size(), 200u);
  EXPECT_GE(run.report.metrics.at("train").f1, 0.9);
}

TEST(Report, KeysAndDeterminism) {
  const auto r = small_run();
  TrainingInputs in;
  in.tables = &r.tables;
  in.task = &r.task;
  in.split = &r.split;
  auto cfg = TrainConfig::defaults_for(ModelKind::Baseline, Task::AnomalyDetection);
  cfg.epochs = 5;
  const auto a = report_json(run_training(in, cfg).report, "T");
  const auto b = report_json(run_training(in, cfg).report, "T");
  EXPECT_EQ(a.dump(), b.dump());
  for (const char* key : {"dataset", "task", "model_kind", "seed", "config", "test_metrics", "epoch_log",
                          "tool_version", "best_epoch", "metrics"})
    EXPECT_TRUE(a.contains(key)) << key;
  EXPECT_EQ(a["epoch_log"].size(), 5u);
  EXPECT_EQ(a["model_kind"], "baseline");
  // keys sorted: nlohmann::json objects are ordered maps
  std::vector<std::string> keys;
  for (auto it = a.begin(); it != a.end(); ++it) keys.push_back(it.key());
  EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
}
