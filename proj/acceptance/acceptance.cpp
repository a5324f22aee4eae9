// Acceptance suite: one PASS/FAIL/SKIP line per criterion, nonzero exit if
// anything failed. Thresholds are the contract values; do not tune them here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "tracediag/ingest.hpp"
#include "tracediag/pipeline.hpp"
#include "tracediag/synthgen.hpp"

using namespace tracediag;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

struct Outcome {
  enum Status { Pass, Fail, Skip } status;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::Fail, std::move(d)}; }
Outcome check(bool ok, std::string d) { return {ok ? Outcome::Pass : Outcome::Fail, std::move(d)}; }

void report(const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = fail(std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const char* tag = o.status == Outcome::Pass ? "PASS" : o.status == Outcome::Fail ? "FAIL" : "SKIP";
  if (o.status == Outcome::Fail) ++failures;
  std::printf("%s  %-34s %s [%.2fs]\n", tag, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome metrics_oracle() {
  const auto t0 = Clock::now();
  Rng rng(derive_seed(2024, "acceptance/metrics"));
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(50), k = 2 + rng.below(12);
    std::vector<std::size_t> p(n), y(n), pb(n), yb(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.below(k);
      y[i] = rng.below(k);
      pb[i] = rng.below(2);
      yb[i] = rng.below(2);
    }
    const oracle::Confusion conf(p, y, k);
    const auto macro = macro_metrics(p, y, k);
    double mp = 0, mr = 0, mf = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const auto& pc = macro.per_class[c];
      const auto cnt = conf.counts(c);
      if (pc.support != cnt.tp + cnt.fn) return fail("support mismatch in trial " + std::to_string(trial));
      if (std::abs(pc.precision - conf.precision(c)) > 1e-12 || std::abs(pc.recall - conf.recall(c)) > 1e-12 ||
          std::abs(pc.f1 - conf.f1(c)) > 1e-12)
        return fail("per-class mismatch in trial " + std::to_string(trial));
      mp += conf.precision(c);
      mr += conf.recall(c);
      mf += conf.f1(c);
    }
    const double kd = static_cast<double>(k);
    if (std::abs(macro.precision - mp / kd) > 1e-12 || std::abs(macro.recall - mr / kd) > 1e-12 ||
        std::abs(macro.f1 - mf / kd) > 1e-12)
      return fail("macro mismatch in trial " + std::to_string(trial));
    const oracle::Confusion bconf(pb, yb, 2);
    const auto bin = binary_metrics(pb, yb);
    if (std::abs(bin.precision - bconf.precision(1)) > 1e-12 || std::abs(bin.recall - bconf.recall(1)) > 1e-12 ||
        std::abs(bin.f1 - bconf.f1(1)) > 1e-12)
      return fail("binary mismatch in trial " + std::to_string(trial));
  }
  const double s = seconds_since(t0);
  return check(s < 5.0, "1000 cases, binary + macro within 1e-12, " + fmt(s, 2) + "s < 5s");
}

// ---------------------------------------------------------------------------

TraceGraph random_graph(Rng& rng, std::size_t max_nodes) {
  const std::size_t n = 1 + rng.below(max_nodes);
  TraceGraph g;
  g.trace_id = "g";
  for (std::size_t i = 0; i < n; ++i) {
    g.node_ids.push_back("e" + std::to_string(i));
    g.timestamps.push_back(rng.between(0, 1000));
  }
  std::sort(g.timestamps.begin(), g.timestamps.end());
  for (std::size_t i = 1; i < n; ++i) g.edges.emplace_back(rng.below(i), i);
  if (n > 2 && rng.below(2)) g.edges.emplace_back(rng.below(n), rng.below(n));  // occasional extra edge
  std::erase_if(g.edges, [](auto e) { return e.first == e.second; });
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  g.features = compute_node_features(g);
  return g;
}

GcnModel random_model(std::size_t h, std::size_t k, Rng& rng) {
  auto m = gcn_init(kStructuralFeatures, h, k, rng.next());
  for (auto* v : {&m.b1, &m.b2, &m.b_out})
    for (auto& x : *v) x = rng.uniform(-0.5, 0.5);
  for (auto& x : m.w_out.data()) x = rng.uniform(-1, 1);
  return m;
}

/// Smallest |pre-activation| over both layers; central differences are only
/// meaningful when no ReLU sits within a step of its kink.
double kink_distance(const GcnModel& m, const GraphBatch& b) {
  const auto fwd = gcn_forward(m, b);
  double d = INFINITY;
  for (const auto* pre : {&fwd.cache.pre1, &fwd.cache.pre2})
    for (double v : pre->data()) d = std::min(d, std::abs(v));
  return d;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  Rng rng(derive_seed(2024, "acceptance/gradients"));
  constexpr double kStep = 1e-5, kTol = 1e-4, kFloor = 1e-6;
  double worst = 0.0;
  std::size_t params = 0, redrawn = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t k = inst % 2 ? 3 : 1;
    GcnModel m;
    std::vector<TraceGraph> graphs;
    GraphBatch batch;
    do {
      m = random_model(4, k, rng);
      graphs.clear();
      const std::size_t b = 1 + rng.below(3);
      for (std::size_t i = 0; i < b; ++i) graphs.push_back(random_graph(rng, 6));
      batch = make_batch(graphs);
      if (kink_distance(m, batch) > 1e3 * kStep) break;
      ++redrawn;
    } while (true);
    std::vector<std::size_t> y;
    for (std::size_t i = 0; i < graphs.size(); ++i) y.push_back(rng.below(k == 1 ? 2 : k));
    std::vector<double> w;
    for (std::size_t c = 0; c < k; ++c) w.push_back(rng.uniform(0.3, 3.0));

    const WeightedObjective obj{w};
    const auto fwd = gcn_forward(m, batch);
    const auto loss = obj(fwd.logits, y);
    const auto analytic =
        gcn_backward(m, batch, fwd.cache, DenseMatrix(graphs.size(), k, loss.dlogits)).flatten();
    const auto numeric = finite_difference_gradient(
        [&](std::span<const double> p) {
          GcnModel q = m;
          q.unflatten(p);
          std::vector<std::vector<double>> z;
          for (const auto& g : graphs) z.push_back(oracle::gcn_logits(q, g));
          return oracle::loss(z, y, w);
        },
        m.flatten(), kStep);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double rel =
          std::abs(analytic[i] - numeric[i]) / std::max({std::abs(analytic[i]), std::abs(numeric[i]), kFloor});
      worst = std::max(worst, rel);
    }
    params += analytic.size();
  }
  const double s = seconds_since(t0);
  return check(worst <= kTol && s < 30.0, "50 instances, " + std::to_string(params) + " params, max rel err " +
                                              fmt(worst, 8) + " <= 1e-4 (" + std::to_string(redrawn) +
                                              " near-kink redraws), " + fmt(s, 2) + "s < 30s");
}

// ---------------------------------------------------------------------------

Outcome invariance() {
  Rng rng(derive_seed(2024, "acceptance/invariance"));
  const auto m = random_model(16, 3, rng);
  std::vector<TraceGraph> graphs;
  double worst_perm = 0.0, worst_batch = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto g = random_graph(rng, 20);
    graphs.push_back(g);
    std::vector<std::size_t> perm(g.num_nodes());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    TraceGraph p = g;
    for (std::size_t v = 0; v < g.num_nodes(); ++v)
      for (std::size_t c = 0; c < g.features.cols(); ++c) p.features(perm[v], c) = g.features(v, c);
    p.edges.clear();
    for (auto [s, d] : g.edges) p.edges.emplace_back(perm[s], perm[d]);
    std::sort(p.edges.begin(), p.edges.end());
    const auto a = gcn_forward(m, make_batch(std::vector<TraceGraph>{g})).logits;
    const auto b = gcn_forward(m, make_batch(std::vector<TraceGraph>{p})).logits;
    for (std::size_t c = 0; c < 3; ++c) worst_perm = std::max(worst_perm, std::abs(a(0, c) - b(0, c)));
  }
  const auto batched = gcn_forward(m, make_batch(graphs)).logits;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const auto one = gcn_forward(m, make_batch(std::vector<TraceGraph>{graphs[i]})).logits;
    for (std::size_t c = 0; c < 3; ++c) worst_batch = std::max(worst_batch, std::abs(batched(i, c) - one(0, c)));
  }
  std::ostringstream d;
  d << "100 graphs, relabel max diff " << worst_perm << " <= 1e-9, batch max diff " << worst_batch << " <= 1e-12";
  return check(worst_perm <= 1e-9 && worst_batch <= 1e-12, d.str());
}

// ---------------------------------------------------------------------------

Outcome split_contract() {
  Rng rng(derive_seed(2024, "acceptance/splits"));
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.below(6);
    std::vector<std::size_t> y;
    for (std::size_t c = 0; c < k; ++c) y.insert(y.end(), rng.below(60), c);
    if (y.empty()) y.push_back(0);
    rng.shuffle(y);
    const auto seed = rng.next();
    const auto a = stratified_split(y, seed);
    const auto b = stratified_split(y, seed);
    if (!(a.train == b.train && a.val == b.val && a.test == b.test))
      return fail("not bit-identical in trial " + std::to_string(trial));
    std::vector<int> seen(y.size(), 0);
    for (const auto* part : {&a.train, &a.val, &a.test})
      for (auto i : *part) ++seen[i];
    if (std::any_of(seen.begin(), seen.end(), [](int s) { return s != 1; }))
      return fail("not a partition in trial " + std::to_string(trial));
    std::map<std::size_t, double> n;
    for (auto c : y) n[c] += 1;
    const std::pair<const std::vector<std::size_t>*, double> parts[] = {{&a.train, 0.70}, {&a.val, 0.15}, {&a.test, 0.15}};
    for (const auto& [part, ratio] : parts) {
      std::map<std::size_t, double> got;
      for (auto i : *part) got[y[i]] += 1;
      for (const auto& [c, nc] : n)
        if (std::abs(got[c] - ratio * nc) > 1.0)
          return fail("class " + std::to_string(c) + " off by more than one sample in trial " + std::to_string(trial));
    }
  }
  return pass("200 multisets: partition, per-class +-1 sample, repeatable");
}

// ---------------------------------------------------------------------------

Outcome noisy_or_kernel() {
  Rng rng(derive_seed(2024, "acceptance/noisy-or"));
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    std::vector<double> p(n);
    for (auto& v : p) v = rng.below(10) == 0 ? static_cast<double>(rng.below(2)) : rng.uniform();
    const double got = noisy_or(p);
    double keep = 1.0;
    for (double v : p) keep *= 1.0 - v;
    const double want = 1.0 - keep;
    worst = std::max(worst, std::abs(got - want));
    if (!(got >= 0.0 && got <= 1.0)) return fail("out of [0,1]");
    if (got < *std::max_element(p.begin(), p.end()) - 1e-15) return fail("below the max element");
    auto q = p;
    const auto j = rng.below(n);
    q[j] = q[j] + (1.0 - q[j]) * rng.uniform();
    if (noisy_or(q) < got - 1e-15) return fail("not monotone");
    const std::vector<double> single{p[0]};
    if (noisy_or(single) != p[0]) return fail("single element is not the identity");
  }
  return check(worst <= 1e-12, "1000 vectors, max |diff| " + fmt(worst * 1e15, 3) + "e-15 <= 1e-12");
}

// ---------------------------------------------------------------------------

Outcome ingest_checks() {
  const std::string sample =
      "1117838570 2005.06.03 R02-M1-N0-C:J12-U11 2005-06-03-15.42.50.363779 R02-M1-N0-C:J12-U11 RAS KERNEL INFO "
      "instruction cache parity error corrected";
  const auto p = parse_bgl_line(sample);
  if (!(p.alert_label == "-" && p.epoch == 1117838570 && p.severity == "INFO" &&
        p.message == "instruction cache parity error corrected" && p.node == "R02-M1-N0-C:J12-U11" &&
        p.component == "KERNEL" && p.message_type == "RAS"))
    return fail("sample line fields differ");

  // 24 hours, one line every 30 minutes; a few carry alert tags
  std::string log;
  std::set<std::int64_t> alert_windows;
  const std::int64_t t0 = 1117838570;
  for (int i = 0; i < 48; ++i) {
    const std::int64_t t = t0 + i * 1800;
    const bool alert = i == 5 || i == 40;
    if (alert) alert_windows.insert((t - t0) / 21600);
    log += (alert ? std::string("KERNDTLB ") : std::string()) + std::to_string(t) +
           " 2005.06.03 R02-M1-N0 2005-06-03-15.42.50.363779 R02-M1-N0 RAS KERNEL INFO event " + std::to_string(i) +
           "\n";
  }
  std::istringstream in(log);
  const auto read = read_bgl_log(in);
  const auto groups = group_into_windows(read.lines, IngestConfig{});
  if (groups.size() != 4) return fail("expected 4 windows, got " + std::to_string(groups.size()));
  for (const auto& g : groups)
    if (g.lines.size() != 12) return fail("window of " + std::to_string(g.lines.size()) + " events");
  const auto t = bgl_to_master_tables(groups);
  std::map<std::string, std::size_t> edges_of, events_of;
  for (const auto& e : t.events) ++events_of[e.trace_id];
  for (const auto& e : t.edges) ++edges_of[e.trace_id];
  for (const auto& [id, n] : events_of)
    if (edges_of[id] != n - 1) return fail("trace " + id + " has " + std::to_string(edges_of[id]) + " edges");
  for (std::size_t w = 0; w < t.traces.size(); ++w) {
    const bool flagged = t.traces[w].label.is_fault();
    if (flagged != (alert_windows.count(groups[w].window_index) > 0)) return fail("window label rule broken");
  }
  // randomized label rule
  Rng rng(derive_seed(2024, "acceptance/labels"));
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ParsedBglLine> group(1 + rng.below(10));
    bool any = false;
    for (auto& l : group) {
      if (rng.below(4) == 0) {
        l.alert_label = "APPREAD";
        any = true;
      }
    }
    if (label_window(group).is_fault() != any) return fail("label_window disagrees with the rule");
  }
  if (!validate_master_tables(t).ok) return fail("ingested tables fail validation");
  return pass("sample line fields; 48 lines -> 4 windows x 12 events; n-1 chain edges; label rule");
}

// ---------------------------------------------------------------------------

Outcome baseline_convergence() {
  // 200 traces: 2-6 shared ops (a, b) plus 1-3 class marker events, "ok" for
  // normal traces and "err" for abnormal ones
  Rng rng(derive_seed(2024, "acceptance/baseline"));
  MasterTables t;
  for (int i = 0; i < 200; ++i) {
    const bool abnormal = i % 2 == 1;
    const std::string id = "t" + std::to_string(i);
    t.traces.push_back({id, abnormal ? TraceLabel::fault("err") : TraceLabel::normal(), id, ""});
    const std::size_t shared = 2 + rng.below(5);
    const std::size_t n = shared + 1 + rng.below(3);
    for (std::size_t j = 0; j < n; ++j) {
      EventRecord e;
      e.event_id = id + "-" + std::to_string(j);
      e.trace_id = id;
      e.seq = j;
      e.op_name = j < shared ? (rng.below(2) ? "a" : "b") : abnormal ? "err" : "ok";
      e.description = "d";
      e.start_time = static_cast<std::int64_t>(j);
      t.events.push_back(e);
    }
  }
  const auto d = make_task_data(t, Task::AnomalyDetection);
  const auto slices = all_trace_views(t);
  const auto vocab = mcv_build_vocab(slices, McvKey::OpName);
  const auto x = mcv_matrix(slices, vocab);
  const auto r = lr_train(x, d.labels, {compute_pos_weight(d.labels)}, 1);
  double worst_rise = 0.0;
  for (std::size_t i = 1; i < r.loss_history.size(); ++i)
    worst_rise = std::max(worst_rise, r.loss_history[i] - r.loss_history[i - 1]);
  const auto f1 = binary_metrics(predict_rows(r.model.logits(x), Task::AnomalyDetection), d.labels).f1;
  std::ostringstream det;
  det << "train F1 " << f1 << " after 200 epochs, max loss rise " << worst_rise << " <= 1e-9";
  return check(f1 == 1.0 && worst_rise <= 1e-9, det.str());
}

// ---------------------------------------------------------------------------

struct Scenario {
  MasterTables tables;
  EmbeddingTable embeddings;
};

constexpr std::uint64_t kDataSeed = 42;
constexpr std::uint64_t kTrainSeed = 7;
constexpr std::size_t kPseudoDim = 32;

Scenario make_scenario(std::vector<std::pair<SynthFaultKind, double>> mix) {
  SynthConfig c;
  c.n_traces = 1000;
  c.events_min = 10;
  c.events_max = 30;
  c.fanout_min = c.fanout_max = 2;
  c.gap_min = c.gap_max = 10;
  c.seed = kDataSeed;
  c.fault_mix = std::move(mix);
  Scenario s;
  s.tables = generate_dataset(c);
  s.embeddings = pseudo_embeddings(s.tables, kPseudoDim);
  return s;
}

double test_f1(const Scenario& s, Task task, ModelKind kind) {
  const auto d = make_task_data(s.tables, task);
  const auto split = split_task(d, kTrainSeed);
  auto cfg = TrainConfig::defaults_for(kind, task);
  cfg.seed = kTrainSeed;
  TrainingInputs in;
  in.tables = &s.tables;
  in.task = &d;
  in.split = &split;
  in.embeddings = &s.embeddings;
  in.embedding_source = "pseudo:" + std::to_string(kPseudoDim);
  in.threads = std::max(1u, std::thread::hardware_concurrency());
  return run_training(in, cfg).report.metrics.at("test").f1;
}

}  // namespace

int main() {
  std::printf("tracediag acceptance (tool %s)\n", std::string(kToolVersion).c_str());
  report("metrics-oracle", metrics_oracle);
  report("gradient-suite", gradient_suite);
  report("permutation-batch-invariance", invariance);
  report("split-contract", split_contract);
  report("noisy-or-kernel", noisy_or_kernel);
  report("ingest-checks", ingest_checks);
  report("baseline-convergence", baseline_convergence);

  const auto directional_start = Clock::now();
  report("directional-a-structural", [] {
    const auto s = make_scenario({{SynthFaultKind::DropSubtree, 0.15}, {SynthFaultKind::DuplicateBranch, 0.15}});
    const double gcn = test_f1(s, Task::AnomalyDetection, ModelKind::Gcn);
    return check(gcn >= 0.90, "AD gcn test F1 " + fmt(gcn) + " >= 0.90");
  });
  report("directional-b-semantic", [] {
    const auto s = make_scenario({{SynthFaultKind::CorruptDescription, 0.3}});
    const double gcn = test_f1(s, Task::AnomalyDetection, ModelKind::Gcn);
    const double base = test_f1(s, Task::AnomalyDetection, ModelKind::Baseline);
    return check(gcn <= 0.60 && base >= 0.90,
                 "AD gcn test F1 " + fmt(gcn) + " <= 0.60, baseline " + fmt(base) + " >= 0.90");
  });
  report("directional-c-mixed", [] {
    const auto s = make_scenario({{SynthFaultKind::DropSubtree, 0.15},
                                  {SynthFaultKind::DelayTimestamps, 0.15},
                                  {SynthFaultKind::CorruptDescription, 0.15}});
    bool ok = true;
    std::string detail;
    for (auto task : {Task::AnomalyDetection, Task::FaultClassification}) {
      const double base = test_f1(s, task, ModelKind::Baseline);
      const double gcn = test_f1(s, task, ModelKind::Gcn);
      const double hyb = test_f1(s, task, ModelKind::Hybrid);
      const double bar = std::max(base, gcn) - 0.02;
      ok &= hyb >= bar;
      if (!detail.empty()) detail += "; ";
      detail += to_string(task) + " hybrid " + fmt(hyb) + " vs max(gcn " + fmt(gcn) + ", baseline " + fmt(base) +
                ")-0.02 = " + fmt(bar);
    }
    return check(ok, detail);
  });
  const double directional = seconds_since(directional_start);
  report("directional-runtime", [&] { return check(directional < 300.0, fmt(directional, 1) + "s < 300s"); });

  report("bgl-corpus-baseline", [] {
    const char* env = std::getenv("TRACEDIAG_BGL_LOG");
    const std::filesystem::path path = env ? env : "data/BGL.log";
    if (!std::filesystem::exists(path)) return Outcome{Outcome::Skip, "corpus not found (set TRACEDIAG_BGL_LOG)"};
    std::ifstream in(path);
    auto read = read_bgl_log(in, true, std::max(1u, std::thread::hardware_concurrency()));
    const auto t = bgl_to_master_tables(group_into_windows(std::move(read.lines), IngestConfig{}));
    const auto d = make_task_data(t, Task::AnomalyDetection);
    const auto split = split_task(d, kTrainSeed);
    auto cfg = TrainConfig::defaults_for(ModelKind::Baseline, Task::AnomalyDetection);
    cfg.seed = kTrainSeed;
    TrainingInputs inputs;
    inputs.tables = &t;
    inputs.task = &d;
    inputs.split = &split;
    const double f1 = run_training(inputs, cfg).report.metrics.at("test").f1;
    return check(std::abs(f1 - 0.933) <= 0.05, "baseline AD test F1 " + fmt(f1) + " within 0.933 +- 0.05");
  });

  std::printf("%s\n", failures ? "acceptance: FAILED" : "acceptance: all criteria passed");
  return failures ? 1 : 0;
}
