#pragma once

// The `tracediag` command line. Kept in a header so tests can drive it
// in-process; tools/tracediag.cpp is a thin main().
//
// Exit codes: 0 ok, 1 usage, 2 data/validation error, 3 internal error.
// Every run that knows its --out directory leaves a manifest.json there,
// on success and on handled failure.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tracediag/checkpoint.hpp"
#include "tracediag/common.hpp"
#include "tracediag/core_model.hpp"
#include "tracediag/graph_builder.hpp"
#include "tracediag/ingest.hpp"
#include "tracediag/pipeline.hpp"
#include "tracediag/synthgen.hpp"
#include "tracediag/training_eval.hpp"

namespace tracediag::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

/// Bad flag combinations detected after CLI11 has parsed successfully.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kDefaultPseudoDim = 32;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  unsigned threads = 1;
};

struct Options {
  Common common;
  // inputs
  std::string data, input, traces, events, edges, label_rules, checkpoint, splits, split_name = "test";
  std::vector<std::string> reports;
  std::string dataset;  // empty: infer
  // ingest
  std::int64_t window_seconds = 21600;
  bool skip_malformed = false;
  std::vector<std::string> exclude_faults{"slowHDFS"};
  bool all_scenarios = false;
  std::string scenario_pattern, default_scenario = "default", timestamp_unit = "us";
  // synth
  std::size_t n_traces = 1000, events_min = 8, events_max = 24, fanout_min = 2, fanout_max = 3, vocab_size = 12;
  std::int64_t gap_min = 10, gap_max = 12;
  std::vector<std::string> faults;
  // training
  std::string task = "ad", model = "gcn", mcv_key;
  std::optional<std::size_t> epochs;
  std::size_t batch_size = 16, hidden = 64;
  double lr = 1e-3, weight_decay = 0.01;
  bool no_symmetrize = false;
  std::string embeddings;
  std::size_t pseudo_embeddings = 0;
};

struct RunState {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  json inputs = json::array();
  json outputs = json::array();
};

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const auto hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

inline std::optional<DatasetKind> dataset_override(const Options& o) {
  if (o.dataset.empty()) return std::nullopt;
  return parse_dataset_kind(o.dataset);
}

inline MasterTables load_tables(const Options& o, RunState& st) {
  if (o.data.empty()) throw UsageError("--data is required");
  st.inputs.push_back(o.data);
  auto t = read_master_tables(o.data, dataset_override(o));
  const auto rep = validate_master_tables(t);
  if (!rep.ok) {
    const auto& v = rep.violations.front();
    throw DataError("master tables in " + o.data + " fail validation (" + std::to_string(rep.violations.size()) +
                    " violations, first: " + to_string(v.kind) + " at row " + std::to_string(v.row) + ": " +
                    v.detail + ")");
  }
  return t;
}

/// Embedding table from --embeddings or --pseudo-embeddings; `fallback` is
/// used for a checkpoint that recorded pseudo embeddings.
inline std::optional<EmbeddingTable> load_embeddings(const Options& o, const MasterTables& t, RunState& st,
                                                     std::string& source,
                                                     const std::string& fallback = std::string()) {
  if (!o.embeddings.empty() && o.pseudo_embeddings > 0)
    throw UsageError("--embeddings and --pseudo-embeddings are mutually exclusive");
  if (!o.embeddings.empty()) {
    st.inputs.push_back(o.embeddings);
    source = "file";
    return read_embedding_table(o.embeddings);
  }
  std::size_t dim = o.pseudo_embeddings;
  if (dim == 0 && fallback.rfind("pseudo:", 0) == 0) {
    const auto v = parse_int64(fallback.substr(7));
    if (v && *v > 0) dim = static_cast<std::size_t>(*v);
  }
  if (dim == 0) return std::nullopt;
  source = "pseudo:" + std::to_string(dim);
  return pseudo_embeddings(t, dim);
}

inline void ensure_out(const Options& o) {
  if (o.common.out.empty()) throw UsageError("--out is required");
  for (const auto& in : {o.data, o.input})
    if (!in.empty() && fs::exists(in) && fs::exists(o.common.out) && fs::equivalent(in, o.common.out) &&
        fs::is_directory(in))
      throw UsageError("--out must differ from the input directory");
  fs::create_directories(o.common.out);
}

inline void record_tables(const fs::path& dir, RunState& st) {
  for (const auto* f : {"traces.tsv", "events.tsv", "edges.tsv"}) st.outputs.push_back((dir / f).string());
}

inline std::string summarize(const MasterTables& t) {
  const auto dist = label_distribution(t);
  std::string s = std::to_string(t.traces.size()) + " traces, " + std::to_string(t.events.size()) + " events, " +
                  std::to_string(t.edges.size()) + " edges;";
  for (const auto& [k, n] : dist) s += " " + k + "=" + std::to_string(n);
  return s;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline void cmd_parse_bgl(const Options& o, RunState& st, std::ostream& out) {
  ensure_out(o);
  if (o.window_seconds <= 0) throw UsageError("--window-seconds must be positive");
  st.inputs.push_back(o.input);
  std::ifstream in(o.input);
  if (!in) throw NotFoundError("cannot open " + o.input);
  auto read = read_bgl_log(in, o.skip_malformed, resolve_threads(o.common.threads));
  IngestConfig cfg;
  cfg.window_seconds = o.window_seconds;
  const auto t = bgl_to_master_tables(group_into_windows(std::move(read.lines), cfg));
  write_master_tables(t, o.common.out);
  record_tables(o.common.out, st);
  out << "parse-bgl: " << summarize(t);
  if (read.skipped_malformed) out << "; skipped " << read.skipped_malformed << " malformed lines";
  out << '\n';
}

inline void cmd_ingest_tracebench(const Options& o, RunState& st, std::ostream& out) {
  ensure_out(o);
  st.inputs = {o.traces, o.events, o.edges};
  auto rules = default_label_rules();
  if (!o.label_rules.empty()) {
    st.inputs.push_back(o.label_rules);
    rules = read_label_rules(o.label_rules);
  }
  IngestConfig cfg;
  cfg.excluded_faults = {o.exclude_faults.begin(), o.exclude_faults.end()};
  cfg.keep_default_scenario_only = !o.all_scenarios;
  cfg.scenario_pattern = o.scenario_pattern;
  cfg.default_scenario = o.default_scenario;
  cfg.timestamp_unit = parse_timestamp_unit(o.timestamp_unit);
  const auto raw = tracebench_to_master_tables(fs::path(o.traces), fs::path(o.events), fs::path(o.edges), rules, cfg);
  const auto t = tracebench_filter(raw, cfg);
  write_master_tables(t, o.common.out);
  record_tables(o.common.out, st);
  out << "ingest-tracebench: kept " << summarize(t) << " (read " << raw.traces.size() << " traces)\n";
}

inline void cmd_synth(const Options& o, RunState& st, std::ostream& out) {
  ensure_out(o);
  SynthConfig c;
  c.n_traces = o.n_traces;
  c.events_min = o.events_min;
  c.events_max = o.events_max;
  c.fanout_min = o.fanout_min;
  c.fanout_max = o.fanout_max;
  c.semantic_vocab_size = o.vocab_size;
  c.gap_min = o.gap_min;
  c.gap_max = o.gap_max;
  c.seed = o.common.seed;
  for (const auto& f : o.faults) {
    const auto eq = f.find('=');
    if (eq == std::string::npos) throw UsageError("--fault expects kind=proportion, got '" + f + "'");
    const auto p = parse_double(f.substr(eq + 1));
    if (!p) throw UsageError("--fault proportion is not a number: '" + f + "'");
    try {
      c.fault_mix.emplace_back(parse_synth_fault_kind(f.substr(0, eq)), *p);
    } catch (const DataError& e) {
      throw UsageError(e.what());
    }
  }
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  const auto t = generate_dataset(c);
  write_master_tables(t, o.common.out);
  record_tables(o.common.out, st);
  st.config["synth"] = to_json(c);
  out << "synth: " << summarize(t) << '\n';
}

inline void cmd_build_graphs(const Options& o, RunState& st, std::ostream& out) {
  ensure_out(o);
  const auto t = load_tables(o, st);
  std::string source = "none";
  const auto emb = load_embeddings(o, t, st, source);
  auto graphs = build_graphs(t, resolve_threads(o.common.threads));
  std::string dump;
  std::size_t nodes = 0, edges = 0;
  for (auto& g : graphs) {
    if (emb) g = attach_embeddings(std::move(g), *emb);
    nodes += g.num_nodes();
    edges += g.edges.size();
    dump += dump_graph(g);
  }
  const fs::path dir = o.common.out;
  write_file_atomic(dir / "graphs.txt", dump);
  json summary = {{"graphs", graphs.size()},
                  {"nodes", nodes},
                  {"edges", edges},
                  {"feature_dim", kStructuralFeatures + (emb ? emb->dim : 0)},
                  {"embedding_source", source}};
  write_file_atomic(dir / "graph_summary.json", summary.dump(2) + "\n");
  st.outputs.push_back((dir / "graphs.txt").string());
  st.outputs.push_back((dir / "graph_summary.json").string());
  out << "build-graphs: " << graphs.size() << " graphs, " << nodes << " nodes, " << edges << " edges\n";
}

/// traces_text.tsv: TraceId, Label, FaultType, Text (events joined by " [SEP] ").
/// events_text.tsv: TraceId, EventId, Text, in chronological order per trace.
inline void cmd_export_text(const Options& o, RunState& st, std::ostream& out) {
  ensure_out(o);
  const auto t = load_tables(o, st);
  const auto slices = all_trace_views(t);
  std::string traces = "TraceId\tLabel\tFaultType\tText\n";
  std::string events = "TraceId\tEventId\tText\n";
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const auto& r = t.traces[i];
    traces += tsv_escape(r.trace_id) + '\t' + (r.label.is_normal() ? "normal" : "abnormal") + '\t' +
              (r.label.is_fault() ? tsv_escape(r.label.fault_kind()) : "") + '\t' +
              tsv_escape(encode_trace_text(slices[i], t.dataset_kind)) + '\n';
    for (const auto& e : slices[i].events)
      events += tsv_escape(e.trace_id) + '\t' + tsv_escape(e.event_id) + '\t' +
                tsv_escape(event_text(e, t.dataset_kind)) + '\n';
  }
  const fs::path dir = o.common.out;
  write_file_atomic(dir / "traces_text.tsv", traces);
  write_file_atomic(dir / "events_text.tsv", events);
  st.outputs.push_back((dir / "traces_text.tsv").string());
  st.outputs.push_back((dir / "events_text.tsv").string());
  if (o.pseudo_embeddings > 0) {
    write_embedding_table(pseudo_embeddings(t, o.pseudo_embeddings), dir / "embeddings.tsv");
    st.outputs.push_back((dir / "embeddings.tsv").string());
  }
  out << "export-text: " << slices.size() << " traces, " << t.events.size() << " events\n";
}

inline void cmd_split(const Options& o, RunState& st, std::ostream& out) {
  ensure_out(o);
  const auto t = load_tables(o, st);
  const auto d = make_task_data(t, parse_task(o.task));
  const auto s = split_task(d, o.common.seed);
  const auto path = fs::path(o.common.out) / "splits.tsv";
  write_splits(path, t, d, s);
  st.outputs.push_back(path.string());
  out << "split: train " << s.train.size() << ", val " << s.val.size() << ", test " << s.test.size() << '\n';
}

inline void cmd_train(const Options& o, RunState& st, std::ostream& out) {
  ensure_out(o);
  const auto t = load_tables(o, st);
  const auto task = parse_task(o.task);
  const auto kind = parse_model_kind(o.model);
  const auto d = make_task_data(t, task);
  SplitIndices split;
  if (!o.splits.empty()) {
    st.inputs.push_back(o.splits);
    split = read_splits(o.splits, t, d);
  } else {
    split = split_task(d, o.common.seed);
  }

  TrainConfig cfg = TrainConfig::defaults_for(kind, task);
  cfg.seed = o.common.seed;
  if (o.epochs) cfg.epochs = *o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.hidden = o.hidden;
  cfg.hyper.lr = o.lr;
  cfg.hyper.weight_decay = o.weight_decay;
  cfg.symmetrize = !o.no_symmetrize;
  if (cfg.epochs == 0 || cfg.batch_size == 0 || cfg.hidden == 0) throw UsageError("epochs, batch size and hidden width must be positive");

  TrainingInputs in;
  in.tables = &t;
  in.task = &d;
  in.split = &split;
  in.threads = resolve_threads(o.common.threads);
  if (!o.mcv_key.empty()) in.mcv_key = parse_mcv_key(o.mcv_key);
  std::optional<EmbeddingTable> emb;
  if (kind == ModelKind::Hybrid) {
    Options eo = o;
    if (eo.embeddings.empty() && eo.pseudo_embeddings == 0) eo.pseudo_embeddings = kDefaultPseudoDim;
    emb = load_embeddings(eo, t, st, in.embedding_source);
    in.embeddings = &*emb;
  } else if (!o.embeddings.empty() || o.pseudo_embeddings > 0) {
    throw UsageError("embeddings are only used by --model hybrid");
  }

  const auto run = run_training(in, cfg);
  const fs::path dir = o.common.out;
  write_checkpoint(run.checkpoint, dir / "checkpoint.txt");
  write_report(run.report, dir / "report.json");
  write_splits(dir / "splits.tsv", t, d, split);
  for (const auto* f : {"checkpoint.txt", "report.json", "splits.tsv"}) st.outputs.push_back((dir / f).string());
  const auto& m = run.report.metrics.at("test");
  out << "train: " << to_string(kind) << '/' << to_string(task) << " best epoch " << run.report.best_epoch
      << ", test P=" << format_double(m.precision) << " R=" << format_double(m.recall)
      << " F1=" << format_double(m.f1) << '\n';
}

inline void cmd_evaluate(const Options& o, RunState& st, std::ostream& out) {
  ensure_out(o);
  const auto t = load_tables(o, st);
  st.inputs.push_back(o.checkpoint);
  const auto c = read_checkpoint(o.checkpoint);
  const auto task = parse_task(o.task);
  if (c.task != task)
    throw DataError("checkpoint task '" + to_string(c.task) + "' does not match requested task '" + to_string(task) + "'");
  const auto d = make_task_data(t, task);
  std::vector<std::size_t> rows;
  std::string scope = "all";
  if (!o.splits.empty()) {
    st.inputs.push_back(o.splits);
    const auto s = read_splits(o.splits, t, d);
    if (o.split_name == "train") rows = s.train;
    else if (o.split_name == "val") rows = s.val;
    else if (o.split_name == "test") rows = s.test;
    else throw UsageError("--split must be train|val|test");
    scope = o.split_name;
  } else {
    rows.resize(d.labels.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
  }
  std::optional<EmbeddingTable> emb;
  std::string source = "none";
  if (c.embedding_dim > 0) emb = load_embeddings(o, t, st, source, c.embedding_source);
  const auto m = evaluate_checkpoint(c, t, d, rows, emb ? &*emb : nullptr, resolve_threads(o.common.threads));
  json j = {{"checkpoint", o.checkpoint}, {"task", to_string(task)},   {"model_kind", to_string(c.model_kind)},
            {"scope", scope},             {"rows", rows.size()},       {"classes", d.class_names},
            {"metrics", to_json(m)},      {"tool_version", std::string(kToolVersion)}};
  const auto path = fs::path(o.common.out) / "eval.json";
  write_file_atomic(path, j.dump(2) + "\n");
  st.outputs.push_back(path.string());
  out << "evaluate: " << scope << " (" << rows.size() << " traces) P=" << format_double(m.precision)
      << " R=" << format_double(m.recall) << " F1=" << format_double(m.f1) << '\n';
}

/// Collects report.json files into one TSV table of test metrics.
inline void cmd_report(const Options& o, RunState& st, std::ostream& out) {
  ensure_out(o);
  std::string tsv = "Report\tDataset\tTask\tModel\tSeed\tBestEpoch\tPrecision\tRecall\tF1\n";
  for (const auto& r : o.reports) {
    st.inputs.push_back(r);
    json j;
    try {
      j = json::parse(read_file(r));
    } catch (const json::exception& e) {
      throw DataError(r + ": not a JSON report (" + e.what() + ")");
    }
    for (const auto* key : {"dataset", "task", "model_kind", "seed", "test_metrics", "best_epoch"})
      if (!j.contains(key)) throw DataError(r + ": missing key '" + std::string(key) + "'");
    const auto& m = j["test_metrics"];
    tsv += tsv_escape(r) + '\t' + j["dataset"].get<std::string>() + '\t' + j["task"].get<std::string>() + '\t' +
           j["model_kind"].get<std::string>() + '\t' + std::to_string(j["seed"].get<std::uint64_t>()) + '\t' +
           std::to_string(j["best_epoch"].get<std::size_t>()) + '\t' + format_double(m["precision"].get<double>()) +
           '\t' + format_double(m["recall"].get<double>()) + '\t' + format_double(m["f1"].get<double>()) + '\n';
  }
  const auto path = fs::path(o.common.out) / "summary.tsv";
  write_file_atomic(path, tsv);
  st.outputs.push_back(path.string());
  out << tsv;
}

// ---------------------------------------------------------------------------
// Wiring
// ---------------------------------------------------------------------------

inline json resolved_options(const CLI::App& sub) {
  json j = json::object();
  for (const auto* opt : sub.get_options()) {
    const auto name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    if (opt->get_type_size() == 0) {
      j[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& r = opt->results();
      if (opt->get_expected_max() > 1) j[name] = r;
      else j[name] = r.back();
    } else if (!opt->get_default_str().empty()) {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

/// key=value lines; '#' starts a comment. Keys name long options of the
/// subcommand. Command-line flags win over the file.
inline std::vector<std::string> config_arguments(const std::string& path, const CLI::App& sub,
                                                 const std::vector<std::string>& argv) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  auto given = [&](const std::string& flag) {
    return std::any_of(argv.begin(), argv.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  std::vector<std::string> extra;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    auto s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw UsageError(path + ":" + std::to_string(n) + ": expected key=value");
    const std::string key(trim(s.substr(0, eq)));
    const std::string value(trim(s.substr(eq + 1)));
    if (key == "config") throw UsageError(path + ":" + std::to_string(n) + ": nested config is not supported");
    const auto* opt = sub.get_option_no_throw("--" + key);
    if (!opt) throw UsageError(path + ":" + std::to_string(n) + ": unknown key '" + key + "'");
    if (given("--" + key)) continue;
    if (opt->get_type_size() == 0) {
      const auto v = to_lower(value);
      if (v == "true" || v == "1" || v == "yes") extra.push_back("--" + key);
      else if (!(v == "false" || v == "0" || v == "no")) throw UsageError(path + ": flag '" + key + "' expects true|false");
      continue;
    }
    extra.push_back("--" + key);
    for (const auto& part : split_whitespace(value)) extra.push_back(part);
  }
  return extra;
}

inline std::string error_name(const std::exception& e) {
  if (dynamic_cast<const SchemaError*>(&e)) return "schema error";
  if (dynamic_cast<const MalformedLineError*>(&e)) return "malformed line";
  if (dynamic_cast<const NotFoundError*>(&e)) return "not found";
  if (dynamic_cast<const DataError*>(&e)) return "data error";
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return "i/o error";
  if (dynamic_cast<const ContractError*>(&e)) return "internal contract violation";
  return "internal error";
}

inline void write_manifest(const fs::path& dir, const RunState& st, const Options& o, double seconds, int code,
                           const std::string& error) {
  json m = {{"command", st.command},
            {"argv", st.argv},
            {"config", st.config},
            {"inputs", st.inputs},
            {"outputs", st.outputs},
            {"seed", o.common.seed},
            {"tool_version", std::string(kToolVersion)},
            {"duration_seconds", seconds},
            {"exit_code", code},
            {"status", code == kOk ? "ok" : "error"}};
  if (!error.empty()) m["error"] = error;
  write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trace-based fault diagnosis toolkit", "tracediag"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.common.config, "key=value file; command-line flags take precedence");
    sub->add_option("--seed", o.common.seed, "master seed; subsystem seeds are derived from it");
    sub->add_option("--out", o.common.out, "output directory")->required();
    sub->add_option("--threads", o.common.threads, "worker threads (0 = all cores)");
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "directory with traces.tsv, events.tsv, edges.tsv")->required();
    sub->add_option("--dataset", o.dataset, "override dataset kind (tracebench|bgl)")
        ->check(CLI::IsMember({"tracebench", "bgl"}));
  };
  auto add_embeddings = [&](CLI::App* sub) {
    sub->add_option("--embeddings", o.embeddings, "EmbeddingTable TSV (dim=<d> header)");
    sub->add_option("--pseudo-embeddings", o.pseudo_embeddings, "hashed bag-of-words stand-in of this dimension");
  };
  auto add_task = [&](CLI::App* sub) {
    sub->add_option("--task", o.task, "ad (anomaly detection) or fc (fault classification)")
        ->check(CLI::IsMember({"ad", "fc"}));
  };

  auto* parse_bgl = app.add_subcommand("parse-bgl", "BGL log -> master tables (tumbling time windows)");
  add_common(parse_bgl);
  parse_bgl->add_option("--input", o.input, "raw BGL log")->required();
  parse_bgl->add_option("--window-seconds", o.window_seconds, "window length in seconds");
  parse_bgl->add_flag("--skip-malformed", o.skip_malformed, "count and skip unparseable lines");

  auto* ingest = app.add_subcommand("ingest-tracebench", "TraceBench exports -> master tables");
  add_common(ingest);
  ingest->add_option("--traces", o.traces, "trace export (TSV or CSV)")->required();
  ingest->add_option("--events", o.events, "event export")->required();
  ingest->add_option("--edges", o.edges, "edge export")->required();
  ingest->add_option("--label-rules", o.label_rules, "regex<TAB>default lines with a (?<fault>...) capture");
  ingest->add_option("--exclude-fault", o.exclude_faults, "fault kinds to drop");
  ingest->add_flag("--all-scenarios", o.all_scenarios, "keep non-default scenarios");
  ingest->add_option("--scenario-pattern", o.scenario_pattern, "regex with a (?<scenario>...) capture over SourceName");
  ingest->add_option("--default-scenario", o.default_scenario, "scenario kept by default");
  ingest->add_option("--timestamp-unit", o.timestamp_unit, "unit of StartTime/EndTime")
      ->check(CLI::IsMember({"s", "ms", "us", "ns"}));

  auto* synth = app.add_subcommand("synth", "generate synthetic master tables with injected faults");
  add_common(synth);
  synth->add_option("--n-traces", o.n_traces, "number of traces");
  synth->add_option("--events-min", o.events_min, "minimum events per trace");
  synth->add_option("--events-max", o.events_max, "maximum events per trace");
  synth->add_option("--fanout-min", o.fanout_min, "minimum children per expanded node");
  synth->add_option("--fanout-max", o.fanout_max, "maximum children per expanded node");
  synth->add_option("--vocab-size", o.vocab_size, "number of operation names");
  synth->add_option("--gap-min", o.gap_min, "minimum time between consecutive events");
  synth->add_option("--gap-max", o.gap_max, "maximum time between consecutive events");
  synth->add_option("--fault", o.faults, "kind=proportion, repeatable");

  auto* graphs = app.add_subcommand("build-graphs", "build trace graphs and dump them");
  add_common(graphs);
  add_data(graphs);
  add_embeddings(graphs);

  auto* export_text = app.add_subcommand("export-text", "write trace and event text encodings");
  add_common(export_text);
  add_data(export_text);
  export_text->add_option("--pseudo-embeddings", o.pseudo_embeddings, "also write embeddings.tsv of this dimension");

  auto* split_cmd = app.add_subcommand("split", "stratified 70/15/15 split");
  add_common(split_cmd);
  add_data(split_cmd);
  add_task(split_cmd);

  auto* train = app.add_subcommand("train", "train a model and write checkpoint + report");
  add_common(train);
  add_data(train);
  add_task(train);
  add_embeddings(train);
  train->add_option("--model", o.model, "baseline | gcn | hybrid")->check(CLI::IsMember({"baseline", "gcn", "hybrid"}));
  train->add_option("--splits", o.splits, "reuse an existing splits.tsv");
  train->add_option("--epochs", o.epochs, "epochs (default 30 for graph models, 200 for baseline)");
  train->add_option("--batch-size", o.batch_size, "graphs per mini-batch");
  train->add_option("--hidden", o.hidden, "GCN hidden width");
  train->add_option("--lr", o.lr, "AdamW learning rate");
  train->add_option("--weight-decay", o.weight_decay, "AdamW decoupled weight decay");
  train->add_flag("--no-symmetrize", o.no_symmetrize, "keep the adjacency directed");
  train->add_option("--mcv-key", o.mcv_key, "baseline count key: op | op-desc | desc")
      ->check(CLI::IsMember({"op", "op-desc", "desc"}));

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on master tables");
  add_common(evaluate);
  add_data(evaluate);
  add_task(evaluate);
  add_embeddings(evaluate);
  evaluate->add_option("--checkpoint", o.checkpoint, "checkpoint.txt from train")->required();
  evaluate->add_option("--splits", o.splits, "restrict to one part of a splits.tsv");
  evaluate->add_option("--split", o.split_name, "train | val | test");

  auto* report = app.add_subcommand("report", "tabulate test metrics of report.json files");
  add_common(report);
  report->add_option("--reports", o.reports, "report.json files")->required();

  RunState st;
  st.argv = args;
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  try {
    // Reverse order is what CLI11 expects for vector input.
    std::vector<std::string> full = args;
    const auto it = std::find_if(args.begin(), args.end(), [](const std::string& a) { return !a.empty() && a[0] != '-'; });
    if (it != args.end()) {
      const auto* sub = app.get_subcommand_no_throw(*it);
      if (sub) {
        for (std::size_t i = 0; i + 1 < args.size(); ++i)
          if (args[i] == "--config") {
            auto extra = config_arguments(args[i + 1], *sub, args);
            full.insert(full.end(), extra.begin(), extra.end());
          }
        for (const auto& a : args)
          if (a.rfind("--config=", 0) == 0) {
            auto extra = config_arguments(a.substr(9), *sub, args);
            full.insert(full.end(), extra.begin(), extra.end());
          }
      }
    }
    std::reverse(full.begin(), full.end());
    app.parse(full);
  } catch (const CLI::ParseError& e) {
    // help and version are successes that happen to unwind through here
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kOk;
    }
    app.exit(e, out, err);
    err << app.help();
    return kUsage;
  } catch (const UsageError& e) {
    err << "tracediag: usage error: " << e.what() << '\n';
    return kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  st.command = sub->get_name();
  st.config = resolved_options(*sub);

  int code = kOk;
  std::string message;
  try {
    if (st.command == "parse-bgl") cmd_parse_bgl(o, st, out);
    else if (st.command == "ingest-tracebench") cmd_ingest_tracebench(o, st, out);
    else if (st.command == "synth") cmd_synth(o, st, out);
    else if (st.command == "build-graphs") cmd_build_graphs(o, st, out);
    else if (st.command == "export-text") cmd_export_text(o, st, out);
    else if (st.command == "split") cmd_split(o, st, out);
    else if (st.command == "train") cmd_train(o, st, out);
    else if (st.command == "evaluate") cmd_evaluate(o, st, out);
    else if (st.command == "report") cmd_report(o, st, out);
  } catch (const UsageError& e) {
    code = kUsage;
    message = std::string("usage error: ") + e.what();
  } catch (const DataError& e) {
    code = kData;
    message = error_name(e) + ": " + e.what();
  } catch (const fs::filesystem_error& e) {
    code = kData;
    message = error_name(e) + ": " + e.what();
  } catch (const std::exception& e) {
    code = kInternal;
    message = error_name(e) + ": " + e.what();
  }
  if (code != kOk) err << "tracediag " << st.command << ": " << message << '\n';

  try {
    if (!o.common.out.empty()) {
      fs::create_directories(o.common.out);
      write_manifest(o.common.out, st, o, elapsed(), code, message);
    }
  } catch (const std::exception& e) {
    err << "tracediag: could not write manifest: " << e.what() << '\n';
    if (code == kOk) code = kData;
  }
  return code;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace tracediag::cli
