#pragma once

// Master tables: the relational trace/event/edge representation every model
// consumes, plus validation, chronological views and text encoding.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tracediag/common.hpp"

namespace tracediag {

enum class DatasetKind { TraceBench, Bgl };

inline std::string to_string(DatasetKind k) { return k == DatasetKind::Bgl ? "bgl" : "tracebench"; }

inline DatasetKind parse_dataset_kind(std::string_view s) {
  const auto l = to_lower(std::string(s));
  if (l == "bgl") return DatasetKind::Bgl;
  if (l == "tracebench") return DatasetKind::TraceBench;
  throw DataError("unknown dataset kind '" + std::string(s) + "'");
}

/// Normal, or Fault(kind) with a non-empty kind.
class TraceLabel {
 public:
  TraceLabel() = default;

  static TraceLabel normal() { return TraceLabel{}; }
  static TraceLabel fault(std::string kind) {
    if (kind.empty()) throw ContractError("fault label needs a non-empty kind");
    TraceLabel l;
    l.fault_ = std::move(kind);
    return l;
  }

  bool is_normal() const noexcept { return !fault_.has_value(); }
  bool is_fault() const noexcept { return fault_.has_value(); }
  const std::string& fault_kind() const { return *fault_; }

  /// "normal" or the fault kind.
  std::string key() const { return fault_ ? *fault_ : std::string("normal"); }

  friend bool operator==(const TraceLabel&, const TraceLabel&) = default;

 private:
  std::optional<std::string> fault_;
};

struct TraceRecord {
  std::string trace_id;
  TraceLabel label;
  std::string source_name;
  std::string scenario;  // empty when the source does not carry one

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct EventRecord {
  std::string event_id;
  std::string trace_id;
  std::uint64_t seq = 0;
  std::string op_name;
  std::string description;
  std::int64_t start_time = 0;
  std::optional<std::int64_t> end_time;

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

struct EdgeRecord {
  std::string trace_id;
  std::string father_event_id;
  std::string child_event_id;

  friend bool operator==(const EdgeRecord&, const EdgeRecord&) = default;
};

struct MasterTables {
  std::vector<TraceRecord> traces;
  std::vector<EventRecord> events;
  std::vector<EdgeRecord> edges;
  DatasetKind dataset_kind = DatasetKind::TraceBench;

  friend bool operator==(const MasterTables&, const MasterTables&) = default;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class ViolationKind {
  DuplicateTraceId,
  EmptyFaultKind,
  TraceWithoutEvents,
  DuplicateEvent,
  UnknownTrace,
  SeqGap,
  EndBeforeStart,
  DanglingEdge,
  SelfEdge,
};

inline std::string to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::DuplicateTraceId: return "duplicate-trace-id";
    case ViolationKind::EmptyFaultKind: return "empty-fault-kind";
    case ViolationKind::TraceWithoutEvents: return "trace-without-events";
    case ViolationKind::DuplicateEvent: return "duplicate-event";
    case ViolationKind::UnknownTrace: return "unknown-trace";
    case ViolationKind::SeqGap: return "seq-gap";
    case ViolationKind::EndBeforeStart: return "end-before-start";
    case ViolationKind::DanglingEdge: return "dangling-edge";
    case ViolationKind::SelfEdge: return "self-edge";
  }
  return "unknown";
}

enum class TableName { Traces, Events, Edges };

struct Violation {
  ViolationKind kind;
  TableName table;
  std::size_t row;  // 0-based row index within `table`
  std::string detail;
};

struct ValidationReport {
  bool ok = true;
  std::vector<Violation> violations;
};

/// Checks every row against the master-table invariants and reports all
/// failures, not only the first.
inline ValidationReport validate_master_tables(const MasterTables& t) {
  ValidationReport rep;
  auto add = [&](ViolationKind k, TableName tbl, std::size_t row, std::string detail) {
    rep.violations.push_back({k, tbl, row, std::move(detail)});
  };

  std::unordered_set<std::string> trace_ids;
  for (std::size_t i = 0; i < t.traces.size(); ++i) {
    const auto& tr = t.traces[i];
    if (!trace_ids.insert(tr.trace_id).second)
      add(ViolationKind::DuplicateTraceId, TableName::Traces, i, tr.trace_id);
    if (tr.label.is_fault() && tr.label.fault_kind().empty())
      add(ViolationKind::EmptyFaultKind, TableName::Traces, i, tr.trace_id);
  }

  // trace -> event_id set, and trace -> seq values
  std::unordered_map<std::string, std::unordered_set<std::string>> events_of;
  std::unordered_map<std::string, std::vector<std::uint64_t>> seqs_of;
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    const auto& e = t.events[i];
    if (!trace_ids.count(e.trace_id))
      add(ViolationKind::UnknownTrace, TableName::Events, i, e.trace_id);
    if (!events_of[e.trace_id].insert(e.event_id).second)
      add(ViolationKind::DuplicateEvent, TableName::Events, i, e.trace_id + "/" + e.event_id);
    seqs_of[e.trace_id].push_back(e.seq);
    if (e.end_time && *e.end_time < e.start_time)
      add(ViolationKind::EndBeforeStart, TableName::Events, i, e.event_id);
  }

  for (std::size_t i = 0; i < t.traces.size(); ++i) {
    const auto& id = t.traces[i].trace_id;
    auto it = seqs_of.find(id);
    if (it == seqs_of.end() || it->second.empty()) {
      add(ViolationKind::TraceWithoutEvents, TableName::Traces, i, id);
      continue;
    }
    auto seqs = it->second;
    std::sort(seqs.begin(), seqs.end());
    for (std::size_t k = 0; k < seqs.size(); ++k) {
      if (seqs[k] != k) {
        add(ViolationKind::SeqGap, TableName::Traces, i,
            id + ": seq values are not 0.." + std::to_string(seqs.size() - 1));
        break;
      }
    }
  }

  for (std::size_t i = 0; i < t.edges.size(); ++i) {
    const auto& e = t.edges[i];
    auto it = events_of.find(e.trace_id);
    const bool has_father = it != events_of.end() && it->second.count(e.father_event_id);
    const bool has_child = it != events_of.end() && it->second.count(e.child_event_id);
    if (!has_father || !has_child)
      add(ViolationKind::DanglingEdge, TableName::Edges, i,
          e.trace_id + ": " + e.father_event_id + " -> " + e.child_event_id);
    if (e.father_event_id == e.child_event_id)
      add(ViolationKind::SelfEdge, TableName::Edges, i, e.trace_id + ": " + e.father_event_id);
  }

  rep.ok = rep.violations.empty();
  return rep;
}

// ---------------------------------------------------------------------------
// Chronological views
// ---------------------------------------------------------------------------

struct TraceSlice {
  std::string trace_id;
  std::vector<EventRecord> events;  // sorted by (start_time, seq)
  std::vector<EdgeRecord> edges;
};

inline void sort_chronologically(std::vector<EventRecord>& events) {
  std::stable_sort(events.begin(), events.end(), [](const EventRecord& a, const EventRecord& b) {
    if (a.start_time != b.start_time) return a.start_time < b.start_time;
    return a.seq < b.seq;
  });
}

inline TraceSlice trace_view(const MasterTables& t, const std::string& trace_id) {
  const bool known = std::any_of(t.traces.begin(), t.traces.end(),
                                 [&](const TraceRecord& r) { return r.trace_id == trace_id; });
  if (!known) throw NotFoundError("unknown trace_id '" + trace_id + "'");
  TraceSlice s;
  s.trace_id = trace_id;
  for (const auto& e : t.events)
    if (e.trace_id == trace_id) s.events.push_back(e);
  for (const auto& e : t.edges)
    if (e.trace_id == trace_id) s.edges.push_back(e);
  sort_chronologically(s.events);
  return s;
}

/// One slice per trace, in trace-table order, built in a single pass.
inline std::vector<TraceSlice> all_trace_views(const MasterTables& t) {
  std::unordered_map<std::string, std::size_t> index;
  std::vector<TraceSlice> out(t.traces.size());
  for (std::size_t i = 0; i < t.traces.size(); ++i) {
    out[i].trace_id = t.traces[i].trace_id;
    index.emplace(t.traces[i].trace_id, i);
  }
  for (const auto& e : t.events) {
    auto it = index.find(e.trace_id);
    if (it != index.end()) out[it->second].events.push_back(e);
  }
  for (const auto& e : t.edges) {
    auto it = index.find(e.trace_id);
    if (it != index.end()) out[it->second].edges.push_back(e);
  }
  for (auto& s : out) sort_chronologically(s.events);
  return out;
}

inline constexpr std::string_view kTextSeparator = " [SEP] ";

/// "op:description [SEP] ..." for TraceBench, "template [SEP] ..." for BGL.
inline std::string event_text(const EventRecord& e, DatasetKind kind) {
  if (kind == DatasetKind::Bgl) return e.description;
  return e.op_name + ":" + e.description;
}

inline std::string encode_trace_text(const TraceSlice& slice, DatasetKind kind) {
  if (slice.events.empty()) throw DataError("empty trace '" + slice.trace_id + "'");
  std::string out;
  for (std::size_t i = 0; i < slice.events.size(); ++i) {
    if (i) out += kTextSeparator;
    out += event_text(slice.events[i], kind);
  }
  return out;
}

inline std::map<std::string, std::size_t> label_distribution(const MasterTables& t) {
  std::map<std::string, std::size_t> out;
  for (const auto& tr : t.traces) ++out[tr.label.key()];
  return out;
}

inline std::size_t abnormal_total(const std::map<std::string, std::size_t>& dist) {
  std::size_t n = 0;
  for (const auto& [k, v] : dist)
    if (k != "normal") n += v;
  return n;
}

// ---------------------------------------------------------------------------
// TSV serialization
// ---------------------------------------------------------------------------
//
// traces.tsv  TraceId Label FaultType SourceName [Scenario]
// events.tsv  EventId TraceId Seq OpName Description StartTime EndTime
// edges.tsv   TraceId FatherEventId ChildEventId
//
// Label is "normal" or "abnormal". The Scenario column is written only when
// at least one trace carries a scenario.

inline void write_master_tables(const MasterTables& t, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const bool with_scenario = std::any_of(t.traces.begin(), t.traces.end(),
                                         [](const TraceRecord& r) { return !r.scenario.empty(); });
  std::string traces = "TraceId\tLabel\tFaultType\tSourceName";
  traces += with_scenario ? "\tScenario\n" : "\n";
  for (const auto& r : t.traces) {
    traces += tsv_escape(r.trace_id) + '\t' + (r.label.is_normal() ? "normal" : "abnormal") + '\t' +
              (r.label.is_fault() ? tsv_escape(r.label.fault_kind()) : "") + '\t' +
              tsv_escape(r.source_name);
    if (with_scenario) traces += '\t' + tsv_escape(r.scenario);
    traces += '\n';
  }
  std::string events = "EventId\tTraceId\tSeq\tOpName\tDescription\tStartTime\tEndTime\n";
  for (const auto& e : t.events) {
    events += tsv_escape(e.event_id) + '\t' + tsv_escape(e.trace_id) + '\t' + std::to_string(e.seq) +
              '\t' + tsv_escape(e.op_name) + '\t' + tsv_escape(e.description) + '\t' +
              std::to_string(e.start_time) + '\t' +
              (e.end_time ? std::to_string(*e.end_time) : std::string()) + '\n';
  }
  std::string edges = "TraceId\tFatherEventId\tChildEventId\n";
  for (const auto& e : t.edges) {
    edges += tsv_escape(e.trace_id) + '\t' + tsv_escape(e.father_event_id) + '\t' +
             tsv_escape(e.child_event_id) + '\n';
  }
  write_file_atomic(dir / "traces.tsv", traces);
  write_file_atomic(dir / "events.tsv", events);
  write_file_atomic(dir / "edges.tsv", edges);
}

/// BGL tables carry no operation names; anything else is TraceBench-shaped.
inline DatasetKind infer_dataset_kind(const MasterTables& t) {
  if (t.events.empty()) return DatasetKind::TraceBench;
  const bool no_ops = std::all_of(t.events.begin(), t.events.end(),
                                  [](const EventRecord& e) { return e.op_name.empty(); });
  return no_ops ? DatasetKind::Bgl : DatasetKind::TraceBench;
}

inline MasterTables read_master_tables(const std::filesystem::path& dir,
                                       std::optional<DatasetKind> kind = std::nullopt) {
  MasterTables t;
  {
    const auto tab = read_delimited(dir / "traces.tsv");
    const auto c_id = tab.require_column("TraceId"), c_label = tab.require_column("Label"),
               c_fault = tab.require_column("FaultType"), c_src = tab.require_column("SourceName");
    const auto c_scen = tab.column("Scenario");
    for (std::size_t i = 0; i < tab.rows.size(); ++i) {
      const auto& row = tab.rows[i];
      TraceRecord r;
      r.trace_id = row[c_id];
      if (row[c_label] == "normal") {
        r.label = TraceLabel::normal();
      } else if (row[c_label] == "abnormal") {
        if (row[c_fault].empty()) throw SchemaError(tab.source, tab.line_numbers[i], "abnormal trace without FaultType");
        r.label = TraceLabel::fault(row[c_fault]);
      } else {
        throw SchemaError(tab.source, tab.line_numbers[i], "Label must be normal or abnormal");
      }
      r.source_name = row[c_src];
      if (c_scen) r.scenario = row[*c_scen];
      t.traces.push_back(std::move(r));
    }
  }
  {
    const auto tab = read_delimited(dir / "events.tsv");
    const auto c_eid = tab.require_column("EventId"), c_tid = tab.require_column("TraceId"),
               c_seq = tab.require_column("Seq"), c_op = tab.require_column("OpName"),
               c_desc = tab.require_column("Description"), c_start = tab.require_column("StartTime"),
               c_end = tab.require_column("EndTime");
    for (std::size_t i = 0; i < tab.rows.size(); ++i) {
      const auto& row = tab.rows[i];
      EventRecord e;
      e.event_id = row[c_eid];
      e.trace_id = row[c_tid];
      const auto seq = parse_int64(row[c_seq]);
      const auto start = parse_int64(row[c_start]);
      if (!seq || *seq < 0) throw SchemaError(tab.source, tab.line_numbers[i], "bad Seq");
      if (!start) throw SchemaError(tab.source, tab.line_numbers[i], "bad StartTime");
      e.seq = static_cast<std::uint64_t>(*seq);
      e.op_name = row[c_op];
      e.description = row[c_desc];
      e.start_time = *start;
      if (!row[c_end].empty()) {
        const auto end = parse_int64(row[c_end]);
        if (!end) throw SchemaError(tab.source, tab.line_numbers[i], "bad EndTime");
        e.end_time = *end;
      }
      t.events.push_back(std::move(e));
    }
  }
  {
    const auto tab = read_delimited(dir / "edges.tsv");
    const auto c_tid = tab.require_column("TraceId"), c_f = tab.require_column("FatherEventId"),
               c_c = tab.require_column("ChildEventId");
    for (const auto& row : tab.rows) t.edges.push_back({row[c_tid], row[c_f], row[c_c]});
  }
  t.dataset_kind = kind ? *kind : infer_dataset_kind(t);
  return t;
}

}  // namespace tracediag
