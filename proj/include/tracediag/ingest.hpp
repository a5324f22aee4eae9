#pragma once

// Raw inputs to master tables: BGL line parsing, template masking, tumbling
// windows, window labels and chain edges; TraceBench exports with name-based
// labels and scenario/fault filtering.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/regex.hpp>

#include "tracediag/common.hpp"
#include "tracediag/core_model.hpp"
#include "tracediag/parallel.hpp"

namespace tracediag {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class TimestampUnit { Seconds, Milliseconds, Microseconds, Nanoseconds };

inline std::string to_string(TimestampUnit u) {
  switch (u) {
    case TimestampUnit::Seconds: return "s";
    case TimestampUnit::Milliseconds: return "ms";
    case TimestampUnit::Microseconds: return "us";
    case TimestampUnit::Nanoseconds: return "ns";
  }
  return "us";
}

inline TimestampUnit parse_timestamp_unit(std::string_view s) {
  if (s == "s") return TimestampUnit::Seconds;
  if (s == "ms") return TimestampUnit::Milliseconds;
  if (s == "us") return TimestampUnit::Microseconds;
  if (s == "ns") return TimestampUnit::Nanoseconds;
  throw DataError("unknown timestamp unit '" + std::string(s) + "' (expected s|ms|us|ns)");
}

struct IngestConfig {
  std::int64_t window_seconds = 21600;
  std::set<std::string> excluded_faults{"slowHDFS"};
  bool keep_default_scenario_only = true;
  /// Recorded as metadata; timestamps are stored in the source's native unit.
  TimestampUnit timestamp_unit = TimestampUnit::Microseconds;
  /// Regex with a named capture `scenario`, applied to SourceName when the
  /// trace export has no Scenario column. Empty disables name-based detection.
  std::string scenario_pattern;
  std::string default_scenario = "default";
};

/// Known TraceBench fault kinds, canonical spelling.
inline const std::vector<std::string>& tracebench_fault_vocabulary() {
  static const std::vector<std::string> v{
      "killDN",    "suspendDN", "disconnectDN", "slowHDFS", "slowDN",   "corruptBlk", "corruptMeta",
      "lossBlk",   "lossMeta",  "cutBlk",       "cutMeta",  "panicDN",  "deadDN",     "readOnlyDN"};
  return v;
}

// ---------------------------------------------------------------------------
// BGL
// ---------------------------------------------------------------------------

struct ParsedBglLine {
  std::string alert_label = "-";
  std::int64_t epoch = 0;
  std::string date;
  std::string node;
  std::string full_timestamp;
  std::string node_repeat;
  std::string message_type;
  std::string component;
  std::string severity;
  std::string message;
  std::string template_text;
  bool had_alert_token = false;

  friend bool operator==(const ParsedBglLine&, const ParsedBglLine&) = default;
};

namespace detail {

inline bool is_decimal(std::string_view t) {
  return !t.empty() && std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; });
}

inline bool is_hex_digit(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}

// Hex tokens need length >= 4 and either a 0x prefix or at least one decimal
// digit, so that words spelled with a-f ("added", "face") survive.
inline bool is_hex_parameter(std::string_view t) {
  bool prefixed = false;
  if (t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X')) {
    t.remove_prefix(2);
    prefixed = true;
  }
  if (t.size() < 4 || !std::all_of(t.begin(), t.end(), is_hex_digit)) return false;
  return prefixed || std::any_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; });
}

inline bool is_assignment_parameter(std::string_view t) {
  for (std::size_t i = 0; i + 1 < t.size(); ++i)
    if (t[i] == '=' && t[i + 1] >= '0' && t[i + 1] <= '9') return true;
  return false;
}

}  // namespace detail

inline constexpr std::string_view kParamMask = "<*>";

/// Masks numeric, long-hex and key=digits tokens with "<*>" and collapses
/// whitespace to single spaces.
inline std::string extract_template(std::string_view message) {
  std::string out;
  for (const auto& tok : split_whitespace(message)) {
    if (!out.empty()) out += ' ';
    if (detail::is_decimal(tok) || detail::is_hex_parameter(tok) || detail::is_assignment_parameter(tok))
      out += kParamMask;
    else
      out += tok;
  }
  return out;
}

/// Positional BGL grammar:
///   [alert] epoch date node full_timestamp node_repeat type component severity message...
/// A leading integer token means the line has no alert tag and is normal.
inline ParsedBglLine parse_bgl_line(std::string_view line, std::size_t line_no = 0) {
  const auto body = trim(line);
  if (body.empty()) throw MalformedLineError(line_no, "empty line");

  struct Tok {
    std::size_t begin, end;
  };
  std::vector<Tok> toks;
  for (std::size_t i = 0; i < body.size();) {
    while (i < body.size() && std::isspace(static_cast<unsigned char>(body[i]))) ++i;
    std::size_t j = i;
    while (j < body.size() && !std::isspace(static_cast<unsigned char>(body[j]))) ++j;
    if (j > i) toks.push_back({i, j});
    i = j;
  }
  auto text = [&](std::size_t k) { return std::string(body.substr(toks[k].begin, toks[k].end - toks[k].begin)); };

  ParsedBglLine p;
  std::size_t first = 0;
  if (!toks.empty() && !parse_int64(text(0))) {
    p.alert_label = text(0);
    p.had_alert_token = true;
    first = 1;
  }
  if (toks.size() < first + 9)
    throw MalformedLineError(line_no, "expected at least 9 positional fields, got " +
                                          std::to_string(toks.size() - std::min(toks.size(), first)));
  const auto epoch = parse_int64(text(first));
  if (!epoch || *epoch <= 0) throw MalformedLineError(line_no, "epoch is not a positive integer");
  p.epoch = *epoch;
  p.date = text(first + 1);
  p.node = text(first + 2);
  p.full_timestamp = text(first + 3);
  p.node_repeat = text(first + 4);
  p.message_type = text(first + 5);
  p.component = text(first + 6);
  p.severity = text(first + 7);
  p.message = std::string(body.substr(toks[first + 8].begin));
  p.template_text = extract_template(p.message);
  return p;
}

inline std::string serialize_bgl_line(const ParsedBglLine& p) {
  std::string out;
  if (p.had_alert_token) out += p.alert_label + ' ';
  out += std::to_string(p.epoch) + ' ' + p.date + ' ' + p.node + ' ' + p.full_timestamp + ' ' + p.node_repeat +
         ' ' + p.message_type + ' ' + p.component + ' ' + p.severity + ' ' + p.message;
  return out;
}

struct BglReadResult {
  std::vector<ParsedBglLine> lines;
  std::size_t skipped_malformed = 0;
};

/// Parses a raw BGL log. Blank lines are ignored; malformed lines either
/// fail the read or are counted and skipped.
inline BglReadResult read_bgl_log(std::istream& in, bool skip_malformed = false, unsigned threads = 1) {
  std::vector<std::string> raw;
  std::vector<std::size_t> numbers;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    raw.push_back(std::move(line));
    numbers.push_back(n);
  }
  std::vector<std::optional<ParsedBglLine>> parsed(raw.size());
  std::vector<std::string> errors(raw.size());
  parallel_for(raw.size(), threads, [&](std::size_t i) {
    try {
      parsed[i] = parse_bgl_line(raw[i], numbers[i]);
    } catch (const MalformedLineError& e) {
      errors[i] = e.what();
    }
  });
  BglReadResult out;
  out.lines.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (parsed[i]) {
      out.lines.push_back(std::move(*parsed[i]));
    } else if (skip_malformed) {
      ++out.skipped_malformed;
    } else {
      throw MalformedLineError(numbers[i], errors[i]);
    }
  }
  return out;
}

struct LineGroup {
  std::int64_t window_index = 0;
  std::vector<ParsedBglLine> lines;
};

/// Tumbling windows anchored at the first epoch; a line at t lands in window
/// floor((t - t0) / window_seconds). Empty windows are not emitted.
inline std::vector<LineGroup> group_into_windows(std::vector<ParsedBglLine> lines, const IngestConfig& config) {
  if (config.window_seconds <= 0) throw ContractError("window_seconds must be positive");
  std::vector<LineGroup> out;
  if (lines.empty()) return out;
  std::stable_sort(lines.begin(), lines.end(),
                   [](const ParsedBglLine& a, const ParsedBglLine& b) { return a.epoch < b.epoch; });
  const std::int64_t t0 = lines.front().epoch;
  for (auto& l : lines) {
    const std::int64_t w = (l.epoch - t0) / config.window_seconds;
    if (out.empty() || out.back().window_index != w) out.push_back({w, {}});
    out.back().lines.push_back(std::move(l));
  }
  return out;
}

/// BGL carries binary labels only, so every abnormal window is Fault("anomaly").
inline TraceLabel label_window(const std::vector<ParsedBglLine>& group) {
  if (group.empty()) throw ContractError("label_window: empty group");
  const bool normal = std::all_of(group.begin(), group.end(),
                                  [](const ParsedBglLine& l) { return l.alert_label == "-"; });
  return normal ? TraceLabel::normal() : TraceLabel::fault("anomaly");
}

inline constexpr int kBglIdWidth = 6;

inline MasterTables bgl_to_master_tables(const std::vector<LineGroup>& groups) {
  MasterTables t;
  t.dataset_kind = DatasetKind::Bgl;
  for (const auto& g : groups) {
    if (g.lines.empty()) continue;
    const auto trace_id = zero_pad(static_cast<std::uint64_t>(g.window_index), kBglIdWidth);
    t.traces.push_back({trace_id, label_window(g.lines), "window-" + trace_id, ""});
    std::string prev;
    for (std::size_t i = 0; i < g.lines.size(); ++i) {
      const auto& l = g.lines[i];
      EventRecord e;
      e.event_id = trace_id + "-" + zero_pad(i, kBglIdWidth);
      e.trace_id = trace_id;
      e.seq = i;
      e.description = l.template_text;
      e.start_time = l.epoch;
      if (i > 0) t.edges.push_back({trace_id, prev, e.event_id});
      prev = e.event_id;
      t.events.push_back(std::move(e));
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// TraceBench
// ---------------------------------------------------------------------------

struct LabelRule {
  std::string pattern;
  TraceLabel default_label = TraceLabel::normal();
};

/// Matches a leading fault name shaped like the known kinds (…DN, …Blk, …Meta, …HDFS).
/// Case-insensitive; the capture is canonicalised against the vocabulary.
inline std::vector<LabelRule> default_label_rules() {
  return {{R"((?i)^(?<fault>[A-Za-z]+(?:DN|Blk|Meta|HDFS))(?:_|$))", TraceLabel::normal()}};
}

/// Rules file: one rule per line, "<regex>[<TAB><default>]" where default is
/// "normal" or a fault kind. '#' starts a comment line.
inline std::vector<LabelRule> read_label_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open label rules " + path.string());
  std::vector<LabelRule> rules;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    const auto parts = split(line, '\t');
    LabelRule r{parts[0], TraceLabel::normal()};
    if (parts.size() > 1 && !trim(parts[1]).empty() && trim(parts[1]) != "normal")
      r.default_label = TraceLabel::fault(std::string(trim(parts[1])));
    rules.push_back(std::move(r));
  }
  if (rules.empty()) throw DataError("label rules file " + path.string() + " has no rules");
  return rules;
}

/// First matching rule wins; the captured kind is matched case-insensitively
/// against the fault vocabulary. With no match the first rule's default label
/// applies. Kinds outside the vocabulary are an error.
inline TraceLabel tracebench_label_from_name(const std::string& source_name, const std::vector<LabelRule>& rules,
                                             const std::vector<std::string>& vocabulary = tracebench_fault_vocabulary()) {
  if (rules.empty()) throw ContractError("tracebench_label_from_name: no rules");
  for (const auto& rule : rules) {
    boost::regex re;
    try {
      re.assign(rule.pattern);
    } catch (const boost::regex_error& e) {
      throw DataError("label rule does not compile: " + rule.pattern);
    }
    if (rule.pattern.find("(?<fault>") == std::string::npos)
      throw DataError("label rule lacks a named capture 'fault': " + rule.pattern);
    boost::smatch m;
    if (!boost::regex_search(source_name, m, re)) continue;
    const std::string captured = m["fault"].str();
    const auto lowered = to_lower(captured);
    for (const auto& kind : vocabulary)
      if (to_lower(kind) == lowered) return TraceLabel::fault(kind);
    throw DataError("unknown fault kind '" + captured + "' in trace name '" + source_name + "'");
  }
  return rules.front().default_label;
}

inline bool is_default_scenario(const TraceRecord& r, const IngestConfig& config) {
  return r.scenario.empty() || r.scenario == config.default_scenario;
}

inline MasterTables tracebench_filter(const MasterTables& tables, const IngestConfig& config) {
  MasterTables out;
  out.dataset_kind = tables.dataset_kind;
  std::unordered_set<std::string> kept;
  for (const auto& r : tables.traces) {
    if (config.keep_default_scenario_only && !is_default_scenario(r, config)) continue;
    if (r.label.is_fault() && config.excluded_faults.count(r.label.fault_kind())) continue;
    kept.insert(r.trace_id);
    out.traces.push_back(r);
  }
  for (const auto& e : tables.events)
    if (kept.count(e.trace_id)) out.events.push_back(e);
  for (const auto& e : tables.edges)
    if (kept.count(e.trace_id)) out.edges.push_back(e);
  return out;
}

namespace detail {

inline std::size_t first_column(const DelimitedTable& t, std::initializer_list<std::string_view> names) {
  for (auto n : names)
    if (auto c = t.column(n)) return *c;
  throw SchemaError(t.source, 1, "missing column '" + std::string(*names.begin()) + "'");
}

}  // namespace detail

/// Loads TraceBench Trace/Event/Edge exports (TSV or CSV with headers).
///
/// traces: TraceId, SourceName (aliases Name, Title, TraceName), optional Scenario
/// events: EventId, TraceId, OpName, Description, StartTime, optional EndTime
/// edges:  FatherEventId, ChildEventId, optional TraceId
///
/// Labels come from the trace name through `rules`; seq is the chronological
/// rank (StartTime, then file order) within each trace.
inline MasterTables tracebench_to_master_tables(const DelimitedTable& trace_tab, const DelimitedTable& event_tab,
                                                const DelimitedTable& edge_tab, const std::vector<LabelRule>& rules,
                                                const IngestConfig& config = {}) {
  MasterTables t;
  t.dataset_kind = DatasetKind::TraceBench;

  std::optional<boost::regex> scenario_re;
  if (!config.scenario_pattern.empty()) scenario_re.emplace(config.scenario_pattern);

  std::unordered_map<std::string, std::size_t> trace_index;
  {
    const auto c_id = trace_tab.require_column("TraceId");
    const auto c_name = detail::first_column(trace_tab, {"SourceName", "Name", "Title", "TraceName"});
    const auto c_scen = trace_tab.column("Scenario");
    for (std::size_t i = 0; i < trace_tab.rows.size(); ++i) {
      const auto& row = trace_tab.rows[i];
      TraceRecord r;
      r.trace_id = row[c_id];
      r.source_name = row[c_name];
      if (r.trace_id.empty()) throw SchemaError(trace_tab.source, trace_tab.line_numbers[i], "empty TraceId");
      if (!trace_index.emplace(r.trace_id, t.traces.size()).second)
        throw SchemaError(trace_tab.source, trace_tab.line_numbers[i], "duplicate TraceId " + r.trace_id);
      try {
        r.label = tracebench_label_from_name(r.source_name, rules);
      } catch (const DataError& e) {
        throw SchemaError(trace_tab.source, trace_tab.line_numbers[i], e.what());
      }
      if (c_scen) {
        r.scenario = row[*c_scen];
      } else if (scenario_re) {
        boost::smatch m;
        if (boost::regex_search(r.source_name, m, *scenario_re)) r.scenario = m["scenario"].str();
      }
      t.traces.push_back(std::move(r));
    }
  }

  std::unordered_map<std::string, std::string> trace_of_event;  // for edge files without TraceId
  {
    const auto c_eid = event_tab.require_column("EventId"), c_tid = event_tab.require_column("TraceId"),
               c_op = event_tab.require_column("OpName"), c_desc = event_tab.require_column("Description"),
               c_start = event_tab.require_column("StartTime");
    const auto c_end = event_tab.column("EndTime");
    std::vector<std::vector<std::size_t>> per_trace(t.traces.size());
    for (std::size_t i = 0; i < event_tab.rows.size(); ++i) {
      const auto& row = event_tab.rows[i];
      const auto line = event_tab.line_numbers[i];
      auto it = trace_index.find(row[c_tid]);
      if (it == trace_index.end())
        throw SchemaError(event_tab.source, line, "event references unknown TraceId " + row[c_tid]);
      EventRecord e;
      e.event_id = row[c_eid];
      e.trace_id = row[c_tid];
      e.op_name = row[c_op];
      e.description = row[c_desc];
      const auto start = parse_int64(row[c_start]);
      if (!start) throw SchemaError(event_tab.source, line, "StartTime is not an integer");
      e.start_time = *start;
      if (c_end && !trim(row[*c_end]).empty()) {
        const auto end = parse_int64(row[*c_end]);
        if (!end) throw SchemaError(event_tab.source, line, "EndTime is not an integer");
        if (*end < *start) throw SchemaError(event_tab.source, line, "EndTime before StartTime");
        e.end_time = *end;
      }
      trace_of_event.emplace(e.event_id, e.trace_id);
      per_trace[it->second].push_back(t.events.size());
      t.events.push_back(std::move(e));
    }
    for (auto& idx : per_trace) {
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return t.events[a].start_time < t.events[b].start_time;
      });
      for (std::size_t r = 0; r < idx.size(); ++r) t.events[idx[r]].seq = r;
    }
  }

  {
    const auto c_f = edge_tab.require_column("FatherEventId"), c_c = edge_tab.require_column("ChildEventId");
    const auto c_tid = edge_tab.column("TraceId");
    std::unordered_set<std::string> event_keys;
    for (const auto& e : t.events) event_keys.insert(e.trace_id + '\x1f' + e.event_id);
    for (std::size_t i = 0; i < edge_tab.rows.size(); ++i) {
      const auto& row = edge_tab.rows[i];
      const auto line = edge_tab.line_numbers[i];
      std::string tid;
      if (c_tid) {
        tid = row[*c_tid];
      } else {
        auto it = trace_of_event.find(row[c_f]);
        if (it == trace_of_event.end()) throw SchemaError(edge_tab.source, line, "dangling FatherEventId " + row[c_f]);
        tid = it->second;
      }
      if (!event_keys.count(tid + '\x1f' + row[c_f]))
        throw SchemaError(edge_tab.source, line, "dangling FatherEventId " + row[c_f]);
      if (!event_keys.count(tid + '\x1f' + row[c_c]))
        throw SchemaError(edge_tab.source, line, "dangling ChildEventId " + row[c_c]);
      if (row[c_f] == row[c_c]) throw SchemaError(edge_tab.source, line, "self edge on " + row[c_f]);
      t.edges.push_back({tid, row[c_f], row[c_c]});
    }
  }
  return t;
}

inline MasterTables tracebench_to_master_tables(const std::filesystem::path& trace_file,
                                                const std::filesystem::path& event_file,
                                                const std::filesystem::path& edge_file,
                                                const std::vector<LabelRule>& rules, const IngestConfig& config = {}) {
  return tracebench_to_master_tables(read_delimited(trace_file), read_delimited(event_file),
                                     read_delimited(edge_file), rules, config);
}

}  // namespace tracediag
