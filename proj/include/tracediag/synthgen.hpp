#pragma once

// Deterministic synthetic master tables with injectable faults. Each fault
// kind perturbs exactly one channel: structure, time, or text.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tracediag/common.hpp"
#include "tracediag/core_model.hpp"

namespace tracediag {

enum class SynthFaultKind { DropSubtree, DuplicateBranch, DelayTimestamps, CorruptDescription, SwapOpNames };

inline std::string to_string(SynthFaultKind k) {
  switch (k) {
    case SynthFaultKind::DropSubtree: return "drop-subtree";
    case SynthFaultKind::DuplicateBranch: return "duplicate-branch";
    case SynthFaultKind::DelayTimestamps: return "delay-timestamps";
    case SynthFaultKind::CorruptDescription: return "corrupt-description";
    case SynthFaultKind::SwapOpNames: return "swap-op-names";
  }
  return "drop-subtree";
}

inline SynthFaultKind parse_synth_fault_kind(std::string_view s) {
  for (auto k : {SynthFaultKind::DropSubtree, SynthFaultKind::DuplicateBranch, SynthFaultKind::DelayTimestamps,
                 SynthFaultKind::CorruptDescription, SynthFaultKind::SwapOpNames})
    if (to_string(k) == s) return k;
  throw DataError("unknown synthetic fault kind '" + std::string(s) + "'");
}

inline bool is_structural(SynthFaultKind k) {
  return k == SynthFaultKind::DropSubtree || k == SynthFaultKind::DuplicateBranch;
}

struct SynthConfig {
  std::size_t n_traces = 1000;
  std::size_t events_min = 8;
  std::size_t events_max = 24;
  std::size_t fanout_min = 2;
  std::size_t fanout_max = 3;
  std::vector<std::pair<SynthFaultKind, double>> fault_mix;  // remainder is normal
  std::size_t semantic_vocab_size = 12;                      // operation names
  std::int64_t gap_min = 10;                                 // time between consecutive events
  std::int64_t gap_max = 12;
  std::uint64_t seed = 0;

  void validate() const {
    if (events_min == 0 || events_max < events_min) throw ContractError("SynthConfig: bad events_per_trace range");
    if (fanout_min == 0 || fanout_max < fanout_min) throw ContractError("SynthConfig: bad fanout range");
    if (gap_min <= 0 || gap_max < gap_min) throw ContractError("SynthConfig: bad gap range");
    if (semantic_vocab_size < 2) throw ContractError("SynthConfig: semantic_vocab_size must be >= 2");
    double total = 0.0;
    for (const auto& [k, p] : fault_mix) {
      if (p < 0.0) throw ContractError("SynthConfig: negative fault proportion");
      total += p;
      if (is_structural(k) && events_min < 3) throw ContractError("SynthConfig: structural faults need >= 3 events");
    }
    if (total > 1.0 + 1e-12) throw ContractError("SynthConfig: fault proportions sum above 1");
  }
};

inline nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json mix = nlohmann::json::object();
  for (const auto& [k, p] : c.fault_mix) mix[to_string(k)] = p;
  return {{"n_traces", c.n_traces},     {"events_min", c.events_min},
          {"events_max", c.events_max}, {"fanout_min", c.fanout_min},
          {"fanout_max", c.fanout_max}, {"fault_mix", mix},
          {"semantic_vocab_size", c.semantic_vocab_size},
          {"gap_min", c.gap_min},       {"gap_max", c.gap_max},
          {"seed", c.seed}};
}

namespace detail {

inline const std::vector<std::string>& normal_phrases() {
  static const std::vector<std::string> v{"request served",  "block written",   "ack received",
                                          "checksum verified", "lease renewed", "replica synced",
                                          "buffer flushed",  "header parsed",   "pipeline opened"};
  return v;
}

inline const std::vector<std::string>& error_phrases() {
  static const std::vector<std::string> v{"ERROR connection reset by peer", "exception IOException checksum mismatch",
                                          "FATAL block missing on datanode", "WARN timeout waiting for ack",
                                          "ERROR replica corrupted"};
  return v;
}

inline std::string op_name(std::size_t i) { return "op" + zero_pad(i, 2); }

/// Descriptions an operation may emit under normal conditions.
inline std::string normal_description(std::size_t op, std::size_t variant) {
  const auto& p = normal_phrases();
  return p[(op * 2 + variant) % p.size()];
}

/// Children and roots of a slice, by chronological index.
struct SliceTree {
  std::vector<std::vector<std::size_t>> children;
  std::vector<bool> has_parent;
};

inline SliceTree slice_tree(const TraceSlice& s) {
  std::unordered_map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < s.events.size(); ++i) idx.emplace(s.events[i].event_id, i);
  SliceTree t;
  t.children.resize(s.events.size());
  t.has_parent.assign(s.events.size(), false);
  for (const auto& e : s.edges) {
    const auto f = idx.at(e.father_event_id), c = idx.at(e.child_event_id);
    t.children[f].push_back(c);
    t.has_parent[c] = true;
  }
  return t;
}

inline std::vector<std::size_t> descendants_inclusive(const SliceTree& t, std::size_t root) {
  std::vector<std::size_t> out{root};
  std::vector<bool> seen(t.children.size(), false);
  seen[root] = true;
  for (std::size_t k = 0; k < out.size(); ++k)
    for (auto c : t.children[out[k]])
      if (!seen[c]) {
        seen[c] = true;
        out.push_back(c);
      }
  return out;
}

/// Re-sorts chronologically and renumbers seq 0..n-1.
inline void renumber(TraceSlice& s) {
  sort_chronologically(s.events);
  for (std::size_t i = 0; i < s.events.size(); ++i) s.events[i].seq = i;
}

}  // namespace detail

/// Perturbs one channel of a trace:
///  drop-subtree        removes a random non-root node and its descendants
///  duplicate-branch    copies a random non-root subtree under the same parent
///  delay-timestamps    shifts a chronological suffix by a constant offset
///  corrupt-description rewrites a random subset of descriptions to error text
///  swap-op-names       permutes operation names across events
inline TraceSlice inject_fault(TraceSlice s, SynthFaultKind kind, std::uint64_t seed, std::int64_t delay = 500) {
  Rng rng(seed);
  const std::size_t n = s.events.size();
  if (is_structural(kind) && n < 3)
    throw DataError("trace '" + s.trace_id + "' too small for " + to_string(kind) + " (needs >= 3 events)");
  if (!is_structural(kind) && n < (kind == SynthFaultKind::CorruptDescription ? 1u : 2u))
    throw DataError("trace '" + s.trace_id + "' too small for " + to_string(kind));
  detail::renumber(s);

  switch (kind) {
    case SynthFaultKind::DropSubtree:
    case SynthFaultKind::DuplicateBranch: {
      const auto tree = detail::slice_tree(s);
      // prefer non-root nodes that head a real subtree; fall back to any non-root node
      std::vector<std::size_t> candidates, inner;
      for (std::size_t i = 0; i < n; ++i) {
        if (!tree.has_parent[i]) continue;
        candidates.push_back(i);
        if (!tree.children[i].empty()) inner.push_back(i);
      }
      if (!inner.empty()) candidates = std::move(inner);
      if (candidates.empty()) throw DataError("trace '" + s.trace_id + "' has no non-root node");
      const auto victim = candidates[rng.below(candidates.size())];
      const auto sub = detail::descendants_inclusive(tree, victim);
      std::unordered_set<std::string> sub_ids;
      for (auto i : sub) sub_ids.insert(s.events[i].event_id);

      if (kind == SynthFaultKind::DropSubtree) {
        std::erase_if(s.events, [&](const EventRecord& e) { return sub_ids.count(e.event_id) > 0; });
        std::erase_if(s.edges, [&](const EdgeRecord& e) {
          return sub_ids.count(e.father_event_id) > 0 || sub_ids.count(e.child_event_id) > 0;
        });
      } else {
        auto copy_id = [&](const std::string& id) { return id + "-dup"; };
        std::vector<EdgeRecord> new_edges;
        for (const auto& e : s.edges) {
          if (e.child_event_id == s.events[victim].event_id)
            new_edges.push_back({s.trace_id, e.father_event_id, copy_id(e.child_event_id)});
          else if (sub_ids.count(e.father_event_id))
            new_edges.push_back({s.trace_id, copy_id(e.father_event_id), copy_id(e.child_event_id)});
        }
        for (auto i : sub) {
          EventRecord c = s.events[i];
          c.event_id = copy_id(c.event_id);
          c.seq = n + i;  // copies sort after their originals on equal timestamps
          s.events.push_back(std::move(c));
        }
        s.edges.insert(s.edges.end(), new_edges.begin(), new_edges.end());
      }
      break;
    }
    case SynthFaultKind::DelayTimestamps: {
      const auto cut = static_cast<std::size_t>(rng.between(1, static_cast<std::int64_t>(n) - 1));
      for (std::size_t i = cut; i < n; ++i) {
        s.events[i].start_time += delay;
        if (s.events[i].end_time) *s.events[i].end_time += delay;
      }
      break;
    }
    case SynthFaultKind::CorruptDescription: {
      const auto& errs = detail::error_phrases();
      std::vector<std::size_t> chosen;
      for (std::size_t i = 0; i < n; ++i)
        if (rng.uniform() < 0.3) chosen.push_back(i);
      if (chosen.empty()) chosen.push_back(rng.below(n));
      for (auto i : chosen) s.events[i].description = errs[rng.below(errs.size())];
      break;
    }
    case SynthFaultKind::SwapOpNames: {
      std::vector<std::string> ops;
      for (const auto& e : s.events) ops.push_back(e.op_name);
      auto shuffled = ops;
      rng.shuffle(shuffled);
      if (shuffled == ops) std::rotate(shuffled.begin(), shuffled.begin() + 1, shuffled.end());
      if (shuffled == ops) throw DataError("trace '" + s.trace_id + "' has a single distinct op name");
      for (std::size_t i = 0; i < n; ++i) s.events[i].op_name = shuffled[i];
      break;
    }
  }
  detail::renumber(s);
  return s;
}

/// A normal trace: a tree grown breadth-first, each expanded node receiving
/// fanout_min..fanout_max children, until at least the drawn event count is
/// reached. Timestamps increase along the breadth-first order.
inline TraceSlice generate_normal_trace(const std::string& trace_id, const SynthConfig& c, Rng& rng) {
  const auto target = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(c.events_min), static_cast<std::int64_t>(c.events_max)));
  std::vector<std::size_t> parent{0};
  std::size_t next_to_expand = 0;
  while (parent.size() < target) {
    const auto k = static_cast<std::size_t>(
        rng.between(static_cast<std::int64_t>(c.fanout_min), static_cast<std::int64_t>(c.fanout_max)));
    for (std::size_t j = 0; j < k; ++j) parent.push_back(next_to_expand);
    ++next_to_expand;
  }
  TraceSlice s;
  s.trace_id = trace_id;
  std::int64_t t = rng.between(1'000'000, 2'000'000);
  for (std::size_t i = 0; i < parent.size(); ++i) {
    EventRecord e;
    e.event_id = trace_id + "-e" + zero_pad(i, 3);
    e.trace_id = trace_id;
    e.seq = i;
    const auto op = static_cast<std::size_t>(rng.below(c.semantic_vocab_size));
    e.op_name = detail::op_name(op);
    e.description = detail::normal_description(op, rng.below(2));
    e.start_time = t;
    e.end_time = t + rng.between(1, c.gap_min);
    s.events.push_back(std::move(e));
    if (i > 0) s.edges.push_back({trace_id, s.events[parent[i]].event_id, s.events[i].event_id});
    t += rng.between(c.gap_min, c.gap_max);
  }
  return s;
}

/// Number of traces per fault kind: floor(p·n), in mix order.
inline std::vector<std::size_t> fault_counts(const SynthConfig& c) {
  std::vector<std::size_t> out;
  for (const auto& [k, p] : c.fault_mix)
    out.push_back(static_cast<std::size_t>(std::floor(p * static_cast<double>(c.n_traces) + 1e-9)));
  return out;
}

inline MasterTables generate_dataset(const SynthConfig& c) {
  c.validate();
  std::vector<std::optional<SynthFaultKind>> assignment(c.n_traces);
  {
    const auto counts = fault_counts(c);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < counts.size(); ++k)
      for (std::size_t j = 0; j < counts[k] && pos < c.n_traces; ++j) assignment[pos++] = c.fault_mix[k].first;
    Rng rng(derive_seed(c.seed, "synth/assignment"));
    rng.shuffle(assignment);
  }
  const std::int64_t delay = 40 * c.gap_max;

  MasterTables t;
  t.dataset_kind = DatasetKind::TraceBench;
  for (std::size_t i = 0; i < c.n_traces; ++i) {
    const auto trace_id = "synth-" + zero_pad(i, 6);
    Rng rng(derive_seed(c.seed, "synth/trace/" + std::to_string(i)));
    TraceSlice s = generate_normal_trace(trace_id, c, rng);
    TraceLabel label = TraceLabel::normal();
    if (assignment[i]) {
      // a trace with a single distinct op cannot be op-swapped; redraw it
      for (std::uint64_t attempt = 0;; ++attempt) {
        try {
          s = inject_fault(std::move(s), *assignment[i],
                           derive_seed(c.seed, "synth/fault/" + std::to_string(i) + "/" + std::to_string(attempt)),
                           delay);
          break;
        } catch (const DataError&) {
          if (attempt > 16) throw;
          s = generate_normal_trace(trace_id, c, rng);
        }
      }
      label = TraceLabel::fault(to_string(*assignment[i]));
    }
    const auto name = (label.is_normal() ? std::string("normal") : label.fault_kind()) + "_" + std::to_string(i) +
                      "_default";
    t.traces.push_back({trace_id, label, name, ""});
    t.events.insert(t.events.end(), s.events.begin(), s.events.end());
    t.edges.insert(t.edges.end(), s.edges.begin(), s.edges.end());
  }
  return t;
}

}  // namespace tracediag
