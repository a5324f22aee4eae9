#pragma once

// Per-trace directed graphs with structural/temporal node features, optional
// per-event semantic embeddings, and the embedding-table file format.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tracediag/common.hpp"
#include "tracediag/core_model.hpp"
#include "tracediag/numerics.hpp"
#include "tracediag/parallel.hpp"

namespace tracediag {

inline constexpr std::size_t kStructuralFeatures = 5;

struct TraceGraph {
  std::string trace_id;
  std::vector<std::string> node_ids;       // chronological
  std::vector<std::int64_t> timestamps;    // start time per node
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // sorted, unique
  DenseMatrix features;                    // n × 5, or n × (5 + d) with embeddings
  TraceLabel label;

  std::size_t num_nodes() const noexcept { return node_ids.size(); }
};

/// Columns: in_degree, out_degree, i/(n−1), (n−1−i)/(n−1),
/// (t_i − t_min)/(t_max − t_min). Single-node graphs get positions (0, 1);
/// constant timestamps give norm_time 0.
inline DenseMatrix compute_node_features(const TraceGraph& g) {
  const std::size_t n = g.num_nodes();
  DenseMatrix f(n, kStructuralFeatures);
  for (auto [s, d] : g.edges) {
    f(d, 0) += 1.0;
    f(s, 1) += 1.0;
  }
  std::int64_t t_min = 0, t_max = 0;
  if (n > 0) {
    const auto [lo, hi] = std::minmax_element(g.timestamps.begin(), g.timestamps.end());
    t_min = *lo;
    t_max = *hi;
  }
  const double span = static_cast<double>(t_max - t_min);
  for (std::size_t i = 0; i < n; ++i) {
    if (n > 1) {
      const double denom = static_cast<double>(n - 1);
      f(i, 2) = static_cast<double>(i) / denom;
      f(i, 3) = static_cast<double>(n - 1 - i) / denom;
    } else {
      f(i, 2) = 0.0;
      f(i, 3) = 1.0;
    }
    f(i, 4) = span > 0.0 ? static_cast<double>(g.timestamps[i] - t_min) / span : 0.0;
  }
  return f;
}

/// Nodes follow the slice's chronological order; father→child pairs become
/// index pairs with duplicates collapsed.
inline TraceGraph build_trace_graph(const TraceSlice& slice, const TraceLabel& label) {
  if (slice.events.empty()) throw DataError("cannot build a graph for empty trace '" + slice.trace_id + "'");
  TraceGraph g;
  g.trace_id = slice.trace_id;
  g.label = label;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < slice.events.size(); ++i) {
    g.node_ids.push_back(slice.events[i].event_id);
    g.timestamps.push_back(slice.events[i].start_time);
    index.emplace(slice.events[i].event_id, i);
  }
  for (const auto& e : slice.edges) {
    auto f = index.find(e.father_event_id);
    auto c = index.find(e.child_event_id);
    if (f == index.end() || c == index.end())
      throw DataError("trace '" + slice.trace_id + "': edge endpoint missing (" + e.father_event_id + " -> " +
                      e.child_event_id + ")");
    if (f->second == c->second)
      throw DataError("trace '" + slice.trace_id + "': self edge on " + e.father_event_id);
    g.edges.emplace_back(f->second, c->second);
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  g.features = compute_node_features(g);
  return g;
}

/// One graph per trace, in trace-table order.
inline std::vector<TraceGraph> build_graphs(const MasterTables& t, unsigned threads = 1) {
  const auto slices = all_trace_views(t);
  std::vector<TraceGraph> out(slices.size());
  parallel_for(slices.size(), threads, [&](std::size_t i) { out[i] = build_trace_graph(slices[i], t.traces[i].label); });
  return out;
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

struct EmbeddingTable {
  std::size_t dim = 0;
  std::map<std::pair<std::string, std::string>, std::vector<double>> rows;  // (trace_id, event_id)

  void insert(const std::string& trace_id, const std::string& event_id, std::vector<double> v) {
    if (v.size() != dim) throw DataError("embedding for " + event_id + " has length " + std::to_string(v.size()) +
                                         ", expected " + std::to_string(dim));
    if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }))
      throw DataError("embedding for " + event_id + " is not finite");
    rows[{trace_id, event_id}] = std::move(v);
  }
};

/// Appends the d embedding columns after the five structural ones.
inline TraceGraph attach_embeddings(TraceGraph g, const EmbeddingTable& table) {
  const std::size_t n = g.num_nodes();
  const std::size_t base = g.features.cols();
  DenseMatrix f(n, base + table.dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = table.rows.find({g.trace_id, g.node_ids[i]});
    if (it == table.rows.end())
      throw DataError("missing embedding for event '" + g.node_ids[i] + "' of trace '" + g.trace_id + "'");
    auto dst = f.row(i);
    auto src = g.features.row(i);
    std::copy(src.begin(), src.end(), dst.begin());
    std::copy(it->second.begin(), it->second.end(), dst.begin() + static_cast<std::ptrdiff_t>(base));
  }
  g.features = std::move(f);
  return g;
}

namespace detail {
inline std::string format_embedding_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// "dim=<d>" then TraceId<TAB>EventId<TAB>v1 v2 ... vd per row.
inline std::string serialize_embedding_table(const EmbeddingTable& t) {
  std::string out = "dim=" + std::to_string(t.dim) + "\n";
  for (const auto& [key, v] : t.rows) {
    out += tsv_escape(key.first) + '\t' + tsv_escape(key.second) + '\t';
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ' ';
      out += detail::format_embedding_value(v[i]);
    }
    out += '\n';
  }
  return out;
}

inline void write_embedding_table(const EmbeddingTable& t, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_embedding_table(t));
}

inline EmbeddingTable parse_embedding_table(std::istream& in, const std::string& source) {
  EmbeddingTable t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!have_header) {
      if (line.rfind("dim=", 0) != 0) throw SchemaError(source, line_no, "expected 'dim=<d>' header");
      const auto d = parse_int64(std::string_view(line).substr(4));
      if (!d || *d <= 0) throw SchemaError(source, line_no, "dim must be a positive integer");
      t.dim = static_cast<std::size_t>(*d);
      have_header = true;
      continue;
    }
    const auto cells = split(line, '\t');
    if (cells.size() != 3) throw SchemaError(source, line_no, "expected TraceId, EventId, vector");
    std::vector<double> v;
    v.reserve(t.dim);
    for (const auto& tok : split_whitespace(cells[2])) {
      const auto x = parse_double(tok);
      if (!x) throw SchemaError(source, line_no, "bad real '" + tok + "'");
      v.push_back(*x);
    }
    try {
      t.insert(tsv_unescape(cells[0]), tsv_unescape(cells[1]), std::move(v));
    } catch (const DataError& e) {
      throw SchemaError(source, line_no, e.what());
    }
  }
  if (!have_header) throw SchemaError(source, 0, "empty embedding table");
  return t;
}

inline EmbeddingTable read_embedding_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open embedding table " + path.string());
  return parse_embedding_table(in, path.string());
}

/// Mean of hashed one-hot token vectors over the event text, i.e. the
/// bag-of-words analogue of mean-pooling encoder token states. A cheap
/// stand-in for encoder embeddings when no exported table is available.
inline EmbeddingTable pseudo_embeddings(const MasterTables& t, std::size_t dim) {
  if (dim == 0) throw ContractError("pseudo_embeddings: dim must be positive");
  EmbeddingTable table;
  table.dim = dim;
  for (const auto& e : t.events) {
    std::vector<double> v(dim, 0.0);
    std::string text = to_lower(event_text(e, t.dataset_kind));
    for (auto& c : text)
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '<' && c != '>' && c != '*') c = ' ';
    for (const auto& w : split_whitespace(text)) v[fnv1a64(w) % dim] += 1.0;
    const auto tokens = std::accumulate(v.begin(), v.end(), 0.0);
    if (tokens > 0.0)
      for (auto& x : v) x /= tokens;
    table.insert(e.trace_id, e.event_id, std::move(v));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Debug dump
// ---------------------------------------------------------------------------

/// Per graph: "# trace <id> label <key> nodes <n> edges <m>", then one
/// "node<TAB>index<TAB>event_id<TAB>features..." line per node, then one
/// "src<TAB>dst" line per edge.
inline std::string dump_graph(const TraceGraph& g) {
  std::string out = "# trace " + g.trace_id + " label " + g.label.key() + " nodes " + std::to_string(g.num_nodes()) +
                    " edges " + std::to_string(g.edges.size()) + "\n";
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    out += "node\t" + std::to_string(i) + '\t' + tsv_escape(g.node_ids[i]);
    for (double v : g.features.row(i)) out += '\t' + format_double(v);
    out += '\n';
  }
  for (auto [s, d] : g.edges) out += std::to_string(s) + '\t' + std::to_string(d) + '\n';
  return out;
}

}  // namespace tracediag
