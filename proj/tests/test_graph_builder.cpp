#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"
#include "tracediag/graph_builder.hpp"

using namespace tracediag;
using tdtest::add_chain;
using tdtest::ev;

namespace {

TraceSlice chain_slice(std::size_t n) {
  MasterTables t;
  add_chain(t, "T", n);
  return trace_view(t, "T");
}

void expect_row(const DenseMatrix& f, std::size_t r, std::vector<double> want) {
  ASSERT_EQ(f.cols(), want.size());
  for (std::size_t c = 0; c < want.size(); ++c) EXPECT_DOUBLE_EQ(f(r, c), want[c]) << "row " << r << " col " << c;
}

}  // namespace

TEST(Features, SingleNode) {
  const auto g = build_trace_graph(chain_slice(1), TraceLabel::normal());
  ASSERT_EQ(g.num_nodes(), 1u);
  EXPECT_TRUE(g.edges.empty());
  expect_row(g.features, 0, {0, 0, 0, 1, 0});
}

TEST(Features, ChainOfThree) {
  const auto g = build_trace_graph(chain_slice(3), TraceLabel::normal());
  expect_row(g.features, 0, {0, 1, 0, 1, 0});
  expect_row(g.features, 1, {1, 1, 0.5, 0.5, 0.5});
  expect_row(g.features, 2, {1, 0, 1, 0, 1});
}

TEST(Features, FanOutOfFour) {
  TraceSlice s;
  s.trace_id = "T";
  s.events.push_back(ev("T", "root", 0, 0));
  for (int i = 1; i <= 4; ++i) {
    s.events.push_back(ev("T", "c" + std::to_string(i), i, i));
    s.edges.push_back({"T", "root", "c" + std::to_string(i)});
  }
  const auto g = build_trace_graph(s, TraceLabel::normal());
  EXPECT_EQ(g.features(0, 1), 4.0);
  EXPECT_EQ(g.features(0, 0), 0.0);
  for (std::size_t i = 1; i <= 4; ++i) {
    EXPECT_EQ(g.features(i, 0), 1.0);
    EXPECT_EQ(g.features(i, 1), 0.0);
  }
}

TEST(Features, DegreeSumsEqualEdgeCount) {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    TraceSlice s;
    s.trace_id = "T";
    const std::size_t n = 2 + rng.below(10);
    for (std::size_t i = 0; i < n; ++i) s.events.push_back(ev("T", "e" + std::to_string(i), i, rng.between(0, 50)));
    sort_chronologically(s.events);
    for (std::size_t i = 1; i < n; ++i)
      s.edges.push_back({"T", "e" + std::to_string(rng.below(i)), "e" + std::to_string(i)});
    const auto g = build_trace_graph(s, TraceLabel::normal());
    double in = 0, out = 0;
    for (std::size_t i = 0; i < n; ++i) {
      in += g.features(i, 0);
      out += g.features(i, 1);
      EXPECT_GE(g.features(i, 4), 0.0);
      EXPECT_LE(g.features(i, 4), 1.0);
      EXPECT_DOUBLE_EQ(g.features(i, 2) + g.features(i, 3), 1.0);
    }
    EXPECT_EQ(in, static_cast<double>(g.edges.size()));
    EXPECT_EQ(out, static_cast<double>(g.edges.size()));
  }
}

TEST(Features, DuplicateEdgesCollapse) {
  auto s = chain_slice(3);
  s.edges.push_back(s.edges[0]);
  const auto g = build_trace_graph(s, TraceLabel::normal());
  EXPECT_EQ(g.edges.size(), 2u);
  expect_row(g.features, 1, {1, 1, 0.5, 0.5, 0.5});
}

TEST(Features, ConstantTimestampsGiveZeroNormTime) {
  auto s = chain_slice(3);
  for (auto& e : s.events) e.start_time = 7;
  const auto g = build_trace_graph(s, TraceLabel::normal());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(g.features(i, 4), 0.0);
}

TEST(Graph, MissingEndpointAndEmptyTraceThrow) {
  auto s = chain_slice(2);
  s.edges.push_back({"T", "T-0", "nope"});
  EXPECT_THROW(build_trace_graph(s, TraceLabel::normal()), DataError);
  TraceSlice empty;
  EXPECT_THROW(build_trace_graph(empty, TraceLabel::normal()), DataError);
}

TEST(Embeddings, AttachConcatenates) {
  TraceGraph g;
  g.trace_id = "T";
  g.node_ids = {"e"};
  g.timestamps = {0};
  g.features = compute_node_features(g);
  EmbeddingTable t;
  t.dim = 2;
  t.insert("T", "e", {0.5, -0.5});
  const auto h = attach_embeddings(g, t);
  expect_row(h.features, 0, {0, 0, 0, 1, 0, 0.5, -0.5});
}

TEST(Embeddings, StructuralColumnsUntouched) {
  MasterTables t;
  add_chain(t, "T", 3);
  const auto g = build_trace_graph(trace_view(t, "T"), TraceLabel::normal());
  const auto emb = pseudo_embeddings(t, 768);
  const auto h = attach_embeddings(g, emb);
  EXPECT_EQ(h.features.rows(), 3u);
  EXPECT_EQ(h.features.cols(), 773u);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(h.features(i, c), g.features(i, c));
}

TEST(Embeddings, MissingRowThrows) {
  const auto g = build_trace_graph(chain_slice(2), TraceLabel::normal());
  EmbeddingTable t;
  t.dim = 2;
  t.insert("T", "T-0", {1, 2});
  EXPECT_THROW(attach_embeddings(g, t), DataError);
}

TEST(Embeddings, InsertRejectsWrongLengthAndNonFinite) {
  EmbeddingTable t;
  t.dim = 2;
  EXPECT_THROW(t.insert("T", "e", {1}), DataError);
  EXPECT_THROW(t.insert("T", "e", {1, std::nan("")}), DataError);
}

TEST(Embeddings, FileRoundTrip) {
  tdtest::TempDir dir("emb");
  EmbeddingTable t;
  t.dim = 3;
  t.insert("T\t1", "e0", {0.1, -2.5e-300, 1.0 / 3.0});
  t.insert("T\t1", "e1", {0, 0, 7});
  write_embedding_table(t, dir / "e.tsv");
  const auto back = read_embedding_table(dir / "e.tsv");
  EXPECT_EQ(back.dim, 3u);
  EXPECT_EQ(back.rows, t.rows);
}

TEST(Embeddings, HeaderDimMismatchIsSchemaError) {
  std::istringstream in("dim=3\nT\te\t1 2\n");
  EXPECT_THROW(parse_embedding_table(in, "mem"), SchemaError);
  std::istringstream no_header("T\te\t1 2\n");
  EXPECT_THROW(parse_embedding_table(no_header, "mem"), SchemaError);
}

TEST(Embeddings, PseudoIsMeanOfTokenOneHots) {
  MasterTables t;
  t.traces.push_back({"T", TraceLabel::normal(), "s", ""});
  t.events.push_back(ev("T", "e0", 0, 1, "read", "ok ok"));
  const auto emb = pseudo_embeddings(t, 16);
  const auto& v = emb.rows.at({"T", "e0"});
  // tokens: read, ok, ok
  std::vector<double> want(16, 0.0);
  want[fnv1a64("read") % 16] += 1.0 / 3.0;
  want[fnv1a64("ok") % 16] += 2.0 / 3.0;
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(v[i], want[i], 1e-15);
  EXPECT_THROW(pseudo_embeddings(t, 0), ContractError);
}

TEST(Graph, DumpListsNodesAndEdges) {
  const auto g = build_trace_graph(chain_slice(2), TraceLabel::fault("x"));
  const auto d = dump_graph(g);
  EXPECT_EQ(d.rfind("# trace T label x nodes 2 edges 1\n", 0), 0u);
  EXPECT_NE(d.find("\n0\t1\n"), std::string::npos);
}
