#include <gtest/gtest.h>

#include "support.hpp"
#include "tracediag/synthgen.hpp"

using namespace tracediag;

namespace {

TraceSlice normal_trace(std::uint64_t seed, std::size_t events = 12) {
  SynthConfig c;
  c.events_min = c.events_max = events;
  Rng rng(seed);
  return generate_normal_trace("t", c, rng);
}

MasterTables as_tables(const TraceSlice& s) {
  MasterTables t;
  t.traces.push_back({s.trace_id, TraceLabel::normal(), "x", ""});
  t.events = s.events;
  t.edges = s.edges;
  return t;
}

std::multiset<std::string> descriptions(const TraceSlice& s) {
  std::multiset<std::string> out;
  for (const auto& e : s.events) out.insert(e.description);
  return out;
}

}  // namespace

TEST(Synth, AllNormalTracesValidate) {
  SynthConfig c;
  c.n_traces = 10;
  c.seed = 1;
  const auto t = generate_dataset(c);
  EXPECT_EQ(t.traces.size(), 10u);
  EXPECT_TRUE(validate_master_tables(t).ok);
  for (const auto& r : t.traces) EXPECT_TRUE(r.label.is_normal());
}

TEST(Synth, FaultCountsAreExact) {
  SynthConfig c;
  c.n_traces = 100;
  c.seed = 2;
  c.fault_mix = {{SynthFaultKind::DropSubtree, 0.5}};
  const auto t = generate_dataset(c);
  const auto d = label_distribution(t);
  EXPECT_EQ(d.at("drop-subtree"), 50u);
  EXPECT_EQ(d.at("normal"), 50u);
  EXPECT_TRUE(validate_master_tables(t).ok);
}

TEST(Synth, DeterministicBySeed) {
  SynthConfig c;
  c.n_traces = 40;
  c.seed = 9;
  c.fault_mix = {{SynthFaultKind::DuplicateBranch, 0.2}, {SynthFaultKind::SwapOpNames, 0.2}};
  EXPECT_EQ(generate_dataset(c), generate_dataset(c));
  auto c2 = c;
  c2.seed = 10;
  EXPECT_NE(generate_dataset(c), generate_dataset(c2));
}

TEST(Synth, NormalTracesAreTreesWithMonotoneTime) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = normal_trace(seed);
    EXPECT_EQ(s.edges.size(), s.events.size() - 1);
    for (std::size_t i = 1; i < s.events.size(); ++i) EXPECT_GT(s.events[i].start_time, s.events[i - 1].start_time);
    EXPECT_TRUE(validate_master_tables(as_tables(s)).ok);
  }
}

TEST(Inject, DropSubtreeOnChainLeavesChain) {
  MasterTables t;
  tdtest::add_chain(t, "c", 5);
  const auto s = inject_fault(trace_view(t, "c"), SynthFaultKind::DropSubtree, 3);
  EXPECT_LT(s.events.size(), 5u);
  EXPECT_GE(s.events.size(), 1u);
  EXPECT_EQ(s.edges.size(), s.events.size() - 1);
  EXPECT_TRUE(validate_master_tables(as_tables(s)).ok);
  // still a chain: every event but the first has exactly one parent, the previous one
  for (std::size_t i = 1; i < s.events.size(); ++i) {
    EXPECT_EQ(s.edges[i - 1].father_event_id, s.events[i - 1].event_id);
    EXPECT_EQ(s.edges[i - 1].child_event_id, s.events[i].event_id);
  }
}

TEST(Inject, DuplicateBranchAddsNodes) {
  const auto s = normal_trace(4);
  const auto f = inject_fault(s, SynthFaultKind::DuplicateBranch, 8);
  EXPECT_GT(f.events.size(), s.events.size());
  EXPECT_EQ(f.edges.size(), f.events.size() - 1);
  EXPECT_TRUE(validate_master_tables(as_tables(f)).ok);
}

TEST(Inject, CorruptDescriptionTouchesOnlyText) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = normal_trace(seed);
    const auto f = inject_fault(s, SynthFaultKind::CorruptDescription, seed);
    ASSERT_EQ(f.events.size(), s.events.size());
    EXPECT_EQ(f.edges, s.edges);
    bool changed = false;
    for (std::size_t i = 0; i < s.events.size(); ++i) {
      EXPECT_EQ(f.events[i].event_id, s.events[i].event_id);
      EXPECT_EQ(f.events[i].start_time, s.events[i].start_time);
      EXPECT_EQ(f.events[i].end_time, s.events[i].end_time);
      EXPECT_EQ(f.events[i].op_name, s.events[i].op_name);
      changed |= f.events[i].description != s.events[i].description;
    }
    EXPECT_TRUE(changed);
  }
}

TEST(Inject, DelayKeepsTextAndStructure) {
  const auto s = normal_trace(5);
  const auto f = inject_fault(s, SynthFaultKind::DelayTimestamps, 2, 1000);
  EXPECT_EQ(descriptions(f), descriptions(s));
  EXPECT_EQ(f.edges, s.edges);
  std::size_t shifted = 0;
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const auto d = f.events[i].start_time - s.events[i].start_time;
    EXPECT_TRUE(d == 0 || d == 1000);
    shifted += d != 0;
    if (i > 0 && d == 0) EXPECT_EQ(f.events[i - 1].start_time, s.events[i - 1].start_time);
  }
  EXPECT_GT(shifted, 0u);
  EXPECT_LT(shifted, s.events.size());
}

TEST(Inject, SwapOpNamesKeepsEverythingElse) {
  const auto s = normal_trace(6);
  const auto f = inject_fault(s, SynthFaultKind::SwapOpNames, 1);
  EXPECT_EQ(f.edges, s.edges);
  std::multiset<std::string> a, b;
  bool changed = false;
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    EXPECT_EQ(f.events[i].start_time, s.events[i].start_time);
    EXPECT_EQ(f.events[i].description, s.events[i].description);
    a.insert(s.events[i].op_name);
    b.insert(f.events[i].op_name);
    changed |= f.events[i].op_name != s.events[i].op_name;
  }
  EXPECT_EQ(a, b);
  EXPECT_TRUE(changed);
}

TEST(Inject, TooSmallTraceIsRejected) {
  MasterTables t;
  tdtest::add_chain(t, "c", 2);
  EXPECT_THROW(inject_fault(trace_view(t, "c"), SynthFaultKind::DropSubtree, 1), DataError);
}

TEST(SynthConfigCheck, RejectsBadMix) {
  SynthConfig c;
  c.fault_mix = {{SynthFaultKind::DropSubtree, 0.7}, {SynthFaultKind::DelayTimestamps, 0.7}};
  EXPECT_THROW(c.validate(), ContractError);
  c.fault_mix = {{SynthFaultKind::DropSubtree, -0.1}};
  EXPECT_THROW(c.validate(), ContractError);
}
