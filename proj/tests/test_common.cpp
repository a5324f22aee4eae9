#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "tracediag/common.hpp"

using namespace tracediag;

TEST(Rng, SameSeedSameStream) {
  Rng a(123), b(123), c(124);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs |= x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformAndBelowStayInRange) {
  Rng r(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(7), 7u);
    const auto b = r.between(-3, 3);
    ASSERT_GE(b, -3);
    ASSERT_LE(b, 3);
  }
  EXPECT_THROW(r.below(0), ContractError);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng r(5);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  auto w = v;
  r.shuffle(w);
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(DeriveSeed, DependsOnNameAndSeed) {
  EXPECT_EQ(derive_seed(1, "split"), derive_seed(1, "split"));
  EXPECT_NE(derive_seed(1, "split"), derive_seed(1, "gcn/init"));
  EXPECT_NE(derive_seed(1, "split"), derive_seed(2, "split"));
  // FNV-1a reference values
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Strings, SplitTrimJoin) {
  EXPECT_EQ(split("a\t\tb", '\t'), (std::vector<std::string>{"a", "", "b"}));
  EXPECT_EQ(split_whitespace("  a  b\tc "), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(trim("  x y \n"), "x y");
  EXPECT_EQ(join({"a", "b"}, ", "), "a, b");
  EXPECT_EQ(zero_pad(7, 4), "0007");
  EXPECT_FALSE(parse_int64("12a"));
  EXPECT_EQ(*parse_int64("-42"), -42);
  EXPECT_FALSE(parse_double("nanx"));
}

TEST(Tsv, EscapeRoundTrip) {
  for (std::string s : {"plain", "tab\there", "line\nbreak", "back\\slash", "cr\rx", "", "\\t literal"}) {
    const auto e = tsv_escape(s);
    EXPECT_EQ(e.find('\t'), std::string::npos);
    EXPECT_EQ(e.find('\n'), std::string::npos);
    EXPECT_EQ(tsv_unescape(e), s);
  }
}

TEST(Delimited, CsvQuotedFields) {
  std::istringstream in("TraceId,Name\n1,\"a, b\"\n2,\"say \"\"hi\"\"\"\n");
  const auto t = parse_delimited(in, "mem");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][1], "a, b");
  EXPECT_EQ(t.rows[1][1], "say \"hi\"");
  EXPECT_EQ(t.line_numbers[1], 3u);
}

TEST(Delimited, WrongFieldCountIsSchemaError) {
  std::istringstream in("A\tB\n1\t2\t3\n");
  EXPECT_THROW(parse_delimited(in, "mem"), SchemaError);
}
