#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "support.hpp"
#include "tracediag/cli.hpp"

using namespace tracediag;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(read_file(dir / "manifest.json")); }

}  // namespace

TEST(Cli, UnknownSubcommandIsUsageError) {
  const auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, MissingRequiredOptionIsUsageError) {
  EXPECT_EQ(run({"synth"}).code, cli::kUsage);
  EXPECT_EQ(run({}).code, cli::kUsage);
}

TEST(Cli, HelpAndVersionSucceed) {
  EXPECT_EQ(run({"--help"}).code, cli::kOk);
  const auto v = run({"--version"});
  EXPECT_EQ(v.code, cli::kOk);
  EXPECT_NE(v.out.find(kToolVersion), std::string::npos);
}

TEST(Cli, SynthTrainEvaluateFlow) {
  tdtest::TempDir dir("cli");
  const auto data = dir / "data", model = dir / "model", eval = dir / "eval";
  ASSERT_EQ(run({"synth", "--out", data.string(), "--n-traces", "60", "--seed", "4", "--fault",
                 "corrupt-description=0.3", "--fault", "drop-subtree=0.2"})
                .code,
            cli::kOk);
  for (const auto* f : {"traces.tsv", "events.tsv", "edges.tsv", "manifest.json"}) EXPECT_TRUE(fs::exists(data / f));
  EXPECT_EQ(read_master_tables(data).traces.size(), 60u);

  const auto tr = run({"train", "--data", data.string(), "--out", model.string(), "--model", "gcn", "--task", "ad",
                       "--epochs", "2", "--hidden", "8", "--seed", "1"});
  ASSERT_EQ(tr.code, cli::kOk) << tr.err;
  for (const auto* f : {"checkpoint.txt", "report.json", "splits.tsv", "manifest.json"})
    EXPECT_TRUE(fs::exists(model / f)) << f;
  const auto m = manifest(model);
  EXPECT_EQ(m["command"], "train");
  EXPECT_EQ(m["exit_code"], 0);
  EXPECT_EQ(m["status"], "ok");
  EXPECT_EQ(m["seed"], 1);
  EXPECT_EQ(m["config"]["epochs"], "2");

  const auto ev = run({"evaluate", "--data", data.string(), "--out", eval.string(), "--task", "ad", "--checkpoint",
                       (model / "checkpoint.txt").string(), "--splits", (model / "splits.tsv").string(), "--split",
                       "test"});
  ASSERT_EQ(ev.code, cli::kOk) << ev.err;
  const auto e = nlohmann::json::parse(read_file(eval / "eval.json"));
  EXPECT_EQ(e["scope"], "test");
  // evaluate on the test split must reproduce the training report's test metrics
  const auto rep = nlohmann::json::parse(read_file(model / "report.json"));
  EXPECT_EQ(e["metrics"]["f1"], rep["test_metrics"]["f1"]);
}

TEST(Cli, EvaluateWithWrongTaskIsDataError) {
  tdtest::TempDir dir("cli-task");
  const auto data = dir / "data", model = dir / "model", eval = dir / "eval";
  ASSERT_EQ(run({"synth", "--out", data.string(), "--n-traces", "40", "--fault", "drop-subtree=0.2", "--fault",
                 "delay-timestamps=0.2"})
                .code,
            cli::kOk);
  ASSERT_EQ(run({"train", "--data", data.string(), "--out", model.string(), "--model", "baseline", "--task", "fc",
                 "--epochs", "3"})
                .code,
            cli::kOk);
  const auto r = run({"evaluate", "--data", data.string(), "--out", eval.string(), "--task", "ad", "--checkpoint",
                      (model / "checkpoint.txt").string()});
  EXPECT_EQ(r.code, cli::kData);
  const auto m = manifest(eval);
  EXPECT_EQ(m["status"], "error");
  EXPECT_EQ(m["exit_code"], cli::kData);
  EXPECT_TRUE(m.contains("error"));
}

TEST(Cli, MissingInputIsDataError) {
  tdtest::TempDir dir("cli-missing");
  EXPECT_EQ(run({"build-graphs", "--data", (dir / "nope").string(), "--out", (dir / "o").string()}).code, cli::kData);
}

TEST(Cli, ConfigFileSuppliesDefaultsAndFlagsWin) {
  tdtest::TempDir dir("cli-config");
  write_file_atomic(dir / "synth.conf", "# synthetic set\nn-traces = 25\nseed = 3\nfault = drop-subtree=0.2\n");
  const auto out = dir / "a";
  ASSERT_EQ(run({"synth", "--config", (dir / "synth.conf").string(), "--out", out.string(), "--seed", "8"}).code,
            cli::kOk);
  EXPECT_EQ(read_master_tables(out).traces.size(), 25u);
  EXPECT_EQ(manifest(out)["seed"], 8);
  write_file_atomic(dir / "bad.conf", "no-such-option = 1\n");
  EXPECT_EQ(run({"synth", "--config", (dir / "bad.conf").string(), "--out", (dir / "b").string()}).code,
            cli::kUsage);
}

TEST(Cli, ExportTextAndPseudoEmbeddings) {
  tdtest::TempDir dir("cli-export");
  const auto data = dir / "data", out = dir / "text";
  ASSERT_EQ(run({"synth", "--out", data.string(), "--n-traces", "5"}).code, cli::kOk);
  ASSERT_EQ(run({"export-text", "--data", data.string(), "--out", out.string(), "--pseudo-embeddings", "8"}).code,
            cli::kOk);
  const auto t = read_master_tables(data);
  const auto emb = read_embedding_table(out / "embeddings.tsv");
  EXPECT_EQ(emb.dim, 8u);
  EXPECT_EQ(emb.rows.size(), t.events.size());
  const auto events = read_delimited(out / "events_text.tsv");
  EXPECT_EQ(events.rows.size(), t.events.size());
  const auto traces = read_delimited(out / "traces_text.tsv");
  EXPECT_EQ(traces.header, (std::vector<std::string>{"TraceId", "Label", "FaultType", "Text"}));
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = TRACEDIAG_CLI_PATH;
  const int unknown = std::system((bin + " frobnicate >/dev/null 2>&1").c_str());
  ASSERT_TRUE(WIFEXITED(unknown));
  EXPECT_EQ(WEXITSTATUS(unknown), cli::kUsage);
  const int ok = std::system((bin + " --version >/dev/null 2>&1").c_str());
  ASSERT_TRUE(WIFEXITED(ok));
  EXPECT_EQ(WEXITSTATUS(ok), cli::kOk);
}
