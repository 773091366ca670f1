#include <gtest/gtest.h>

#include <regex>
#include <sstream>

#include <sys/wait.h>

#include "parag/cli.hpp"
#include "support.hpp"

using namespace parag;
using testsupport::TempDir;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "parag");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string qa_file() { return testsupport::toy_dir() + "/qa.jsonl"; }
std::string corpus_file() { return testsupport::toy_dir() + "/corpus.tsv"; }

void write(const fs::path& p, const std::string& text) { write_text_file(p, text); }

nlohmann::json parse_file(const fs::path& p) { return nlohmann::json::parse(testsupport::slurp(p)); }

}  // namespace

TEST(Cli, BuildIftWritesRecords) {
  TempDir dir;
  auto r = run_cli({"build-ift", "--qa", qa_file(), "--corpus", corpus_file(), "--mock", "--out",
                    dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "ift.jsonl"));
  EXPECT_FALSE(read_ift(dir / "ift.jsonl").empty());
  auto summary = parse_file(dir / "ift_summary.json");
  EXPECT_EQ(summary["IFT"]["input"], 20);
  EXPECT_NE(r.err.find("IFT: kept"), std::string::npos);
}

TEST(Cli, BuildPrefNeedsIftForRi) {
  TempDir dir;
  auto r = run_cli({"build-pref", "--perspective", "ri", "--qa", qa_file(), "--corpus",
                    corpus_file(), "--mock", "--out", dir.path().string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--ift"), std::string::npos);
}

TEST(Cli, BuildPrefChainMatchesBuildAll) {
  TempDir a, b;
  auto common = std::vector<std::string>{"--qa", qa_file(), "--corpus", corpus_file(), "--mock"};
  auto with = [&](std::vector<std::string> head, const fs::path& out) {
    head.insert(head.end(), common.begin(), common.end());
    head.push_back("--out");
    head.push_back(out.string());
    return run_cli(head);
  };
  ASSERT_EQ(with({"build-all"}, a.path()).code, 0);
  ASSERT_EQ(with({"build-ift"}, b.path()).code, 0);
  std::string ift = (b / "ift.jsonl").string();
  ASSERT_EQ(with({"build-pref", "--perspective", "ri", "--ift", ift}, b.path()).code, 0);
  ASSERT_EQ(with({"build-pref", "--perspective", "RR", "--ift", ift}, b.path()).code, 0);
  ASSERT_EQ(with({"build-pref", "--perspective", "cq"}, b.path()).code, 0);
  for (const char* f : {"ift.jsonl", "ri.jsonl", "rr.jsonl", "cq.jsonl"})
    EXPECT_EQ(testsupport::slurp(a / f), testsupport::slurp(b / f)) << f;
  auto summary = parse_file(a / "summary.json");
  for (const char* s : {"IFT", "RI", "RR", "CQ"}) EXPECT_TRUE(summary.contains(s)) << s;
}

TEST(Cli, EvalReportsAggregates) {
  TempDir dir;
  write(dir / "resp.jsonl",
        R"({"id":"toy-01","output":"x[1].","doc_ids":["d001"]})" "\n"
        R"({"id":"toy-02","output":"y.","docs":[{"id":"z","title":"","text":"y"}]})" "\n");
  auto r = run_cli({"eval", "--qa", qa_file(), "--responses", (dir / "resp.jsonl").string(),
                    "--corpus", corpus_file(), "--mock", "--out", (dir / "rep.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rep = parse_file(dir / "rep.json");
  for (const char* k : {"em", "rec", "prec", "f1"}) EXPECT_TRUE(rep["aggregate"].contains(k)) << k;
  EXPECT_EQ(rep["per_question"].size(), 2u);
}

TEST(Cli, EvalJudgeTally) {
  TempDir dir;
  write(dir / "a.jsonl",
        R"({"id":"toy-01","output":"A[1][2].","docs":[{"id":"1","text":"a"},{"id":"2","text":"b"}]})" "\n"
        R"({"id":"toy-02","output":"B.","docs":[]})" "\n");
  write(dir / "b.jsonl", R"({"id":"toy-01","output":"A.","docs":[]})" "\n");
  auto r = run_cli({"eval", "--qa", qa_file(), "--responses", (dir / "a.jsonl").string(),
                    "--judge-baseline", (dir / "b.jsonl").string(), "--mock"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rep = nlohmann::json::parse(r.out);
  EXPECT_EQ(rep["judge"]["wins"], 1);
  EXPECT_EQ(rep["judge"]["unpaired"], 1);
}

TEST(Cli, MissingQaExitsOne) {
  TempDir dir;
  EXPECT_EQ(run_cli({"build-ift", "--mock", "--out", dir.path().string()}).code, 1);
}

TEST(Cli, UnknownFlagExitsOne) {
  EXPECT_EQ(run_cli({"stats", "--bogus", qa_file()}).code, 1);
  EXPECT_EQ(run_cli({}).code, 1);
}

TEST(Cli, HelpExitsZero) {
  auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("build-all"), std::string::npos);
}

TEST(Cli, MalformedQaExitsOne) {
  TempDir dir;
  write(dir / "qa.jsonl", "{not json\n");
  auto r = run_cli({"build-ift", "--qa", (dir / "qa.jsonl").string(), "--corpus", corpus_file(),
                    "--mock", "--out", dir.path().string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 1"), std::string::npos) << r.err;
}

TEST(Cli, UnreachableBackendExitsTwo) {
  TempDir dir;
  write(dir / "resp.jsonl", R"({"id":"toy-01","output":"x[1].","docs":[{"id":"a","text":"x"}]})" "\n");
  auto r = run_cli({"eval", "--qa", qa_file(), "--responses", (dir / "resp.jsonl").string(),
                    "--nli-url", "http://127.0.0.1:9", "--retries", "0", "--timeout", "2"});
  EXPECT_EQ(r.code, 2) << r.err;
}

TEST(Cli, NonMockWithoutNliIsUsageError) {
  TempDir dir;
  write(dir / "resp.jsonl", R"({"id":"toy-01","output":"x.","docs":[]})" "\n");
  ::unsetenv("NLI_URL");
  auto r = run_cli({"eval", "--qa", qa_file(), "--responses", (dir / "resp.jsonl").string()});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, ExportManifestOverrides) {
  TempDir dir;
  auto r = run_cli({"export-manifest", "--out", dir.path().string(), "--set", "RI.learning_rate=1e-6",
                    "CQ.epochs=2"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto m = read_manifest(dir / "manifest.json");
  EXPECT_DOUBLE_EQ(m.find("RI")->learning_rate, 1e-6);
  EXPECT_EQ(m.find("CQ")->epochs, 2);
  EXPECT_EQ(m.find("IFT")->batch_size, 128);
  EXPECT_EQ(run_cli({"export-manifest", "--out", dir.path().string(), "--set", "XX.epochs=1"}).code, 1);
  EXPECT_EQ(run_cli({"export-manifest", "--out", dir.path().string(), "--set", "garbage"}).code, 1);
}

TEST(Cli, StatsSingleCitationFile) {
  TempDir dir;
  write(dir / "f.jsonl", R"({"id":"toy-01","output":"A[1]. B[2]."})" "\n");
  auto r = run_cli({"stats", (dir / "f.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = nlohmann::json::parse(r.out)["files"][0];
  EXPECT_EQ(j["claims"], 2);
  EXPECT_EQ(j["citations_per_claim"], nlohmann::json({{"1", 100.0}}));
}

TEST(Cli, StatsEmptyFile) {
  TempDir dir;
  write(dir / "e.jsonl", "");
  auto r = run_cli({"stats", (dir / "e.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = nlohmann::json::parse(r.out)["files"][0];
  EXPECT_EQ(j["records"], 0);
  EXPECT_TRUE(j["citations_per_claim"].empty());
}

TEST(Cli, StatsMixedFixtureRecount) {
  TempDir dir;
  const std::vector<std::string> outputs{"A[1]. B[1][2]. C.", "D[3]. E[1][2][3].",
                                         "F[2]. G[4]."};
  std::string text;
  for (std::size_t i = 0; i < outputs.size(); ++i)
    text += R"({"id":"toy-0)" + std::to_string(i + 1) + R"(","output":")" + outputs[i] + "\"}\n";
  write(dir / "m.jsonl", text);
  auto r = run_cli({"stats", (dir / "m.jsonl").string(), "--qa", qa_file()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = nlohmann::json::parse(r.out)["files"][0];

  // Independent recount: split on ". " and count bracket markers.
  std::map<std::size_t, std::size_t> hist;
  std::size_t claims = 0;
  std::regex marker(R"(\[\d+\])");
  for (const auto& o : outputs) {
    std::size_t start = 0;
    while (start < o.size()) {
      std::size_t end = o.find(". ", start);
      std::string piece = o.substr(start, end == std::string::npos ? std::string::npos : end - start);
      ++claims;
      ++hist[static_cast<std::size_t>(std::distance(
          std::sregex_iterator(piece.begin(), piece.end(), marker), std::sregex_iterator()))];
      if (end == std::string::npos) break;
      start = end + 2;
    }
  }
  EXPECT_EQ(j["claims"], claims);
  double sum = 0;
  for (const auto& [k, v] : hist) {
    double pct = std::round(10000.0 * static_cast<double>(v) / static_cast<double>(claims)) / 100;
    EXPECT_DOUBLE_EQ(j["citations_per_claim"][std::to_string(k)].get<double>(), pct) << k;
    sum += pct;
  }
  EXPECT_NEAR(sum, 100.0, 0.05);
  EXPECT_TRUE(j.contains("answer_coverage"));
  double cov = 0;
  for (const auto& [k, v] : j["answer_coverage"].items()) cov += v.get<double>();
  EXPECT_NEAR(cov, 100.0, 0.05);
}

TEST(Cli, BinaryExitCodes) {
  TempDir dir;
  std::string bin = PARAG_CLI;
  auto status = [](const std::string& cmd) {
    int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status(bin + " build-all --qa " + qa_file() + " --corpus " + corpus_file() +
                   " --mock --out " + dir.path().string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_EQ(status(bin + " build-all --mock --out " + dir.path().string()), 1);
  EXPECT_EQ(status(bin + " nonsense"), 1);
}
