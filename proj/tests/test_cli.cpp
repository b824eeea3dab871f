#include <gtest/gtest.h>

#include "cli_support.hpp"
#include "ffnlens/report.hpp"

using namespace ffnlens::testing;

TEST(Cli, CaptureWritesEveryCell) {
  ScratchDir dir("cli");
  const auto r = run_cli("capture-toy --config " + quote((data_dir() / "toy_config.json").string()) + " --corpus " +
                             quote((data_dir() / "mini_corpus.jsonl").string()) + " --out " + quote((dir / "s").string()),
                         dir / "log");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  std::size_t ffns = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "s")) ffns += e.path().extension() == ".ffns";
  EXPECT_EQ(ffns, 36u);  // 3 languages x 4 layers x 3 sublayers
  EXPECT_TRUE(std::filesystem::exists(dir / "s" / "manifest.json"));
  EXPECT_EQ(run_cli("validate --snapshots " + quote((dir / "s").string()), dir / "log").exit_code, 0);
}

TEST(Cli, PipelineIsByteIdenticalAcrossRuns) {
  ScratchDir a("cli"), b("cli");
  ASSERT_EQ(run_full_pipeline(a / "run"), "");
  ASSERT_EQ(run_full_pipeline(b / "run"), "");
  const auto ta = read_tree(a / "run"), tb = read_tree(b / "run");
  EXPECT_EQ(ta.size(), tb.size());
  EXPECT_TRUE(ta == tb);
  ASSERT_TRUE(ta.count("reports/summary.json"));
  const auto summary = ffnlens::report::json::parse(ta.at("reports/summary.json"));
  EXPECT_TRUE(ffnlens::report::validate_summary_json(summary).empty());
  EXPECT_TRUE(summary["reports"].contains("repdist/en:de"));
  EXPECT_TRUE(summary["reports"].contains("rsa/toy-decoder-seed42:toy-decoder-seed7:fr"));
}

TEST(Cli, CorruptCorpusLineIsDataError) {
  ScratchDir dir("cli");
  {
    std::ofstream out(dir / "c.jsonl");
    out << R"({"sentence_id": "1", "language": "en", "text": "fine."})" << "\n";
    out << R"({"sentence_id": "2", "language": "en", "text": "...")" << "\n";
  }
  const auto r = run_cli("capture-toy --config " + quote((data_dir() / "toy_config.json").string()) + " --corpus " +
                             quote((dir / "c.jsonl").string()) + " --out " + quote((dir / "s").string()),
                         dir / "log");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("c.jsonl:2"), std::string::npos) << r.output;
}

TEST(Cli, ValidateReportsViolations) {
  ScratchDir dir("cli");
  ASSERT_EQ(run_cli("capture-toy --config " + quote((data_dir() / "toy_config.json").string()) + " --corpus " +
                        quote((data_dir() / "mini_corpus.jsonl").string()) + " --out " + quote((dir / "s").string()),
                    dir / "log")
                .exit_code,
            0);
  std::filesystem::remove(dir / "s" / "de.L002.detector_raw.ffns");
  const auto r = run_cli("validate --snapshots " + quote((dir / "s").string()), dir / "log");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("de.L002.detector_raw.ffns"), std::string::npos) << r.output;
}

TEST(Cli, UsageErrors) {
  ScratchDir dir("cli");
  EXPECT_EQ(run_cli("", dir / "log").exit_code, 1);
  EXPECT_EQ(run_cli("analyze --metric freq", dir / "log").exit_code, 1);
  EXPECT_EQ(run_cli("frobnicate", dir / "log").exit_code, 1);
  const auto snap = quote((dir / "none").string());
  EXPECT_EQ(run_cli("analyze --snapshots " + snap + " --metric bogus --out x", dir / "log").exit_code, 1);
  EXPECT_EQ(run_cli("analyze --snapshots " + snap + " --metric freq --out x", dir / "log").exit_code, 2);
  EXPECT_EQ(run_cli("analyze --snapshots " + snap + " --metric freq --sublayer attn --out x", dir / "log").exit_code, 1);
}

TEST(Cli, CorpusSplitAcrossFiles) {
  ScratchDir dir("cli");
  {
    std::ofstream en(dir / "en.jsonl"), de(dir / "de.jsonl");
    en << R"({"sentence_id": "1", "language": "en", "text": "The cat sat."})" << "\n";
    en << R"({"sentence_id": "2", "language": "en", "text": "Dogs bark!"})" << "\n";
    de << R"({"sentence_id": "2", "language": "de", "text": "Hunde bellen!"})" << "\n";
    de << R"({"sentence_id": "1", "language": "de", "text": "Die Katze sass."})" << "\n";
  }
  const std::string snap = quote((dir / "s").string());
  ASSERT_EQ(run_cli("capture-toy --config " + quote((data_dir() / "toy_config.json").string()) + " --corpus " +
                        quote((dir / "en.jsonl").string()) + " --corpus " + quote((dir / "de.jsonl").string()) +
                        " --out " + snap,
                    dir / "log")
                .exit_code,
            0);
  const auto r = run_cli("analyze --snapshots " + snap + " --metric repdist --pair en:de --out " +
                             quote((dir / "r").string()) + " --format csv",
                         dir / "log");
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(std::filesystem::exists(dir / "r" / "repdist__en_de.csv"));
}
