// ffnlens: capture toy-model FFN snapshots, validate snapshot directories,
// compute per-layer metrics and merge reports.
//
// Exit codes: 0 success, 1 usage, 2 data validation, 3 internal.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ffnlens/ffnlens.hpp"

namespace {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

void print_violations(const std::vector<ffnlens::Violation>& v) {
  for (const auto& x : v) std::cerr << "  violation: " << ffnlens::to_string(x) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ffnlens - feed-forward activation analysis for decoder-only transformers"};
  app.require_subcommand(1);

  std::string config_path, capture_out;
  std::vector<std::string> corpus_paths;
  auto* capture = app.add_subcommand("capture-toy", "Capture snapshots from the built-in toy decoder");
  capture->add_option("--config", config_path, "ToyConfig JSON")->required();
  capture->add_option("--corpus", corpus_paths, "Corpus JSON lines (repeatable)")->required();
  capture->add_option("--out", capture_out, "Output snapshot directory")->required();

  std::string validate_dir, validate_manifest_path;
  auto* validate = app.add_subcommand("validate", "Check a snapshot directory against its manifest");
  validate->add_option("--snapshots", validate_dir, "Snapshot directory")->required();
  validate->add_option("--manifest", validate_manifest_path, "Manifest (default: DIR/manifest.json)");

  std::vector<std::string> snapshot_dirs, manifests;
  std::string metric, sublayer = "detector_selected", dist = "euclidean", pair, group, language, out_dir,
                      format = "both";
  std::optional<double> epsilon;
  auto* analyze = app.add_subcommand("analyze", "Compute a metric and write per-grouping reports");
  analyze->add_option("--snapshots", snapshot_dirs, "Snapshot directory (twice for --metric rsa)")->required();
  analyze->add_option("--manifest", manifests, "Manifest per --snapshots (default: DIR/manifest.json)");
  analyze->add_option("--metric", metric, "freq|flatness|repdist|rankcorr|rsa|overlap|normact")->required();
  analyze->add_option("--sublayer", sublayer, "detector_raw|detector_selected|combinator")->capture_default_str();
  analyze->add_option("--epsilon", epsilon, "Activation threshold (default: manifest epsilon_default)");
  analyze->add_option("--dist", dist, "euclidean|cosine")->capture_default_str();
  analyze->add_option("--pair", pair, "Language pair L1:L2");
  analyze->add_option("--group", group, "lang|pair|parallel|testset|model");
  analyze->add_option("--language", language, "Restrict to one language");
  analyze->add_option("--out", out_dir, "Report directory")->required();
  analyze->add_option("--format", format, "csv|json|both")->capture_default_str();

  std::string reports_dir, summary_out;
  auto* report_cmd = app.add_subcommand("report", "Merge report JSON files into one summary");
  report_cmd->add_option("--reports", reports_dir, "Directory of report JSON files")->required();
  report_cmd->add_option("--out", summary_out, "Summary file (default: DIR/summary.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (capture->parsed()) {
      const auto result = ffnlens::capture_toy(config_path, {corpus_paths.begin(), corpus_paths.end()}, capture_out);
      std::cout << "wrote " << result.cells.size() << " snapshot files and manifest to " << capture_out << "\n";
    } else if (validate->parsed()) {
      const auto mpath = validate_manifest_path.empty() ? std::filesystem::path(validate_dir) / "manifest.json"
                                                        : std::filesystem::path(validate_manifest_path);
      auto v = ffnlens::validate_manifest(ffnlens::load_manifest(mpath), validate_dir);
      if (!v.empty()) {
        std::cerr << v.size() << " violation(s)\n";
        print_violations(v);
        return kData;
      }
      std::cout << "ok\n";
    } else if (analyze->parsed()) {
      if (!manifests.empty() && manifests.size() != snapshot_dirs.size())
        throw ffnlens::UsageError("give one --manifest per --snapshots or none");
      ffnlens::AnalyzeOptions o;
      o.metric = metric;
      const auto sl = ffnlens::parse_sublayer(sublayer);
      if (!sl) throw ffnlens::UsageError("unknown --sublayer '" + sublayer + "'");
      o.sublayer = *sl;
      o.epsilon = epsilon;
      const auto dk = ffnlens::metrics::parse_distance(dist);
      if (!dk) throw ffnlens::UsageError("unknown --dist '" + dist + "'");
      o.dist = *dk;
      if (!pair.empty()) o.pair = ffnlens::parse_pair(pair);
      if (!group.empty()) o.group = group;
      if (!language.empty()) o.language = language;
      const auto fmt = ffnlens::report::parse_format(format);
      if (!fmt) throw ffnlens::UsageError("unknown --format '" + format + "'");

      ffnlens::check_options(o, snapshot_dirs.size());
      std::vector<ffnlens::SnapshotStore> stores;
      for (std::size_t i = 0; i < snapshot_dirs.size(); ++i) {
        std::optional<std::filesystem::path> m;
        if (!manifests.empty()) m = manifests[i];
        stores.push_back(ffnlens::SnapshotStore::open(snapshot_dirs[i], m));
      }
      const auto reports = ffnlens::run_analysis(stores, o);
      ffnlens::report::write_reports(reports, out_dir, *fmt);
      std::cout << "wrote " << reports.size() << " report(s) to " << out_dir << "\n";
    } else if (report_cmd->parsed()) {
      const auto summary = ffnlens::report::merge_reports(reports_dir);
      const auto path = summary_out.empty() ? std::filesystem::path(reports_dir) / "summary.json"
                                            : std::filesystem::path(summary_out);
      ffnlens::write_file_bytes(path, summary.dump(2) + "\n");
      std::cout << "merged " << summary["reports"].size() << " report(s) into " << path.string() << "\n";
    }
  } catch (const ffnlens::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ffnlens::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    print_violations(e.violations());
    return kData;
  } catch (const ffnlens::SnapshotError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ffnlens::ManifestError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ffnlens::CorpusError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ffnlens::metrics::MetricError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ffnlens::report::ReportError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kOk;
}
