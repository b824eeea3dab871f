#pragma once

// Reports: one per (metric, grouping). Each is emitted as plot-ready CSV and a
// JSON mirror; a directory of JSON reports can be merged into one summary.

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "ffnlens/snapshot.hpp"

namespace ffnlens::report {

using json = nlohmann::ordered_json;

inline constexpr std::string_view kReportSchema = "ffnlens.report/1";
inline constexpr std::string_view kSummarySchema = "ffnlens.summary/1";

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SeriesPoint {
  std::size_t layer_index = 0;
  std::optional<double> value;  // nullopt = undefined (e.g. zero-variance ranks)
  std::optional<double> std;
};

struct LabeledMatrix {
  std::string row_header;
  std::string col_header;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::optional<double>> values;  // row-major
};

struct Report {
  std::string metric;
  std::string grouping;   // e.g. "en", "en:de", "en:wmt19:wmt20", "m1:m2:de"
  std::string group_kind;  // lang | pair | testset | model
  json parameters = json::object();
  std::size_t num_layers = 0;
  // Exactly one payload.
  std::vector<SeriesPoint> series;
  std::optional<LabeledMatrix> matrix;
  json extra = json::object();  // metric-specific annotations, JSON only

  std::string key() const { return metric + "/" + grouping; }
};

inline std::string format_number(double v) { return fmt::format("{}", v); }

inline std::string file_stem(const Report& r) {
  std::string g = r.grouping;
  std::replace(g.begin(), g.end(), ':', '_');
  std::replace(g.begin(), g.end(), '/', '_');
  return r.metric + "__" + g;
}

inline std::string render_csv(const Report& r) {
  std::string out;
  auto num = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string{}; };
  if (r.matrix) {
    const auto& m = *r.matrix;
    out += m.row_header + "," + m.col_header + ",value\n";
    for (std::size_t i = 0; i < m.row_labels.size(); ++i)
      for (std::size_t j = 0; j < m.col_labels.size(); ++j)
        out += m.row_labels[i] + "," + m.col_labels[j] + "," + num(m.values[i * m.col_labels.size() + j]) + "\n";
    return out;
  }
  const bool with_std = std::any_of(r.series.begin(), r.series.end(), [](const SeriesPoint& p) { return p.std.has_value(); });
  out += with_std ? "layer_index,value,std\n" : "layer_index,value\n";
  for (const auto& p : r.series) {
    out += std::to_string(p.layer_index) + "," + num(p.value);
    if (with_std) out += "," + num(p.std);
    out += "\n";
  }
  return out;
}

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json to_json(const Report& r) {
  json j;
  j["schema"] = kReportSchema;
  j["metric"] = r.metric;
  j["grouping"] = r.grouping;
  j["group_kind"] = r.group_kind;
  j["parameters"] = r.parameters;
  j["num_layers"] = r.num_layers;
  json payload;
  if (r.matrix) {
    const auto& m = *r.matrix;
    payload["kind"] = "matrix";
    payload["row_header"] = m.row_header;
    payload["col_header"] = m.col_header;
    payload["row_labels"] = m.row_labels;
    payload["col_labels"] = m.col_labels;
    json rows = json::array();
    for (std::size_t i = 0; i < m.row_labels.size(); ++i) {
      json row = json::array();
      for (std::size_t c = 0; c < m.col_labels.size(); ++c) row.push_back(optional_number(m.values[i * m.col_labels.size() + c]));
      rows.push_back(std::move(row));
    }
    payload["values"] = std::move(rows);
  } else {
    payload["kind"] = "series";
    json pts = json::array();
    for (const auto& p : r.series) {
      json pt;
      pt["layer_index"] = p.layer_index;
      pt["value"] = optional_number(p.value);
      if (p.std) pt["std"] = *p.std;
      pts.push_back(std::move(pt));
    }
    payload["layers"] = std::move(pts);
  }
  j["payload"] = std::move(payload);
  if (!r.extra.empty()) j["extra"] = r.extra;
  return j;
}

// Structural check of one report document; empty result means valid.
inline std::vector<std::string> validate_report_json(const json& j) {
  std::vector<std::string> problems;
  auto need = [&](const char* key, bool ok) {
    if (!ok) problems.push_back(std::string("field '") + key + "' missing or wrong type");
  };
  if (!j.is_object()) return {"report is not an object"};
  need("schema", j.contains("schema") && j["schema"] == kReportSchema);
  need("metric", j.contains("metric") && j["metric"].is_string());
  need("grouping", j.contains("grouping") && j["grouping"].is_string());
  need("group_kind", j.contains("group_kind") && j["group_kind"].is_string());
  need("parameters", j.contains("parameters") && j["parameters"].is_object());
  need("num_layers", j.contains("num_layers") && j["num_layers"].is_number_unsigned());
  if (!j.contains("payload") || !j["payload"].is_object()) {
    problems.emplace_back("field 'payload' missing");
    return problems;
  }
  const auto& p = j["payload"];
  const auto kind = p.value("kind", std::string{});
  auto is_num_or_null = [](const json& v) { return v.is_number() || v.is_null(); };
  if (kind == "series") {
    if (!p.contains("layers") || !p["layers"].is_array()) {
      problems.emplace_back("series payload without 'layers' array");
    } else {
      for (const auto& pt : p["layers"])
        if (!pt.contains("layer_index") || !pt["layer_index"].is_number_unsigned() || !pt.contains("value") ||
            !is_num_or_null(pt["value"]))
          problems.emplace_back("malformed series point");
      if (j.contains("num_layers") && j["num_layers"].is_number_unsigned() &&
          p["layers"].size() != j["num_layers"].get<std::size_t>())
        problems.emplace_back("series length does not match num_layers");
    }
  } else if (kind == "matrix") {
    if (!p.contains("row_labels") || !p.contains("col_labels") || !p.contains("values") || !p["values"].is_array()) {
      problems.emplace_back("matrix payload incomplete");
    } else {
      if (p["values"].size() != p["row_labels"].size()) problems.emplace_back("matrix row count mismatch");
      for (const auto& row : p["values"]) {
        if (!row.is_array() || row.size() != p["col_labels"].size()) problems.emplace_back("matrix column count mismatch");
        else
          for (const auto& v : row)
            if (!is_num_or_null(v)) problems.emplace_back("matrix entry not a number");
      }
    }
  } else {
    problems.emplace_back("unknown payload kind '" + kind + "'");
  }
  return problems;
}

enum class OutputFormat { csv, json, both };

inline std::optional<OutputFormat> parse_format(std::string_view s) {
  if (s == "csv") return OutputFormat::csv;
  if (s == "json") return OutputFormat::json;
  if (s == "both") return OutputFormat::both;
  return std::nullopt;
}

// Rendered file name -> contents, in deterministic (sorted) order.
inline std::map<std::string, std::string> render_files(const std::vector<Report>& reports, OutputFormat fmt) {
  std::map<std::string, std::string> files;
  for (const auto& r : reports) {
    const auto stem = file_stem(r);
    if (fmt != OutputFormat::json && !files.emplace(stem + ".csv", render_csv(r)).second)
      throw ReportError("two reports map to " + stem + ".csv");
    if (fmt != OutputFormat::csv && !files.emplace(stem + ".json", to_json(r).dump(2) + "\n").second)
      throw ReportError("two reports map to " + stem + ".json");
  }
  return files;
}

// Everything is rendered before the first byte is written, so a failing
// computation never leaves a partial report behind.
inline void write_reports(const std::vector<Report>& reports, const std::filesystem::path& out_dir, OutputFormat fmt) {
  const auto files = render_files(reports, fmt);
  std::filesystem::create_directories(out_dir);
  for (const auto& [name, contents] : files) write_file_bytes(out_dir / name, contents);
}

// Merges every report JSON in `dir` (non-recursive) keyed by metric/grouping.
inline json merge_reports(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ReportError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> paths;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());

  std::map<std::string, json> merged;
  std::map<std::string, std::string> origin;
  for (const auto& p : paths) {
    json j;
    try {
      j = json::parse(read_file_bytes(p));
    } catch (const json::parse_error& e) {
      throw ReportError(p.string() + ": " + e.what());
    }
    if (j.is_object() && j.value("schema", std::string{}) == kSummarySchema) continue;
    if (auto problems = validate_report_json(j); !problems.empty())
      throw ReportError(p.string() + ": " + problems.front());
    const std::string key = j["metric"].get<std::string>() + "/" + j["grouping"].get<std::string>();
    if (merged.count(key))
      throw ReportError("duplicate report key " + key + " in " + origin[key] + " and " + p.filename().string());
    origin[key] = p.filename().string();
    merged.emplace(key, std::move(j));
  }
  if (merged.empty()) throw ReportError("no report files in " + dir.string());

  json out;
  out["schema"] = kSummarySchema;
  out["reports"] = json::object();
  for (auto& [k, v] : merged) out["reports"][k] = std::move(v);
  return out;
}

inline std::vector<std::string> validate_summary_json(const json& j) {
  std::vector<std::string> problems;
  if (!j.is_object() || j.value("schema", std::string{}) != kSummarySchema) return {"not a summary document"};
  if (!j.contains("reports") || !j["reports"].is_object()) return {"summary without 'reports' object"};
  for (const auto& [key, rep] : j["reports"].items()) {
    for (auto& p : validate_report_json(rep)) problems.push_back(key + ": " + p);
    if (rep.is_object() && rep.contains("metric") && rep.contains("grouping") &&
        key != rep["metric"].get<std::string>() + "/" + rep["grouping"].get<std::string>())
      problems.push_back(key + ": key does not match metric/grouping");
  }
  return problems;
}

}  // namespace ffnlens::report
