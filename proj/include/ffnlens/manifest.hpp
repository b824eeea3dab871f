#pragma once

// Manifest: the JSON document binding a directory of FFNS snapshot files to
// the model, corpus, tokenization and capture options that produced them.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ffnlens/snapshot.hpp"

namespace ffnlens {

inline constexpr int kManifestFormatVersion = 1;

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const RowRange&, const RowRange&) = default;
};

struct SentenceRecord {
  std::string sentence_id;
  std::string language;
  std::string test_set;  // empty when the corpus has a single test set
  std::vector<std::string> words;
  std::vector<std::vector<std::string>> subwords_per_word;
  RowRange prefix_row_range;
};

struct SnapshotEntry {
  std::string language;
  std::size_t layer = 0;
  Sublayer sublayer = Sublayer::detector_raw;
  std::string file;  // relative to the snapshot directory
};

struct Manifest {
  int format_version = kManifestFormatVersion;
  std::string model_id;
  std::size_t num_layers = 0;
  std::vector<Sublayer> sublayers;
  std::map<Sublayer, std::size_t> widths;  // cols per sublayer
  std::vector<std::string> languages;
  std::string corpus_id;
  std::string tokenizer;
  double epsilon_default = 1e-3;
  nlohmann::ordered_json model_config = nlohmann::ordered_json::object();
  std::vector<SentenceRecord> sentences;
  std::vector<SnapshotEntry> snapshots;

  // Sentences of one language in row order.
  std::vector<const SentenceRecord*> sentences_of(const std::string& language) const {
    std::vector<const SentenceRecord*> out;
    for (const auto& s : sentences)
      if (s.language == language) out.push_back(&s);
    std::stable_sort(out.begin(), out.end(), [](const SentenceRecord* a, const SentenceRecord* b) {
      return a->prefix_row_range.begin < b->prefix_row_range.begin;
    });
    return out;
  }

  std::size_t declared_rows(const std::string& language) const {
    std::size_t n = 0;
    for (const auto& s : sentences)
      if (s.language == language) n += s.words.size();
    return n;
  }

  const SnapshotEntry* find_snapshot(const std::string& language, std::size_t layer, Sublayer sublayer) const {
    for (const auto& e : snapshots)
      if (e.language == language && e.layer == layer && e.sublayer == sublayer) return &e;
    return nullptr;
  }

  bool has_language(const std::string& language) const {
    return std::find(languages.begin(), languages.end(), language) != languages.end();
  }
};

inline std::string snapshot_file_name(const std::string& language, std::size_t layer, Sublayer sublayer) {
  std::string idx = std::to_string(layer);
  if (idx.size() < 3) idx.insert(0, 3 - idx.size(), '0');
  return language + ".L" + idx + "." + std::string(to_string(sublayer)) + ".ffns";
}

// ---------------------------------------------------------------- JSON ----

inline nlohmann::ordered_json to_json(const Manifest& m) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["format_version"] = m.format_version;
  j["model_id"] = m.model_id;
  j["num_layers"] = m.num_layers;
  j["sublayers"] = ordered_json::array();
  for (Sublayer s : m.sublayers) j["sublayers"].push_back(to_string(s));
  j["widths"] = ordered_json::object();
  for (const auto& [s, w] : m.widths) j["widths"][std::string(to_string(s))] = w;
  j["languages"] = m.languages;
  j["corpus_id"] = m.corpus_id;
  j["tokenizer"] = m.tokenizer;
  j["epsilon_default"] = m.epsilon_default;
  j["model_config"] = m.model_config;
  j["sentences"] = ordered_json::array();
  for (const auto& s : m.sentences) {
    ordered_json r;
    r["sentence_id"] = s.sentence_id;
    r["language"] = s.language;
    if (!s.test_set.empty()) r["test_set"] = s.test_set;
    r["words"] = s.words;
    r["subwords_per_word"] = s.subwords_per_word;
    r["prefix_row_range"] = {s.prefix_row_range.begin, s.prefix_row_range.end};
    j["sentences"].push_back(std::move(r));
  }
  j["snapshots"] = ordered_json::array();
  for (const auto& e : m.snapshots) {
    j["snapshots"].push_back(
        {{"language", e.language}, {"layer", e.layer}, {"sublayer", to_string(e.sublayer)}, {"file", e.file}});
  }
  return j;
}

namespace detail {

template <typename T>
T required(const nlohmann::ordered_json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ManifestError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(where + ": field '" + key + "' has wrong type (" + e.what() + ")");
  }
}

inline Sublayer required_sublayer(const std::string& name, const std::string& where) {
  auto s = parse_sublayer(name);
  if (!s) throw ManifestError(where + ": unknown sublayer '" + name + "'");
  return *s;
}

}  // namespace detail

inline Manifest manifest_from_json(const nlohmann::ordered_json& j) {
  using detail::required;
  Manifest m;
  m.format_version = required<int>(j, "format_version", "manifest");
  if (m.format_version != kManifestFormatVersion)
    throw ManifestError("manifest: unsupported format_version " + std::to_string(m.format_version));
  m.model_id = required<std::string>(j, "model_id", "manifest");
  m.num_layers = required<std::size_t>(j, "num_layers", "manifest");
  for (const auto& name : required<std::vector<std::string>>(j, "sublayers", "manifest"))
    m.sublayers.push_back(detail::required_sublayer(name, "manifest.sublayers"));
  for (const auto& [name, w] : required<std::map<std::string, std::size_t>>(j, "widths", "manifest"))
    m.widths[detail::required_sublayer(name, "manifest.widths")] = w;
  m.languages = required<std::vector<std::string>>(j, "languages", "manifest");
  m.corpus_id = required<std::string>(j, "corpus_id", "manifest");
  m.tokenizer = j.value("tokenizer", std::string{});
  m.epsilon_default = required<double>(j, "epsilon_default", "manifest");
  if (j.contains("model_config")) m.model_config = j.at("model_config");
  const auto& sentences = j.contains("sentences") ? j.at("sentences") : throw ManifestError("manifest: missing field 'sentences'");
  if (!sentences.is_array()) throw ManifestError("manifest: 'sentences' must be an array");
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& r = sentences[i];
    const std::string where = "manifest.sentences[" + std::to_string(i) + "]";
    SentenceRecord s;
    s.sentence_id = required<std::string>(r, "sentence_id", where);
    s.language = required<std::string>(r, "language", where);
    s.test_set = r.value("test_set", std::string{});
    s.words = required<std::vector<std::string>>(r, "words", where);
    s.subwords_per_word = required<std::vector<std::vector<std::string>>>(r, "subwords_per_word", where);
    const auto range = required<std::vector<std::size_t>>(r, "prefix_row_range", where);
    if (range.size() != 2) throw ManifestError(where + ": prefix_row_range must be [start, end)");
    s.prefix_row_range = {range[0], range[1]};
    m.sentences.push_back(std::move(s));
  }
  const auto& snaps = j.contains("snapshots") ? j.at("snapshots") : throw ManifestError("manifest: missing field 'snapshots'");
  if (!snaps.is_array()) throw ManifestError("manifest: 'snapshots' must be an array");
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    const std::string where = "manifest.snapshots[" + std::to_string(i) + "]";
    SnapshotEntry e;
    e.language = required<std::string>(snaps[i], "language", where);
    e.layer = required<std::size_t>(snaps[i], "layer", where);
    e.sublayer = detail::required_sublayer(required<std::string>(snaps[i], "sublayer", where), where);
    e.file = required<std::string>(snaps[i], "file", where);
    m.snapshots.push_back(std::move(e));
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  try {
    return manifest_from_json(nlohmann::ordered_json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ManifestError(path.string() + ": " + e.what());
  }
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  write_file_bytes(path, to_json(m).dump(2) + "\n");
}

// ---------------------------------------------------------- validation ----

struct Violation {
  std::string subject;  // file path or field that is wrong
  std::string message;
};

inline std::string to_string(const Violation& v) { return v.subject + ": " + v.message; }

inline std::vector<Violation> validate_manifest(const Manifest& m, const std::filesystem::path& snapshot_dir) {
  std::vector<Violation> out;
  auto add = [&out](std::string subject, std::string message) {
    out.push_back({std::move(subject), std::move(message)});
  };
  auto range_str = [](const RowRange& r) {
    return "[" + std::to_string(r.begin) + ", " + std::to_string(r.end) + ")";
  };

  if (m.format_version != kManifestFormatVersion)
    add("format_version", "unsupported version " + std::to_string(m.format_version));
  if (m.languages.empty()) add("languages", "no languages declared");
  if (m.num_layers == 0) add("num_layers", "must be >= 1");
  if (m.sublayers.empty()) add("sublayers", "no sublayers declared");
  if (!(m.epsilon_default >= 0)) add("epsilon_default", "must be >= 0");
  for (Sublayer s : m.sublayers)
    if (!m.widths.count(s) || m.widths.at(s) == 0)
      add("widths." + std::string(to_string(s)), "missing or zero width");

  std::set<std::pair<std::string, std::string>> ids;
  for (const auto& s : m.sentences) {
    const std::string subject = "sentence " + s.language + "/" + s.sentence_id;
    if (!m.has_language(s.language)) add(subject, "language '" + s.language + "' not declared");
    if (!ids.insert({s.language, s.sentence_id}).second) add(subject, "duplicate sentence_id");
    if (s.words.empty()) add(subject, "no words");
    if (s.subwords_per_word.size() != s.words.size())
      add(subject, "subwords_per_word has " + std::to_string(s.subwords_per_word.size()) + " entries for " +
                       std::to_string(s.words.size()) + " words");
    for (std::size_t w = 0; w < s.subwords_per_word.size(); ++w)
      if (s.subwords_per_word[w].empty()) add(subject, "word " + std::to_string(w) + " has no subwords");
    if (s.prefix_row_range.end < s.prefix_row_range.begin ||
        s.prefix_row_range.size() != s.words.size())
      add(subject, "prefix_row_range " + range_str(s.prefix_row_range) + " does not span " +
                       std::to_string(s.words.size()) + " prefixes");
  }

  // Ranges of one language must tile [0, total) in order.
  for (const auto& lang : m.languages) {
    std::size_t next = 0;
    const auto sents = m.sentences_of(lang);
    if (sents.empty()) add("language " + lang, "no sentences");
    for (const auto* s : sents) {
      if (s->prefix_row_range.begin != next)
        add("sentence " + lang + "/" + s->sentence_id,
            "prefix_row_range " + range_str(s->prefix_row_range) + " does not start at row " + std::to_string(next));
      next = std::max(next, s->prefix_row_range.end);
    }
  }

  std::set<std::tuple<std::string, std::size_t, Sublayer>> seen;
  for (const auto& e : m.snapshots) {
    const std::string subject = (snapshot_dir / e.file).string();
    if (!m.has_language(e.language)) add(subject, "language '" + e.language + "' not declared");
    if (e.layer >= m.num_layers) add(subject, "layer " + std::to_string(e.layer) + " >= num_layers");
    if (std::find(m.sublayers.begin(), m.sublayers.end(), e.sublayer) == m.sublayers.end())
      add(subject, "sublayer " + std::string(to_string(e.sublayer)) + " not declared");
    if (!seen.insert({e.language, e.layer, e.sublayer}).second) add(subject, "duplicate snapshot cell");
  }
  for (const auto& lang : m.languages)
    for (std::size_t l = 0; l < m.num_layers; ++l)
      for (Sublayer s : m.sublayers)
        if (!seen.count({lang, l, s}))
          add("snapshots", "no entry for " + lang + " layer " + std::to_string(l) + " " + std::string(to_string(s)));

  for (const auto& e : m.snapshots) {
    const auto path = snapshot_dir / e.file;
    if (!std::filesystem::exists(path)) {
      add(path.string(), "file does not exist");
      continue;
    }
    SnapshotHeader h{};
    try {
      h = read_snapshot_header(path);
    } catch (const SnapshotError& err) {
      add(path.string(), err.what());
      continue;
    }
    const auto size = std::filesystem::file_size(path);
    if (size != snapshot_file_size(h.rows, h.cols)) {
      add(path.string(), "file size " + std::to_string(size) + " does not match header " + std::to_string(h.rows) +
                             "x" + std::to_string(h.cols));
      continue;
    }
    if (auto it = m.widths.find(e.sublayer); it != m.widths.end() && h.cols != it->second)
      add(path.string(), "cols " + std::to_string(h.cols) + " != declared width " + std::to_string(it->second));
    const std::size_t declared = m.declared_rows(e.language);
    if (h.rows != declared) {
      std::string detail;
      for (const auto* s : m.sentences_of(e.language))
        if (s->prefix_row_range.end > h.rows)
          detail += (detail.empty() ? "" : ", ") + s->sentence_id + " " + range_str(s->prefix_row_range);
      add(path.string(), "rows " + std::to_string(h.rows) + " != declared prefix total " + std::to_string(declared) +
                             (detail.empty() ? std::string(" (extra rows past the last sentence)")
                                             : " (sentence ranges past end: " + detail + ")"));
    }
  }
  return out;
}

}  // namespace ffnlens
