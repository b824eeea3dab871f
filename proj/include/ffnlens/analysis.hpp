#pragma once

// Orchestration behind the command line: opening validated snapshot
// directories, toy capture, and turning (metric, grouping, flags) into
// reports.

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ffnlens/corpus.hpp"
#include "ffnlens/manifest.hpp"
#include "ffnlens/metrics.hpp"
#include "ffnlens/parallel.hpp"
#include "ffnlens/report.hpp"
#include "ffnlens/snapshot.hpp"
#include "ffnlens/toy_model.hpp"
#include "ffnlens/unicode.hpp"

namespace ffnlens {

// Exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg, std::vector<Violation> violations = {})
      : std::runtime_error(msg), violations_(std::move(violations)) {}
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  std::vector<Violation> violations_;
};

class SnapshotStore {
 public:
  // Loads and validates; any violation is a DataError carrying the list.
  static SnapshotStore open(const std::filesystem::path& dir, std::optional<std::filesystem::path> manifest_path = {}) {
    const auto mpath = manifest_path.value_or(dir / "manifest.json");
    SnapshotStore s;
    s.dir_ = dir;
    try {
      s.manifest_ = load_manifest(mpath);
    } catch (const ManifestError& e) {
      throw DataError(e.what());
    }
    if (auto v = validate_manifest(s.manifest_, dir); !v.empty())
      throw DataError("snapshot directory " + dir.string() + " failed validation", std::move(v));
    return s;
  }

  const Manifest& manifest() const noexcept { return manifest_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }

  Snapshot load(const std::string& language, std::size_t layer, Sublayer sublayer) const {
    const SnapshotEntry* e = manifest_.find_snapshot(language, layer, sublayer);
    if (!e)
      throw DataError("no snapshot for " + language + " layer " + std::to_string(layer) + " " +
                      std::string(to_string(sublayer)));
    return read_snapshot(dir_ / e->file, sublayer, layer);
  }

  std::vector<Snapshot> layers(const std::string& language, Sublayer sublayer) const {
    require_sublayer(sublayer);
    std::vector<Snapshot> out;
    out.reserve(manifest_.num_layers);
    for (std::size_t l = 0; l < manifest_.num_layers; ++l) out.push_back(load(language, l, sublayer));
    return out;
  }

  void require_sublayer(Sublayer s) const {
    if (std::find(manifest_.sublayers.begin(), manifest_.sublayers.end(), s) == manifest_.sublayers.end())
      throw UsageError("sublayer " + std::string(to_string(s)) + " was not captured in " + dir_.string());
  }

 private:
  std::filesystem::path dir_;
  Manifest manifest_;
};

// Copies the given row ranges, in order, into a new snapshot.
inline Snapshot gather_rows(const Snapshot& s, const std::vector<RowRange>& ranges) {
  std::vector<float> data;
  std::size_t rows = 0;
  for (const auto& r : ranges) {
    const auto v = s.view().slice_rows(r.begin, r.end);
    data.insert(data.end(), v.data().begin(), v.data().end());
    rows += r.size();
  }
  return Snapshot(rows, s.cols(), std::move(data), s.sublayer(), s.layer_index());
}

inline std::vector<MatrixView> views(const std::vector<Snapshot>& snaps) {
  return {snaps.begin(), snaps.end()};
}

// ------------------------------------------------------------- capture ----

// Several corpus files (e.g. one per language) are concatenated in order.
inline toy::CaptureResult capture_toy(const std::filesystem::path& config_path,
                                      const std::vector<std::filesystem::path>& corpus_paths,
                                      const std::filesystem::path& out_dir) {
  toy::ToyConfig cfg;
  try {
    cfg = toy::config_from_json(nlohmann::json::parse(read_file_bytes(config_path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(config_path.string() + ": " + e.what());
  } catch (const toy::ModelError& e) {
    throw DataError(config_path.string() + ": " + e.what());
  }
  if (corpus_paths.empty()) throw UsageError("no corpus file given");
  std::vector<CorpusSentence> corpus;
  std::string corpus_id;
  try {
    for (const auto& p : corpus_paths) {
      auto part = read_corpus_jsonl(p);
      corpus.insert(corpus.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
      corpus_id += (corpus_id.empty() ? "" : "+") + p.stem().string();
    }
  } catch (const CorpusError& e) {
    throw DataError(e.what());
  }
  toy::CaptureResult result;
  try {
    result = toy::capture_corpus(cfg, corpus, corpus_id);
  } catch (const toy::ModelError& e) {
    throw DataError(e.what());
  } catch (const CorpusError& e) {
    throw DataError(e.what());
  }
  toy::write_capture(result, out_dir);
  if (auto v = validate_manifest(result.manifest, out_dir); !v.empty())
    throw DataError("captured snapshot directory failed validation", std::move(v));
  return result;
}

// ------------------------------------------------------------- analyze ----

struct AnalyzeOptions {
  std::string metric;
  Sublayer sublayer = Sublayer::detector_selected;
  std::optional<double> epsilon;  // defaults to the manifest's epsilon_default
  metrics::DistanceKind dist = metrics::DistanceKind::euclidean;
  std::optional<std::pair<std::string, std::string>> pair;
  std::optional<std::string> group;
  std::optional<std::string> language;
};

inline const std::vector<std::string>& known_metrics() {
  static const std::vector<std::string> names{"freq", "flatness", "repdist", "rankcorr", "rsa", "overlap", "normact"};
  return names;
}

inline std::pair<std::string, std::string> parse_pair(const std::string& s) {
  const auto pos = s.find(':');
  if (pos == std::string::npos || pos == 0 || pos + 1 == s.size() || s.find(':', pos + 1) != std::string::npos)
    throw UsageError("--pair must look like L1:L2, got '" + s + "'");
  return {s.substr(0, pos), s.substr(pos + 1)};
}

namespace detail {

inline std::string layer_label(std::size_t l) { return "L" + std::to_string(l); }

inline report::Report base_report(const AnalyzeOptions& o, const std::string& grouping, const std::string& kind,
                                  double epsilon, std::size_t num_layers) {
  report::Report r;
  r.metric = o.metric;
  r.grouping = grouping;
  r.group_kind = kind;
  r.parameters = {{"sublayer", to_string(o.sublayer)}, {"epsilon", epsilon}, {"dist", metrics::to_string(o.dist)}};
  r.num_layers = num_layers;
  return r;
}

inline std::vector<std::pair<std::string, std::string>> language_pairs(const Manifest& m, const AnalyzeOptions& o) {
  if (o.pair) {
    for (const auto* l : {&o.pair->first, &o.pair->second})
      if (!m.has_language(*l)) throw UsageError("language '" + *l + "' not present in the manifest");
    if (o.pair->first == o.pair->second) throw UsageError("--pair needs two different languages");
    return {*o.pair};
  }
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < m.languages.size(); ++i)
    for (std::size_t j = i + 1; j < m.languages.size(); ++j) out.emplace_back(m.languages[i], m.languages[j]);
  if (out.empty()) throw UsageError(o.metric + " needs at least two languages");
  return out;
}

inline std::map<std::string, const SentenceRecord*> by_id(const Manifest& m, const std::string& lang) {
  std::map<std::string, const SentenceRecord*> out;
  for (const auto* s : m.sentences_of(lang)) out.emplace(s->sentence_id, s);
  return out;
}

// Strict pairing: every sentence must have a partner.
inline std::vector<metrics::SentencePairing> strict_pairings(const Manifest& m, const std::string& a,
                                                             const std::string& b) {
  const auto sa = by_id(m, a);
  const auto sb = by_id(m, b);
  std::vector<metrics::SentencePairing> out;
  for (const auto& [id, rec] : sa) {
    auto it = sb.find(id);
    if (it == sb.end()) throw DataError("missing sentence pairing: " + a + "/" + id + " has no " + b + " counterpart");
    out.push_back({id, rec->prefix_row_range.begin, rec->prefix_row_range.end, it->second->prefix_row_range.begin,
                   it->second->prefix_row_range.end});
  }
  for (const auto& [id, rec] : sb)
    if (!sa.count(id)) throw DataError("missing sentence pairing: " + b + "/" + id + " has no " + a + " counterpart");
  return out;
}

inline std::map<std::string, std::vector<const SentenceRecord*>> by_test_set(const Manifest& m, const std::string& lang) {
  std::map<std::string, std::vector<const SentenceRecord*>> out;
  for (const auto* s : m.sentences_of(lang)) out[s->test_set].push_back(s);
  return out;
}

inline std::vector<RowRange> ranges_of(const std::vector<const SentenceRecord*>& sents) {
  std::vector<RowRange> out;
  for (const auto* s : sents) out.push_back(s->prefix_row_range);
  return out;
}

inline bool is_punctuation_token(const std::string& w) {
  const auto cps = unicode::decode(w);
  return std::all_of(cps.begin(), cps.end(), [](char32_t c) { return unicode::is_punctuation(c); });
}

inline std::vector<report::Report> rankcorr_series(const AnalyzeOptions& o, double eps, std::size_t L,
                                                   const std::string& grouping, const std::string& kind,
                                                   const std::vector<Snapshot>& a_layers,
                                                   const std::vector<Snapshot>& b_layers) {
  auto r = base_report(o, grouping, kind, eps, L);
  r.series.resize(L);
  parallel_for(L, [&](std::size_t l) { r.series[l] = {l, metrics::rank_correlation(a_layers[l], b_layers[l]), {}}; });
  return {std::move(r)};
}

}  // namespace detail

// Checks everything that does not need the snapshot data and fills in the
// default group. Returns the resolved group.
inline std::string check_options(AnalyzeOptions& o, std::size_t num_stores) {
  const auto& names = known_metrics();
  if (std::find(names.begin(), names.end(), o.metric) == names.end()) throw UsageError("unknown metric '" + o.metric + "'");
  if (num_stores == 0) throw UsageError("no snapshot directory given");
  if (o.group == "parallel") o.group = "pair";

  const std::map<std::string, std::vector<std::string>> allowed{
      {"freq", {"lang"}},     {"flatness", {"lang"}}, {"normact", {"lang"}},   {"repdist", {"pair"}},
      {"rankcorr", {"pair", "testset"}}, {"rsa", {"model"}}, {"overlap", {"testset"}}};
  const auto& groups = allowed.at(o.metric);
  o.group = o.group.value_or(groups.front());
  const std::string group = *o.group;
  if (std::find(groups.begin(), groups.end(), group) == groups.end())
    throw UsageError("metric " + o.metric + " does not support --group " + group);
  if (o.metric == "rsa") {
    if (num_stores != 2) throw UsageError("rsa compares two models: pass --snapshots twice");
  } else if (num_stores != 1) {
    throw UsageError("metric " + o.metric + " takes a single --snapshots directory");
  }
  if (o.epsilon && !(*o.epsilon >= 0.0)) throw UsageError("--epsilon must be >= 0");
  return group;
}

inline std::vector<report::Report> run_analysis(const std::vector<SnapshotStore>& stores, AnalyzeOptions o) {
  using report::Report;
  const std::string group = check_options(o, stores.size());

  const SnapshotStore& store = stores.front();
  const Manifest& man = store.manifest();
  const std::size_t L = man.num_layers;
  const double eps = o.epsilon.value_or(man.epsilon_default);
  if (!(eps >= 0.0)) throw UsageError("--epsilon must be >= 0");
  for (const auto& s : stores) s.require_sublayer(o.sublayer);
  if (o.language && !man.has_language(*o.language)) throw UsageError("language '" + *o.language + "' not in manifest");

  std::vector<std::string> langs = man.languages;
  if (o.language) langs = {*o.language};

  std::vector<Report> out;

  if (o.metric == "freq" || o.metric == "flatness") {
    for (const auto& lang : langs) {
      const auto layers = store.layers(lang, o.sublayer);
      auto r = detail::base_report(o, lang, group, eps, L);
      r.series.resize(L);
      parallel_for(L, [&](std::size_t l) {
        if (o.metric == "freq") {
          const auto f = metrics::activation_frequency(layers[l], eps);
          r.series[l] = {l, f.layer_mean, f.layer_std};
        } else {
          r.series[l] = {l, metrics::activation_flatness(layers[l]).layer_flatness, {}};
        }
      });
      out.push_back(std::move(r));
    }
  } else if (o.metric == "normact") {
    for (const auto& lang : langs) {
      const auto layers = store.layers(lang, o.sublayer);
      for (std::size_t l = 0; l < L; ++l) {
        const auto m = metrics::normalized_activation_matrix(layers[l]);
        auto r = detail::base_report(o, lang + ":" + detail::layer_label(l), group, eps, L);
        report::LabeledMatrix lm{"prefix_row", "neuron", {}, {}, {}};
        for (std::size_t i = 0; i < m.rows; ++i) lm.row_labels.push_back(std::to_string(i));
        for (std::size_t j = 0; j < m.cols; ++j) lm.col_labels.push_back(std::to_string(j));
        lm.values.assign(m.data.begin(), m.data.end());
        r.matrix = std::move(lm);
        r.extra["layer_index"] = l;
        out.push_back(std::move(r));
      }
    }
  } else if (o.metric == "repdist") {
    for (const auto& [a, b] : detail::language_pairs(man, o)) {
      const auto pairs = detail::strict_pairings(man, a, b);
      const auto la = store.layers(a, o.sublayer);
      const auto lb = store.layers(b, o.sublayer);
      const auto va = views(la);
      const auto vb = views(lb);
      const auto series = metrics::layer_repdist_series(va, vb, pairs, o.dist);
      auto r = detail::base_report(o, a + ":" + b, group, eps, L);
      for (std::size_t l = 0; l < L; ++l) r.series.push_back({l, series.forward[l], {}});
      r.extra["direction"] = {a, b};
      r.extra["argmin_layer"] = series.argmin_layer;
      r.extra["argmin_label"] = "most multilingual";
      r.extra["backward"] = series.backward;
      r.extra["symmetric_mean"] = series.symmetric_mean;
      out.push_back(std::move(r));
    }
  } else if (o.metric == "rankcorr" && group == "pair") {
    for (const auto& [a, b] : detail::language_pairs(man, o)) {
      // Parallel comparison over the sentences both languages share.
      const auto sa = detail::by_id(man, a);
      const auto sb = detail::by_id(man, b);
      std::vector<RowRange> ra, rb;
      for (const auto& [id, rec] : sa)
        if (auto it = sb.find(id); it != sb.end()) {
          ra.push_back(rec->prefix_row_range);
          rb.push_back(it->second->prefix_row_range);
        }
      if (ra.empty()) throw DataError("languages " + a + " and " + b + " share no sentence_id");
      std::vector<Snapshot> ga, gb;
      for (const auto& s : store.layers(a, o.sublayer)) ga.push_back(gather_rows(s, ra));
      for (const auto& s : store.layers(b, o.sublayer)) gb.push_back(gather_rows(s, rb));
      auto reps = detail::rankcorr_series(o, eps, L, a + ":" + b, group, ga, gb);
      out.insert(out.end(), std::make_move_iterator(reps.begin()), std::make_move_iterator(reps.end()));
    }
  } else if (o.metric == "rankcorr" || o.metric == "overlap") {
    bool any = false;
    for (const auto& lang : langs) {
      const auto sets = detail::by_test_set(man, lang);
      if (sets.size() < 2) continue;
      any = true;
      std::vector<std::string> set_names;
      for (const auto& kv : sets) set_names.push_back(kv.first);
      if (o.metric == "overlap") {
        std::vector<std::set<std::string>> vocab;
        for (const auto& name : set_names) {
          std::set<std::string> v;
          for (const auto* s : sets.at(name))
            for (const auto& w : s->words)
              if (!detail::is_punctuation_token(w)) v.insert(w);
          vocab.push_back(std::move(v));
        }
        const auto m = metrics::corpus_overlap(vocab);
        auto r = detail::base_report(o, lang, group, eps, L);
        r.matrix = report::LabeledMatrix{"test_set_a", "test_set_b", set_names, set_names,
                                         std::vector<std::optional<double>>(m.data.begin(), m.data.end())};
        out.push_back(std::move(r));
      } else {
        const auto layers = store.layers(lang, o.sublayer);
        for (std::size_t i = 0; i < set_names.size(); ++i)
          for (std::size_t j = i + 1; j < set_names.size(); ++j) {
            std::vector<Snapshot> ga, gb;
            for (const auto& s : layers) {
              ga.push_back(gather_rows(s, detail::ranges_of(sets.at(set_names[i]))));
              gb.push_back(gather_rows(s, detail::ranges_of(sets.at(set_names[j]))));
            }
            auto reps = detail::rankcorr_series(o, eps, L, lang + ":" + set_names[i] + ":" + set_names[j], group, ga, gb);
            out.insert(out.end(), std::make_move_iterator(reps.begin()), std::make_move_iterator(reps.end()));
          }
      }
    }
    if (!any) throw DataError(o.metric + " --group testset needs a language with at least two test sets");
  } else if (o.metric == "rsa") {
    const SnapshotStore& other = stores[1];
    const Manifest& man_b = other.manifest();
    std::vector<std::string> common;
    for (const auto& l : langs)
      if (man_b.has_language(l)) common.push_back(l);
    if (common.empty()) throw DataError("rsa: the two models share no language");
    for (const auto& lang : common) {
      const auto sa = man.sentences_of(lang);
      const auto sb = man_b.sentences_of(lang);
      bool same = sa.size() == sb.size();
      for (std::size_t i = 0; same && i < sa.size(); ++i)
        same = sa[i]->sentence_id == sb[i]->sentence_id && sa[i]->words == sb[i]->words &&
               sa[i]->prefix_row_range == sb[i]->prefix_row_range;
      if (!same) throw DataError("rsa: models were not captured on the same prefix list for " + lang);
      const auto la = store.layers(lang, o.sublayer);
      const auto lb = other.layers(lang, o.sublayer);
      const auto va = views(la);
      const auto vb = views(lb);
      const auto m = metrics::rsa_compare(va, vb);
      auto r = detail::base_report(o, man.model_id + ":" + man_b.model_id + ":" + lang, group, eps, L);
      report::LabeledMatrix lm{"layer_a", "layer_b", {}, {}, m.data};
      for (std::size_t i = 0; i < m.layers_a; ++i) lm.row_labels.push_back(detail::layer_label(i));
      for (std::size_t j = 0; j < m.layers_b; ++j) lm.col_labels.push_back(detail::layer_label(j));
      r.matrix = std::move(lm);
      r.extra["layers_b"] = man_b.num_layers;
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace ffnlens
