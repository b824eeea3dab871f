#pragma once

// Corpus preparation: sentence cleaning, word-boundary prefix enumeration and
// the deterministic fallback subword chunker. Corpora arrive as JSON lines.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ffnlens/unicode.hpp"

namespace ffnlens {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RawSentence {
  std::string text;
  std::string language;
};

struct PrefixSet {
  std::string sentence_id;
  std::vector<std::vector<std::string>> prefixes;
};

// Removes every punctuation code point except a sentence-final one, which is
// kept as its own token. A multi-mark ending such as "?!" keeps only the last
// mark.
inline std::vector<std::string> clean_sentence(const RawSentence& s) {
  std::u32string cps;
  try {
    cps = unicode::decode(s.text);
  } catch (const unicode::Utf8Error& e) {
    throw CorpusError(std::string("sentence is not valid UTF-8: ") + e.what());
  }
  while (!cps.empty() && unicode::is_space(cps.back())) cps.pop_back();
  if (cps.empty()) throw CorpusError("empty sentence");

  std::u32string final_mark;
  if (unicode::is_punctuation(cps.back())) {
    final_mark.push_back(cps.back());
    cps.pop_back();
  }

  std::vector<std::string> words;
  std::u32string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(unicode::encode(current));
    current.clear();
  };
  for (char32_t cp : cps) {
    if (unicode::is_space(cp)) {
      flush();
    } else if (!unicode::is_punctuation(cp)) {
      current.push_back(cp);
    }
  }
  flush();

  if (words.empty()) throw CorpusError("sentence consists only of punctuation");
  if (!final_mark.empty()) words.push_back(unicode::encode(final_mark));
  return words;
}

// Prefix k is the concatenation of the subwords of words 0..k.
inline PrefixSet enumerate_prefixes(const std::vector<std::string>& words,
                                    const std::vector<std::vector<std::string>>& subwords_per_word,
                                    std::string sentence_id = {}) {
  if (words.size() != subwords_per_word.size())
    throw CorpusError("enumerate_prefixes: " + std::to_string(words.size()) + " words but " +
                      std::to_string(subwords_per_word.size()) + " subword lists");
  if (words.empty()) throw CorpusError("enumerate_prefixes: no words");
  PrefixSet out{std::move(sentence_id), {}};
  out.prefixes.reserve(words.size());
  std::vector<std::string> running;
  for (std::size_t w = 0; w < subwords_per_word.size(); ++w) {
    if (subwords_per_word[w].empty())
      throw CorpusError("enumerate_prefixes: word " + std::to_string(w) + " has no subwords");
    running.insert(running.end(), subwords_per_word[w].begin(), subwords_per_word[w].end());
    out.prefixes.push_back(running);
  }
  return out;
}

inline constexpr std::size_t kFallbackChunkCodepoints = 4;
inline constexpr std::string_view kFallbackTokenizerName = "fallback_chunker_4cp";

inline std::vector<std::string> fallback_chunker(std::string_view word) {
  const std::u32string cps = unicode::decode(word);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < cps.size(); i += kFallbackChunkCodepoints)
    out.push_back(unicode::encode(std::u32string_view(cps).substr(i, kFallbackChunkCodepoints)));
  return out;
}

// ------------------------------------------------------------ JSONL input ----

struct CorpusSentence {
  std::string sentence_id;
  std::string language;
  std::string test_set;
  std::vector<std::string> words;
  std::vector<std::vector<std::string>> subwords_per_word;
};

// Accepts {sentence_id, language, text} (cleaned and chunked here) or the
// pre-tokenized {sentence_id, language, words, subwords_per_word}. An optional
// "test_set" string groups sentences for intra-language comparisons.
inline CorpusSentence parse_corpus_record(const nlohmann::json& j) {
  if (!j.is_object()) throw CorpusError("record is not a JSON object");
  auto str = [&j](const char* key) {
    if (!j.contains(key) || !j.at(key).is_string()) throw CorpusError(std::string("missing string field '") + key + "'");
    return j.at(key).get<std::string>();
  };
  CorpusSentence out;
  if (j.contains("sentence_id") && j.at("sentence_id").is_number_integer())
    out.sentence_id = std::to_string(j.at("sentence_id").get<long long>());
  else
    out.sentence_id = str("sentence_id");
  out.language = str("language");
  if (out.language.empty()) throw CorpusError("empty language");
  if (j.contains("test_set")) out.test_set = str("test_set");

  if (j.contains("words")) {
    try {
      out.words = j.at("words").get<std::vector<std::string>>();
      out.subwords_per_word = j.at("subwords_per_word").get<std::vector<std::vector<std::string>>>();
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(std::string("bad pre-tokenized record: ") + e.what());
    }
    enumerate_prefixes(out.words, out.subwords_per_word);  // shape check
  } else {
    out.words = clean_sentence({str("text"), out.language});
    for (const auto& w : out.words) out.subwords_per_word.push_back(fallback_chunker(w));
  }
  return out;
}

inline std::vector<CorpusSentence> read_corpus_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus " + path.string());
  std::vector<CorpusSentence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_corpus_record(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const std::exception& e) {
      throw CorpusError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (out.empty()) throw CorpusError(path.string() + ": no sentences");
  return out;
}

}  // namespace ffnlens
