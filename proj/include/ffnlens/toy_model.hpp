#pragma once

// A small deterministic pre-norm decoder-only transformer. Its only purpose is
// to produce FFN activations (detector pre/post GELU, combinator output) for
// the analysis pipeline without an external checkpoint.

#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ffnlens/corpus.hpp"
#include "ffnlens/manifest.hpp"
#include "ffnlens/parallel.hpp"
#include "ffnlens/snapshot.hpp"

namespace ffnlens::toy {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ToyConfig {
  std::size_t vocab_size = 256;
  std::size_t d_model = 32;
  std::size_t d_ffn = 128;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t max_seq_len = 64;
  std::uint64_t seed = 42;

  void validate() const {
    if (vocab_size < 1 || d_model < 1 || d_ffn < 1 || n_layers < 1 || n_heads < 1 || max_seq_len < 1)
      throw ModelError("toy config: all counts must be >= 1");
    if (d_model % n_heads != 0) throw ModelError("toy config: d_model must be divisible by n_heads");
    if (d_ffn < d_model) throw ModelError("toy config: d_ffn must be >= d_model");
  }
};

inline nlohmann::ordered_json to_json(const ToyConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model}, {"d_ffn", c.d_ffn},         {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},       {"max_seq_len", c.max_seq_len}, {"seed", c.seed}};
}

inline ToyConfig config_from_json(const nlohmann::json& j) {
  ToyConfig c;
  try {
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.d_model = j.value("d_model", c.d_model);
    c.d_ffn = j.value("d_ffn", c.d_ffn);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("toy config: ") + e.what());
  }
  c.validate();
  return c;
}

// ------------------------------------------------------------------ RNG ----

inline constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t state) noexcept : state_(state) {}
  constexpr std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// Box-Muller over a SplitMix64 stream; both outputs of each pair are used.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::string_view name)
      : rng_(seed ^ (fnv1a64(name) * 0x9e3779b97f4a7c15ULL)) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(rng_.next() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(rng_.next() >> 11) * 0x1.0p-53;          // [0, 1)
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  SplitMix64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline constexpr double kInitStd = 0.02;

inline std::vector<float> normal_init(std::uint64_t seed, std::string_view name, std::size_t n) {
  NormalStream s(seed, name);
  std::vector<float> out(n);
  for (auto& v : out) v = static_cast<float>(kInitStd * s.next());
  return out;
}

// ------------------------------------------------------------ parameters ----

struct Linear {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<float> weight;  // in x out, row-major: y = x * W + b
  std::vector<float> bias;    // out

  std::size_t parameter_count() const noexcept { return weight.size() + bias.size(); }
};

struct LayerNorm {
  std::vector<float> gain;
  std::vector<float> bias;
  std::size_t parameter_count() const noexcept { return gain.size() + bias.size(); }
};

struct Block {
  LayerNorm ln_attn;
  Linear q, k, v, o;
  LayerNorm ln_ffn;
  Linear detector;    // d_model -> d_ffn
  Linear combinator;  // d_ffn -> d_model
};

struct ToyModel {
  ToyConfig config;
  std::vector<float> token_embedding;     // vocab x d_model
  std::vector<float> position_embedding;  // max_seq_len x d_model
  std::vector<Block> blocks;

  std::size_t parameter_count() const noexcept {
    std::size_t n = token_embedding.size() + position_embedding.size();
    for (const auto& b : blocks)
      n += b.ln_attn.parameter_count() + b.q.parameter_count() + b.k.parameter_count() + b.v.parameter_count() +
           b.o.parameter_count() + b.ln_ffn.parameter_count() + b.detector.parameter_count() +
           b.combinator.parameter_count();
    return n;
  }
};

// Embeddings, projection weights and projection biases ~ N(0, 0.02); layer
// norms start at gain 1, bias 0.
inline ToyModel init_weights(const ToyConfig& cfg) {
  cfg.validate();
  ToyModel m;
  m.config = cfg;
  const std::size_t d = cfg.d_model;
  m.token_embedding = normal_init(cfg.seed, "token_embedding", cfg.vocab_size * d);
  m.position_embedding = normal_init(cfg.seed, "position_embedding", cfg.max_seq_len * d);
  auto linear = [&](const std::string& name, std::size_t in, std::size_t out) {
    return Linear{in, out, normal_init(cfg.seed, name + ".weight", in * out),
                  normal_init(cfg.seed, name + ".bias", out)};
  };
  auto norm = [d] { return LayerNorm{std::vector<float>(d, 1.0f), std::vector<float>(d, 0.0f)}; };
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    m.blocks.push_back(Block{norm(), linear(p + "attn.q", d, d), linear(p + "attn.k", d, d),
                             linear(p + "attn.v", d, d), linear(p + "attn.o", d, d), norm(),
                             linear(p + "ffn.detector", d, cfg.d_ffn), linear(p + "ffn.combinator", cfg.d_ffn, d)});
  }
  return m;
}

// --------------------------------------------------------------- forward ----

struct CapturePoint {
  std::size_t layer_index = 0;
  Sublayer sublayer = Sublayer::detector_raw;
  friend auto operator<=>(const CapturePoint&, const CapturePoint&) = default;
};

inline double gelu_tanh(double x) noexcept {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

// Dense row-major activations, one row per sequence position.
struct Activations {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;
  std::span<const float> row(std::size_t r) const { return std::span<const float>(data).subspan(r * cols, cols); }
};

namespace detail {

inline void apply_linear(const Linear& lin, std::span<const float> x, std::span<float> y) {
  for (std::size_t o = 0; o < lin.out; ++o) {
    double acc = lin.bias[o];
    for (std::size_t i = 0; i < lin.in; ++i) acc += static_cast<double>(x[i]) * lin.weight[i * lin.out + o];
    y[o] = static_cast<float>(acc);
  }
}

inline void apply_layer_norm(const LayerNorm& ln, std::span<const float> x, std::span<float> y) {
  constexpr double eps = 1e-5;
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + eps);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = static_cast<float>((x[i] - mean) * inv * ln.gain[i] + ln.bias[i]);
}

}  // namespace detail

inline void check_tokens(const ToyConfig& cfg, std::span<const std::uint32_t> tokens) {
  if (tokens.empty()) throw ModelError("forward: empty token sequence");
  if (tokens.size() > cfg.max_seq_len)
    throw ModelError("forward: sequence length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                     std::to_string(cfg.max_seq_len));
  for (std::size_t t = 0; t < tokens.size(); ++t)
    if (tokens[t] >= cfg.vocab_size)
      throw ModelError("forward: token id " + std::to_string(tokens[t]) + " at position " + std::to_string(t) +
                       " out of range");
}

// All-position activations at the requested capture points. Every position is
// computed from positions <= itself only, with a fixed operation order, so a
// prefix run standalone reproduces the same rows.
inline std::map<CapturePoint, Activations> forward_trace(const ToyModel& m, std::span<const std::uint32_t> tokens,
                                                         std::span<const CapturePoint> capture) {
  const ToyConfig& cfg = m.config;
  check_tokens(cfg, tokens);
  for (const auto& c : capture)
    if (c.layer_index >= cfg.n_layers) throw ModelError("forward: capture layer out of range");

  const std::size_t T = tokens.size();
  const std::size_t d = cfg.d_model;
  const std::size_t f = cfg.d_ffn;
  const std::size_t heads = cfg.n_heads;
  const std::size_t hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  std::vector<float> h(T * d);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < d; ++i)
      h[t * d + i] = m.token_embedding[tokens[t] * d + i] + m.position_embedding[t * d + i];

  std::vector<float> x(T * d), q(T * d), k(T * d), v(T * d), ctx(T * d), proj(d);
  std::vector<float> raw(T * f), sel(T * f), comb(T * d);
  std::vector<double> scores(T);
  std::map<CapturePoint, Activations> out;
  auto span_row = [](std::vector<float>& buf, std::size_t r, std::size_t w) {
    return std::span<float>(buf).subspan(r * w, w);
  };

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const Block& b = m.blocks[l];
    for (std::size_t t = 0; t < T; ++t) {
      detail::apply_layer_norm(b.ln_attn, span_row(h, t, d), span_row(x, t, d));
      detail::apply_linear(b.q, span_row(x, t, d), span_row(q, t, d));
      detail::apply_linear(b.k, span_row(x, t, d), span_row(k, t, d));
      detail::apply_linear(b.v, span_row(x, t, d), span_row(v, t, d));
    }
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t hh = 0; hh < heads; ++hh) {
        const std::size_t off = hh * hd;
        double max_score = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= t; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < hd; ++i) s += static_cast<double>(q[t * d + off + i]) * k[j * d + off + i];
          scores[j] = s * scale;
          max_score = std::max(max_score, scores[j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j <= t; ++j) {
          scores[j] = std::exp(scores[j] - max_score);
          denom += scores[j];
        }
        for (std::size_t i = 0; i < hd; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j <= t; ++j) acc += scores[j] * v[j * d + off + i];
          ctx[t * d + off + i] = static_cast<float>(acc / denom);
        }
      }
      detail::apply_linear(b.o, span_row(ctx, t, d), proj);
      for (std::size_t i = 0; i < d; ++i) h[t * d + i] += proj[i];
    }
    for (std::size_t t = 0; t < T; ++t) {
      detail::apply_layer_norm(b.ln_ffn, span_row(h, t, d), span_row(x, t, d));
      detail::apply_linear(b.detector, span_row(x, t, d), span_row(raw, t, f));
      for (std::size_t i = 0; i < f; ++i) sel[t * f + i] = static_cast<float>(gelu_tanh(raw[t * f + i]));
      detail::apply_linear(b.combinator, span_row(sel, t, f), span_row(comb, t, d));
      for (std::size_t i = 0; i < d; ++i) h[t * d + i] += comb[t * d + i];
    }
    for (const auto& c : capture) {
      if (c.layer_index != l) continue;
      switch (c.sublayer) {
        case Sublayer::detector_raw: out[c] = Activations{T, f, raw}; break;
        case Sublayer::detector_selected: out[c] = Activations{T, f, sel}; break;
        case Sublayer::combinator: out[c] = Activations{T, d, comb}; break;
      }
    }
  }
  return out;
}

// Last-position activation row per capture point.
inline std::map<CapturePoint, std::vector<float>> forward_capture(const ToyModel& m,
                                                                  std::span<const std::uint32_t> tokens,
                                                                  std::span<const CapturePoint> capture) {
  std::map<CapturePoint, std::vector<float>> out;
  for (auto& [point, acts] : forward_trace(m, tokens, capture)) {
    auto last = acts.row(acts.rows - 1);
    out.emplace(point, std::vector<float>(last.begin(), last.end()));
  }
  return out;
}

inline std::uint32_t token_id(std::string_view subword, std::size_t vocab_size) noexcept {
  return static_cast<std::uint32_t>(fnv1a64(subword) % vocab_size);
}

inline std::vector<std::uint32_t> tokenize(const std::vector<std::string>& subwords, std::size_t vocab_size) {
  std::vector<std::uint32_t> ids;
  ids.reserve(subwords.size());
  for (const auto& s : subwords) ids.push_back(token_id(s, vocab_size));
  return ids;
}

// ------------------------------------------------------- corpus capture ----

struct CapturedCell {
  SnapshotEntry entry;
  Snapshot snapshot;
};

struct CaptureResult {
  Manifest manifest;
  std::vector<CapturedCell> cells;  // ordered by (language, layer, sublayer)
};

inline CaptureResult capture_corpus(const ToyConfig& cfg, const std::vector<CorpusSentence>& corpus,
                                    std::string corpus_id) {
  const ToyModel model = init_weights(cfg);

  Manifest man;
  man.model_id = "toy-decoder-seed" + std::to_string(cfg.seed);
  man.num_layers = cfg.n_layers;
  man.sublayers.assign(kAllSublayers.begin(), kAllSublayers.end());
  man.widths = {{Sublayer::detector_raw, cfg.d_ffn},
                {Sublayer::detector_selected, cfg.d_ffn},
                {Sublayer::combinator, cfg.d_model}};
  man.corpus_id = std::move(corpus_id);
  man.tokenizer = std::string(kFallbackTokenizerName);
  man.model_config = to_json(cfg);
  for (const auto& s : corpus)
    if (!man.has_language(s.language)) man.languages.push_back(s.language);

  std::vector<CapturePoint> points;
  for (std::size_t l = 0; l < cfg.n_layers; ++l)
    for (Sublayer s : kAllSublayers) points.push_back({l, s});

  CaptureResult result;
  for (const auto& lang : man.languages) {
    // One forward pass per prefix, exactly as the prefix protocol states.
    std::vector<std::vector<std::uint32_t>> prefix_tokens;
    for (const auto& s : corpus) {
      if (s.language != lang) continue;
      const PrefixSet ps = enumerate_prefixes(s.words, s.subwords_per_word, s.sentence_id);
      SentenceRecord rec{s.sentence_id, s.language, s.test_set, s.words, s.subwords_per_word,
                         {prefix_tokens.size(), prefix_tokens.size() + ps.prefixes.size()}};
      for (const auto& p : ps.prefixes) prefix_tokens.push_back(tokenize(p, cfg.vocab_size));
      man.sentences.push_back(std::move(rec));
    }

    std::vector<std::map<CapturePoint, std::vector<float>>> rows(prefix_tokens.size());
    parallel_for(prefix_tokens.size(), [&](std::size_t i) { rows[i] = forward_capture(model, prefix_tokens[i], points); });

    for (const auto& point : points) {
      const std::size_t width = man.widths.at(point.sublayer);
      std::vector<float> data;
      data.reserve(rows.size() * width);
      for (const auto& r : rows) data.insert(data.end(), r.at(point).begin(), r.at(point).end());
      SnapshotEntry e{lang, point.layer_index, point.sublayer,
                      snapshot_file_name(lang, point.layer_index, point.sublayer)};
      man.snapshots.push_back(e);
      result.cells.push_back({e, Snapshot(rows.size(), width, std::move(data), point.sublayer, point.layer_index)});
    }
  }
  result.manifest = std::move(man);
  return result;
}

inline void write_capture(const CaptureResult& r, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const auto& c : r.cells) write_snapshot(c.snapshot, out_dir / c.entry.file);
  save_manifest(r.manifest, out_dir / "manifest.json");
}

}  // namespace ffnlens::toy
