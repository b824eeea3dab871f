#pragma once

// Statistics over activation snapshots: sparsity (activation frequency),
// entropy-style activation flatness, cross-language minimum-distance scores,
// neuron rank correlation, RDM-based representational similarity, corpus
// vocabulary overlap and per-prefix min-max normalisation.
//
// All functions are pure. Inputs are float activations; arithmetic is double.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ffnlens/parallel.hpp"
#include "ffnlens/snapshot.hpp"

namespace ffnlens::metrics {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
};

// ------------------------------------------------- activation frequency ----

struct FreqStats {
  std::vector<double> per_neuron_frequency;
  double layer_mean = 0.0;
  double layer_std = 0.0;  // population
};

// Fraction of prefixes on which |activation| > epsilon, per neuron.
inline FreqStats activation_frequency(MatrixView s, double epsilon) {
  if (!(epsilon >= 0.0)) throw MetricError("activation_frequency: epsilon must be >= 0");
  if (s.empty()) throw MetricError("activation_frequency: empty snapshot");
  std::vector<std::size_t> counts(s.cols(), 0);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    const auto row = s.row(r);
    for (std::size_t c = 0; c < s.cols(); ++c)
      if (std::fabs(static_cast<double>(row[c])) > epsilon) ++counts[c];
  }
  FreqStats out;
  out.per_neuron_frequency.resize(s.cols());
  for (std::size_t c = 0; c < s.cols(); ++c)
    out.per_neuron_frequency[c] = static_cast<double>(counts[c]) / static_cast<double>(s.rows());
  const double n = static_cast<double>(s.cols());
  for (double f : out.per_neuron_frequency) out.layer_mean += f;
  out.layer_mean /= n;
  double var = 0.0;
  for (double f : out.per_neuron_frequency) var += (f - out.layer_mean) * (f - out.layer_mean);
  out.layer_std = std::sqrt(var / n);
  return out;
}

// ----------------------------------------------------- activation flatness ----
//
// For one prefix row x of m neurons, S(x_i) = (x_i - min x) / (max x - min x)
// and flatness(x) = -sum_i S(x_i) log2 S(x_i) / m, with 0 log 0 = 0. A row
// with max == min scores 0. The layer value is the sum over prefix rows.

inline constexpr double kMaxRowFlatness = 0.5307378454230430;  // max of -s log2 s on [0,1], at s = 1/e

template <typename T>
double row_flatness(std::span<const T> x) {
  if (x.empty()) throw MetricError("row_flatness: empty row");
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = static_cast<double>(*lo_it);
  const double hi = static_cast<double>(*hi_it);
  if (!(hi > lo)) return 0.0;
  const double range = hi - lo;
  double acc = 0.0;
  for (const T v : x) {
    const double s = (static_cast<double>(v) - lo) / range;
    if (s > 0.0) acc -= s * std::log2(s);
  }
  return acc / static_cast<double>(x.size());
}

struct FlatnessResult {
  std::vector<double> per_prefix_flatness;
  double layer_flatness = 0.0;
};

inline FlatnessResult activation_flatness(MatrixView s) {
  if (s.empty()) throw MetricError("activation_flatness: empty snapshot");
  FlatnessResult out;
  out.per_prefix_flatness.reserve(s.rows());
  for (std::size_t r = 0; r < s.rows(); ++r) {
    out.per_prefix_flatness.push_back(row_flatness(s.row(r)));
    out.layer_flatness += out.per_prefix_flatness.back();
  }
  return out;
}

// Per-row min-max scaling to [0, 1]; degenerate rows become zeros.
inline Matrix normalized_activation_matrix(MatrixView s) {
  Matrix out{s.rows(), s.cols(), std::vector<double>(s.rows() * s.cols(), 0.0)};
  for (std::size_t r = 0; r < s.rows(); ++r) {
    const auto row = s.row(r);
    const auto [lo_it, hi_it] = std::minmax_element(row.begin(), row.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) continue;
    for (std::size_t c = 0; c < s.cols(); ++c) out(r, c) = (row[c] - lo) / (hi - lo);
  }
  return out;
}

// -------------------------------------------------- representation distance ----

enum class DistanceKind { euclidean, cosine };

inline constexpr std::string_view to_string(DistanceKind k) noexcept {
  return k == DistanceKind::euclidean ? "euclidean" : "cosine";
}

inline std::optional<DistanceKind> parse_distance(std::string_view s) noexcept {
  if (s == "euclidean") return DistanceKind::euclidean;
  if (s == "cosine") return DistanceKind::cosine;
  return std::nullopt;
}

inline double squared_norm(std::span<const float> a) {
  double acc = 0.0;
  for (float v : a) acc += static_cast<double>(v) * v;
  return acc;
}

// Sum over rows of `source` of the distance to the nearest row of `target`.
// Euclidean search abandons a candidate as soon as its partial squared sum
// exceeds the best so far; the minimum is unaffected because the partial sums
// are accumulated in the same order as a full evaluation.
inline double representation_distance(MatrixView source, MatrixView target,
                                      DistanceKind kind = DistanceKind::euclidean) {
  if (source.empty() || target.empty()) throw MetricError("representation_distance: empty input");
  if (source.cols() != target.cols())
    throw MetricError("representation_distance: column mismatch " + std::to_string(source.cols()) + " vs " +
                      std::to_string(target.cols()));
  const std::size_t d = source.cols();
  double total = 0.0;

  if (kind == DistanceKind::euclidean) {
    for (std::size_t i = 0; i < source.rows(); ++i) {
      const auto a = source.row(i);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < target.rows(); ++j) {
        const auto b = target.row(j);
        double acc = 0.0;
        std::size_t c = 0;
        for (; c < d; ++c) {
          const double diff = static_cast<double>(a[c]) - b[c];
          acc += diff * diff;
          if (acc > best) break;
        }
        if (c == d && acc < best) best = acc;
      }
      total += std::sqrt(best);
    }
    return total;
  }

  std::vector<double> target_norm(target.rows());
  for (std::size_t j = 0; j < target.rows(); ++j) {
    target_norm[j] = std::sqrt(squared_norm(target.row(j)));
    if (target_norm[j] == 0.0)
      throw MetricError("representation_distance: cosine distance undefined for zero target row " + std::to_string(j));
  }
  for (std::size_t i = 0; i < source.rows(); ++i) {
    const auto a = source.row(i);
    const double na = std::sqrt(squared_norm(a));
    if (na == 0.0)
      throw MetricError("representation_distance: cosine distance undefined for zero source row " + std::to_string(i));
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < target.rows(); ++j) {
      const auto b = target.row(j);
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += static_cast<double>(a[c]) * b[c];
      const double dist = 1.0 - dot / (na * target_norm[j]);
      if (dist < best) best = dist;
    }
    total += best;
  }
  return total;
}

// Row ranges of one parallel sentence in the source and target snapshots.
struct SentencePairing {
  std::string sentence_id;
  std::size_t source_begin = 0, source_end = 0;
  std::size_t target_begin = 0, target_end = 0;
};

struct RepDistResult {
  std::map<std::string, double> per_sentence_pair_total;
  double layer_aggregate = 0.0;
};

// Pairings are reduced in ascending sentence_id order.
inline RepDistResult representation_distance_pairs(MatrixView source, MatrixView target,
                                                   std::vector<SentencePairing> pairs, DistanceKind kind) {
  std::sort(pairs.begin(), pairs.end(),
            [](const SentencePairing& a, const SentencePairing& b) { return a.sentence_id < b.sentence_id; });
  RepDistResult out;
  for (const auto& p : pairs) {
    const double v = representation_distance(source.slice_rows(p.source_begin, p.source_end),
                                             target.slice_rows(p.target_begin, p.target_end), kind);
    if (!out.per_sentence_pair_total.emplace(p.sentence_id, v).second)
      throw MetricError("representation_distance_pairs: duplicate sentence_id " + p.sentence_id);
    out.layer_aggregate += v;
  }
  return out;
}

// Lowest index wins ties.
inline std::size_t argmin_index(std::span<const double> v) {
  if (v.empty()) throw MetricError("argmin_index: empty series");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] < v[best]) best = i;
  return best;
}

struct RepDistSeries {
  std::vector<double> forward;         // source -> target per layer
  std::vector<double> backward;        // target -> source per layer
  std::vector<double> symmetric_mean;  // (forward + backward) / 2
  std::size_t argmin_layer = 0;        // of forward; the "most multilingual" layer
};

inline RepDistSeries layer_repdist_series(std::span<const MatrixView> source_layers,
                                          std::span<const MatrixView> target_layers,
                                          const std::vector<SentencePairing>& pairs, DistanceKind kind) {
  if (source_layers.size() != target_layers.size() || source_layers.empty())
    throw MetricError("layer_repdist_series: layer count mismatch");
  if (pairs.empty()) throw MetricError("layer_repdist_series: no sentence pairs");
  std::vector<SentencePairing> reversed = pairs;
  for (auto& p : reversed) {
    std::swap(p.source_begin, p.target_begin);
    std::swap(p.source_end, p.target_end);
  }
  const std::size_t L = source_layers.size();
  RepDistSeries out{std::vector<double>(L), std::vector<double>(L), std::vector<double>(L), 0};
  parallel_for(L, [&](std::size_t l) {
    out.forward[l] = representation_distance_pairs(source_layers[l], target_layers[l], pairs, kind).layer_aggregate;
    out.backward[l] = representation_distance_pairs(target_layers[l], source_layers[l], reversed, kind).layer_aggregate;
    out.symmetric_mean[l] = 0.5 * (out.forward[l] + out.backward[l]);
  });
  out.argmin_layer = argmin_index(out.forward);
  return out;
}

// ------------------------------------------------------- rank correlation ----

inline std::vector<double> neuron_sums(MatrixView s) {
  std::vector<double> sums(s.cols(), 0.0);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    const auto row = s.row(r);
    for (std::size_t c = 0; c < s.cols(); ++c) sums[c] += row[c];
  }
  return sums;
}

// 1-based ranks, largest value first; tied values share the mean of the ranks
// they span.
inline std::vector<double> descending_average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

inline std::vector<double> neuron_rank_vector(MatrixView s) {
  const auto sums = neuron_sums(s);
  return descending_average_ranks(sums);
}

// Undefined (nullopt) when either side has zero variance.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw MetricError("pearson: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw MetricError("spearman: length mismatch");
  const auto rx = descending_average_ranks(x);
  const auto ry = descending_average_ranks(y);
  return pearson(rx, ry);
}

inline std::optional<double> rank_correlation(MatrixView a, MatrixView b) {
  if (a.cols() != b.cols())
    throw MetricError("rank_correlation: column mismatch " + std::to_string(a.cols()) + " vs " +
                      std::to_string(b.cols()));
  return pearson(neuron_rank_vector(a), neuron_rank_vector(b));
}

// -------------------------------------------------------------- RDM / RSA ----

// entry (i, j) = 1 - Pearson(prefix i, prefix j) over the neuron dimension.
inline Matrix rdm(MatrixView s) {
  if (s.rows() < 3) throw MetricError("rdm: need at least 3 prefix rows, got " + std::to_string(s.rows()));
  const std::size_t n = s.rows();
  const std::size_t d = s.cols();
  std::vector<double> z(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = s.row(r);
    double mean = 0.0;
    for (float v : row) mean += v;
    mean /= static_cast<double>(d);
    double ss = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      z[r * d + c] = row[c] - mean;
      ss += z[r * d + c] * z[r * d + c];
    }
    if (ss == 0.0) throw MetricError("rdm: prefix row " + std::to_string(r) + " is constant");
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t c = 0; c < d; ++c) z[r * d + c] *= inv;
  }
  Matrix out{n, n, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double corr = 0.0;
      for (std::size_t c = 0; c < d; ++c) corr += z[i * d + c] * z[j * d + c];
      out(i, j) = out(j, i) = std::clamp(1.0 - corr, 0.0, 2.0);
    }
  return out;
}

inline std::vector<double> upper_triangle(const Matrix& m) {
  std::vector<double> out;
  out.reserve(m.rows * (m.rows - 1) / 2);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = i + 1; j < m.cols; ++j) out.push_back(m(i, j));
  return out;
}

struct RsaMatrix {
  std::size_t layers_a = 0;
  std::size_t layers_b = 0;
  std::vector<std::optional<double>> data;  // layers_a x layers_b
  const std::optional<double>& operator()(std::size_t i, std::size_t j) const { return data[i * layers_b + j]; }
};

// Entry (i, j) = Spearman correlation of the RDM upper triangles of model A
// layer i and model B layer j. Both models must see the same prefix list.
inline RsaMatrix rsa_compare(std::span<const MatrixView> model_a, std::span<const MatrixView> model_b) {
  if (model_a.empty() || model_b.empty()) throw MetricError("rsa_compare: no layers");
  const std::size_t rows = model_a.front().rows();
  for (const auto& v : model_a)
    if (v.rows() != rows) throw MetricError("rsa_compare: row-count mismatch within model A");
  for (const auto& v : model_b)
    if (v.rows() != rows)
      throw MetricError("rsa_compare: row-count mismatch (" + std::to_string(rows) + " vs " +
                        std::to_string(v.rows()) + ")");
  auto ranked = [](std::span<const MatrixView> layers) {
    std::vector<std::vector<double>> out(layers.size());
    parallel_for(layers.size(), [&](std::size_t l) {
      const auto tri = upper_triangle(rdm(layers[l]));
      out[l] = descending_average_ranks(tri);
    });
    return out;
  };
  const auto ra = ranked(model_a);
  const auto rb = ranked(model_b);
  RsaMatrix out{ra.size(), rb.size(), std::vector<std::optional<double>>(ra.size() * rb.size())};
  for (std::size_t i = 0; i < ra.size(); ++i)
    for (std::size_t j = 0; j < rb.size(); ++j) out.data[i * rb.size() + j] = pearson(ra[i], rb[j]);
  return out;
}

// ---------------------------------------------------------- corpus overlap ----

inline Matrix corpus_overlap(const std::vector<std::set<std::string>>& vocabularies) {
  if (vocabularies.size() < 2) throw MetricError("corpus_overlap: need at least 2 test sets");
  for (std::size_t i = 0; i < vocabularies.size(); ++i)
    if (vocabularies[i].empty()) throw MetricError("corpus_overlap: test set " + std::to_string(i) + " is empty");
  const std::size_t n = vocabularies.size();
  Matrix out{n, n, std::vector<double>(n * n, 1.0)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      std::size_t common = 0;
      for (const auto& w : vocabularies[i]) common += vocabularies[j].count(w);
      const std::size_t uni = vocabularies[i].size() + vocabularies[j].size() - common;
      out(i, j) = out(j, i) = static_cast<double>(common) / static_cast<double>(uni);
    }
  return out;
}

}  // namespace ffnlens::metrics
