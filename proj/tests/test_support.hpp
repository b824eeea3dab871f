#pragma once

// Shared test helpers: seeded generators, scratch directories and brute-force
// oracles. The oracles deliberately share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "ffnlens/snapshot.hpp"

namespace ffnlens::testing {

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ffnlens_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<float> random_floats(std::mt19937_64& rng, std::size_t n, float lo = -10.0f, float hi = 10.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline Snapshot random_snapshot(std::mt19937_64& rng, std::size_t rows, std::size_t cols, float lo = -10.0f,
                                float hi = 10.0f) {
  return Snapshot(rows, cols, random_floats(rng, rows * cols, lo, hi));
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ------------------------------------------------------------- oracles ----

namespace oracle {

// Entropy-style flatness evaluated element by element in extended precision.
inline long double flatness(const std::vector<long double>& x) {
  long double lo = x[0], hi = x[0];
  for (auto v : x) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (hi == lo) return 0.0L;
  long double total = 0.0L;
  for (auto v : x) {
    const long double s = (v - lo) / (hi - lo);
    if (s == 0.0L) continue;
    total += -s * (std::log(s) / std::log(2.0L));
  }
  return total / static_cast<long double>(x.size());
}

// Plain nested loops: the full distance for every (i, j), then the minimum.
inline double repdist_euclidean(const MatrixView& a, const MatrixView& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double min_dist = INFINITY;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double ss = 0.0;
      for (std::size_t c = 0; c < a.cols(); ++c) {
        const double diff = static_cast<double>(a(i, c)) - static_cast<double>(b(j, c));
        ss += diff * diff;
      }
      const double score = std::sqrt(ss);
      if (score < min_dist) min_dist = score;
    }
    total += min_dist;
  }
  return total;
}

inline double repdist_cosine(const MatrixView& a, const MatrixView& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double min_dist = INFINITY;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t c = 0; c < a.cols(); ++c) {
        dot += static_cast<double>(a(i, c)) * static_cast<double>(b(j, c));
        na += static_cast<double>(a(i, c)) * static_cast<double>(a(i, c));
        nb += static_cast<double>(b(j, c)) * static_cast<double>(b(j, c));
      }
      const double score = 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
      if (score < min_dist) min_dist = score;
    }
    total += min_dist;
  }
  return total;
}

// Rank by counting: 1 + (#larger) + (#equal - 1) / 2. No sorting involved.
inline std::vector<double> descending_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t greater = 0, equal = 0;
    for (double w : v) {
      if (w > v[i]) ++greater;
      if (w == v[i]) ++equal;
    }
    r[i] = 1.0 + static_cast<double>(greater) + (static_cast<double>(equal) - 1.0) / 2.0;
  }
  return r;
}

inline long double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const long double n = static_cast<long double>(x.size());
  long double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const long double mx = sx / n, my = sy / n;
  long double num = 0, dx2 = 0, dy2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - mx) * (y[i] - my);
    dx2 += (x[i] - mx) * (x[i] - mx);
    dy2 += (y[i] - my) * (y[i] - my);
  }
  return num / std::sqrt(dx2 * dy2);
}

inline std::vector<double> column_sums(const MatrixView& s) {
  std::vector<double> sums(s.cols(), 0.0);
  for (std::size_t c = 0; c < s.cols(); ++c)
    for (std::size_t r = 0; r < s.rows(); ++r) sums[c] += s(r, c);
  return sums;
}

inline long double spearman_snapshots(const MatrixView& a, const MatrixView& b) {
  return pearson(descending_ranks(column_sums(a)), descending_ranks(column_sums(b)));
}

// Column scan: for each neuron, count rows with |a| > eps.
inline std::vector<double> frequency(const MatrixView& s, double eps) {
  std::vector<double> out(s.cols());
  for (std::size_t c = 0; c < s.cols(); ++c) {
    std::size_t n = 0;
    for (std::size_t r = 0; r < s.rows(); ++r)
      if (std::fabs(s(r, c)) > eps) ++n;
    out[c] = static_cast<double>(n) / static_cast<double>(s.rows());
  }
  return out;
}

inline long double row_pearson(const MatrixView& s, std::size_t i, std::size_t j) {
  std::vector<double> x(s.cols()), y(s.cols());
  for (std::size_t c = 0; c < s.cols(); ++c) {
    x[c] = s(i, c);
    y[c] = s(j, c);
  }
  return pearson(x, y);
}

}  // namespace oracle

}  // namespace ffnlens::testing
