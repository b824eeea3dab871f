// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances and case counts are fixed here.

#include <bit>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>

#include "cli_support.hpp"
#include "ffnlens/ffnlens.hpp"

using namespace ffnlens;
namespace oracle = ffnlens::testing::oracle;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kFlatnessRelTol = 1e-9;
constexpr double kAffineTol = 1e-9;
constexpr double kSpearmanTol = 1e-10;
constexpr double kRsaDiagTol = 1e-9;
constexpr double kCausalityTol = 1e-5;
constexpr double kFlatnessSeconds = 5.0;
constexpr double kRepDistSeconds = 10.0;
constexpr double kEndToEndSeconds = 60.0;

struct Outcome {
  bool ok = true;
  std::string detail;
  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Snapshot random_snapshot(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  return ffnlens::testing::random_snapshot(rng, r, c);
}

Snapshot integer_snapshot(std::mt19937_64& rng, std::size_t r, std::size_t c, int levels) {
  std::vector<float> v(r * c);
  for (auto& x : v) x = static_cast<float>(static_cast<int>(rng() % levels) - levels / 2);
  return Snapshot(r, c, v);
}

Snapshot reorder_rows(const Snapshot& s, const std::vector<std::size_t>& perm) {
  std::vector<float> v;
  for (std::size_t p : perm) {
    const auto row = s.view().row(p);
    v.insert(v.end(), row.begin(), row.end());
  }
  return Snapshot(perm.size(), s.cols(), v);
}

std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

Outcome flatness_oracle() {
  Outcome o;
  std::mt19937_64 rng(1001);
  const auto t0 = Clock::now();
  for (int t = 0; t < 1000; ++t) {
    const std::size_t m = 2 + rng() % 63;
    const auto row = ffnlens::testing::random_floats(rng, m);
    const double got = metrics::row_flatness(std::span<const float>(row));
    const long double want = oracle::flatness(std::vector<long double>(row.begin(), row.end()));
    if (std::fabs(got - want) > kFlatnessRelTol * std::fabs(want))
      o.fail(fmt::format("case {}: {} vs {}", t, got, static_cast<double>(want)));
    std::vector<float> onehot(m, 0.0f), constant(m, row[0]);
    onehot[rng() % m] = 1.0f + static_cast<float>(rng() % 9);
    if (metrics::row_flatness(std::span<const float>(onehot)) != 0.0) o.fail("one-hot row not exactly 0");
    if (metrics::row_flatness(std::span<const float>(constant)) != 0.0) o.fail("constant row not exactly 0");
  }
  const double secs = seconds_since(t0);
  if (secs >= kFlatnessSeconds) o.fail(fmt::format("took {:.2f} s", secs));
  return o;
}

Outcome flatness_affine() {
  Outcome o;
  std::mt19937_64 rng(1002);
  std::uniform_real_distribution<double> x(-10, 10), a(0.01, 100), b(-100, 100);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> row(2 + rng() % 63), moved(row.size());
    const double sa = a(rng), sb = b(rng);
    for (std::size_t i = 0; i < row.size(); ++i) {
      row[i] = x(rng);
      moved[i] = sa * row[i] + sb;
    }
    const double d = std::fabs(metrics::row_flatness(std::span<const double>(moved)) -
                               metrics::row_flatness(std::span<const double>(row)));
    if (!(d < kAffineTol)) o.fail(fmt::format("case {}: diff {}", t, d));
  }
  return o;
}

Outcome repdist_oracle() {
  Outcome o;
  std::mt19937_64 rng(1003);
  const auto t0 = Clock::now();
  using metrics::DistanceKind;
  for (int t = 0; t < 500; ++t) {
    const std::size_t m = 1 + rng() % 20, n = 1 + rng() % 20, d = 1 + rng() % 32;
    const Snapshot a = random_snapshot(rng, m, d), b = random_snapshot(rng, n, d);
    if (metrics::representation_distance(a, b, DistanceKind::euclidean) != oracle::repdist_euclidean(a, b))
      o.fail(fmt::format("case {}: euclidean mismatch", t));
    if (metrics::representation_distance(a, b, DistanceKind::cosine) != oracle::repdist_cosine(a, b))
      o.fail(fmt::format("case {}: cosine mismatch", t));
    if (metrics::representation_distance(a, a, DistanceKind::euclidean) != 0.0)
      o.fail(fmt::format("case {}: RepDist(L, L) != 0", t));
    const Snapshot pb = reorder_rows(b, permutation(n, rng));
    for (auto kind : {DistanceKind::euclidean, DistanceKind::cosine})
      if (metrics::representation_distance(a, b, kind) != metrics::representation_distance(a, pb, kind))
        o.fail(fmt::format("case {}: not invariant to target row order", t));
    const Snapshot extra = random_snapshot(rng, 1 + rng() % 5, d);
    std::vector<float> grown(b.data().begin(), b.data().end());
    grown.insert(grown.end(), extra.data().begin(), extra.data().end());
    const Snapshot bg(n + extra.rows(), d, grown);
    for (auto kind : {DistanceKind::euclidean, DistanceKind::cosine})
      if (metrics::representation_distance(a, bg, kind) > metrics::representation_distance(a, b, kind))
        o.fail(fmt::format("case {}: increased after row append", t));
  }
  const double secs = seconds_since(t0);
  if (secs >= kRepDistSeconds) o.fail(fmt::format("took {:.2f} s", secs));
  return o;
}

Outcome spearman_oracle() {
  Outcome o;
  std::mt19937_64 rng(1004);
  for (int t = 0; t < 500; ++t) {
    const std::size_t cols = 2 + rng() % 30;
    // Every other case uses a few integer levels so neuron sums tie.
    const bool ties = t % 2 == 0;
    const Snapshot a = ties ? integer_snapshot(rng, 1 + rng() % 3, cols, 3) : random_snapshot(rng, 1 + rng() % 8, cols);
    const Snapshot b = ties ? integer_snapshot(rng, 1 + rng() % 3, cols, 3) : random_snapshot(rng, 1 + rng() % 8, cols);
    const auto got = metrics::rank_correlation(a, b);
    const long double want = oracle::spearman_snapshots(a, b);
    if (std::isnan(static_cast<double>(want))) {
      if (got) o.fail(fmt::format("case {}: expected undefined, got {}", t, *got));
    } else if (!got || std::fabs(*got - static_cast<double>(want)) >= kSpearmanTol) {
      o.fail(fmt::format("case {}: {} vs {}", t, got ? *got : NAN, static_cast<double>(want)));
    }
    if (!ties) {
      const auto self = metrics::rank_correlation(a, a);
      if (!self || *self != 1.0) o.fail(fmt::format("case {}: rho(X, X) != 1", t));
      std::vector<float> neg(a.data().begin(), a.data().end());
      for (auto& v : neg) v = -v;
      const auto rev = metrics::rank_correlation(a, Snapshot(a.rows(), a.cols(), neg));
      if (!rev || *rev != -1.0) o.fail(fmt::format("case {}: reversal != -1", t));
    }
  }
  return o;
}

Outcome frequency_oracle() {
  Outcome o;
  std::mt19937_64 rng(1005);
  for (int t = 0; t < 100; ++t) {
    const std::size_t r = 1 + rng() % 30, c = 1 + rng() % 40;
    // Mixture of exact zeros, tiny values and values around the thresholds.
    std::vector<float> data(r * c);
    for (auto& x : data) {
      switch (rng() % 5) {
        case 0: x = 0.0f; break;
        case 1: x = 1e-3f; break;
        case 2: x = -1.0f; break;
        default: x = std::uniform_real_distribution<float>(-3, 3)(rng);
      }
    }
    const Snapshot s(r, c, data);
    std::vector<double> prev;
    for (double eps : {0.0, 1e-3, 1.0}) {
      const auto f = metrics::activation_frequency(s, eps).per_neuron_frequency;
      if (f != oracle::frequency(s, eps)) o.fail(fmt::format("case {} eps {}: mismatch", t, eps));
      for (std::size_t i = 0; i < prev.size(); ++i)
        if (f[i] > prev[i]) o.fail(fmt::format("case {}: frequency grew with epsilon", t));
      prev = f;
    }
  }
  return o;
}

Outcome rdm_rsa() {
  Outcome o;
  std::mt19937_64 rng(1006);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 3 + rng() % 12;
    std::vector<Snapshot> a, b;
    for (int l = 0; l < 3; ++l) a.push_back(random_snapshot(rng, n, 2 + rng() % 20));
    for (int l = 0; l < 2; ++l) b.push_back(random_snapshot(rng, n, 2 + rng() % 20));
    for (const auto& s : a) {
      const auto d = metrics::rdm(s);
      for (std::size_t i = 0; i < n; ++i) {
        if (d(i, i) != 0.0) o.fail("nonzero diagonal");
        for (std::size_t j = 0; j < n; ++j) {
          if (d(i, j) != d(j, i)) o.fail("asymmetric RDM");
          if (d(i, j) < 0.0 || d(i, j) > 2.0) o.fail("RDM entry outside [0, 2]");
        }
      }
    }
    const auto va = views(a), vb = views(b);
    const auto self = metrics::rsa_compare(va, va);
    for (std::size_t l = 0; l < a.size(); ++l)
      if (!self(l, l) || std::fabs(*self(l, l) - 1.0) > kRsaDiagTol) o.fail(fmt::format("case {}: self diagonal", t));
    const auto perm = permutation(n, rng);
    std::vector<Snapshot> pa, pb;
    for (const auto& s : a) pa.push_back(reorder_rows(s, perm));
    for (const auto& s : b) pb.push_back(reorder_rows(s, perm));
    const auto ref = metrics::rsa_compare(va, vb);
    const auto moved = metrics::rsa_compare(views(pa), views(pb));
    for (std::size_t k = 0; k < ref.data.size(); ++k)
      if (ref.data[k].has_value() != moved.data[k].has_value() ||
          (ref.data[k] && std::fabs(*ref.data[k] - *moved.data[k]) > kRsaDiagTol))
        o.fail(fmt::format("case {}: not invariant to joint prefix permutation", t));
  }
  return o;
}

Outcome end_to_end() {
  Outcome o;
  ffnlens::testing::ScratchDir a("accept"), b("accept");
  const auto t0 = Clock::now();
  if (auto err = ffnlens::testing::run_full_pipeline(a / "run"); !err.empty()) {
    o.fail(err);
    return o;
  }
  const double first = seconds_since(t0);
  if (auto err = ffnlens::testing::run_full_pipeline(b / "run"); !err.empty()) {
    o.fail(err);
    return o;
  }
  const auto ta = ffnlens::testing::read_tree(a / "run"), tb = ffnlens::testing::read_tree(b / "run");
  if (ta != tb) o.fail("output trees differ");
  if (ta.size() < 40) o.fail(fmt::format("only {} files produced", ta.size()));
  if (first >= kEndToEndSeconds) o.fail(fmt::format("one run took {:.2f} s", first));
  if (o.ok) o.detail = fmt::format("{} files, {:.2f} s per run", ta.size(), first);
  return o;
}

Outcome causality() {
  Outcome o;
  toy::ToyConfig cfg;  // seed 42, 4 layers, d_model 32, d_ffn 128
  const toy::ToyModel m = toy::init_weights(cfg);
  std::vector<toy::CapturePoint> points;
  for (std::size_t l = 0; l < cfg.n_layers; ++l)
    for (Sublayer s : kAllSublayers) points.push_back({l, s});
  std::mt19937_64 rng(1008);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    std::vector<std::uint32_t> tokens(2 + rng() % (cfg.max_seq_len - 1));
    for (auto& x : tokens) x = static_cast<std::uint32_t>(rng() % cfg.vocab_size);
    const std::size_t k = rng() % (tokens.size() - 1);  // strictly shorter prefix
    const auto longer = toy::forward_trace(m, tokens, points);
    const auto alone = toy::forward_capture(m, std::span(tokens).first(k + 1), points);
    for (const auto& p : points) {
      const auto row = longer.at(p).row(k);
      const auto& ref = alone.at(p);
      for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, static_cast<double>(std::fabs(row[i] - ref[i])));
    }
  }
  if (!(worst < kCausalityTol)) o.fail(fmt::format("max abs diff {}", worst));
  if (o.ok) o.detail = fmt::format("max abs diff {}", worst);
  return o;
}

Outcome format_roundtrip() {
  Outcome o;
  std::mt19937_64 rng(1009);
  ffnlens::testing::ScratchDir dir("accept");
  for (int t = 0; t < 1000; ++t) {
    const std::size_t r = 1 + rng() % 16, c = 1 + rng() % 16;
    std::vector<float> v(r * c);
    for (auto& x : v) do {
        x = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
      } while (!std::isfinite(x));
    const Snapshot s(r, c, v);
    const auto path = dir / "rt.ffns";
    write_snapshot(s, path);
    const Snapshot back = read_snapshot(path);
    if (!(back == s)) o.fail(fmt::format("case {}: roundtrip not bit-exact", t));
    if (std::filesystem::file_size(path) != snapshot_file_size(r, c)) o.fail("file size arithmetic");
  }
  // Corrupt fixtures, one per error.
  const std::string good = encode_snapshot(Snapshot(2, 3, std::vector<float>(6, 0.5f)));
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::string magic = good, version = good, truncated = good.substr(0, 40), trailing = good + "x", nonfinite = good;
  magic[1] = 'X';
  version[4] = 2;
  std::memcpy(nonfinite.data() + 28, &nan, 4);
  auto expect = [&](const std::string& name, const std::string& bytes, const std::function<bool(const SnapshotError&)>& is) {
    write_file_bytes(dir / (name + ".ffns"), bytes);
    try {
      read_snapshot(dir / (name + ".ffns"));
      o.fail(name + ": accepted");
    } catch (const SnapshotError& e) {
      if (!is(e)) o.fail(name + ": wrong error " + e.what());
    }
  };
  expect("bad_magic", magic, [](const SnapshotError& e) { return dynamic_cast<const BadMagic*>(&e) != nullptr; });
  expect("bad_version", version, [](const SnapshotError& e) { return dynamic_cast<const VersionMismatch*>(&e) != nullptr; });
  expect("truncated", truncated, [](const SnapshotError& e) { return dynamic_cast<const TruncatedPayload*>(&e) != nullptr; });
  expect("trailing", trailing, [](const SnapshotError& e) { return dynamic_cast<const TrailingBytes*>(&e) != nullptr; });
  expect("nan", nonfinite, [](const SnapshotError& e) { return dynamic_cast<const NonFiniteValue*>(&e) != nullptr; });
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"flatness matches high-precision oracle", flatness_oracle},
      {"flatness is affine invariant", flatness_affine},
      {"representation distance matches brute force", repdist_oracle},
      {"rank correlation matches rank-then-Pearson", spearman_oracle},
      {"activation frequency matches counting oracle", frequency_oracle},
      {"RDM and RSA properties", rdm_rsa},
      {"end-to-end pipeline is deterministic", end_to_end},
      {"toy model is causal", causality},
      {"snapshot format roundtrip and corrupt files", format_roundtrip},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    const double secs = seconds_since(t0);
    std::printf("%s  %s (%.2f s)%s%s\n", o.ok ? "PASS" : "FAIL", name.c_str(), secs, o.detail.empty() ? "" : ": ",
                o.detail.c_str());
    failed += !o.ok;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
