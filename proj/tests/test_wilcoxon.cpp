#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "helpers.hpp"
#include "ssvep/rng.hpp"
#include "ssvep/wilcoxon.hpp"

using namespace ssvep;
using Catch::Matchers::WithinAbs;

namespace {

// Brute-force reimplementation: ranks via pairwise counting, null
// distribution via explicit enumeration of every sign assignment.
struct BruteResult {
  double statistic;
  double p_value;
};

BruteResult brute_signed_rank(const std::vector<double>& a,
                              const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  const int n = static_cast<int>(d.size());

  std::vector<double> rank(n);
  for (int i = 0; i < n; ++i) {
    int smaller = 0, tied = 0;
    for (int j = 0; j < n; ++j) {
      if (std::abs(d[j]) < std::abs(d[i])) ++smaller;
      if (std::abs(d[j]) == std::abs(d[i])) ++tied;  // includes i itself
    }
    rank[i] = smaller + (tied + 1) / 2.0;
  }

  double w_obs = 0.0;
  for (int i = 0; i < n; ++i)
    if (d[i] > 0.0) w_obs += rank[i];

  std::uint64_t count_le = 0, count_ge = 0;
  const std::uint64_t masks = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < masks; ++mask) {
    double w = 0.0;
    for (int i = 0; i < n; ++i)
      if (mask & (std::uint64_t{1} << i)) w += rank[i];
    if (w <= w_obs) ++count_le;
    if (w >= w_obs) ++count_ge;
  }
  const double tail = static_cast<double>(std::min(count_le, count_ge));
  return {w_obs, std::min(1.0, 2.0 * tail / static_cast<double>(masks))};
}

std::vector<double> zeros(std::size_t n) { return std::vector<double>(n, 0.0); }

}  // namespace

TEST_CASE("five uniformly positive differences give p 0.0625", "[wilcoxon]") {
  const std::vector<double> a{2, 4, 6, 8, 10};
  const std::vector<double> b{1, 2, 3, 4, 5};
  const WilcoxonResult res = wilcoxon_signed_rank(a, b);
  REQUIRE(res.statistic == 15.0);
  REQUIRE(res.p_value == 0.0625);
  REQUIRE(res.n_used == 5);
  REQUIRE(res.exact);

  const WilcoxonResult mirrored = wilcoxon_signed_rank(b, a);
  REQUIRE(mirrored.statistic == 0.0);
  REQUIRE(mirrored.p_value == 0.0625);
}

TEST_CASE("known exact distributions", "[wilcoxon]") {
  SECTION("one negative among five") {
    const std::vector<double> a{-1, 2, 3, 4, 5};
    const WilcoxonResult res = wilcoxon_signed_rank(a, zeros(5));
    REQUIRE(res.statistic == 14.0);
    REQUIRE(res.p_value == 0.125);
  }
  SECTION("mixed signs, eight pairs") {
    const std::vector<double> a{3.0, -1.5, 2.0, 7.0, -4.0, 5.5, 0.5, -6.0};
    const WilcoxonResult res = wilcoxon_signed_rank(a, zeros(8));
    REQUIRE(res.statistic == 22.0);
    REQUIRE(res.p_value == 0.640625);
  }
}

TEST_CASE("input validation", "[wilcoxon]") {
  REQUIRE(test_helpers::thrown_code(
              [] { wilcoxon_signed_rank({1, 2}, {1, 2, 3}); }) ==
          "LengthMismatch");
  REQUIRE(test_helpers::thrown_code([] {
            wilcoxon_signed_rank({1, 2, 3, 4, 5}, {1, 2, 3, 4, 5});
          }) == "AllZeroDifferences");
  REQUIRE(test_helpers::thrown_code(
              [] { wilcoxon_signed_rank({1, 2, 3, 4}, zeros(4)); }) ==
          "TooFewPairs");
  REQUIRE(test_helpers::thrown_code([] {
            // three of seven pairs tie, leaving four usable differences
            wilcoxon_signed_rank({5, 5, 5, 1, 2, 3, 4}, {5, 5, 5, 0, 0, 0, 0});
          }) == "TooFewPairs");
  REQUIRE(test_helpers::thrown_code([] { wilcoxon_signed_rank({}, {}); }) ==
          "TooFewPairs");
  REQUIRE(test_helpers::thrown_code([] {
            wilcoxon_signed_rank({1, 2, 3, 4, std::nan("")}, zeros(5));
          }) == "NonFiniteInput");
}

TEST_CASE("enumeration matches a brute-force reimplementation", "[wilcoxon]") {
  Rng rng(2024);
  for (int n = 5; n <= 10; ++n) {
    for (int rep = 0; rep < 40; ++rep) {
      std::vector<double> a(n), b(n);
      for (int i = 0; i < n; ++i) {
        // small integer grid forces heavy rank ties
        int v = static_cast<int>(rng.index(9)) - 4;
        if (v == 0) v = 1;
        a[i] = v;
        b[i] = 0.0;
      }
      const BruteResult expect = brute_signed_rank(a, b);
      const WilcoxonResult res = wilcoxon_signed_rank(a, b);
      INFO("n=" << n << " rep=" << rep);
      REQUIRE(res.statistic == expect.statistic);
      REQUIRE(res.p_value == expect.p_value);
      REQUIRE(res.exact);
    }
  }
}

TEST_CASE("zero differences drop out before ranking", "[wilcoxon]") {
  // same nonzero differences, with and without interleaved tied pairs
  const std::vector<double> a{1, 7, -2, 3, -5, 4, 7};
  const std::vector<double> b{1, 7, 0, 0, 0, 0, 0};
  const WilcoxonResult with_ties = wilcoxon_signed_rank(a, b);
  const WilcoxonResult plain =
      wilcoxon_signed_rank({-2, 3, -5, 4, 7}, zeros(5));
  REQUIRE(with_ties.statistic == plain.statistic);
  REQUIRE(with_ties.p_value == plain.p_value);
  REQUIRE(with_ties.n_used == 5);
}

TEST_CASE("statistic and p-value invariances", "[wilcoxon]") {
  Rng rng(55);
  for (int rep = 0; rep < 25; ++rep) {
    const int n = 5 + static_cast<int>(rng.index(8));
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = rng.uniform(-3.0, 3.0);
      b[i] = rng.uniform(-3.0, 3.0);
      if (a[i] == b[i]) a[i] += 0.5;
    }
    const WilcoxonResult fwd = wilcoxon_signed_rank(a, b);
    const WilcoxonResult rev = wilcoxon_signed_rank(b, a);

    REQUIRE(fwd.p_value > 0.0);
    REQUIRE(fwd.p_value <= 1.0);
    REQUIRE(fwd.statistic >= 0.0);
    REQUIRE(fwd.statistic <= n * (n + 1) / 2.0);
    REQUIRE(fwd.p_value == rev.p_value);
    REQUIRE(fwd.statistic + rev.statistic == n * (n + 1) / 2.0);

    std::vector<double> a_shift(a), b_shift(b);
    for (auto& v : a_shift) v += 4.0;
    for (auto& v : b_shift) v += 4.0;
    const WilcoxonResult shifted = wilcoxon_signed_rank(a_shift, b_shift);
    REQUIRE(shifted.statistic == fwd.statistic);
    REQUIRE(shifted.p_value == fwd.p_value);

    std::vector<double> a_scale(n), b_scale(n);
    for (int i = 0; i < n; ++i) {
      a_scale[i] = 2.5 * a[i];
      b_scale[i] = 2.5 * b[i];
    }
    const WilcoxonResult scaled = wilcoxon_signed_rank(a_scale, b_scale);
    REQUIRE(scaled.statistic == fwd.statistic);
    REQUIRE(scaled.p_value == fwd.p_value);
  }
}

TEST_CASE("large samples switch to the corrected normal approximation",
          "[wilcoxon]") {
  SECTION("integer grid with heavy ties, thirty pairs") {
    const std::vector<double> a{1, 6, 5, 4, 4, 7, 1, 5, 2, 1, 4, 7, 6, 6, 6,
                                6, 4, 1, 6, 4, 4, 3, 2, 7, 6, 5, 3, 6, 4, 4};
    const std::vector<double> b{4, 2, 1, 5, 7, 1, 7, 6, 3, 5, 2, 6, 5, 3, 1,
                                7, 5, 7, 5, 6, 6, 2, 3, 4, 4, 1, 4, 2, 6, 5};
    const WilcoxonResult res = wilcoxon_signed_rank(a, b);
    REQUIRE_FALSE(res.exact);
    REQUIRE(res.n_used == 30);
    REQUIRE(res.statistic == 247.0);
    REQUIRE_THAT(res.p_value, WithinAbs(0.7713718631011011, 1e-12));
  }
  SECTION("clear shift, twenty-eight pairs") {
    const std::vector<double> a{2.7,  0.2, 0.1,  -0.2, 1.2, 1.7,  0.5,
                                -0.2, -0.2, 1.3, 1.3,  1.1, -0.1, 0.8,
                                0.7,  0.8, 1.5,  0.8,  1.3, 0.7,  0.9,
                                1.2,  -0.9, 0.3, 0.1,  -0.0, 0.3, 2.1};
    const std::vector<double> b{-0.9, 1.0,  -1.7, -0.3, 0.2,  0.6,  0.7,
                                0.8,  -0.3, -0.5, 0.9,  -0.2, -1.3, -1.1,
                                -0.9, 0.5,  0.1,  0.7,  -0.4, 0.2,  0.6,
                                -0.3, 0.5,  -0.7, -0.4, -0.4, -1.2, 0.5};
    const WilcoxonResult res = wilcoxon_signed_rank(a, b);
    REQUIRE_FALSE(res.exact);
    REQUIRE(res.statistic == 359.5);
    REQUIRE_THAT(res.p_value, WithinAbs(0.00037998352366897973, 1e-12));
  }
  SECTION("near-null data, forty pairs") {
    const std::vector<double> a{-0.47, 0.01,  0.48,  0.45,  0.67,  -0.1,
                                -0.42, -0.08, -1.69, -1.45, -1.32, -1.0,
                                0.4,   -0.91, -0.38, 1.3,   -0.36, 0.74,
                                -0.93, -0.21, -0.95, -0.34, 0.84,  -1.73,
                                0.43,  0.24,  -0.59, -1.45, 0.07,  -0.53,
                                0.23,  0.02,  1.6,   -0.24, -1.02, 0.18,
                                0.22,  1.36,  0.84,  0.36};
    const std::vector<double> b{1.46,  -1.19, -0.64, -0.93, -0.39, -1.38,
                                0.64,  -0.22, -1.47, -1.02, 0.31,  0.84,
                                2.0,   2.91,  0.41,  -0.99, -2.13, 0.27,
                                -0.81, -0.42, -0.61, -0.14, 1.07,  0.16,
                                -0.16, -1.04, -1.67, -0.49, -0.05, 1.77,
                                0.13,  0.98,  -0.5,  -1.18, -0.97, -0.73,
                                2.13,  -0.82, 0.85,  -0.9};
    const WilcoxonResult res = wilcoxon_signed_rank(a, b);
    REQUIRE_FALSE(res.exact);
    REQUIRE(res.statistic == 419.5);
    REQUIRE_THAT(res.p_value, WithinAbs(0.9037113058756557, 1e-12));
  }
}

namespace {

// Exact two-sided p for untied integer-rank data: counts subsets of
// {1..n} by rank sum, then doubles the smaller tail mass.
double exact_p_untied(double w_obs, int n) {
  const int total = n * (n + 1) / 2;
  std::vector<double> ways(total + 1, 0.0);
  ways[0] = 1.0;
  for (int r = 1; r <= n; ++r)
    for (int s = total; s >= r; --s) ways[s] += ways[s - r];
  double le = 0.0, ge = 0.0;
  for (int s = 0; s <= total; ++s) {
    if (s <= w_obs) le += ways[s];
    if (s >= w_obs) ge += ways[s];
  }
  return std::min(1.0, 2.0 * std::min(le, ge) / std::pow(2.0, n));
}

}  // namespace

TEST_CASE("approximation agrees with enumeration just past the cutoff",
          "[wilcoxon]") {
  Rng rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    // distinct magnitudes keep the ranks a plain permutation of 1..26, so
    // the reference distribution only needs subset sums of {1..26}
    std::vector<double> a(26);
    for (std::size_t i = 0; i < a.size(); ++i)
      a[i] = (rng.uniform() < 0.35 ? -1.0 : 1.0) * (i + 1 + rng.uniform(0.0, 0.4));
    rng.shuffle(a);
    const WilcoxonResult approx = wilcoxon_signed_rank(a, zeros(26));
    REQUIRE_FALSE(approx.exact);
    const double exact = exact_p_untied(approx.statistic, 26);
    INFO("exact " << exact << " approx " << approx.p_value);
    REQUIRE_THAT(approx.p_value, WithinAbs(exact, 0.01));
  }

  // the boundary itself: 25 pairs still enumerate
  std::vector<double> a(25);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = i + 1.0;
  const WilcoxonResult res = wilcoxon_signed_rank(a, zeros(25));
  REQUIRE(res.exact);
  REQUIRE(res.statistic == 325.0);
}
