#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ssvep/errors.hpp"

namespace ssvep {

struct WilcoxonResult {
  double statistic = 0.0;  // rank sum of the positive differences
  double p_value = 1.0;    // two-sided
  int n_used = 0;          // pairs remaining after zero differences drop out
  bool exact = false;      // enumeration (true) or normal approximation
};

namespace statdetail {

/// Average ranks of |d|, doubled so that tie-averaged ranks stay integral
/// (a run of equal values spanning sorted positions i..j-1 gets rank
/// (i+j+1)/2, i.e. doubled rank i+j+1).
inline std::vector<std::int64_t> doubled_ranks(const std::vector<double>& absd) {
  const int n = static_cast<int>(absd.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&absd](int a, int b) { return absd[a] < absd[b]; });
  std::vector<std::int64_t> r2(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j < n && absd[order[j]] == absd[order[i]]) ++j;
    const std::int64_t doubled = i + j + 1;
    for (int t = i; t < j; ++t) r2[order[t]] = doubled;
    i = j;
  }
  return r2;
}

}  // namespace statdetail

/// Two-sided paired signed-rank test. Zero differences are discarded; ties
/// among |differences| get average ranks. Up to 25 effective pairs the null
/// distribution is enumerated exactly over all 2^n sign assignments
/// (tie-adjusted, via a subset-sum count over doubled ranks); beyond that a
/// normal approximation with tie and continuity corrections is used.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                           const std::vector<double>& b) {
  if (a.size() != b.size())
    throw DataError("LengthMismatch",
                    "paired samples differ in length: " +
                        std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  std::vector<double> diff;
  diff.reserve(a.size());
  bool saw_pair = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
      throw NumericError("NonFiniteInput",
                         "pair " + std::to_string(i) + " is non-finite");
    saw_pair = true;
    const double d = a[i] - b[i];
    if (d != 0.0) diff.push_back(d);
  }
  if (saw_pair && diff.empty())
    throw DataError("AllZeroDifferences",
                    "every pair is tied; the test is undefined");
  const int n = static_cast<int>(diff.size());
  if (n < 5)
    throw DataError("TooFewPairs",
                    "need >= 5 nonzero differences, have " + std::to_string(n));

  std::vector<double> absd(diff.size());
  for (std::size_t i = 0; i < diff.size(); ++i) absd[i] = std::abs(diff[i]);
  const std::vector<std::int64_t> r2 = statdetail::doubled_ranks(absd);

  std::int64_t w2 = 0;  // doubled rank sum of positive differences
  for (int i = 0; i < n; ++i)
    if (diff[i] > 0.0) w2 += r2[i];

  WilcoxonResult out;
  out.statistic = static_cast<double>(w2) / 2.0;
  out.n_used = n;

  if (n <= 25) {
    out.exact = true;
    const std::int64_t total2 = n * static_cast<std::int64_t>(n + 1);
    std::vector<std::uint64_t> ways(static_cast<std::size_t>(total2) + 1, 0);
    ways[0] = 1;
    for (std::int64_t r : r2)
      for (std::int64_t s = total2; s >= r; --s)
        ways[static_cast<std::size_t>(s)] +=
            ways[static_cast<std::size_t>(s - r)];
    std::uint64_t count_le = 0, count_ge = 0;
    for (std::int64_t s = 0; s <= total2; ++s) {
      if (s <= w2) count_le += ways[static_cast<std::size_t>(s)];
      if (s >= w2) count_ge += ways[static_cast<std::size_t>(s)];
    }
    const double tail = static_cast<double>(std::min(count_le, count_ge));
    const double denom = std::pow(2.0, n);
    out.p_value = std::min(1.0, 2.0 * tail / denom);
    return out;
  }

  out.exact = false;
  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  {
    // tie correction: subtract sum(t^3 - t)/48 over tie groups
    std::vector<std::int64_t> sorted = r2;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      var -= (t * t * t - t) / 48.0;
      i = j;
    }
  }
  const double w = out.statistic - mean;
  const double cc = (w > 0.0) ? 0.5 : (w < 0.0 ? -0.5 : 0.0);
  const double z = (w - cc) / std::sqrt(var);
  out.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  return out;
}

}  // namespace ssvep
