#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "ssvep/errors.hpp"

namespace ssvep {

struct Spectrum {
  Eigen::VectorXd freqs;   // Hz, ascending, spaced by resolution
  Eigen::VectorXd power;   // density per Hz
  double resolution = 0.0;  // fs / seg_len
};

/// Welch estimate: Hann-windowed segments with fractional overlap, one-sided
/// density scaled so the integral approximates the signal's mean power.
inline Spectrum psd_welch(const Eigen::VectorXd& x, double fs, int seg_len,
                          double overlap = 0.5) {
  if (seg_len < 2 || seg_len > x.size())
    throw ConfigError("SegmentTooLong",
                      "seg_len " + std::to_string(seg_len) +
                          " not in [2, signal length " +
                          std::to_string(x.size()) + "]");
  if (overlap < 0.0 || overlap >= 1.0)
    throw ConfigError("ConfigRange", "overlap must be in [0, 1)");
  if (fs <= 0.0) throw ConfigError("ConfigRange", "fs must be positive");

  // Periodic Hann window.
  Eigen::VectorXd w(seg_len);
  for (int i = 0; i < seg_len; ++i)
    w(i) = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / seg_len));
  const double win_power = w.squaredNorm();

  int hop = seg_len - static_cast<int>(overlap * seg_len);
  if (hop < 1) hop = 1;

  const int n_bins = seg_len / 2 + 1;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n_bins);
  int n_segments = 0;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  std::vector<double> seg(seg_len);
  for (Eigen::Index start = 0; start + seg_len <= x.size(); start += hop) {
    for (int i = 0; i < seg_len; ++i) seg[i] = x(start + i) * w(i);
    fft.fwd(spec, seg);
    for (int k = 0; k < n_bins; ++k) {
      double p = std::norm(spec[k]) / (fs * win_power);
      // One-sided: double everything except DC and (for even lengths) Nyquist.
      if (k != 0 && !(seg_len % 2 == 0 && k == n_bins - 1)) p *= 2.0;
      acc(k) += p;
    }
    ++n_segments;
  }
  acc /= n_segments;

  Spectrum s;
  s.resolution = fs / seg_len;
  s.freqs.resize(n_bins);
  for (int k = 0; k < n_bins; ++k) s.freqs(k) = k * s.resolution;
  s.power = acc;
  return s;
}

inline void write_spectrum_csv(const Spectrum& s, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("IoFailure", "cannot open " + path + " for writing");
  out << "freq_hz,power\n";
  for (Eigen::Index i = 0; i < s.freqs.size(); ++i) {
    out << s.freqs(i) << "," << s.power(i) << "\n";
  }
  if (!out) throw DataError("IoFailure", "short write to " + path);
}

}  // namespace ssvep
