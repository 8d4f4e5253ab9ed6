#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "ssvep/epochs.hpp"
#include "ssvep/errors.hpp"

namespace ssvep {

struct FilterSpec {
  enum class Kind { kNotch, kLowpass, kBandpass };
  Kind kind = Kind::kBandpass;
  double f_low = 0.0;   // bandpass lower edge, or notch center
  double f_high = 0.0;  // bandpass upper edge; unused for notch
  double fs = 0.0;
  int order_or_taps = 251;
  double notch_q = 35.0;
};

namespace dspdetail {

struct Biquad {
  double b0, b1, b2, a1, a2;
};

/// Notch with unit gain away from f0 and a zero pair exactly on f0; the
/// -3 dB bandwidth is f0/q.
inline Biquad design_notch(double f0, double fs, double q) {
  const double w0 = 2.0 * std::numbers::pi * f0 / fs;
  const double dw = w0 / q;
  const double beta = std::tan(dw / 2.0);  // -3 dB edges
  const double gain = 1.0 / (1.0 + beta);
  Biquad bq;
  bq.b0 = gain;
  bq.b1 = -2.0 * gain * std::cos(w0);
  bq.b2 = gain;
  bq.a1 = -2.0 * gain * std::cos(w0);
  bq.a2 = 2.0 * gain - 1.0;
  return bq;
}

inline double max_pole_radius(const Biquad& bq) {
  const double disc = bq.a1 * bq.a1 - 4.0 * bq.a2;
  if (disc < 0.0) return std::sqrt(bq.a2);
  const double r1 = std::abs((-bq.a1 + std::sqrt(disc)) / 2.0);
  const double r2 = std::abs((-bq.a1 - std::sqrt(disc)) / 2.0);
  return std::max(r1, r2);
}

inline Eigen::VectorXd biquad_forward(const Eigen::VectorXd& x,
                                      const Biquad& bq) {
  Eigen::VectorXd y(x.size());
  double z1 = 0.0, z2 = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = bq.b0 * x(i) + z1;
    z1 = bq.b1 * x(i) - bq.a1 * v + z2;
    z2 = bq.b2 * x(i) - bq.a2 * v;
    y(i) = v;
  }
  return y;
}

/// Odd (anti-symmetric) reflection padding on both ends.
inline Eigen::VectorXd reflect_pad(const Eigen::VectorXd& x, int pad) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd p(n + 2 * pad);
  for (int i = 0; i < pad; ++i) p(pad - 1 - i) = 2.0 * x(0) - x(i + 1);
  p.segment(pad, n) = x;
  for (int i = 0; i < pad; ++i) p(pad + n + i) = 2.0 * x(n - 1) - x(n - 2 - i);
  return p;
}

/// Forward-backward biquad with transient-length padding: the pad covers the
/// pole's impulse-response settle time (about 9 time constants), floored at
/// three filter orders, capped by the signal itself. Each direction pads and
/// crops independently; sharing one padded buffer would let the backward
/// pass resonate with the forward pass's decaying ring at the pad seam.
inline Eigen::VectorXd filtfilt_biquad(const Eigen::VectorXd& x,
                                       const Biquad& bq) {
  if (x.size() < 2) return x;
  const double r = max_pole_radius(bq);
  int pad = 6;
  if (r < 1.0) pad = std::max(pad, static_cast<int>(std::ceil(9.0 / (1.0 - r))));
  pad = std::min<int>(pad, static_cast<int>(x.size()) - 1);
  auto one_pass = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd p = reflect_pad(v, pad);
    p = biquad_forward(p, bq);
    return p.segment(pad, v.size()).eval();
  };
  Eigen::VectorXd f = one_pass(x);
  f.reverseInPlace();
  f = one_pass(f);
  f.reverseInPlace();
  return f;
}

/// Full linear convolution; switches to FFT when the direct product is large.
inline Eigen::VectorXd convolve_full(const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& h) {
  const Eigen::Index n = x.size(), m = h.size();
  const Eigen::Index out_len = n + m - 1;
  if (n * m <= 16384) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(out_len);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j) y(i + j) += x(i) * h(j);
    return y;
  }
  Eigen::Index size = 1;
  while (size < out_len) size <<= 1;
  std::vector<double> xp(size, 0.0), hp(size, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) xp[i] = x(i);
  for (Eigen::Index j = 0; j < m; ++j) hp[j] = h(j);
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> xf, hf;
  fft.fwd(xf, xp);
  fft.fwd(hf, hp);
  for (Eigen::Index i = 0; i < size; ++i) xf[i] *= hf[i];
  std::vector<double> yp;
  fft.inv(yp, xf);
  Eigen::VectorXd y(out_len);
  for (Eigen::Index i = 0; i < out_len; ++i) y(i) = yp[i];
  return y;
}

inline Eigen::VectorXd hamming(int taps) {
  Eigen::VectorXd w(taps);
  for (int i = 0; i < taps; ++i)
    w(i) = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (taps - 1));
  return w;
}

/// Windowed-sinc low-pass, unit DC gain. taps must be odd.
inline Eigen::VectorXd design_fir_lowpass(double fc, double fs, int taps) {
  const double wc = 2.0 * std::numbers::pi * fc / fs;
  const int mid = (taps - 1) / 2;
  Eigen::VectorXd h(taps);
  for (int i = 0; i < taps; ++i) {
    const int k = i - mid;
    h(i) = (k == 0) ? wc / std::numbers::pi
                    : std::sin(wc * k) / (std::numbers::pi * k);
  }
  h.array() *= hamming(taps).array();
  h /= h.sum();
  return h;
}

/// Windowed-sinc band-pass, unit gain at the band center. taps must be odd.
inline Eigen::VectorXd design_fir_bandpass(double f1, double f2, double fs,
                                           int taps) {
  const double w1 = 2.0 * std::numbers::pi * f1 / fs;
  const double w2 = 2.0 * std::numbers::pi * f2 / fs;
  const int mid = (taps - 1) / 2;
  Eigen::VectorXd h(taps);
  for (int i = 0; i < taps; ++i) {
    const int k = i - mid;
    h(i) = (k == 0) ? (w2 - w1) / std::numbers::pi
                    : (std::sin(w2 * k) - std::sin(w1 * k)) /
                          (std::numbers::pi * k);
  }
  h.array() *= hamming(taps).array();
  const double wc = (w1 + w2) / 2.0;
  double center_gain = 0.0;
  for (int i = 0; i < taps; ++i) center_gain += h(i) * std::cos(wc * (i - mid));
  h /= center_gain;
  return h;
}

/// Zero-phase FIR application: reflect-pad by the tap count, convolve, then
/// crop with the (taps-1)/2 group delay removed.
inline Eigen::VectorXd fir_zero_phase(const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& h) {
  const int taps = static_cast<int>(h.size());
  const int mid = (taps - 1) / 2;
  const int pad = std::min<int>(taps, static_cast<int>(x.size()) - 1);
  Eigen::VectorXd p = reflect_pad(x, pad);
  Eigen::VectorXd full = convolve_full(p, h);
  return full.segment(pad + mid, x.size());
}

template <typename F>
EpochSet map_rows(const EpochSet& e, F&& row_op) {
  EpochSet out = e;
  for (auto& trial : out.trials) {
    for (int c = 0; c < trial.rows(); ++c) {
      Eigen::VectorXd row = trial.row(c).transpose();
      trial.row(c) = row_op(row).transpose();
    }
  }
  return out;
}

}  // namespace dspdetail

/// Zero-phase biquad notch at f0 on every channel of every trial.
inline EpochSet apply_notch(const EpochSet& e, double f0, double q = 35.0) {
  if (f0 <= 0.0 || f0 >= e.fs / 2.0)
    throw ConfigError("FrequencyOutOfRange",
                      "notch frequency " + std::to_string(f0) +
                          " outside (0, fs/2) for fs " + std::to_string(e.fs));
  if (q <= 0.0)
    throw ConfigError("FrequencyOutOfRange", "notch q must be positive");
  const auto bq = dspdetail::design_notch(f0, e.fs, q);
  return dspdetail::map_rows(
      e, [&bq](const Eigen::VectorXd& x) { return dspdetail::filtfilt_biquad(x, bq); });
}

/// Zero-phase anti-alias low-pass at 0.8 * (fs / (2*factor)), then keep every
/// factor-th sample. n_samples becomes ceil(n / factor).
inline EpochSet decimate(const EpochSet& e, int factor) {
  if (factor < 1)
    throw ConfigError("InvalidFactor",
                      "decimation factor must be >= 1, got " +
                          std::to_string(factor));
  if (factor == 1) return e;
  const double cutoff = 0.8 * (e.fs / (2.0 * factor));
  int taps = 20 * factor + 1;
  const Eigen::VectorXd h = dspdetail::design_fir_lowpass(cutoff, e.fs, taps);
  EpochSet low = dspdetail::map_rows(
      e, [&h](const Eigen::VectorXd& x) { return dspdetail::fir_zero_phase(x, h); });
  const int n_out = (low.n_samples() + factor - 1) / factor;
  EpochSet out = low;
  out.fs = e.fs / factor;
  out.declared_samples = n_out;
  for (auto& trial : out.trials) {
    Eigen::MatrixXd d(trial.rows(), n_out);
    for (int i = 0; i < n_out; ++i) d.col(i) = trial.col(i * factor);
    trial = std::move(d);
  }
  return out;
}

/// Sub-band specs: band m (1-based) covers [m*base_low, high_edge].
inline std::vector<FilterSpec> design_filterbank(double fs, int n_bands,
                                                 double base_low = 8.0,
                                                 double high_edge = 88.0,
                                                 int taps = 251) {
  if (n_bands < 1)
    throw ConfigError("InvalidBandCount", "n_bands must be >= 1");
  if (high_edge >= fs / 2.0)
    throw ConfigError("EdgeAboveNyquist",
                      "high edge " + std::to_string(high_edge) +
                          " must stay below fs/2 = " + std::to_string(fs / 2.0));
  if (n_bands * base_low >= high_edge)
    throw ConfigError("InvalidBandCount",
                      "n_bands * base_low must stay below the high edge");
  std::vector<FilterSpec> bank;
  bank.reserve(n_bands);
  for (int m = 1; m <= n_bands; ++m) {
    FilterSpec s;
    s.kind = FilterSpec::Kind::kBandpass;
    s.f_low = m * base_low;
    s.f_high = high_edge;
    s.fs = fs;
    s.order_or_taps = taps;
    bank.push_back(s);
  }
  return bank;
}

namespace dspdetail {
inline Eigen::VectorXd bandpass_kernel(const FilterSpec& spec) {
  if (spec.order_or_taps < 3 || spec.order_or_taps % 2 == 0)
    throw ConfigError("ConfigRange", "FIR taps must be odd and >= 3");
  if (spec.f_low <= 0.0 || spec.f_low >= spec.f_high ||
      spec.f_high >= spec.fs / 2.0)
    throw ConfigError("FrequencyOutOfRange", "band edges must satisfy 0 < low < high < fs/2");
  return design_fir_bandpass(spec.f_low, spec.f_high, spec.fs,
                             spec.order_or_taps);
}
}  // namespace dspdetail

/// Linear-phase band-pass with group-delay compensation, one trial at a
/// time. The caller vouches that the data is sampled at spec.fs.
inline Eigen::MatrixXd apply_bandpass(const Eigen::MatrixXd& trial,
                                      const FilterSpec& spec) {
  const Eigen::VectorXd h = dspdetail::bandpass_kernel(spec);
  Eigen::MatrixXd out(trial.rows(), trial.cols());
  for (int c = 0; c < trial.rows(); ++c) {
    Eigen::VectorXd row = trial.row(c).transpose();
    out.row(c) = dspdetail::fir_zero_phase(row, h).transpose();
  }
  return out;
}

/// Linear-phase band-pass with group-delay compensation.
inline EpochSet apply_bandpass(const EpochSet& e, const FilterSpec& spec) {
  if (spec.fs != e.fs)
    throw ConfigError("SampleRateMismatch",
                      "filter designed for fs " + std::to_string(spec.fs) +
                          " applied at fs " + std::to_string(e.fs));
  const Eigen::VectorXd h = dspdetail::bandpass_kernel(spec);
  return dspdetail::map_rows(
      e, [&h](const Eigen::VectorXd& x) { return dspdetail::fir_zero_phase(x, h); });
}

}  // namespace ssvep
