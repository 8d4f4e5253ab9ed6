#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "ssvep/epochs.hpp"
#include "ssvep/errors.hpp"
#include "ssvep/rng.hpp"
#include "ssvep/toml_lite.hpp"

namespace ssvep {

struct SynthConfig {
  int n_subjects = 2;
  int n_stimuli = 8;
  std::vector<double> freqs;   // Hz, one per stimulus
  std::vector<double> phases;  // radians, one per stimulus
  int n_trials_per_stim = 6;
  double fs = 250.0;
  double window_s = 1.5;
  int n_channels = 8;
  int n_harmonics = 3;
  double snr_db = 10.0;
  std::uint64_t mixing_seed = 1;
  std::uint64_t noise_seed = 2;
};

// snr_db at or above this is generated without any noise; the empirical
// scaling below cannot certify relative error tighter than ~1e-10 anyway.
inline constexpr double kNoiselessSnrDb = 180.0;

inline void validate_synth_config(const SynthConfig& c) {
  if (c.n_subjects < 1 || c.n_stimuli < 1 || c.n_trials_per_stim < 1 ||
      c.n_channels < 1)
    throw ConfigError("InvalidConfig", "synth counts must be >= 1");
  if (c.n_harmonics < 1)
    throw ConfigError("InvalidConfig", "n_harmonics must be >= 1");
  if (c.fs <= 0.0 || c.window_s <= 0.0)
    throw ConfigError("InvalidConfig", "fs and window_s must be > 0");
  if (static_cast<int>(c.freqs.size()) != c.n_stimuli ||
      static_cast<int>(c.phases.size()) != c.n_stimuli)
    throw ConfigError("InvalidConfig",
                      "freqs and phases must list one value per stimulus");
  for (double f : c.freqs) {
    if (f <= 0.0)
      throw ConfigError("InvalidConfig", "freqs must be strictly positive");
    if (c.n_harmonics * f >= c.fs / 2.0)
      throw ConfigError("InvalidConfig",
                        "n_harmonics * max(freqs) must stay below fs/2");
  }
}

/// Default stimulus table: freqs start..start+step*(n-1), phases k*0.5*pi.
inline void synth_default_stim_table(SynthConfig& c, double start_hz,
                                     double step_hz) {
  c.freqs.resize(c.n_stimuli);
  c.phases.resize(c.n_stimuli);
  for (int k = 0; k < c.n_stimuli; ++k) {
    c.freqs[k] = start_hz + step_hz * k;
    c.phases[k] = 0.5 * std::numbers::pi * k;
  }
}

inline SynthConfig load_synth_config(const TomlTable& t) {
  auto key = [&t](const std::string& k) {
    return t.has("synth." + k) ? "synth." + k : k;
  };
  SynthConfig c;
  c.n_subjects = static_cast<int>(t.get_int_or(key("n_subjects"), c.n_subjects));
  c.n_stimuli = static_cast<int>(t.get_int_or(key("n_stimuli"), c.n_stimuli));
  c.n_trials_per_stim =
      static_cast<int>(t.get_int_or(key("n_trials_per_stim"), c.n_trials_per_stim));
  c.fs = t.get_double_or(key("fs"), c.fs);
  c.window_s = t.get_double_or(key("window_s"), c.window_s);
  c.n_channels = static_cast<int>(t.get_int_or(key("n_channels"), c.n_channels));
  c.n_harmonics = static_cast<int>(t.get_int_or(key("n_harmonics"), c.n_harmonics));
  c.snr_db = t.get_double_or(key("snr_db"), c.snr_db);
  c.mixing_seed = static_cast<std::uint64_t>(t.get_int_or(key("mixing_seed"), 1));
  c.noise_seed = static_cast<std::uint64_t>(t.get_int_or(key("noise_seed"), 2));
  if (t.has(key("freqs"))) {
    c.freqs = t.get_double_array(key("freqs"));
    if (t.has(key("phases")))
      c.phases = t.get_double_array(key("phases"));
    else {
      c.phases.resize(c.freqs.size());
      for (std::size_t k = 0; k < c.freqs.size(); ++k)
        c.phases[k] = 0.5 * std::numbers::pi * k;
    }
    c.n_stimuli = static_cast<int>(c.freqs.size());
  } else {
    synth_default_stim_table(c, t.get_double_or(key("freq_start"), 8.0),
                             t.get_double_or(key("freq_step"), 1.0));
  }
  validate_synth_config(c);
  return c;
}

/// Latent stimulus basis: 2*n_harmonics rows, rows 2(h-1) and 2(h-1)+1 hold
/// sin and cos of harmonic h at amplitude 1/h.
inline Eigen::MatrixXd synth_latent(double freq, double phase, int n_harmonics,
                                    double fs, int n_samples) {
  Eigen::MatrixXd L(2 * n_harmonics, n_samples);
  for (int h = 1; h <= n_harmonics; ++h) {
    const double amp = 1.0 / h;
    for (int n = 0; n < n_samples; ++n) {
      const double arg =
          2.0 * std::numbers::pi * h * freq * (n / fs) + h * phase;
      L(2 * (h - 1), n) = amp * std::sin(arg);
      L(2 * (h - 1) + 1, n) = amp * std::cos(arg);
    }
  }
  return L;
}

namespace detail {

/// Orthonormal factor of a random Gaussian matrix (QR with the R diagonal
/// forced positive so the factor is uniquely determined).
inline Eigen::MatrixXd random_orthonormal(int n, int cols, Rng& rng) {
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = rng.gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, cols);
  Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(cols, cols);
  for (int j = 0; j < cols; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace detail

/// Random [n_channels x 2*n_harmonics] mixing matrix with singular values in
/// [0.5, 5], so the condition number stays below 20.
inline Eigen::MatrixXd synth_mixing_matrix(int n_channels, int n_harmonics,
                                           std::uint64_t seed) {
  const int latent_dim = 2 * n_harmonics;
  const int r = std::min(n_channels, latent_dim);
  Rng rng(seed);
  Eigen::MatrixXd u = detail::random_orthonormal(n_channels, r, rng);
  Eigen::MatrixXd v = detail::random_orthonormal(latent_dim, r, rng);
  Eigen::VectorXd sigma(r);
  for (int i = 0; i < r; ++i) sigma(i) = rng.uniform(0.5, 5.0);
  return u * sigma.asDiagonal() * v.transpose();
}

struct SynthResult {
  std::vector<EpochSet> subjects;
  std::vector<Eigen::MatrixXd> mixing;  // one ground-truth matrix per subject
};

/// Generates one EpochSet per synthetic subject. Trials are M_s * L_k plus
/// AR(1)+white noise scaled so that total signal power over noise power hits
/// snr_db. Trial order is block-major: block b holds one trial per stimulus.
inline SynthResult synth_generate(const SynthConfig& c) {
  validate_synth_config(c);
  const int n_samples = sample_index(c.window_s, c.fs);
  const bool noiseless = c.snr_db >= kNoiselessSnrDb;
  const double snr_lin = std::pow(10.0, c.snr_db / 10.0);

  std::vector<Eigen::MatrixXd> latents;
  latents.reserve(c.n_stimuli);
  for (int k = 0; k < c.n_stimuli; ++k)
    latents.push_back(
        synth_latent(c.freqs[k], c.phases[k], c.n_harmonics, c.fs, n_samples));

  // Channel names reuse the occipital montage where it fits so that real
  // manifests (which select those names) work on synthetic files too.
  std::vector<std::string> channel_names;
  for (int ch = 0; ch < c.n_channels; ++ch) {
    const auto& occ = occipital_channels();
    channel_names.push_back(ch < static_cast<int>(occ.size())
                                ? occ[ch]
                                : "CH" + std::to_string(ch + 1));
  }

  SynthResult out;
  for (int s = 0; s < c.n_subjects; ++s) {
    Eigen::MatrixXd mix =
        synth_mixing_matrix(c.n_channels, c.n_harmonics,
                            derive_seed(c.mixing_seed, static_cast<std::uint64_t>(s)));
    EpochSet e;
    e.fs = c.fs;
    e.subject_id = "synth" + std::to_string(s + 1);
    e.channel_names = channel_names;
    e.stim_freqs = c.freqs;
    e.stim_phases = c.phases;
    e.declared_samples = n_samples;
    for (int b = 0; b < c.n_trials_per_stim; ++b) {
      for (int k = 0; k < c.n_stimuli; ++k) {
        Eigen::MatrixXd trial = mix * latents[k];
        if (!noiseless) {
          const int trial_index = b * c.n_stimuli + k;
          Rng rng(derive_seed(c.noise_seed, static_cast<std::uint64_t>(s),
                              static_cast<std::uint64_t>(trial_index)));
          Eigen::MatrixXd noise(c.n_channels, n_samples);
          for (int ch = 0; ch < c.n_channels; ++ch) {
            double ar = 0.0;
            for (int n = 0; n < n_samples; ++n) {
              ar = 0.9 * ar + rng.gaussian();
              noise(ch, n) = ar + rng.gaussian();
            }
          }
          const double sig_power = trial.squaredNorm();
          const double noise_power = noise.squaredNorm();
          if (noise_power > 0.0 && sig_power > 0.0)
            trial += std::sqrt(sig_power / (noise_power * snr_lin)) * noise;
        }
        e.trials.push_back(std::move(trial));
        e.labels.push_back(k);
      }
    }
    ensure_trial_ids(e);
    out.subjects.push_back(std::move(e));
    out.mixing.push_back(std::move(mix));
  }
  return out;
}

}  // namespace ssvep
