#pragma once

#include <string>

#include "ssvep/epochs.hpp"
#include "ssvep/rng.hpp"

namespace test_helpers {

/// Runs f, returns the ssvep::Error code it throws ("" if it does not throw).
template <typename F>
std::string thrown_code(F&& f) {
  try {
    f();
  } catch (const ssvep::Error& e) {
    return e.code();
  }
  return "";
}

/// Random rectangular EpochSet: n_trials_per_stim trials per stimulus in
/// block-major order, values uniform in [-100, 100].
inline ssvep::EpochSet make_random_epochs(ssvep::Rng& rng, int n_stimuli,
                                          int n_trials_per_stim, int n_channels,
                                          int n_samples, double fs = 250.0,
                                          bool f32_values = false) {
  ssvep::EpochSet e;
  e.fs = fs;
  e.subject_id = "T" + std::to_string(rng.index(1000));
  for (int c = 0; c < n_channels; ++c)
    e.channel_names.push_back("CH" + std::to_string(c + 1));
  for (int k = 0; k < n_stimuli; ++k) {
    e.stim_freqs.push_back(8.0 + k);
    e.stim_phases.push_back(0.5 * k);
  }
  for (int b = 0; b < n_trials_per_stim; ++b) {
    for (int k = 0; k < n_stimuli; ++k) {
      Eigen::MatrixXd m(n_channels, n_samples);
      for (int c = 0; c < n_channels; ++c)
        for (int s = 0; s < n_samples; ++s) {
          double v = rng.uniform(-100.0, 100.0);
          m(c, s) = f32_values ? static_cast<double>(static_cast<float>(v)) : v;
        }
      e.trials.push_back(std::move(m));
      e.labels.push_back(k);
    }
  }
  return e;
}

inline bool same_tensor(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

inline bool same_tensor(const ssvep::EpochSet& a, const ssvep::EpochSet& b) {
  if (a.trials.size() != b.trials.size()) return false;
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    if (a.trials[i].rows() != b.trials[i].rows() ||
        a.trials[i].cols() != b.trials[i].cols())
      return false;
    if (a.trials[i] != b.trials[i]) return false;
  }
  return true;
}

}  // namespace test_helpers
