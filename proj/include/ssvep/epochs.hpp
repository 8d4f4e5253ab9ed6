#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ssvep/errors.hpp"
#include "ssvep/rng.hpp"

namespace ssvep {

/// Epoched multi-channel recordings for one subject. Each trial is an
/// n_channels x n_samples matrix in microvolts; labels hold the 0-based
/// stimulus index per trial. trial_ids carry provenance tags so evaluation
/// code can assert that calibration and test trials never overlap; they are
/// generated on demand and not serialized.
struct EpochSet {
  std::vector<Eigen::MatrixXd> trials;
  std::vector<int> labels;
  std::vector<double> stim_freqs;
  std::vector<double> stim_phases;
  double fs = 0.0;
  std::string subject_id;
  std::vector<std::string> channel_names;
  std::vector<std::string> trial_ids;

  // Declared sample count for sets with zero trials (file round-trips keep
  // the tensor shape even when no trials are present).
  int declared_samples = 0;

  int n_trials() const { return static_cast<int>(trials.size()); }
  int n_channels() const { return static_cast<int>(channel_names.size()); }
  int n_stimuli() const { return static_cast<int>(stim_freqs.size()); }
  int n_samples() const {
    return trials.empty() ? declared_samples
                          : static_cast<int>(trials.front().cols());
  }
};

/// Round-half-away-from-zero sample index for a time in seconds.
inline int sample_index(double seconds, double fs) {
  return static_cast<int>(std::llround(seconds * fs));
}

/// The eight parieto-occipital/occipital electrode names used throughout.
inline const std::vector<std::string>& occipital_channels() {
  static const std::vector<std::string> names = {"PO3", "PO4", "PO5", "PO6",
                                                 "POz", "O1",  "O2",  "Oz"};
  return names;
}

inline void ensure_trial_ids(EpochSet& e) {
  if (!e.trial_ids.empty()) return;
  e.trial_ids.reserve(e.trials.size());
  for (std::size_t i = 0; i < e.trials.size(); ++i)
    e.trial_ids.push_back(e.subject_id + "#" + std::to_string(i));
}

inline void validate(const EpochSet& e) {
  if (e.fs <= 0.0) throw DataError("ShapeMismatch", "fs must be positive");
  if (e.labels.size() != e.trials.size())
    throw DataError("ShapeMismatch", "labels length " +
                                         std::to_string(e.labels.size()) +
                                         " != trial count " +
                                         std::to_string(e.trials.size()));
  if (e.stim_phases.size() != e.stim_freqs.size())
    throw DataError("ShapeMismatch", "stim_phases length != stim_freqs length");
  if (!e.trial_ids.empty() && e.trial_ids.size() != e.trials.size())
    throw DataError("ShapeMismatch", "trial_ids length != trial count");
  const int nc = e.n_channels();
  const int ns = e.n_samples();
  for (std::size_t i = 0; i < e.trials.size(); ++i) {
    const auto& t = e.trials[i];
    if (t.rows() != nc || t.cols() != ns)
      throw DataError("ShapeMismatch",
                      "trial " + std::to_string(i) + " has shape " +
                          std::to_string(t.rows()) + "x" +
                          std::to_string(t.cols()) + ", expected " +
                          std::to_string(nc) + "x" + std::to_string(ns));
    if (!t.allFinite())
      throw NumericError("NonFiniteInput",
                         "trial " + std::to_string(i) + " of subject '" +
                             e.subject_id + "' contains non-finite samples");
  }
  for (std::size_t i = 0; i < e.labels.size(); ++i)
    if (e.labels[i] < 0 || e.labels[i] >= e.n_stimuli())
      throw DataError("ShapeMismatch",
                      "label " + std::to_string(e.labels[i]) + " at trial " +
                          std::to_string(i) + " out of range");
}

/// Slice [start, start + length) out of every trial, where
/// start = round((onset_offset_s + latency_s) * fs) and
/// length = round(window_s * fs). Metadata and labels are preserved.
inline EpochSet extract_window(const EpochSet& e, double latency_s,
                               double window_s, double onset_offset_s = 0.0) {
  const int start = sample_index(onset_offset_s + latency_s, e.fs);
  const int length = sample_index(window_s, e.fs);
  if (start < 0 || length <= 0 || start + length > e.n_samples())
    throw ConfigError("WindowOutOfRange",
                      "window [" + std::to_string(start) + ", " +
                          std::to_string(start + length) + ") exceeds " +
                          std::to_string(e.n_samples()) + " samples");
  EpochSet out = e;
  out.declared_samples = length;
  for (auto& t : out.trials) t = t.middleCols(start, length).eval();
  return out;
}

/// Subset and reorder the channel axis to `names`.
inline EpochSet select_channels(const EpochSet& e,
                                const std::vector<std::string>& names) {
  std::vector<int> rows;
  rows.reserve(names.size());
  for (const auto& name : names) {
    auto it = std::find(e.channel_names.begin(), e.channel_names.end(), name);
    if (it == e.channel_names.end())
      throw ConfigError("UnknownChannel", "channel '" + name +
                                              "' not present in subject '" +
                                              e.subject_id + "'");
    rows.push_back(static_cast<int>(it - e.channel_names.begin()));
  }
  EpochSet out = e;
  out.channel_names = names;
  for (std::size_t t = 0; t < e.trials.size(); ++t) {
    Eigen::MatrixXd m(static_cast<int>(rows.size()), e.n_samples());
    for (std::size_t r = 0; r < rows.size(); ++r)
      m.row(static_cast<int>(r)) = e.trials[t].row(rows[r]);
    out.trials[t] = std::move(m);
  }
  return out;
}

enum class SplitOrder { kFirstN, kSeededShuffle };

/// Indices of trials labeled with stimulus k, in storage order.
inline std::vector<int> trials_for_stimulus(const EpochSet& e, int k) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < e.labels.size(); ++i)
    if (e.labels[i] == k) idx.push_back(static_cast<int>(i));
  return idx;
}

/// Mean of all trials with the given stimulus label (the per-stimulus
/// template). Throws when the stimulus has no trials.
inline Eigen::MatrixXd mean_trial(const EpochSet& e, int label) {
  Eigen::MatrixXd acc;
  int count = 0;
  for (std::size_t i = 0; i < e.trials.size(); ++i) {
    if (e.labels[i] != label) continue;
    if (count == 0)
      acc = e.trials[i];
    else
      acc += e.trials[i];
    ++count;
  }
  if (count == 0)
    throw DataError("InsufficientTrials",
                    "no trials with label " + std::to_string(label));
  return acc / static_cast<double>(count);
}

inline EpochSet subset_trials(const EpochSet& e, const std::vector<int>& idx) {
  EpochSet out = e;
  out.trials.clear();
  out.labels.clear();
  out.trial_ids.clear();
  for (int i : idx) {
    out.trials.push_back(e.trials[i]);
    out.labels.push_back(e.labels[i]);
    if (!e.trial_ids.empty()) out.trial_ids.push_back(e.trial_ids[i]);
  }
  return out;
}

/// Partition each stimulus class into n_calib calibration trials and the
/// remainder. kFirstN keeps storage order; kSeededShuffle permutes each
/// class with the given seed before taking the first n_calib.
inline std::pair<EpochSet, EpochSet> split_calibration_test(
    const EpochSet& e, int n_calib, SplitOrder order = SplitOrder::kFirstN,
    std::uint64_t seed = 0) {
  if (n_calib < 2)
    throw ConfigError("CalibTooSmall",
                      "n_calib=" + std::to_string(n_calib) +
                          " but at least 2 calibration trials are required");
  EpochSet tagged = e;
  ensure_trial_ids(tagged);
  Rng rng(seed);
  std::vector<int> calib_idx, test_idx;
  for (int k = 0; k < tagged.n_stimuli(); ++k) {
    std::vector<int> idx = trials_for_stimulus(tagged, k);
    if (static_cast<int>(idx.size()) <= n_calib)
      throw DataError("InsufficientTrials",
                      "stimulus " + std::to_string(k) + " has " +
                          std::to_string(idx.size()) + " trials, need > " +
                          std::to_string(n_calib));
    if (order == SplitOrder::kSeededShuffle) rng.shuffle(idx);
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < static_cast<std::size_t>(n_calib) ? calib_idx : test_idx)
          .push_back(idx[i]);
  }
  std::sort(calib_idx.begin(), calib_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {subset_trials(tagged, calib_idx), subset_trials(tagged, test_idx)};
}

}  // namespace ssvep
