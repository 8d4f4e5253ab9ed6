#pragma once

#include <Eigen/Dense>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ssvep/epochs.hpp"
#include "ssvep/log.hpp"

namespace ssvep {

/// Per-stimulus affine channel maps. Each matrix is [N_out x (N_in + 1)]
/// and acts on a trial as P * [x; 1]. Fitting is per stimulus on purpose:
/// a transform only exists for stimuli that were fitted.
struct LstTransform {
  std::map<int, Eigen::MatrixXd> per_stimulus;
  int n_in = 0;
  int n_out = 0;
  bool rank_deficient = false;  // some fit leaned on the ridge
};

/// Least-squares fit of one affine map per stimulus: the source trials of
/// stimulus k (channel rows concatenated across trials, plus a ones row)
/// are regressed onto the target's stimulus-k template tiled per trial.
/// Solved by normal equations with a Tikhonov ridge of 1e-8 times the mean
/// Gram diagonal, which keeps short rank-deficient windows solvable; when
/// the ridge is within two orders of the smallest Gram eigenvalue the fit
/// is flagged and logged as rank deficient.
inline LstTransform lst_fit(const EpochSet& source,
                            const EpochSet& target_calib) {
  validate(source);
  validate(target_calib);
  if (source.n_samples() != target_calib.n_samples())
    throw DataError("ShapeMismatch",
                    "source and target sample counts differ");

  std::set<int> stims(source.labels.begin(), source.labels.end());
  for (int k : stims)
    if (trials_for_stimulus(target_calib, k).empty())
      throw DataError("StimulusMismatch",
                      "target has no calibration trials for stimulus " +
                          std::to_string(k));

  LstTransform out;
  out.n_in = source.n_channels();
  out.n_out = target_calib.n_channels();
  const int ns = source.n_samples();
  for (int k : stims) {
    const auto idx = trials_for_stimulus(source, k);
    const int nt = static_cast<int>(idx.size());
    Eigen::MatrixXd x(out.n_in + 1, static_cast<Eigen::Index>(nt) * ns);
    Eigen::MatrixXd y(out.n_out, static_cast<Eigen::Index>(nt) * ns);
    const Eigen::MatrixXd tmpl = mean_trial(target_calib, k);
    for (int i = 0; i < nt; ++i) {
      x.block(0, static_cast<Eigen::Index>(i) * ns, out.n_in, ns) =
          source.trials[idx[i]];
      x.block(out.n_in, static_cast<Eigen::Index>(i) * ns, 1, ns).setOnes();
      y.middleCols(static_cast<Eigen::Index>(i) * ns, ns) = tmpl;
    }
    Eigen::MatrixXd gram = x * x.transpose();
    const double ridge =
        1e-8 * gram.trace() / static_cast<double>(gram.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.eigenvalues()(0) < 100.0 * ridge) {
      out.rank_deficient = true;
      log::warn("RankDeficient: stimulus " + std::to_string(k) +
                " source Gram matrix is singular to the ridge scale");
    }
    gram.diagonal().array() += ridge;
    // P solves (gram) P^T = x y^T, i.e. P = y x^T gram^{-1}.
    out.per_stimulus[k] =
        gram.ldlt().solve(x * y.transpose()).transpose();
  }
  return out;
}

/// Applies the per-stimulus affine maps: each trial of stimulus k becomes
/// P_k * [x; 1]. Metadata handling mirrors the network alignment path so
/// transformed sets pool cleanly with real calibration data.
inline EpochSet lst_transform(const LstTransform& t, const EpochSet& source,
                              const std::string& target_label = "target",
                              std::vector<std::string> out_channel_names = {}) {
  validate(source);
  if (source.n_channels() != t.n_in)
    throw DataError("ShapeMismatch",
                    "source has " + std::to_string(source.n_channels()) +
                        " channels, transform expects " +
                        std::to_string(t.n_in));
  for (int label : source.labels)
    if (!t.per_stimulus.count(label))
      throw DataError("MissingStimulusTransform",
                      "no fitted transform for stimulus " +
                          std::to_string(label));

  const int nco = t.n_out;
  if (out_channel_names.empty()) {
    if (nco == source.n_channels())
      out_channel_names = source.channel_names;
    else
      for (int c = 0; c < nco; ++c)
        out_channel_names.push_back("ch" + std::to_string(c + 1));
  }
  if (static_cast<int>(out_channel_names.size()) != nco)
    throw DataError("ShapeMismatch", "output channel name count mismatch");

  EpochSet out;
  out.labels = source.labels;
  out.stim_freqs = source.stim_freqs;
  out.stim_phases = source.stim_phases;
  out.fs = source.fs;
  out.subject_id = source.subject_id + "->" + target_label;
  out.channel_names = std::move(out_channel_names);
  out.declared_samples = source.n_samples();
  const int ns = source.n_samples();
  out.trials.reserve(source.trials.size());
  for (std::size_t i = 0; i < source.trials.size(); ++i) {
    const Eigen::MatrixXd& p = t.per_stimulus.at(source.labels[i]);
    Eigen::MatrixXd aug(t.n_in + 1, ns);
    aug.topRows(t.n_in) = source.trials[i];
    aug.bottomRows(1).setOnes();
    out.trials.push_back(p * aug);
  }
  EpochSet tagged_src = source;
  ensure_trial_ids(tagged_src);
  out.trial_ids.reserve(tagged_src.trial_ids.size());
  for (const auto& id : tagged_src.trial_ids)
    out.trial_ids.push_back(id + "->" + target_label);
  return out;
}

}  // namespace ssvep
