#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ssvep/epochs.hpp"
#include "ssvep/errors.hpp"
#include "ssvep/filters.hpp"

namespace ssvep {

/// Harmonic-decay weight of sub-band m (1-based).
inline double trca_band_weight(int m) {
  return std::pow(static_cast<double>(m), -1.25) + 0.25;
}

/// Fitted filter-bank ensemble decoder. For every sub-band the ensemble
/// matrix stacks one unit-norm spatial filter per stimulus; templates are
/// the band-filtered calibration means.
struct TrcaModel {
  int n_bands = 0;
  int n_stimuli = 0;
  int n_channels = 0;
  int n_samples = 0;
  std::vector<Eigen::MatrixXd> ensemble;                // [band] N_C x K
  std::vector<std::vector<Eigen::MatrixXd>> templates;  // [band][stim] N_C x N_S
  std::vector<std::vector<double>> eigenvalues;         // [band][stim] leading
  std::vector<double> band_weights;                     // [band] a(m)
};

namespace trcadetail {

/// Leading generalized eigenvector of S w = lambda Q w via symmetric
/// whitening of Q. Returns the unit-norm filter with its eigenvalue; the
/// sign is canonicalized so the first non-negligible component is positive.
inline std::pair<Eigen::VectorXd, double> leading_filter(
    const Eigen::MatrixXd& s, const Eigen::MatrixXd& q) {
  const int n = static_cast<int>(q.rows());
  Eigen::MatrixXd qj = q;
  const double jitter = 1e-10 * q.trace() / static_cast<double>(n);
  qj.diagonal().array() += jitter;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> qes(qj);
  if (qes.info() != Eigen::Success || !(qes.eigenvalues().array() > 0.0).all())
    throw NumericError("SingularCovariance",
                       "trial covariance not positive definite after jitter");
  Eigen::MatrixXd qinv_half = qes.eigenvectors() *
                              qes.eigenvalues().array().rsqrt().matrix().asDiagonal() *
                              qes.eigenvectors().transpose();

  Eigen::MatrixXd m = qinv_half * s * qinv_half;
  m = 0.5 * (m + m.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> mes(m);
  if (mes.info() != Eigen::Success)
    throw NumericError("SingularCovariance", "whitened eigensolve failed");
  Eigen::VectorXd w = qinv_half * mes.eigenvectors().col(n - 1);
  const double norm = w.norm();
  if (!(norm > 0.0) || !w.allFinite())
    throw NumericError("SingularCovariance", "degenerate spatial filter");
  w /= norm;
  for (int i = 0; i < n; ++i) {
    if (std::abs(w(i)) <= 1e-12) continue;
    if (w(i) < 0.0) w = -w;
    break;
  }
  return {w, mes.eigenvalues()(n - 1)};
}

inline double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double ma = a.mean(), mb = b.mean();
  Eigen::VectorXd ca = a.array() - ma;
  Eigen::VectorXd cb = b.array() - mb;
  const double denom = ca.norm() * cb.norm();
  if (denom == 0.0) return 0.0;
  return ca.dot(cb) / denom;
}

}  // namespace trcadetail

/// Fits one spatial filter and template per (stimulus, sub-band) from
/// calibration trials. Covariances see per-channel-centered trials; the
/// templates keep the raw band-filtered mean. S collects inter-trial
/// covariance (i != j), Q the per-trial covariance, and the filter is the
/// leading solution of S w = lambda Q w.
inline TrcaModel trca_fit(const EpochSet& calib, int n_bands,
                          const std::vector<FilterSpec>& bank) {
  validate(calib);
  if (n_bands < 1 || static_cast<int>(bank.size()) != n_bands)
    throw ConfigError("ConfigRange",
                      "bank size " + std::to_string(bank.size()) +
                          " does not match n_bands " + std::to_string(n_bands));
  for (const auto& spec : bank)
    if (spec.fs != calib.fs)
      throw ConfigError("SampleRateMismatch",
                        "bank designed for fs " + std::to_string(spec.fs) +
                            ", calibration data at " + std::to_string(calib.fs));

  TrcaModel model;
  model.n_bands = n_bands;
  model.n_stimuli = calib.n_stimuli();
  model.n_channels = calib.n_channels();
  model.n_samples = calib.n_samples();

  for (int k = 0; k < model.n_stimuli; ++k)
    if (static_cast<int>(trials_for_stimulus(calib, k).size()) < 2)
      throw DataError("TooFewTrials",
                      "stimulus " + std::to_string(k) +
                          " needs >= 2 calibration trials");

  model.ensemble.resize(n_bands);
  model.templates.resize(n_bands);
  model.eigenvalues.resize(n_bands);
  model.band_weights.resize(n_bands);
  for (int m = 0; m < n_bands; ++m) {
    model.band_weights[m] = trca_band_weight(m + 1);
    model.ensemble[m].resize(model.n_channels, model.n_stimuli);
    model.templates[m].resize(model.n_stimuli);
    model.eigenvalues[m].resize(model.n_stimuli);
    for (int k = 0; k < model.n_stimuli; ++k) {
      const auto idx = trials_for_stimulus(calib, k);
      std::vector<Eigen::MatrixXd> banded;
      banded.reserve(idx.size());
      for (int i : idx) banded.push_back(apply_bandpass(calib.trials[i], bank[m]));

      Eigen::MatrixXd tmpl = banded[0];
      for (std::size_t i = 1; i < banded.size(); ++i) tmpl += banded[i];
      tmpl /= static_cast<double>(banded.size());
      model.templates[m][k] = tmpl;

      Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(model.n_channels,
                                                  model.n_samples);
      Eigen::MatrixXd q = Eigen::MatrixXd::Zero(model.n_channels,
                                                model.n_channels);
      for (auto& x : banded) {
        x.colwise() -= x.rowwise().mean().eval();
        sum += x;
        q += x * x.transpose();
      }
      // sum over i != j of X_i X_j^T equals the outer square of the summed
      // trials minus the diagonal i == j terms.
      Eigen::MatrixXd s = sum * sum.transpose() - q;
      auto [w, lambda] = trcadetail::leading_filter(s, q);
      model.ensemble[m].col(k) = w;
      model.eigenvalues[m][k] = lambda;
    }
  }
  return model;
}

/// Scores one trial against every stimulus: per band, the Pearson
/// correlation between the ensemble projection of the trial and of each
/// template, combined across bands with the harmonic-decay weights.
/// Returns the winning stimulus (ties go to the lowest index) and all
/// combined scores.
inline std::pair<int, std::vector<double>> trca_classify(
    const Eigen::MatrixXd& trial, const TrcaModel& model,
    const std::vector<FilterSpec>& bank) {
  if (trial.rows() != model.n_channels || trial.cols() != model.n_samples)
    throw DataError("ShapeMismatch",
                    "trial is " + std::to_string(trial.rows()) + "x" +
                        std::to_string(trial.cols()) + ", model expects " +
                        std::to_string(model.n_channels) + "x" +
                        std::to_string(model.n_samples));
  if (!trial.allFinite())
    throw NumericError("NonFiniteInput", "test trial has non-finite values");
  if (static_cast<int>(bank.size()) != model.n_bands)
    throw ConfigError("ConfigRange", "bank size does not match fitted model");

  std::vector<double> rho(model.n_stimuli, 0.0);
  for (int m = 0; m < model.n_bands; ++m) {
    Eigen::MatrixXd banded = apply_bandpass(trial, bank[m]);
    Eigen::MatrixXd proj = model.ensemble[m].transpose() * banded;
    Eigen::Map<const Eigen::VectorXd> pv(proj.data(), proj.size());
    for (int k = 0; k < model.n_stimuli; ++k) {
      Eigen::MatrixXd tproj = model.ensemble[m].transpose() * model.templates[m][k];
      Eigen::Map<const Eigen::VectorXd> tv(tproj.data(), tproj.size());
      rho[k] += model.band_weights[m] * trcadetail::pearson(pv, tv);
    }
  }
  int best = 0;
  for (int k = 1; k < model.n_stimuli; ++k)
    if (rho[k] > rho[best]) best = k;
  return {best, rho};
}

/// Fraction of matching labels.
inline double accuracy(const std::vector<int>& pred,
                       const std::vector<int>& truth) {
  if (pred.size() != truth.size())
    throw DataError("LengthMismatch",
                    "prediction and truth lengths differ: " +
                        std::to_string(pred.size()) + " vs " +
                        std::to_string(truth.size()));
  if (pred.empty()) throw DataError("Empty", "no labels to score");
  int hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == truth[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

/// Text summary for inspection: per-band, per-stimulus leading eigenvalue
/// and the (unit) filter norms.
inline std::string trca_summary(const TrcaModel& model) {
  std::string out;
  for (int m = 0; m < model.n_bands; ++m) {
    out += "band " + std::to_string(m + 1) +
           " weight " + std::to_string(model.band_weights[m]) + "\n";
    for (int k = 0; k < model.n_stimuli; ++k) {
      out += "  stimulus " + std::to_string(k) + ": eigenvalue " +
             std::to_string(model.eigenvalues[m][k]) + ", filter norm " +
             std::to_string(model.ensemble[m].col(k).norm()) + "\n";
    }
  }
  return out;
}

}  // namespace ssvep
