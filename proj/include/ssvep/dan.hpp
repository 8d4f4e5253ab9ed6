#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "ssvep/errors.hpp"
#include "ssvep/rng.hpp"

namespace ssvep {

struct DanConfig {
  int n_in_channels = 0;   // N_C
  int n_filters = 0;       // N_F; 0 means "= n_in_channels"
  int hidden_dim = 0;      // H; 0 means "= n_out_channels"
  int n_out_channels = 0;  // N_C'
  int n_samples = 0;       // N_S
  double learning_rate = 5e-4;
  int batch_size = 64;
  int pretrain_epochs = 500;
  int finetune_epochs = 150;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  bool use_tanh = true;  // false swaps the activation for identity

  int nf() const { return n_filters > 0 ? n_filters : n_in_channels; }
  int hid() const { return hidden_dim > 0 ? hidden_dim : n_out_channels; }
};

inline void validate_dan_config(const DanConfig& c) {
  if (c.n_in_channels < 1 || c.n_out_channels < 1 || c.n_samples < 1 ||
      c.nf() < 1 || c.hid() < 1)
    throw ConfigError("ConfigRange", "model dimensions must be >= 1");
  if (c.learning_rate <= 0.0)
    throw ConfigError("ConfigRange", "learning_rate must be positive");
  if (c.val_fraction <= 0.0 || c.val_fraction >= 1.0)
    throw ConfigError("ConfigRange", "val_fraction must be inside (0, 1)");
  if (c.batch_size < 1)
    throw ConfigError("ConfigRange", "batch_size must be >= 1");
  if (c.bn_eps <= 0.0)
    throw ConfigError("ConfigRange", "bn_eps must be positive");
}

/// One supervised example: a source trial and the target-subject template
/// (mean calibration trial) for the same stimulus. `group` identifies the
/// source subject the trial came from, for subject-wise validation splits.
struct TrainPair {
  Eigen::MatrixXd x;  // [N_C x N_S]
  Eigen::MatrixXd y;  // [N_C' x N_S]
  int stimulus = 0;
  int group = 0;
};

/// Spatial filters + batch norm + two channel-wise FC layers. The spatial
/// stage mixes channels at every time point; BN standardizes each filter row
/// over (batch x time); the FC stage acts on the filter axis per time point.
struct DanModel {
  enum class Mode { kTrain, kInfer };

  DanConfig config;
  Eigen::MatrixXd W_s;  // [N_F x N_C]
  Eigen::VectorXd b_s;  // [N_F]
  Eigen::VectorXd bn_gamma, bn_beta;          // [N_F]
  Eigen::VectorXd bn_run_mean, bn_run_var;    // [N_F]
  Eigen::MatrixXd W_1;  // [H x N_F]
  Eigen::VectorXd b_1;  // [H]
  Eigen::MatrixXd W_2;  // [N_C' x H]
  Eigen::VectorXd b_2;  // [N_C']
  Mode mode = Mode::kInfer;
};

/// Seeded init: weights uniform in +-1/sqrt(fan_in), biases zero, BN at
/// identity. Tensors are drawn in a fixed order (W_s, W_1, W_2).
inline DanModel dan_init(const DanConfig& config) {
  validate_dan_config(config);
  DanModel m;
  m.config = config;
  Rng rng(config.seed);
  auto fill = [&rng](Eigen::MatrixXd& w, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        w(i, j) = rng.uniform(-bound, bound);
  };
  const int nc = config.n_in_channels, nf = config.nf(), h = config.hid(),
            nco = config.n_out_channels;
  m.W_s.resize(nf, nc);
  fill(m.W_s, nc);
  m.b_s = Eigen::VectorXd::Zero(nf);
  m.bn_gamma = Eigen::VectorXd::Ones(nf);
  m.bn_beta = Eigen::VectorXd::Zero(nf);
  m.bn_run_mean = Eigen::VectorXd::Zero(nf);
  m.bn_run_var = Eigen::VectorXd::Ones(nf);
  m.W_1.resize(h, nf);
  fill(m.W_1, nf);
  m.b_1 = Eigen::VectorXd::Zero(h);
  m.W_2.resize(nco, h);
  fill(m.W_2, h);
  m.b_2 = Eigen::VectorXd::Zero(nco);
  return m;
}

namespace dandetail {
inline void check_input(const DanModel& m, const Eigen::MatrixXd& x) {
  if (x.rows() != m.config.n_in_channels || x.cols() != m.config.n_samples)
    throw DataError("ShapeMismatch",
                    "input is " + std::to_string(x.rows()) + "x" +
                        std::to_string(x.cols()) + ", model expects " +
                        std::to_string(m.config.n_in_channels) + "x" +
                        std::to_string(m.config.n_samples));
  if (!x.allFinite())
    throw NumericError("NonFiniteInput", "model input has non-finite values");
}

inline Eigen::MatrixXd activate(const DanConfig& c, const Eigen::MatrixXd& a) {
  return c.use_tanh ? a.array().tanh().matrix() : a;
}
}  // namespace dandetail

/// Cached intermediates of a train-mode batch forward. Batch matrices stack
/// the pairs horizontally: column block i of width N_S belongs to pair i.
struct DanBatchCache {
  int n_pairs = 0;
  Eigen::MatrixXd x;        // [N_C  x B*N_S]
  Eigen::MatrixXd xhat;     // [N_F  x B*N_S] normalized spatial output
  Eigen::MatrixXd bn_out;   // [N_F  x B*N_S]
  Eigen::MatrixXd z;        // [H    x B*N_S] post-activation
  Eigen::MatrixXd pred;     // [N_C' x B*N_S]
  Eigen::VectorXd mu;       // [N_F] batch mean
  Eigen::VectorXd var;      // [N_F] biased batch variance
};

/// Train-mode forward over a whole mini-batch. Batch statistics are computed
/// here and cached; the model itself is not mutated (see
/// dan_update_running_stats for the momentum update).
inline DanBatchCache dan_forward_batch(const DanModel& m,
                                       const std::vector<TrainPair>& batch) {
  if (batch.empty()) throw DataError("EmptyTrainSet", "empty forward batch");
  const int ns = m.config.n_samples;
  const int b = static_cast<int>(batch.size());
  DanBatchCache cache;
  cache.n_pairs = b;
  cache.x.resize(m.config.n_in_channels, static_cast<Eigen::Index>(b) * ns);
  for (int i = 0; i < b; ++i) {
    dandetail::check_input(m, batch[i].x);
    cache.x.middleCols(static_cast<Eigen::Index>(i) * ns, ns) = batch[i].x;
  }
  Eigen::MatrixXd y1 = (m.W_s * cache.x).colwise() + m.b_s;
  const double n = static_cast<double>(y1.cols());
  cache.mu = y1.rowwise().mean();
  Eigen::MatrixXd centered = y1.colwise() - cache.mu;
  cache.var = centered.array().square().rowwise().sum() / n;
  Eigen::VectorXd inv_std =
      (cache.var.array() + m.config.bn_eps).sqrt().inverse();
  cache.xhat = inv_std.asDiagonal() * centered;
  cache.bn_out =
      (m.bn_gamma.asDiagonal() * cache.xhat).colwise() + m.bn_beta;
  Eigen::MatrixXd a1 = (m.W_1 * cache.bn_out).colwise() + m.b_1;
  cache.z = dandetail::activate(m.config, a1);
  cache.pred = (m.W_2 * cache.z).colwise() + m.b_2;
  return cache;
}

/// Momentum update of the running statistics from a cached batch forward:
/// run = (1 - momentum) * run + momentum * batch. Both the normalization and
/// the running variance use the biased estimator so that freezing the
/// running stats at one batch's values reproduces that batch's train-mode
/// output exactly.
inline void dan_update_running_stats(DanModel& m, const DanBatchCache& cache) {
  const double mom = m.config.bn_momentum;
  m.bn_run_mean = (1.0 - mom) * m.bn_run_mean + mom * cache.mu;
  m.bn_run_var = (1.0 - mom) * m.bn_run_var + mom * cache.var;
}

/// Inference forward for a single trial, using running statistics.
inline Eigen::MatrixXd dan_forward(const DanModel& m, const Eigen::MatrixXd& x) {
  dandetail::check_input(m, x);
  Eigen::MatrixXd y1 = (m.W_s * x).colwise() + m.b_s;
  Eigen::VectorXd inv_std =
      (m.bn_run_var.array() + m.config.bn_eps).sqrt().inverse();
  Eigen::MatrixXd xhat = inv_std.asDiagonal() * (y1.colwise() - m.bn_run_mean);
  Eigen::MatrixXd bn = (m.bn_gamma.asDiagonal() * xhat).colwise() + m.bn_beta;
  Eigen::MatrixXd a1 = (m.W_1 * bn).colwise() + m.b_1;
  return (m.W_2 * dandetail::activate(m.config, a1)).colwise() + m.b_2;
}

/// Mean over the batch of squared Frobenius distances, one term per pair.
inline double dan_loss(const std::vector<Eigen::MatrixXd>& pred,
                       const std::vector<Eigen::MatrixXd>& target) {
  if (pred.size() != target.size() || pred.empty())
    throw DataError("ShapeMismatch", "prediction/target batch size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].rows() != target[i].rows() || pred[i].cols() != target[i].cols())
      throw DataError("ShapeMismatch", "prediction/target shape mismatch");
    acc += (pred[i] - target[i]).squaredNorm();
  }
  return acc / static_cast<double>(pred.size());
}

/// Same loss over horizontally stacked batch matrices.
inline double dan_loss_stacked(const Eigen::MatrixXd& pred,
                               const Eigen::MatrixXd& target, int n_pairs) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() ||
      n_pairs < 1)
    throw DataError("ShapeMismatch", "prediction/target shape mismatch");
  return (pred - target).squaredNorm() / static_cast<double>(n_pairs);
}

struct DanGrads {
  Eigen::MatrixXd W_s;
  Eigen::VectorXd b_s;
  Eigen::VectorXd bn_gamma, bn_beta;
  Eigen::MatrixXd W_1;
  Eigen::VectorXd b_1;
  Eigen::MatrixXd W_2;
  Eigen::VectorXd b_2;
};

/// Analytic gradients of dan_loss with respect to every parameter, including
/// the batch-statistics pathway of BN. `batch` must be the batch the cache
/// was produced from.
inline DanGrads dan_backward(const DanModel& m, const DanBatchCache& cache,
                             const std::vector<TrainPair>& batch) {
  const int ns = m.config.n_samples;
  if (static_cast<int>(batch.size()) != cache.n_pairs ||
      cache.x.cols() != static_cast<Eigen::Index>(batch.size()) * ns)
    throw NumericError("StaleCache",
                       "backward batch does not match the cached forward");
  const double b = static_cast<double>(cache.n_pairs);
  Eigen::MatrixXd target(m.config.n_out_channels,
                         static_cast<Eigen::Index>(cache.n_pairs) * ns);
  for (int i = 0; i < cache.n_pairs; ++i) {
    if (batch[i].y.rows() != m.config.n_out_channels || batch[i].y.cols() != ns)
      throw DataError("ShapeMismatch", "target shape mismatch in backward");
    target.middleCols(static_cast<Eigen::Index>(i) * ns, ns) = batch[i].y;
  }

  DanGrads g;
  // d(loss)/d(pred), loss = (1/B) sum_i |pred_i - y_i|^2
  Eigen::MatrixXd d_out = (2.0 / b) * (cache.pred - target);
  g.W_2 = d_out * cache.z.transpose();
  g.b_2 = d_out.rowwise().sum();
  Eigen::MatrixXd dz = m.W_2.transpose() * d_out;
  Eigen::MatrixXd da1 =
      m.config.use_tanh
          ? (dz.array() * (1.0 - cache.z.array().square())).matrix()
          : dz;
  g.W_1 = da1 * cache.bn_out.transpose();
  g.b_1 = da1.rowwise().sum();
  Eigen::MatrixXd d_bn = m.W_1.transpose() * da1;

  g.bn_gamma = (d_bn.array() * cache.xhat.array()).rowwise().sum();
  g.bn_beta = d_bn.rowwise().sum();

  // Through the normalization, batch statistics included:
  // dy1 = inv_std/n * (n*dxhat - sum(dxhat) - xhat * sum(dxhat .* xhat))
  // with the sums taken per filter row over all batch*time columns.
  const double n = static_cast<double>(cache.xhat.cols());
  Eigen::MatrixXd dxhat = m.bn_gamma.asDiagonal() * d_bn;
  Eigen::VectorXd sum_dxhat = dxhat.rowwise().sum();
  Eigen::VectorXd sum_dxhat_xhat =
      (dxhat.array() * cache.xhat.array()).rowwise().sum();
  Eigen::VectorXd inv_std =
      (cache.var.array() + m.config.bn_eps).sqrt().inverse();
  Eigen::MatrixXd dy1 = (dxhat * n).colwise() - sum_dxhat;
  dy1 -= (cache.xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
  dy1 = (1.0 / n) * (inv_std.asDiagonal() * dy1);

  g.W_s = dy1 * cache.x.transpose();
  g.b_s = dy1.rowwise().sum();
  return g;
}

struct AdamState {
  DanGrads m;  // first moments, same shapes as the parameters
  DanGrads v;  // second moments
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState adam_init(const DanModel& model) {
  AdamState s;
  auto zero_like_m = [](const Eigen::MatrixXd& p) {
    return Eigen::MatrixXd::Zero(p.rows(), p.cols()).eval();
  };
  auto zero_like_v = [](const Eigen::VectorXd& p) {
    return Eigen::VectorXd::Zero(p.size()).eval();
  };
  s.m.W_s = zero_like_m(model.W_s);
  s.m.b_s = zero_like_v(model.b_s);
  s.m.bn_gamma = zero_like_v(model.bn_gamma);
  s.m.bn_beta = zero_like_v(model.bn_beta);
  s.m.W_1 = zero_like_m(model.W_1);
  s.m.b_1 = zero_like_v(model.b_1);
  s.m.W_2 = zero_like_m(model.W_2);
  s.m.b_2 = zero_like_v(model.b_2);
  s.v = s.m;
  return s;
}

namespace dandetail {
template <typename T>
void adam_tensor(T& p, T& m, T& v, const T& g, const AdamState& s, double lr) {
  if (p.rows() != g.rows() || p.cols() != g.cols())
    throw DataError("ShapeMismatch", "gradient shape mismatch in adam step");
  m = s.beta1 * m + (1.0 - s.beta1) * g;
  v = (s.beta2 * v.array() + (1.0 - s.beta2) * g.array().square()).matrix();
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + s.eps);
}
}  // namespace dandetail

/// Standard bias-corrected Adam update; increments the step counter.
inline void adam_step(DanModel& model, AdamState& s, const DanGrads& g,
                      double lr) {
  s.t += 1;
  dandetail::adam_tensor(model.W_s, s.m.W_s, s.v.W_s, g.W_s, s, lr);
  dandetail::adam_tensor(model.b_s, s.m.b_s, s.v.b_s, g.b_s, s, lr);
  dandetail::adam_tensor(model.bn_gamma, s.m.bn_gamma, s.v.bn_gamma, g.bn_gamma,
                         s, lr);
  dandetail::adam_tensor(model.bn_beta, s.m.bn_beta, s.v.bn_beta, g.bn_beta, s,
                         lr);
  dandetail::adam_tensor(model.W_1, s.m.W_1, s.v.W_1, g.W_1, s, lr);
  dandetail::adam_tensor(model.b_1, s.m.b_1, s.v.b_1, g.b_1, s, lr);
  dandetail::adam_tensor(model.W_2, s.m.W_2, s.v.W_2, g.W_2, s, lr);
  dandetail::adam_tensor(model.b_2, s.m.b_2, s.v.b_2, g.b_2, s, lr);
}

}  // namespace ssvep
