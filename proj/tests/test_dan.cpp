#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ssvep/dan.hpp"

#include "helpers.hpp"

using namespace ssvep;
using Catch::Matchers::WithinAbs;
using test_helpers::thrown_code;

namespace {

DanConfig small_config(std::uint64_t seed) {
  DanConfig c;
  c.n_in_channels = 3;
  c.n_out_channels = 2;
  c.n_samples = 5;
  c.seed = seed;
  return c;
}

std::vector<TrainPair> random_batch(const DanConfig& c, int n, Rng& rng) {
  std::vector<TrainPair> batch(n);
  for (int i = 0; i < n; ++i) {
    batch[i].x.resize(c.n_in_channels, c.n_samples);
    batch[i].y.resize(c.n_out_channels, c.n_samples);
    for (int r = 0; r < c.n_in_channels; ++r)
      for (int t = 0; t < c.n_samples; ++t)
        batch[i].x(r, t) = rng.uniform(-1.0, 1.0);
    for (int r = 0; r < c.n_out_channels; ++r)
      for (int t = 0; t < c.n_samples; ++t)
        batch[i].y(r, t) = rng.uniform(-1.0, 1.0);
    batch[i].stimulus = static_cast<int>(rng.index(4));
  }
  return batch;
}

/// Straight-line scalar recomputation of the train-mode forward pass. No
/// shared code with the implementation beyond the parameter tensors.
std::vector<Eigen::MatrixXd> straight_forward(const DanModel& m,
                                              const std::vector<TrainPair>& batch) {
  const int nf = m.config.nf(), nc = m.config.n_in_channels,
            h = m.config.hid(), nco = m.config.n_out_channels,
            ns = m.config.n_samples;
  const int b = static_cast<int>(batch.size());
  std::vector<Eigen::MatrixXd> y1(b, Eigen::MatrixXd(nf, ns));
  for (int i = 0; i < b; ++i)
    for (int f = 0; f < nf; ++f)
      for (int t = 0; t < ns; ++t) {
        double acc = m.b_s(f);
        for (int c = 0; c < nc; ++c) acc += m.W_s(f, c) * batch[i].x(c, t);
        y1[i](f, t) = acc;
      }
  const double n = static_cast<double>(b) * ns;
  std::vector<double> mu(nf, 0.0), var(nf, 0.0);
  for (int f = 0; f < nf; ++f) {
    for (int i = 0; i < b; ++i)
      for (int t = 0; t < ns; ++t) mu[f] += y1[i](f, t);
    mu[f] /= n;
    for (int i = 0; i < b; ++i)
      for (int t = 0; t < ns; ++t)
        var[f] += (y1[i](f, t) - mu[f]) * (y1[i](f, t) - mu[f]);
    var[f] /= n;
  }
  std::vector<Eigen::MatrixXd> out(b, Eigen::MatrixXd(nco, ns));
  for (int i = 0; i < b; ++i) {
    Eigen::MatrixXd bn(nf, ns), z(h, ns);
    for (int f = 0; f < nf; ++f)
      for (int t = 0; t < ns; ++t)
        bn(f, t) = m.bn_gamma(f) * (y1[i](f, t) - mu[f]) /
                       std::sqrt(var[f] + m.config.bn_eps) +
                   m.bn_beta(f);
    for (int j = 0; j < h; ++j)
      for (int t = 0; t < ns; ++t) {
        double acc = m.b_1(j);
        for (int f = 0; f < nf; ++f) acc += m.W_1(j, f) * bn(f, t);
        z(j, t) = m.config.use_tanh ? std::tanh(acc) : acc;
      }
    for (int o = 0; o < nco; ++o)
      for (int t = 0; t < ns; ++t) {
        double acc = m.b_2(o);
        for (int j = 0; j < h; ++j) acc += m.W_2(o, j) * z(j, t);
        out[i](o, t) = acc;
      }
  }
  return out;
}

double batch_loss(const DanModel& m, const std::vector<TrainPair>& batch) {
  DanBatchCache cache = dan_forward_batch(m, batch);
  const int ns = m.config.n_samples;
  Eigen::MatrixXd target(m.config.n_out_channels,
                         static_cast<Eigen::Index>(batch.size()) * ns);
  for (std::size_t i = 0; i < batch.size(); ++i)
    target.middleCols(static_cast<Eigen::Index>(i) * ns, ns) = batch[i].y;
  return dan_loss_stacked(cache.pred, target, static_cast<int>(batch.size()));
}

struct TensorRef {
  double* param;
  const double* grad;
  Eigen::Index size;
  const char* name;
};

std::vector<TensorRef> tensor_refs(DanModel& m, const DanGrads& g) {
  return {
      {m.W_s.data(), g.W_s.data(), m.W_s.size(), "W_s"},
      {m.b_s.data(), g.b_s.data(), m.b_s.size(), "b_s"},
      {m.bn_gamma.data(), g.bn_gamma.data(), m.bn_gamma.size(), "bn_gamma"},
      {m.bn_beta.data(), g.bn_beta.data(), m.bn_beta.size(), "bn_beta"},
      {m.W_1.data(), g.W_1.data(), m.W_1.size(), "W_1"},
      {m.b_1.data(), g.b_1.data(), m.b_1.size(), "b_1"},
      {m.W_2.data(), g.W_2.data(), m.W_2.size(), "W_2"},
      {m.b_2.data(), g.b_2.data(), m.b_2.size(), "b_2"},
  };
}

}  // namespace

TEST_CASE("forward: zero parameters map everything to zero") {
  DanConfig c = small_config(1);
  DanModel m = dan_init(c);
  m.W_s.setZero();
  m.W_1.setZero();
  m.W_2.setZero();
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 5);
  REQUIRE(dan_forward(m, x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: near-identity composition recovers the input") {
  DanConfig c;
  c.n_in_channels = 3;
  c.n_out_channels = 3;
  c.n_samples = 6;
  DanModel m = dan_init(c);
  const double eps = 1e-6;
  m.W_s = Eigen::MatrixXd::Identity(3, 3);
  m.b_s.setZero();
  m.bn_run_mean.setZero();
  // var + bn_eps == 1 makes the normalization exactly the identity
  m.bn_run_var.setConstant(1.0 - c.bn_eps);
  m.W_1 = eps * Eigen::MatrixXd::Identity(3, 3);
  m.W_2 = (1.0 / eps) * Eigen::MatrixXd::Identity(3, 3);
  m.b_1.setZero();
  m.b_2.setZero();

  Rng rng(5);
  Eigen::MatrixXd x(3, 6);
  for (int i = 0; i < 3; ++i)
    for (int t = 0; t < 6; ++t) x(i, t) = rng.uniform(-0.5, 0.5);
  Eigen::MatrixXd y = dan_forward(m, x);
  REQUIRE((y - x).cwiseAbs().maxCoeff() < 1e-6 * x.cwiseAbs().maxCoeff());
}

TEST_CASE("forward: matches a straight-line recomputation") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    DanConfig c = small_config(seed);
    c.n_filters = 4;
    c.hidden_dim = 3;
    DanModel m = dan_init(c);
    Rng rng(100 + seed);
    auto batch = random_batch(c, 6, rng);

    DanBatchCache cache = dan_forward_batch(m, batch);
    auto expect = straight_forward(m, batch);
    for (int i = 0; i < 6; ++i) {
      Eigen::MatrixXd got = cache.pred.middleCols(i * c.n_samples, c.n_samples);
      REQUIRE((got - expect[i]).cwiseAbs().maxCoeff() < 1e-12);
    }

    // Infer mode with frozen batch stats agrees with the train-mode pass.
    DanModel frozen = m;
    frozen.bn_run_mean = cache.mu;
    frozen.bn_run_var = cache.var;
    for (int i = 0; i < 6; ++i) {
      Eigen::MatrixXd got = dan_forward(frozen, batch[i].x);
      Eigen::MatrixXd want = cache.pred.middleCols(i * c.n_samples, c.n_samples);
      REQUIRE((got - want).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("forward: input validation") {
  DanModel m = dan_init(small_config(2));
  REQUIRE(thrown_code([&] { dan_forward(m, Eigen::MatrixXd::Zero(2, 5)); }) ==
          "ShapeMismatch");
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(3, 5);
  bad(0, 0) = std::nan("");
  REQUIRE(thrown_code([&] { dan_forward(m, bad); }) == "NonFiniteInput");
}

TEST_CASE("loss: definition checks") {
  SECTION("identical batches give zero") {
    std::vector<Eigen::MatrixXd> a = {Eigen::MatrixXd::Random(4, 7)};
    REQUIRE(dan_loss(a, a) == 0.0);
  }
  SECTION("all-ones difference over an 8x375 pair") {
    std::vector<Eigen::MatrixXd> p = {Eigen::MatrixXd::Ones(8, 375)};
    std::vector<Eigen::MatrixXd> t = {Eigen::MatrixXd::Zero(8, 375)};
    REQUIRE(dan_loss(p, t) == 3000.0);
  }
  SECTION("random batch matches elementwise recomputation") {
    Rng rng(9);
    std::vector<Eigen::MatrixXd> p, t;
    for (int i = 0; i < 4; ++i) {
      p.push_back(Eigen::MatrixXd::Random(3, 8));
      t.push_back(Eigen::MatrixXd::Random(3, 8));
    }
    double brute = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int r = 0; r < 3; ++r)
        for (int s = 0; s < 8; ++s) {
          double d = p[i](r, s) - t[i](r, s);
          brute += d * d;
        }
    brute /= 4.0;
    REQUIRE_THAT(dan_loss(p, t), Catch::Matchers::WithinRel(brute, 1e-12));
  }
  SECTION("shape mismatch") {
    std::vector<Eigen::MatrixXd> p = {Eigen::MatrixXd::Zero(2, 3)};
    std::vector<Eigen::MatrixXd> t = {Eigen::MatrixXd::Zero(3, 3)};
    REQUIRE(thrown_code([&] { dan_loss(p, t); }) == "ShapeMismatch");
  }
}

TEST_CASE("backward: finite differences confirm every partial derivative") {
  // The central difference is only a valid oracle while both of its error
  // terms stay below the tolerance floors: cancellation noise (ulps of the
  // loss over 2h) must sit under the 1e-12 absolute floor because the
  // spatial bias has an exactly zero gradient (BN subtracts the batch mean),
  // and truncation (h^2-scaled third derivatives, independent of the
  // residual) must sit well under 1e-4 of the smallest live gradient entry.
  // Residuals near 3e-2 land the loss in the window satisfying both.
  const double h = 1e-5;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    DanConfig c = small_config(seed);
    c.n_filters = 3;
    c.hidden_dim = 2;
    DanModel m = dan_init(c);
    // Move BN parameters off their init values so their gradients are generic.
    Rng prng(200 + seed);
    for (int f = 0; f < c.nf(); ++f) {
      m.bn_gamma(f) = prng.uniform(0.5, 1.5);
      m.bn_beta(f) = prng.uniform(-0.3, 0.3);
    }
    Rng rng(300 + seed);
    auto batch = random_batch(c, 4, rng);
    {
      DanBatchCache base = dan_forward_batch(m, batch);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        batch[i].y = base.pred.middleCols(
            static_cast<Eigen::Index>(i) * c.n_samples, c.n_samples);
        for (int r = 0; r < c.n_out_channels; ++r)
          for (int t = 0; t < c.n_samples; ++t)
            batch[i].y(r, t) += rng.uniform(-0.03, 0.03);
      }
    }

    DanBatchCache cache = dan_forward_batch(m, batch);
    DanGrads g = dan_backward(m, cache, batch);

    for (const auto& ref : tensor_refs(m, g)) {
      for (Eigen::Index i = 0; i < ref.size; ++i) {
        const double saved = ref.param[i];
        ref.param[i] = saved + h;
        const double up = batch_loss(m, batch);
        ref.param[i] = saved - h;
        const double down = batch_loss(m, batch);
        ref.param[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double an = ref.grad[i];
        const double rel =
            std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
        INFO(ref.name << "[" << i << "] seed " << seed << " fd=" << fd
                      << " analytic=" << an);
        REQUIRE(rel < 1e-4);
      }
    }
  }
}

TEST_CASE("backward: spatial bias is a dead direction under batch norm") {
  // Mean subtraction removes any per-filter constant shift, so the loss is
  // exactly invariant to b_s and its analytic gradient must vanish. This is
  // a sharper check than finite differences for an invariant direction.
  DanConfig c = small_config(8);
  DanModel m = dan_init(c);
  Rng rng(81);
  auto batch = random_batch(c, 4, rng);
  DanGrads g = dan_backward(m, dan_forward_batch(m, batch), batch);
  REQUIRE(g.b_s.cwiseAbs().maxCoeff() < 1e-14);

  const double base = batch_loss(m, batch);
  m.b_s.setConstant(0.37);
  m.b_s(1) = -2.5;
  REQUIRE_THAT(batch_loss(m, batch), Catch::Matchers::WithinRel(base, 1e-12));
}

TEST_CASE("backward: zero residual gives zero gradients") {
  DanConfig c = small_config(3);
  DanModel m = dan_init(c);
  Rng rng(31);
  auto batch = random_batch(c, 3, rng);
  DanBatchCache cache = dan_forward_batch(m, batch);
  for (int i = 0; i < 3; ++i)
    batch[i].y = cache.pred.middleCols(i * c.n_samples, c.n_samples);
  DanGrads g = dan_backward(m, cache, batch);
  for (const auto& ref : tensor_refs(m, g))
    for (Eigen::Index i = 0; i < ref.size; ++i)
      REQUIRE_THAT(ref.grad[i], WithinAbs(0.0, 1e-14));
}

TEST_CASE("backward: duplicating the batch leaves gradients unchanged") {
  DanConfig c = small_config(4);
  DanModel m = dan_init(c);
  Rng rng(41);
  auto batch = random_batch(c, 3, rng);
  auto doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());

  DanGrads g1 = dan_backward(m, dan_forward_batch(m, batch), batch);
  DanGrads g2 = dan_backward(m, dan_forward_batch(m, doubled), doubled);
  for (std::size_t k = 0; k < tensor_refs(m, g1).size(); ++k) {
    auto r1 = tensor_refs(m, g1)[k];
    auto r2 = tensor_refs(m, g2)[k];
    for (Eigen::Index i = 0; i < r1.size; ++i)
      REQUIRE_THAT(r2.grad[i], WithinAbs(r1.grad[i], 1e-12));
  }
}

TEST_CASE("backward: cache must match the batch") {
  DanConfig c = small_config(5);
  DanModel m = dan_init(c);
  Rng rng(51);
  auto batch = random_batch(c, 3, rng);
  DanBatchCache cache = dan_forward_batch(m, batch);
  batch.pop_back();
  REQUIRE(thrown_code([&] { dan_backward(m, cache, batch); }) == "StaleCache");
}

TEST_CASE("adam: update arithmetic") {
  DanConfig c = small_config(6);
  DanModel m = dan_init(c);
  AdamState s = adam_init(m);

  SECTION("zero gradients leave parameters untouched") {
    DanModel before = m;
    DanGrads zero;
    DanBatchCache cache;
    Rng rng(61);
    auto batch = random_batch(c, 2, rng);
    cache = dan_forward_batch(m, batch);
    zero = dan_backward(m, cache, batch);
    for (auto& ref : tensor_refs(m, zero))
      for (Eigen::Index i = 0; i < ref.size; ++i)
        const_cast<double*>(ref.grad)[i] = 0.0;
    adam_step(m, s, zero, 5e-4);
    REQUIRE(s.t == 1);
    REQUIRE(m.W_s == before.W_s);
    REQUIRE(m.W_2 == before.W_2);
    REQUIRE(m.bn_gamma == before.bn_gamma);
  }
  SECTION("first step moves by about -lr * sign(g)") {
    Rng rng(62);
    auto batch = random_batch(c, 2, rng);
    DanGrads g = dan_backward(m, dan_forward_batch(m, batch), batch);
    for (auto& ref : tensor_refs(m, g))
      for (Eigen::Index i = 0; i < ref.size; ++i)
        const_cast<double*>(ref.grad)[i] = (i % 2 == 0) ? 0.3 : -0.7;
    DanModel before = m;
    adam_step(m, s, g, 5e-4);
    auto brefs = tensor_refs(before, g);
    auto arefs = tensor_refs(m, g);
    for (std::size_t k = 0; k < arefs.size(); ++k)
      for (Eigen::Index i = 0; i < arefs[k].size; ++i) {
        double expect = brefs[k].param[i] - 5e-4 * ((i % 2 == 0) ? 1.0 : -1.0);
        REQUIRE_THAT(arefs[k].param[i], WithinAbs(expect, 1e-6));
      }
  }
  SECTION("identical inputs give identical updates") {
    Rng rng(63);
    auto batch = random_batch(c, 2, rng);
    DanGrads g = dan_backward(m, dan_forward_batch(m, batch), batch);
    DanModel m1 = m, m2 = m;
    AdamState s1 = adam_init(m), s2 = adam_init(m);
    adam_step(m1, s1, g, 5e-4);
    adam_step(m2, s2, g, 5e-4);
    REQUIRE(m1.W_s == m2.W_s);
    REQUIRE(m1.b_2 == m2.b_2);
  }
}

TEST_CASE("running stats: momentum update and identity activation hook") {
  DanConfig c = small_config(7);
  DanModel m = dan_init(c);
  Rng rng(71);
  auto batch = random_batch(c, 4, rng);
  DanBatchCache cache = dan_forward_batch(m, batch);
  Eigen::VectorXd mean0 = m.bn_run_mean, var0 = m.bn_run_var;
  dan_update_running_stats(m, cache);
  for (int f = 0; f < c.nf(); ++f) {
    REQUIRE_THAT(m.bn_run_mean(f),
                 WithinAbs(0.9 * mean0(f) + 0.1 * cache.mu(f), 1e-14));
    REQUIRE_THAT(m.bn_run_var(f),
                 WithinAbs(0.9 * var0(f) + 0.1 * cache.var(f), 1e-14));
  }

  SECTION("identity activation makes the whole map affine") {
    DanConfig ca = c;
    ca.use_tanh = false;
    DanModel ma = dan_init(ca);
    Eigen::MatrixXd x1 = Eigen::MatrixXd::Random(3, 5);
    Eigen::MatrixXd x2 = Eigen::MatrixXd::Random(3, 5);
    Eigen::MatrixXd f0 = dan_forward(ma, Eigen::MatrixXd::Zero(3, 5));
    Eigen::MatrixXd f1 = dan_forward(ma, x1);
    Eigen::MatrixXd f2 = dan_forward(ma, x2);
    Eigen::MatrixXd f12 = dan_forward(ma, x1 + x2);
    REQUIRE(((f12 - f0) - ((f1 - f0) + (f2 - f0))).cwiseAbs().maxCoeff() <
            1e-10);
    // With tanh in place the same identity fails.
    DanModel mt = dan_init(c);
    Eigen::MatrixXd g0 = dan_forward(mt, Eigen::MatrixXd::Zero(3, 5));
    Eigen::MatrixXd g1 = dan_forward(mt, 100.0 * x1);
    Eigen::MatrixXd g2 = dan_forward(mt, 100.0 * x2);
    Eigen::MatrixXd g12 = dan_forward(mt, 100.0 * (x1 + x2));
    REQUIRE(((g12 - g0) - ((g1 - g0) + (g2 - g0))).cwiseAbs().maxCoeff() >
            1e-6);
  }
}
