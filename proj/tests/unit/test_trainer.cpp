#include <cmath>
#include <numbers>
#include <vector>

#include "../../vendor/doctest.h"
#include "bcd/trainer.hpp"

using namespace bcd;

namespace {

Dataset chain2_dataset(Eigen::Index n, double weight, std::uint64_t seed) {
  SemParams truth;
  truth.p = Permutation({1, 0});  // edge 0 -> 1 lives at L(1, 0)
  truth.weights = LowerTriWeights(2, Eigen::VectorXd::Constant(1, weight));
  truth.noise = NoiseScales::equal_scale(0.0);
  Rng rng(seed);
  return sample_observational(truth, n, NoiseKind::gaussian, rng);
}

Dataset scalar_dataset(Eigen::Index n, double sigma, std::uint64_t seed) {
  SemParams truth;
  truth.p = Permutation::identity(1);
  truth.weights = LowerTriWeights::zero(1);
  truth.noise = NoiseScales::equal_scale(std::log(sigma));
  Rng rng(seed);
  return sample_observational(truth, n, NoiseKind::gaussian, rng);
}

}  // namespace

TEST_CASE("report decomposition: elbo = loglik - kl_lsigma - kl_p") {
  const Dataset data = chain2_dataset(40, 1.2, 21);
  Rng init(1);
  const VariationalState st = VariationalState::init(2, true, FamilyVariant::diagonal, 0.2, 8,
                                                     false, false, init);
  PriorConfig priors;
  Rng rng(5);
  const ElboReport rep = elbo_estimate(st, data, priors, rng, 8);
  CHECK(rep.elbo ==
        doctest::Approx(rep.expected_log_lik - rep.kl_l_sigma - rep.kl_p).epsilon(1e-12));
  CHECK(std::isfinite(rep.elbo));
  CHECK(rep.grad_norm == 0.0);
}

TEST_CASE("gradient path reproduces the double-path estimate") {
  const Dataset data = chain2_dataset(30, 1.0, 22);
  Rng init(2);
  const VariationalState st = VariationalState::init(2, false, FamilyVariant::full, 0.2, 8,
                                                     false, false, init);
  PriorConfig priors;
  Rng ra(77), rb(77);
  const ElboReport value_only = elbo_estimate(st, data, priors, ra, 4);
  const GradientResult with_grad = elbo_gradient(st, data, priors, rb, 4);
  CHECK(with_grad.report.elbo == doctest::Approx(value_only.elbo).epsilon(1e-10));
  CHECK(with_grad.report.kl_p == doctest::Approx(value_only.kl_p).epsilon(1e-10));
  CHECK(with_grad.report.grad_norm > 0.0);
  CHECK(with_grad.grad.size() == static_cast<Eigen::Index>(flatten_state(st).size()));
  CHECK(with_grad.grad.allFinite());
}

TEST_CASE("scalar model ELBO matches a hand-written formula") {
  const Eigen::Index n = 25;
  const Dataset data = scalar_dataset(n, 1.3, 23);
  const double scatter = (data.x.transpose() * data.x)(0, 0);

  Rng init(3);
  VariationalState st = VariationalState::init(1, true, FamilyVariant::diagonal, 0.2, 6,
                                               false, false, init);
  st.family.mean(0) = 0.4;
  st.family.log_scale(0) = -0.9;
  PriorConfig priors;  // horseshoe (empty weight block at d = 1), s0 = 10

  FrozenNoise noise;
  noise.u = Eigen::VectorXd::Constant(1, 0.6);
  noise.gumbel = Eigen::MatrixXd::Constant(1, 1, 0.11);
  SampleOptions opts;
  opts.soft_forward = true;

  const double got = elbo_value_frozen(st, data, priors, noise, opts);

  const double log2pi = std::log(2.0 * std::numbers::pi);
  const double z = 0.4 + std::exp(-0.9) * 0.6;
  const double loglik = static_cast<double>(n) * (-0.5 * log2pi - z) -
                        0.5 * std::exp(-2.0 * z) * scatter;
  const double log_q = -0.5 * log2pi - 0.5 * 0.6 * 0.6 - (-0.9);
  const double log_prior = -0.5 * log2pi - std::log(10.0) - 0.5 * z * z / 100.0;
  const double expect = loglik - (log_q - log_prior);  // permutation KL is 0 at d = 1
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));

  // analytic gradient: only (mean, log_scale) move the objective
  const Eigen::VectorXd grad = elbo_gradient_frozen(st, data, priors, noise, opts);
  const double dz = -static_cast<double>(n) + scatter * std::exp(-2.0 * z) - z / 100.0;
  CHECK(grad(0) == doctest::Approx(dz).epsilon(1e-10));
  CHECK(grad(1) == doctest::Approx(dz * std::exp(-0.9) * 0.6 + 1.0).epsilon(1e-10));
  for (Eigen::Index k = 2; k < grad.size(); ++k) CHECK(grad(k) == doctest::Approx(0.0));
}

TEST_CASE("frozen-surrogate gradient agrees with finite differences everywhere") {
  Rng data_rng(24);
  GraphSpec spec;
  spec.d = 3;
  spec.avg_degree = 2.0;
  const Dataset data = [&] {
    SemParams truth;
    truth.p = Permutation({2, 0, 1});
    truth.weights = LowerTriWeights(3, Eigen::Vector3d(0.9, -1.1, 0.7));
    truth.noise = NoiseScales::equal_scale(0.1);
    return sample_observational(truth, 6, NoiseKind::gaussian, data_rng);
  }();

  for (const bool mean_field : {false, true}) {
    CAPTURE(mean_field);
    Rng init(31);
    VariationalState st = VariationalState::init(3, false, FamilyVariant::full, 0.2, 5,
                                                 mean_field, false, init);
    // move off the all-zeros init so every block participates
    std::vector<double> flat = flatten_state(st);
    Rng jitter(32);
    for (auto& v : flat) v += draw_normal(jitter, 0.0, 0.3);
    unflatten_state(st, flat);

    PriorConfig priors;
    priors.kind = mean_field ? WeightPriorKind::laplace : WeightPriorKind::horseshoe;
    Rng noise_rng(33);
    const FrozenNoise noise = draw_elbo_noise(st, noise_rng);
    const SampleOptions opts = freeze_iterations(st, data, priors, noise);

    const Eigen::VectorXd grad = elbo_gradient_frozen(st, data, priors, noise, opts);
    REQUIRE(grad.size() == static_cast<Eigen::Index>(flat.size()));

    for (std::size_t k = 0; k < flat.size(); ++k) {
      const double h = 1e-5 * std::max(1.0, std::abs(flat[k]));
      std::vector<double> plus = flat, minus = flat;
      plus[k] += h;
      minus[k] -= h;
      VariationalState sp = st, sm = st;
      unflatten_state(sp, plus);
      unflatten_state(sm, minus);
      const double fd = (elbo_value_frozen(sp, data, priors, noise, opts) -
                         elbo_value_frozen(sm, data, priors, noise, opts)) /
                        (2.0 * h);
      const double denom = std::max({1e-6, std::abs(fd), std::abs(grad(static_cast<Eigen::Index>(k)))});
      CAPTURE(k);
      CHECK(std::abs(grad(static_cast<Eigen::Index>(k)) - fd) / denom < 1e-3);
    }
  }
}

TEST_CASE("mode mismatch between prior kind and state is rejected") {
  const Dataset data = chain2_dataset(10, 1.0, 25);
  Rng init(4);
  const VariationalState st = VariationalState::init(2, true, FamilyVariant::diagonal, 0.2, 4,
                                                     false, /*marginalized=*/false, init);
  PriorConfig priors;
  priors.kind = WeightPriorKind::gaussian_marginal;
  Rng rng(6);
  CHECK_THROWS_AS((void)elbo_estimate(st, data, priors, rng, 1), std::invalid_argument);
}

TEST_CASE("marginalized-weights mode produces finite estimates") {
  const Dataset data = chain2_dataset(20, 1.1, 26);
  Rng init(5);
  const VariationalState st = VariationalState::init(2, false, FamilyVariant::diagonal, 0.2, 4,
                                                     false, /*marginalized=*/true, init);
  PriorConfig priors;
  priors.kind = WeightPriorKind::gaussian_marginal;
  Rng rng(7);
  const ElboReport rep = elbo_estimate(st, data, priors, rng, 4);
  CHECK(std::isfinite(rep.elbo));
  CHECK(std::isfinite(rep.kl_p));
}

TEST_CASE("training improves the ELBO and reports a stop reason") {
  const Dataset data = chain2_dataset(200, 1.5, 27);
  Rng init(8);
  VariationalState st = VariationalState::init(2, true, FamilyVariant::diagonal, 0.2, 16,
                                               false, false, init);
  PriorConfig priors;
  TrainConfig cfg;
  cfg.max_steps = 1200;
  cfg.step_size = 5e-3;
  cfg.grad_tol = 0.0;
  cfg.trace_every = 100;
  cfg.seed = 91;

  Rng probe(9);
  const double before = elbo_estimate(st, data, priors, probe, 32).elbo;
  const TrainResult res = train(cfg, data, priors, st);
  CHECK(res.steps == 1200);
  CHECK(res.stop_reason == "max_steps");
  CHECK(!res.trace.empty());
  Rng probe2(10);
  const double after = elbo_estimate(res.state, data, priors, probe2, 32).elbo;
  CHECK(after > before + 10.0);
  CHECK(res.final_window_mean > before);
}

TEST_CASE("an oversized gradient tolerance stops immediately") {
  const Dataset data = chain2_dataset(50, 1.0, 28);
  Rng init(11);
  VariationalState st = VariationalState::init(2, true, FamilyVariant::diagonal, 0.2, 8,
                                               false, false, init);
  PriorConfig priors;
  TrainConfig cfg;
  cfg.max_steps = 100;
  cfg.grad_tol = 1e12;
  cfg.seed = 92;
  const TrainResult res = train(cfg, data, priors, st);
  CHECK(res.stop_reason == "grad_tol");
  CHECK(res.steps == 1);
}

TEST_CASE("a flat objective triggers the plateau rule") {
  const Dataset data = scalar_dataset(60, 1.0, 29);
  Rng init(12);
  VariationalState st = VariationalState::init(1, true, FamilyVariant::diagonal, 0.2, 4,
                                               false, false, init);
  PriorConfig priors;
  TrainConfig cfg;
  cfg.max_steps = 20000;
  cfg.step_size = 2e-2;
  cfg.grad_tol = 0.0;
  cfg.plateau_window = 200;
  cfg.plateau_tol = 0.01;
  cfg.seed = 93;
  const TrainResult res = train(cfg, data, priors, st);
  CHECK(res.stop_reason == "plateau");
  CHECK(res.steps < cfg.max_steps);
}

TEST_CASE("training traces are reproducible from the seed") {
  const Dataset data = chain2_dataset(60, 1.2, 30);
  Rng init(13);
  const VariationalState st = VariationalState::init(2, true, FamilyVariant::diagonal, 0.2, 8,
                                                     false, false, init);
  PriorConfig priors;
  TrainConfig cfg;
  cfg.max_steps = 150;
  cfg.grad_tol = 0.0;
  cfg.trace_every = 25;
  cfg.seed = 94;
  const TrainResult a = train(cfg, data, priors, st);
  const TrainResult b = train(cfg, data, priors, st);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].elbo == b.trace[i].elbo);
    CHECK(a.trace[i].grad_norm == b.trace[i].grad_norm);
    CHECK(a.trace[i].sample_kl == b.trace[i].sample_kl);
  }
  CHECK(flatten_state(a.state) == flatten_state(b.state));
  CHECK(a.stop_reason == b.stop_reason);
}

TEST_CASE("posterior concentrates on the identifiable order at d = 2") {
  const Dataset data = chain2_dataset(400, 1.5, 34);
  Rng init(14);
  VariationalState st = VariationalState::init(2, true, FamilyVariant::diagonal, 0.2, 16,
                                               false, false, init);
  PriorConfig priors;
  TrainConfig cfg;
  cfg.max_steps = 4000;
  cfg.step_size = 5e-3;
  cfg.grad_tol = 0.0;
  cfg.seed = 95;
  const TrainResult res = train(cfg, data, priors, st);

  const Permutation expect({1, 0});
  SinkhornConfig sk;
  Rng draw_rng(15);
  int hits = 0;
  for (int s = 0; s < 200; ++s)
    if (sample_joint(res.state, sk, draw_rng).perm.hard == expect) ++hits;
  CHECK(hits >= 160);

  // the recovered edge weight should sit near the generating value
  Rng post_rng(16);
  double wsum = 0.0;
  for (int s = 0; s < 100; ++s)
    wsum += posterior_draw(res.state, data, priors, sk, post_rng).w(0, 1);
  CHECK(wsum / 100.0 == doctest::Approx(1.5).epsilon(0.15));
}

TEST_CASE("sample KL diagnostic shrinks as the fit improves") {
  const Dataset data = chain2_dataset(400, 1.5, 34);
  Rng init(17);
  VariationalState st = VariationalState::init(2, true, FamilyVariant::diagonal, 0.2, 16,
                                               false, false, init);
  PriorConfig priors;
  Rng ka(18);
  const SampleKl before = sample_kl_diagnostic(data, st, 64, ka, priors);
  CHECK(before.kl > 0.0);

  TrainConfig cfg;
  cfg.max_steps = 4000;
  cfg.step_size = 5e-3;
  cfg.grad_tol = 0.0;
  cfg.seed = 95;
  const TrainResult res = train(cfg, data, priors, st);
  Rng kb(19);
  const SampleKl after = sample_kl_diagnostic(data, res.state, 64, kb, priors);
  CHECK(after.kl < 0.25 * before.kl);
  CHECK(after.kl < 0.05);
}

TEST_CASE("a collapsed variational family has zero gradient variance") {
  const Dataset data = scalar_dataset(40, 1.0, 35);
  Rng init(20);
  VariationalState st = VariationalState::init(1, true, FamilyVariant::diagonal, 0.2, 4,
                                               false, false, init);
  st.family.log_scale(0) = -800.0;  // exp underflows to 0: z is deterministic
  PriorConfig priors;
  Rng rng(21);
  const auto blocks = gradient_variance_diagnostic(st, data, priors, 40, rng);
  REQUIRE(!blocks.empty());
  for (const auto& b : blocks) {
    CAPTURE(b.block);
    CHECK(b.variance == 0.0);
  }
}

TEST_CASE("averaging Monte-Carlo samples shrinks gradient variance roughly as 1/k") {
  const Dataset data = scalar_dataset(40, 1.0, 36);
  Rng init(22);
  VariationalState st = VariationalState::init(1, true, FamilyVariant::diagonal, 0.2, 4,
                                               false, false, init);
  st.family.mean(0) = 0.3;
  st.family.log_scale(0) = -1.0;
  PriorConfig priors;

  const auto mean_block_variance = [&](int mc, std::uint64_t seed) {
    Rng rng(seed);
    const auto blocks = gradient_variance_diagnostic(st, data, priors, 600, rng, mc);
    for (const auto& b : blocks)
      if (b.block == "mean") return b.variance;
    throw std::logic_error("mean block missing");
  };
  const double v1 = mean_block_variance(1, 40);
  const double v4 = mean_block_variance(4, 41);
  CHECK(v1 > 0.0);
  CHECK(v1 / v4 > 2.5);
  CHECK(v1 / v4 < 6.5);
}

TEST_CASE("conditional ridge draws recover a strong edge weight") {
  const Dataset data = chain2_dataset(800, 1.5, 37);
  const Permutation p({1, 0});
  const NoiseScales noise = NoiseScales::equal_scale(0.0);
  Rng rng(23);
  double sum = 0.0, sumsq = 0.0;
  const int reps = 400;
  for (int i = 0; i < reps; ++i) {
    const LowerTriWeights lw = conditional_weights_draw(data.x, p, noise, 10.0, rng);
    REQUIRE(lw.l.size() == 1);
    sum += lw.l(0);
    sumsq += lw.l(0) * lw.l(0);
  }
  const double mean = sum / reps;
  const double sd = std::sqrt(std::max(0.0, sumsq / reps - mean * mean));
  // ridge posterior centers near the generating weight, sd ~ 1/sqrt(n)
  CHECK(mean == doctest::Approx(1.5).epsilon(0.05));
  CHECK(sd < 0.2);
  CHECK(sd > 0.0);
}
