// Acceptance gate: eleven end-to-end checks covering the oracles, the
// variational machinery, and full benchmark runs.  Each check prints one
// PASS/FAIL line (with its wall time); where a check carries a runtime
// budget, staying inside it is part of passing.  The exit status is the
// number of failed checks.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "bcd/bethe.hpp"
#include "bcd/experiments.hpp"
#include "bcd/hungarian.hpp"
#include "bcd/metrics.hpp"
#include "bcd/priors.hpp"
#include "bcd/quadrature.hpp"
#include "bcd/rng.hpp"
#include "bcd/sem.hpp"
#include "bcd/sinkhorn.hpp"
#include "bcd/synthetic.hpp"
#include "bcd/trainer.hpp"
#include "bcd/types.hpp"
#include "bcd/variational.hpp"

namespace fs = std::filesystem;
using namespace bcd;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct CheckResult {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c);
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sd) - 0.5 * z * z;
}

std::vector<Permutation> all_permutations(int d) {
  std::vector<int> m(static_cast<std::size_t>(d));
  std::iota(m.begin(), m.end(), 0);
  std::vector<Permutation> out;
  do {
    out.push_back(Permutation(m));
  } while (std::next_permutation(m.begin(), m.end()));
  return out;
}

// Brute-force log permanent of the matrix with log-entries t.
double log_permanent_exact(const Eigen::MatrixXd& t) {
  const int d = static_cast<int>(t.rows());
  std::vector<double> terms;
  for (const Permutation& p : all_permutations(d)) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += t(i, p.mapping[static_cast<std::size_t>(i)]);
    terms.push_back(s);
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double v : terms) acc += std::exp(v - m);
  return m + std::log(acc);
}

// Log density of one observation x under x = Wᵀ x + ε, ε ~ N(0, diag σ²),
// valid for W that are permutation-conjugated strictly-lower matrices
// (det(I − W) = 1).  Written from scratch as an independent oracle.
double permuted_lower_log_density(const Eigen::VectorXd& x, const Eigen::MatrixXd& w,
                                  const Eigen::VectorXd& log_sigma) {
  const Eigen::Index d = x.size();
  double acc = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double resid = x(j) - w.col(j).dot(x);
    acc -= log_sigma(j) + 0.5 * resid * resid * std::exp(-2.0 * log_sigma(j));
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Check 1: closed-form weight-marginal likelihood
// ---------------------------------------------------------------------------

CheckResult check_marginal_likelihood() {
  Rng rng(substream(2026, 0xA1));
  double worst_rel = 0.0;

  // d = 2: one packed weight; compare against adaptive quadrature over it.
  for (int rep = 0; rep < 20; ++rep) {
    const Permutation p = sample_permutation(2, rng);
    Eigen::VectorXd ls(2);
    ls << draw_uniform(rng, -0.5, 0.5), draw_uniform(rng, -0.5, 0.5);
    const double nu = draw_uniform(rng, 0.4, 1.2);
    Eigen::VectorXd x(2);
    x << draw_normal(rng, 0.0, 1.5), draw_normal(rng, 0.0, 1.5);

    const double closed = gaussian_marginal_log_likelihood<double>(x, p.matrix(), ls, nu);

    // The model places the single weight at edge a -> b with
    // mapping[a] > mapping[b]; the density needs W = (P L Pᵀ)ᵀ.
    const auto w_of = [&](double l0) {
      LowerTriWeights lw = LowerTriWeights::zero(2);
      lw.l(0) = l0;
      return Eigen::MatrixXd(compose_adjacency(p, lw).transpose());
    };
    const auto g = [&](double l0) {
      return permuted_lower_log_density(x, w_of(l0), ls) + log_normal_pdf(l0, 0.0, nu);
    };
    const double lim = 30.0 * nu;
    double gmax = -1e300;
    for (int k = 0; k <= 800; ++k) gmax = std::max(gmax, g(-lim + 2.0 * lim * k / 800.0));
    const double integral =
        panel_integrate([&](double l0) { return std::exp(g(l0) - gmax); }, -lim, lim, 64, 1e-13);
    const double quad = gmax + std::log(integral);

    const double rel = std::abs(closed - quad) / std::abs(quad);
    worst_rel = std::max(worst_rel, rel);
    if (rel > 1e-4)
      return {false, fmt("d=2 rep relative error %.3e exceeds 1e-4 (closed %.10f)", rel, closed)};
  }

  // d = 3: three packed weights; compare against a 10^6-draw Monte Carlo
  // average of the conditional likelihood over l ~ N(0, nu² I).
  double worst_z = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const Permutation p = sample_permutation(3, rng);
    Eigen::VectorXd ls(3);
    for (int i = 0; i < 3; ++i) ls(i) = draw_uniform(rng, -0.3, 0.3);
    const double nu = draw_uniform(rng, 0.4, 1.0);
    Eigen::VectorXd x(3);
    for (int i = 0; i < 3; ++i) x(i) = draw_normal(rng, 0.0, 1.2);

    const double closed = gaussian_marginal_log_likelihood<double>(x, p.matrix(), ls, nu);

    // Residual of row i under W = (P L Pᵀ)ᵀ: x_i − Σ_j L(m(i), m(j)) x_j.
    std::vector<std::array<int, 3>> terms;  // (row, col, packed index)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (p.mapping[static_cast<std::size_t>(i)] > p.mapping[static_cast<std::size_t>(j)])
          terms.push_back({i, j,
                           static_cast<int>(LowerTriWeights::pack_index(
                               p.mapping[static_cast<std::size_t>(i)],
                               p.mapping[static_cast<std::size_t>(j)]))});
    const double base = -1.5 * std::log(2.0 * std::numbers::pi) - ls.sum();
    const Eigen::Vector3d inv_var = (-2.0 * ls).array().exp();

    const int n_draws = 1000000;
    std::vector<double> logs(static_cast<std::size_t>(n_draws));
    Eigen::Vector3d l, resid;
    for (int k = 0; k < n_draws; ++k) {
      for (int i = 0; i < 3; ++i) l(i) = draw_normal(rng, 0.0, nu);
      resid = x;
      for (const auto& t : terms) resid(t[0]) -= l(t[2]) * x(t[1]);
      logs[static_cast<std::size_t>(k)] =
          base - 0.5 * (resid.array().square() * inv_var.array()).sum();
    }
    const double m = *std::max_element(logs.begin(), logs.end());
    double sum = 0.0, sumsq = 0.0;
    for (double v : logs) {
      const double e = std::exp(v - m);
      sum += e;
      sumsq += e * e;
    }
    const double mean = sum / n_draws;
    const double var = std::max(0.0, sumsq / n_draws - mean * mean);
    const double est = m + std::log(mean);
    const double se_log = std::sqrt(var / n_draws) / mean;
    const double z = std::abs(closed - est) / std::max(se_log, 1e-300);
    worst_z = std::max(worst_z, z);
    if (z > 3.0)
      return {false, fmt("d=3 rep deviates %.2f standard errors (se %.2e)", z, se_log)};
  }
  return {true, fmt("d=2 worst rel err %.2e; d=3 worst deviation %.2f se", worst_rel, worst_z)};
}

// ---------------------------------------------------------------------------
// Check 2: permanent lower bound sandwich
// ---------------------------------------------------------------------------

CheckResult check_permanent_bounds() {
  Rng rng(substream(2026, 0xA2));
  double worst_gap = 0.0;
  const auto one = [&](int d) -> std::optional<std::string> {
    Eigen::MatrixXd t(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) t(i, j) = std::log(draw_uniform(rng, 0.05, 4.0));
    const double lp = log_permanent_exact(t);
    const double lb = log_bethe_permanent(t);
    const double lower = lp - 0.5 * d * std::log(2.0) - 1e-3;
    const double upper = lp + 1e-3;
    worst_gap = std::max(worst_gap, lp - lb);
    if (lb < lower || lb > upper)
      return fmt("bound violated at d=%.0f: bethe %.8f vs exact %.8f", d, lb, lp);
    return std::nullopt;
  };
  for (int rep = 0; rep < 50; ++rep)
    if (auto err = one(3)) return {false, *err};
  for (int rep = 0; rep < 20; ++rep)
    if (auto err = one(4)) return {false, *err};
  return {true, fmt("largest exact-minus-bound gap %.4f nats (cap %.4f at d=4)", worst_gap,
                    2.0 * std::log(2.0))};
}

// ---------------------------------------------------------------------------
// Check 3: balancing-iteration convergence contract
// ---------------------------------------------------------------------------

CheckResult check_sinkhorn_contract() {
  Rng rng(substream(2026, 0xA3));
  int converged = 0;
  double worst_achieved = 0.0;
  std::string failures;
  for (int rep = 0; rep < 1000; ++rep) {
    const int d = draw_int(rng, 2, 32);
    Eigen::MatrixXd t(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) t(i, j) = draw_uniform(rng, -20.0, 20.0);
    const SinkhornConfig cfg;  // tol 0.01, cap 2000
    const SinkhornRun run = sinkhorn_log(t / 0.2, cfg);
    if (run.achieved_tolerance <= cfg.tol) {
      ++converged;
    } else {
      worst_achieved = std::max(worst_achieved, run.achieved_tolerance);
      if (failures.size() < 160)
        failures += fmt(" [d=%.0f achieved %.3e]", d, run.achieved_tolerance);
    }
  }
  const bool pass = converged >= 990;
  std::string detail = fmt("converged %0.f/1000", static_cast<double>(converged));
  if (!failures.empty()) detail += "; unconverged:" + failures;
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// Check 4: assignment solver exactness
// ---------------------------------------------------------------------------

CheckResult check_assignment_exact() {
  Rng rng(substream(2026, 0xA4));
  for (int rep = 0; rep < 1000; ++rep) {
    const int d = draw_int(rng, 1, 6);
    Eigen::MatrixXd m(d, d);
    const bool integer_ties = rep % 7 == 0;  // exercise tie handling too
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        m(i, j) = integer_ties ? static_cast<double>(draw_int(rng, -2, 2))
                               : draw_normal(rng, 0.0, 3.0);
    const Permutation h = hungarian(m);
    double hv = 0.0;
    for (int i = 0; i < d; ++i) hv += m(i, h.mapping[static_cast<std::size_t>(i)]);
    double bv = -1e300;
    for (const Permutation& p : all_permutations(d)) {
      double s = 0.0;
      for (int i = 0; i < d; ++i) s += m(i, p.mapping[static_cast<std::size_t>(i)]);
      bv = std::max(bv, s);
    }
    if (!(bv - hv <= 1e-9 * std::max(1.0, std::abs(bv))))
      return {false, fmt("suboptimal assignment at d=%.0f: %.12f vs brute force %.12f",
                         static_cast<double>(d), hv, bv)};
  }
  return {true, "1000/1000 optimal"};
}

// ---------------------------------------------------------------------------
// Check 5: gradient correctness under frozen noise
// ---------------------------------------------------------------------------

CheckResult check_gradients() {
  Rng rng(substream(2026, 0xA5));
  double worst_rel = 0.0;
  for (int s = 0; s < 20; ++s) {
    GraphSpec spec;
    spec.d = 3;
    spec.avg_degree = 1.5;
    spec.variance_mode = s % 2 == 0 ? VarianceMode::equal : VarianceMode::nonequal;
    const Dataset data = sample_dataset(spec, 10, rng);

    const bool mean_field = s % 4 == 3;
    const bool equal_variance = s % 3 == 0;
    const FamilyVariant variant = s % 2 == 0 ? FamilyVariant::diagonal : FamilyVariant::full;
    VariationalState st =
        VariationalState::init(3, equal_variance, variant, 0.2, 6, mean_field, false, rng);
    std::vector<double> flat = flatten_state(st);
    for (double& v : flat) v += draw_normal(rng, 0.0, 0.3);
    unflatten_state(st, flat);

    PriorConfig priors;
    priors.kind = s % 5 == 0 ? WeightPriorKind::laplace : WeightPriorKind::horseshoe;

    const FrozenNoise noise = draw_elbo_noise(st, rng);
    const SampleOptions opts = freeze_iterations(st, data, priors, noise);
    const Eigen::VectorXd grad = elbo_gradient_frozen(st, data, priors, noise, opts);
    if (grad.size() != static_cast<Eigen::Index>(flat.size()))
      return {false, "gradient length does not match the flattened parameter count"};

    VariationalState scratch = st;
    for (std::size_t k = 0; k < flat.size(); ++k) {
      const double h = 1e-5 * std::max(1.0, std::abs(flat[k]));
      std::vector<double> up = flat, dn = flat;
      up[k] += h;
      dn[k] -= h;
      unflatten_state(scratch, up);
      const double fp = elbo_value_frozen(scratch, data, priors, noise, opts);
      unflatten_state(scratch, dn);
      const double fm = elbo_value_frozen(scratch, data, priors, noise, opts);
      const double fd = (fp - fm) / (2.0 * h);
      const double g = grad(static_cast<Eigen::Index>(k));
      // mixed criterion: 1e-3 relative once the gradient is meaningful, with
      // an absolute floor of 1e-6 covering the central-difference rounding
      // noise (~eps*|f|/h) on coordinates whose true derivative is ~0
      const double err = std::abs(g - fd);
      const double rel = err / std::max({1e-3, std::abs(g), std::abs(fd)});
      if (err > 1e-6 && rel > 1e-3)
        return {false, fmt("state %.0f coordinate %.0f: analytic %.8e", static_cast<double>(s),
                           static_cast<double>(k), g) +
                           fmt(" vs finite difference %.8e (rel %.2e)", fd, rel)};
      worst_rel = std::max(worst_rel, rel);
    }
  }
  return {true, fmt("20 states, worst coordinate rel err %.2e", worst_rel)};
}

// ---------------------------------------------------------------------------
// Check 6: ELBO never exceeds the exact evidence (d = 2)
// ---------------------------------------------------------------------------

CheckResult check_elbo_soundness() {
  Rng rng(substream(2026, 0xA6));
  double tightest = 1e300;
  for (int s = 0; s < 20; ++s) {
    // Ground-truth chain SEM and a small dataset.
    SemParams truth;
    truth.p = Permutation({1, 0});
    truth.weights = LowerTriWeights::zero(2);
    truth.weights.l(0) = (s % 2 == 0 ? 1.0 : -1.0) * draw_uniform(rng, 0.8, 1.6);
    truth.noise = NoiseScales::equal_scale(0.0);
    const Dataset data = sample_observational(truth, 12, NoiseKind::gaussian, rng);
    const Eigen::MatrixXd sc = data.scatter();
    const double n = static_cast<double>(data.n());

    // Random unoptimized variational state (equal-variance; z = (l0, log σ)).
    const bool mean_field = s % 4 == 0;
    const FamilyVariant variant = s % 3 == 0 ? FamilyVariant::full : FamilyVariant::diagonal;
    VariationalState st = VariationalState::init(2, true, variant, 0.2, 5, mean_field, false, rng);
    for (Eigen::Index i = 0; i < st.family.mean.size(); ++i) {
      st.family.mean(i) = draw_normal(rng, 0.0, 0.6);
      st.family.log_scale(i) = draw_uniform(rng, -1.2, -0.2);
    }
    if (mean_field)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) st.free_logits(i, j) = draw_normal(rng, 0.0, 2.0);

    PriorConfig priors;  // horseshoe weights, N(0, 10²) on log sigma
    Rng erng(substream(777, static_cast<std::uint64_t>(s)));
    const ElboReport rep = elbo_estimate(st, data, priors, erng, 2048);

    // Exact evidence by exhaustive permutation enumeration and nested
    // adaptive quadrature over (l0, log sigma), uniform 1/2! permutation
    // prior.  The single weight sits at W(r, c) = l0.
    const double eta = weight_prior_scale(priors, 2, data.n());
    const auto evidence_for_slot = [&](int r, int c) {
      const auto joint = [&](double l0, double y) {
        const double quad_form = sc(r, r) + sc(c, c) - 2.0 * l0 * sc(r, c) + l0 * l0 * sc(r, r);
        const double loglik = 0.5 * n * (-4.0 * y - 2.0 * std::log(2.0 * std::numbers::pi)) -
                              0.5 * std::exp(-2.0 * y) * quad_form;
        return loglik + horseshoe_eval(l0, eta).log_density + log_normal_pdf(y, 0.0, priors.s0);
      };
      const double l_lim = 50.0, y_lo = -8.0, y_hi = 6.0;
      double gmax = -1e300;
      for (int a = 0; a <= 200; ++a)
        for (int b = 0; b <= 140; ++b)
          gmax = std::max(gmax, joint(-l_lim + 2.0 * l_lim * a / 200.0,
                                      y_lo + (y_hi - y_lo) * b / 140.0));
      for (double tiny : {1e-6, -1e-6, 1e-3, -1e-3})
        for (int b = 0; b <= 140; ++b)
          gmax = std::max(gmax, joint(tiny, y_lo + (y_hi - y_lo) * b / 140.0));
      const auto inner = [&](double y) {
        return panel_integrate([&](double l0) { return std::exp(joint(l0, y) - gmax); }, -l_lim,
                               l_lim, 32, 1e-12);
      };
      const double outer = panel_integrate(inner, y_lo, y_hi, 32, 1e-12);
      return gmax + std::log(outer);
    };
    // Identity permutation puts the weight at W(1,0); the swap at W(0,1).
    const double e_id = evidence_for_slot(1, 0);
    const double e_sw = evidence_for_slot(0, 1);
    const double m = std::max(e_id, e_sw);
    const double evidence =
        m + std::log(0.5 * (std::exp(e_id - m) + std::exp(e_sw - m)));

    if (!std::isfinite(evidence) || !std::isfinite(rep.elbo))
      return {false, "non-finite evidence or ELBO estimate"};
    tightest = std::min(tightest, evidence - rep.elbo);
    if (rep.elbo > evidence + 1e-6)
      return {false, fmt("instance %.0f: ELBO %.6f exceeds evidence", static_cast<double>(s),
                         rep.elbo) +
                         fmt(" %.6f by %.3e", evidence, rep.elbo - evidence)};
  }
  return {true, fmt("20 instances; smallest evidence-minus-ELBO margin %.3f nats", tightest)};
}

// ---------------------------------------------------------------------------
// Check 7: posterior concentration on the generating order (d = 3 chain)
// ---------------------------------------------------------------------------

CheckResult check_concentration() {
  const Permutation p_true({2, 1, 0});
  SemParams truth;
  truth.p = p_true;
  truth.weights = LowerTriWeights::zero(3);
  truth.weights.l(LowerTriWeights::pack_index(2, 1)) = 1.5;  // edge 0 -> 1
  truth.weights.l(LowerTriWeights::pack_index(1, 0)) = 1.5;  // edge 1 -> 2
  truth.noise = NoiseScales::equal_scale(0.0);

  int seeds_passing = 0;
  std::string fracs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng drng(substream(seed, 0xC7));
    const Dataset data = sample_observational(truth, 500, NoiseKind::gaussian, drng);

    PriorConfig priors;
    // best of three restarts by final ELBO: the relaxation can collapse onto
    // a wrong order early (a local optimum hundreds of nats below the truth),
    // and restarts are the standard remedy
    TrainResult fit;
    bool have_fit = false;
    for (std::uint64_t restart = 0; restart < 3; ++restart) {
      TrainConfig tc;
      tc.step_size = 3e-3;
      tc.max_steps = 20000;
      tc.trace_every = 500;
      tc.seed = 1000 * (restart + 1) + seed;
      Rng irng(substream(seed, 0x171 + 0x10 * restart));
      VariationalState init = VariationalState::init(3, true, FamilyVariant::diagonal, tc.tau, 64,
                                                     false, false, irng);
      TrainResult attempt = train(tc, data, priors, std::move(init));
      if (!have_fit || attempt.final_window_mean > fit.final_window_mean) {
        fit = std::move(attempt);
        have_fit = true;
      }
    }

    SinkhornConfig sk;
    Rng srng(substream(seed, 0xE0));
    int hits = 0;
    for (int k = 0; k < 200; ++k)
      if (sample_joint(fit.state, sk, srng).perm.hard == p_true) ++hits;
    const double frac = hits / 200.0;
    fracs += fmt(" %.3f", frac);
    if (frac >= 0.8) ++seeds_passing;
  }
  return {seeds_passing >= 4,
          fmt("seeds with mass >= 0.8: %.0f/5; fractions:", static_cast<double>(seeds_passing)) +
              fracs};
}

// ---------------------------------------------------------------------------
// Checks 8-10: benchmark runs at d = 8 (Erdős–Rényi, one expected parent)
// ---------------------------------------------------------------------------

struct BenchmarkRows {
  std::vector<ResultRow> rows;
  double wall_sec = 0.0;
};

ExperimentConfig benchmark_config(ExperimentKind kind, Eigen::Index n,
                                  const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.kind = kind;
  cfg.graph.d = 8;
  cfg.graph.avg_degree = 1.0;
  cfg.n = n;
  cfg.seeds = {1, 2, 3, 4, 5};
  cfg.train.step_size = 2e-3;
  cfg.train.max_steps = 20000;
  cfg.train.trace_every = 500;
  cfg.hidden = 128;
  cfg.posterior_draws = 100;
  cfg.sample_kl_draws = 16;
  cfg.out_dir = out_dir;
  cfg.threads = 1;
  return cfg;
}

double row_value(const std::vector<ResultRow>& rows, const std::string& method,
                 const std::string& metric, std::uint64_t seed) {
  for (const ResultRow& r : rows)
    if (r.method == method && r.metric == metric && r.seed == seed) return r.value;
  throw std::runtime_error("missing result row: " + method + "/" + metric + "/seed " +
                           std::to_string(seed));
}

CheckResult check_structure_recovery(const BenchmarkRows& bench) {
  int seeds_passing = 0;
  double tpr_sum = 0.0;
  double max_runtime = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double eshd = row_value(bench.rows, "full", "e-shd", seed);
    const double null_shd = row_value(bench.rows, "null", "e-shd", seed);
    const double tpr = row_value(bench.rows, "full", "tpr", seed);
    tpr_sum += tpr;
    if (eshd < null_shd) ++seeds_passing;
    per_seed += fmt(" [%.2f vs %.0f]", eshd, null_shd);
    for (const ResultRow& r : bench.rows)
      if (r.method == "full" && r.seed == seed)
        max_runtime = std::max(max_runtime, r.runtime_sec);
  }
  const double mean_tpr = tpr_sum / 5.0;
  const bool pass = seeds_passing >= 4 && mean_tpr >= 0.5 && max_runtime <= 1800.0;
  return {pass, fmt("expected-SHD beats empty baseline on %.0f/5 seeds",
                    static_cast<double>(seeds_passing)) +
                    per_seed + fmt("; mean TPR %.3f; slowest fit %.0fs", mean_tpr, max_runtime)};
}

CheckResult check_interventional(const BenchmarkRows& bench) {
  int seeds_passing = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double model = row_value(bench.rows, "full", "w1-interventional", seed);
    const double null_w1 = row_value(bench.rows, "null", "w1-interventional", seed);
    if (model < null_w1) ++seeds_passing;
    per_seed += fmt(" [%.3f vs %.3f]", model, null_w1);
  }
  return {seeds_passing >= 4,
          fmt("interventional W1 beats baseline on %.0f/5 seeds:",
              static_cast<double>(seeds_passing)) +
              per_seed};
}

CheckResult check_ablations(const BenchmarkRows& bench) {
  std::string detail;
  bool pass = bench.wall_sec <= 7200.0;
  if (!pass) detail = fmt("runtime %.0fs exceeds 7200s budget; ", bench.wall_sec);
  for (const std::string& method : {std::string("mean-field"), std::string("laplace"),
                                    std::string("sinkhorn-100")}) {
    int not_better = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const double full = row_value(bench.rows, "full", "e-shd", seed);
      const double abl = row_value(bench.rows, method, "e-shd", seed);
      if (abl >= full - 1e-9) ++not_better;  // ties count as not-better
    }
    detail += fmt((method + " >= full on %.0f/5 seeds; ").c_str(),
                  static_cast<double>(not_better));
    if (not_better < 4) pass = false;
  }
  detail += fmt("total fit wall time %.0fs", bench.wall_sec);
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// Check 11: structure-metric oracles
// ---------------------------------------------------------------------------

BinaryGraph random_dag(int d, double p, Rng& rng) {
  const Permutation order = sample_permutation(d, rng);
  BinaryGraph g(d);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (draw_uniform(rng) < p)
        g.set(order.mapping[static_cast<std::size_t>(i)],
              order.mapping[static_cast<std::size_t>(j)]);
  return g;
}

bool is_acyclic_local(const BinaryGraph& g) {
  std::vector<int> indeg(static_cast<std::size_t>(g.d), 0);
  for (int i = 0; i < g.d; ++i)
    for (int j = 0; j < g.d; ++j)
      if (g.has(i, j)) ++indeg[static_cast<std::size_t>(j)];
  std::vector<int> stack;
  for (int j = 0; j < g.d; ++j)
    if (indeg[static_cast<std::size_t>(j)] == 0) stack.push_back(j);
  int seen = 0;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    ++seen;
    for (int v = 0; v < g.d; ++v)
      if (g.has(u, v) && --indeg[static_cast<std::size_t>(v)] == 0) stack.push_back(v);
  }
  return seen == g.d;
}

std::vector<BinaryGraph> all_dags(int d) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) pairs.emplace_back(i, j);
  std::vector<BinaryGraph> out;
  const int total = static_cast<int>(std::pow(3.0, static_cast<double>(pairs.size())) + 0.5);
  for (int code = 0; code < total; ++code) {
    BinaryGraph g(d);
    int c = code;
    for (const auto& [i, j] : pairs) {
      const int v = c % 3;
      c /= 3;
      if (v == 1) g.set(i, j);
      if (v == 2) g.set(j, i);
    }
    if (is_acyclic_local(g)) out.push_back(g);
  }
  return out;
}

bool markov_equivalent(const BinaryGraph& a, const BinaryGraph& b) {
  const auto skeleton = [](const BinaryGraph& g) {
    std::set<std::pair<int, int>> s;
    for (const auto& [i, j] : g.edges()) s.insert({std::min(i, j), std::max(i, j)});
    return s;
  };
  const auto v_structures = [](const BinaryGraph& g) {
    std::set<std::tuple<int, int, int>> s;
    for (int k = 0; k < g.d; ++k)
      for (int i = 0; i < g.d; ++i)
        for (int j = i + 1; j < g.d; ++j) {
          if (i == k || j == k) continue;
          if (g.has(i, k) && g.has(j, k) && !g.has(i, j) && !g.has(j, i))
            s.insert({i, j, k});
        }
    return s;
  };
  return skeleton(a) == skeleton(b) && v_structures(a) == v_structures(b);
}

CheckResult check_metric_oracles() {
  Rng rng(substream(2026, 0xAB));

  // Distance axioms on random triples.
  for (int rep = 0; rep < 300; ++rep) {
    const BinaryGraph a = random_dag(6, 0.3, rng);
    const BinaryGraph b = random_dag(6, 0.3, rng);
    const BinaryGraph c = random_dag(6, 0.3, rng);
    if (shd(a, b) != shd(b, a)) return {false, "structural distance is not symmetric"};
    if (shd(a, a) != 0) return {false, "self-distance is nonzero"};
    if ((shd(a, b) == 0) != (a == b)) return {false, "zero distance on distinct graphs"};
    if (shd(a, c) > shd(a, b) + shd(b, c)) return {false, "triangle inequality violated"};
  }

  // Equivalence-class distance is zero exactly on Markov-equivalent pairs,
  // exhaustively over every DAG with up to three nodes.
  for (int d = 1; d <= 3; ++d) {
    const std::vector<BinaryGraph> dags = all_dags(d);
    const std::size_t expected = d == 1 ? 1 : (d == 2 ? 3 : 25);
    if (dags.size() != expected)
      return {false, fmt("DAG enumeration produced %.0f graphs at d=%.0f",
                         static_cast<double>(dags.size()), static_cast<double>(d))};
    for (const BinaryGraph& a : dags)
      for (const BinaryGraph& b : dags) {
        const bool zero = shd_c(a, b) == 0;
        if (zero != markov_equivalent(a, b))
          return {false, fmt("equivalence-class distance disagrees at d=%.0f",
                             static_cast<double>(d))};
      }
  }

  // One-dimensional transport distance against analytic Gaussian values.
  const int ns = 100000;
  std::vector<double> a(static_cast<std::size_t>(ns)), b(a.size()), c(a.size());
  for (int i = 0; i < ns; ++i) {
    a[static_cast<std::size_t>(i)] = draw_normal(rng, 0.0, 1.0);
    b[static_cast<std::size_t>(i)] = draw_normal(rng, 2.0, 1.0);
    c[static_cast<std::size_t>(i)] = draw_normal(rng, 0.0, 3.0);
  }
  const double w_shift = wasserstein_1d(a, b);
  const double w_scale = wasserstein_1d(a, c);
  const double shift_expected = 2.0;
  const double scale_expected = 2.0 * std::sqrt(2.0 / std::numbers::pi);
  if (std::abs(w_shift - shift_expected) > 0.02)
    return {false, fmt("transport distance %.4f vs analytic %.4f", w_shift, shift_expected)};
  if (std::abs(w_scale - scale_expected) > 0.02)
    return {false, fmt("transport distance %.4f vs analytic %.4f", w_scale, scale_expected)};
  return {true, fmt("axioms, exhaustive d<=3 equivalence, transport errs %.4f/%.4f",
                    std::abs(w_shift - shift_expected), std::abs(w_scale - scale_expected))};
}

}  // namespace

int main(int argc, char** argv) {
  // optional arguments: check indices to run (default: all 11)
  std::set<int> selected;
  for (int a = 1; a < argc; ++a) selected.insert(std::atoi(argv[a]));
  const auto wanted = [&](int idx) { return selected.empty() || selected.count(idx) > 0; };

  std::printf("acceptance suite: 11 checks\n");
  std::fflush(stdout);
  int failures = 0;

  const auto run = [&](int idx, const char* title, double budget_sec, auto&& fn) {
    if (!wanted(idx)) return;
    const auto t0 = Clock::now();
    CheckResult r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("exception: ") + e.what();
    }
    const double dt = seconds_since(t0);
    bool pass = r.pass;
    if (pass && budget_sec > 0.0 && dt > budget_sec) {
      pass = false;
      r.detail = fmt("runtime %.1fs exceeds %.0fs budget; ", dt, budget_sec) + r.detail;
    }
    std::printf("[%2d/11] %s %8.1fs  %s\n", idx, pass ? "PASS" : "FAIL", dt, title);
    if (!r.detail.empty()) std::printf("                       %s\n", r.detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  };

  run(1, "weight-marginal likelihood vs quadrature (d=2) and Monte Carlo (d=3)", 120.0,
      check_marginal_likelihood);
  run(2, "Bethe permanent within [exact - (d/2)log2, exact]", 60.0, check_permanent_bounds);
  run(3, "balancing iteration reaches tol 0.01 within 2000 sweeps on >=99%", 0.0,
      check_sinkhorn_contract);
  run(4, "assignment solver matches brute force on 1000 instances", 60.0, check_assignment_exact);
  run(5, "frozen-noise gradient matches finite differences everywhere", 300.0, check_gradients);
  run(6, "ELBO estimate never exceeds exact evidence (d=2, 20 instances)", 300.0,
      check_elbo_soundness);
  run(7, "posterior mass concentrates on the generating order (d=3 chain)", 600.0,
      check_concentration);

  // The interventional benchmark (n = 100) also carries the structure
  // metrics, so checks 8 and 9 share it; check 10 runs the ablation grid in
  // the scarce-data regime where the approximations genuinely separate.
  const fs::path base = fs::temp_directory_path() / "bcd_acceptance_bench";
  std::error_code ec;
  fs::remove_all(base, ec);
  BenchmarkRows ablation, intervention;
  bool bench_ok = true;
  std::string bench_err;
  if (wanted(10)) {
    const auto t0 = Clock::now();
    try {
      const ExperimentOutcome out = run_experiment(
          benchmark_config(ExperimentKind::ablation, 30, (base / "ablation").string()));
      ablation.rows = out.rows;
      if (out.failed_jobs > 0) {
        bench_ok = false;
        bench_err = fmt("%.0f ablation jobs failed", static_cast<double>(out.failed_jobs));
      }
    } catch (const std::exception& e) {
      bench_ok = false;
      bench_err = e.what();
    }
    ablation.wall_sec = seconds_since(t0);
  }
  if (wanted(8) || wanted(9)) {
    const auto t0 = Clock::now();
    try {
      const ExperimentOutcome out = run_experiment(
          benchmark_config(ExperimentKind::intervention, 100, (base / "intervention").string()));
      intervention.rows = out.rows;
      if (out.failed_jobs > 0) {
        bench_ok = false;
        bench_err += fmt(" %.0f intervention jobs failed", static_cast<double>(out.failed_jobs));
      }
    } catch (const std::exception& e) {
      bench_ok = false;
      bench_err += e.what();
    }
    intervention.wall_sec = seconds_since(t0);
  }

  run(8, "d=8 sparse-graph recovery beats the empty-graph baseline", 0.0, [&]() -> CheckResult {
    if (!bench_ok) return {false, bench_err};
    return check_structure_recovery(intervention);
  });
  run(9, "d=8 interventional transport distance beats the baseline", 0.0, [&]() -> CheckResult {
    if (!bench_ok) return {false, bench_err};
    return check_interventional(intervention);
  });
  run(10, "every ablation is no better than the full method", 0.0, [&]() -> CheckResult {
    if (!bench_ok) return {false, bench_err};
    return check_ablations(ablation);
  });
  run(11, "structure-metric oracles (axioms, equivalence classes, transport)", 120.0,
      check_metric_oracles);

  fs::remove_all(base, ec);
  const int total = selected.empty() ? 11 : static_cast<int>(selected.size());
  std::printf("ACCEPTANCE: %d/%d checks passed\n", total - failures, total);
  return failures;
}
