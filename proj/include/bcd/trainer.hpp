#pragma once

// ELBO estimation, pathwise/straight-through gradients, and the training
// loop.  One Monte-Carlo sample of the ELBO is
//
//   log p(X | P, L, Sigma)                        (hard P in the forward pass)
//   - [ log q(z) - log p(L) - log p(Sigma) ]      (z = (l, log sigma))
//   - [ <T, P> - log perm_B(T) + log d! ]         (Boltzmann density of P)
//
// and gradients flow through the (L, Sigma) reparameterization, the unrolled
// Sinkhorn iterations (soft matrix substituted for hard P on the backward
// pass), and one belief-propagation sweep at the converged Bethe messages.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcd/bethe.hpp"
#include "bcd/hungarian.hpp"
#include "bcd/priors.hpp"
#include "bcd/sem.hpp"
#include "bcd/sinkhorn.hpp"
#include "bcd/types.hpp"
#include "bcd/variational.hpp"

namespace bcd {

// Prior hyperparameters resolved against a concrete (d, n).
struct PriorSpec {
  WeightPriorKind kind = WeightPriorKind::horseshoe;
  double eta = 0.1;        // horseshoe global scale
  double laplace_b = 0.1;  // laplace scale
  double s0 = 10.0;        // sd of the log-sigma prior
  double nu = 1.0;         // weight sd in the marginalized-weights mode
};

inline PriorSpec resolve_prior(const PriorConfig& cfg, int d, Eigen::Index n) {
  PriorSpec spec;
  spec.kind = cfg.kind;
  spec.eta = cfg.eta_override > 0.0 ? cfg.eta_override : eta_rule_of_thumb(d, n, cfg.rho);
  spec.laplace_b = cfg.laplace_b > 0.0 ? cfg.laplace_b : spec.eta;
  spec.s0 = cfg.s0;
  spec.nu = cfg.nu;
  return spec;
}

// Dataset digest the ELBO needs: the scatter matrix for the likelihood, the
// raw rows only in the marginalized-weights mode.
struct DataSummary {
  Eigen::MatrixXd scatter;
  const Eigen::MatrixXd* rows = nullptr;
  Eigen::Index n = 0;
  int d = 0;
};

inline DataSummary summarize(const Dataset& data) {
  DataSummary s;
  s.scatter = data.scatter();
  s.rows = &data.x;
  s.n = data.n();
  s.d = data.dim();
  return s;
}

// Noise injected into one ELBO sample.
struct FrozenNoise {
  Eigen::VectorXd u;       // N(0, I), length z_dim
  Eigen::MatrixXd gumbel;  // d x d standard Gumbel
};

inline FrozenNoise draw_elbo_noise(const VariationalState& st, Rng& rng) {
  FrozenNoise fn;
  fn.u.resize(st.z_dim());
  for (Eigen::Index i = 0; i < fn.u.size(); ++i) fn.u(i) = draw_normal(rng);
  fn.gumbel = draw_gumbel_matrix(st.d, rng);
  return fn;
}

struct SampleOptions {
  bool soft_forward = false;      // smooth surrogate: soft matrix everywhere
  int sinkhorn_fixed_iters = -1;  // >= 0 pins the sweep count (finite differences)
  int bethe_fixed_sweeps = -1;    // >= 0 pins the convergence sweeps
  int sinkhorn_diff_cap = 200;    // differentiated sweeps; earlier ones pass through
};

// One parameter set lifted to the scalar type.  For Var the leaves are
// registered on the active tape in the canonical flat order (see
// flatten_state), starting from an empty tape, so leaf k has tape index k.
template <class S>
struct ParamPack {
  FamilyParams<S> family;
  NetParams<S> net;
  Mat<S> free_logits;
};

template <class S>
ParamPack<S> lift_params(const VariationalState& st) {
  ParamPack<S> pp;
  pp.family.variant = st.family.variant;
  if constexpr (std::is_same_v<S, double>) {
    pp.family.mean = st.family.mean;
    pp.family.log_scale = st.family.log_scale;
    pp.family.chol_lower = st.family.chol_lower;
    pp.net.w1 = st.net.w1;
    pp.net.b1 = st.net.b1;
    pp.net.w2 = st.net.w2;
    pp.net.b2 = st.net.b2;
    pp.free_logits = st.free_logits;
  } else {
    const auto leaf_vec = [](const Eigen::VectorXd& v) {
      Vec<S> o(v.size());
      for (Eigen::Index i = 0; i < v.size(); ++i) o(i) = ad::Var::leaf(v(i));
      return o;
    };
    const auto leaf_mat = [](const Eigen::MatrixXd& m) {  // row-major, matching flatten_state
      Mat<S> o(m.rows(), m.cols());
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) o(i, j) = ad::Var::leaf(m(i, j));
      return o;
    };
    pp.family.mean = leaf_vec(st.family.mean);
    pp.family.log_scale = leaf_vec(st.family.log_scale);
    pp.family.chol_lower = leaf_vec(st.family.chol_lower);
    pp.net.w1 = leaf_mat(st.net.w1);
    pp.net.b1 = leaf_vec(st.net.b1);
    pp.net.w2 = leaf_mat(st.net.w2);
    pp.net.b2 = leaf_vec(st.net.b2);
    pp.free_logits = leaf_mat(st.free_logits);
  }
  return pp;
}

// Sinkhorn with an adaptively chosen sweep count replayed under the scalar
// type.  When the sweep count exceeds the differentiation cap, the skipped
// prefix is replayed on doubles and folded in as a constant shift, so values
// stay exact while early sweeps contribute no gradient (documented
// approximation bounding tape memory).
template <class S>
struct SinkhornReplay {
  Mat<S> log_soft;
  int iterations = 0;
  double achieved_tolerance = 0.0;
};

template <class S>
SinkhornReplay<S> sinkhorn_replay(const Mat<S>& a0, const SinkhornConfig& cfg, int fixed_iters,
                                  int diff_cap) {
  SinkhornReplay<S> out;
  if (fixed_iters >= 0) {
    out.log_soft = a0;
    for (int i = 0; i < fixed_iters; ++i) sinkhorn_sweep<S>(out.log_soft);
    out.iterations = fixed_iters;
    out.achieved_tolerance = sinkhorn_deviation(values_of(out.log_soft));
    return out;
  }
  const Eigen::MatrixXd a0v = values_of(a0);
  const SinkhornRun run = sinkhorn_log(a0v, cfg);
  out.iterations = run.iterations;
  out.achieved_tolerance = run.achieved_tolerance;
  if constexpr (std::is_same_v<S, double>) {
    out.log_soft = run.log_m;
  } else {
    const int k = std::min(run.iterations, diff_cap);
    Mat<S> a = a0;
    if (k < run.iterations) {
      Eigen::MatrixXd mid = a0v;
      for (int i = 0; i < run.iterations - k; ++i) sinkhorn_sweep<double>(mid);
      const Eigen::MatrixXd shift = mid - a0v;
      for (Eigen::Index r = 0; r < a.rows(); ++r)
        for (Eigen::Index c = 0; c < a.cols(); ++c)
          if (shift(r, c) != 0.0) a(r, c) += S(shift(r, c));
    }
    for (int i = 0; i < k; ++i) sinkhorn_sweep<S>(a);
    out.log_soft = a;
  }
  return out;
}

// log perm_B for the ELBO.  Adaptive mode (fixed_sweeps < 0) converges the
// messages on doubles and evaluates the free energy through one final sweep
// under the scalar type, so reverse mode differentiates only that last sweep
// -- the cheap estimator the training loop uses.  (It is not the exact
// derivative of the converged value; that would be the belief matrix.)
// Frozen mode (fixed_sweeps >= 0, used by the finite-difference probes) runs
// the fixed number of sweeps entirely under the scalar type, so the value and
// its reverse-mode gradient describe the same smooth composition.
template <class S>
struct BetheReplay {
  S value = S(0.0);
  int iterations = 0;
};

template <class S>
BetheReplay<S> bethe_log_permanent_replay(const Mat<S>& t, const BetheConfig& cfg,
                                          int fixed_sweeps) {
  BetheReplay<S> out;
  if (t.rows() == 1) {
    out.value = t(0, 0);
    return out;
  }
  const Eigen::Index d = t.rows();
  if (fixed_sweeps >= 0) {
    Mat<S> log_r = Mat<S>::Constant(d, d, S(0.0));
    Mat<S> log_c = Mat<S>::Constant(d, d, S(0.0));
    for (int it = 0; it < fixed_sweeps; ++it)
      detail::bethe_sweep<S>(t, log_r, log_c, cfg.damping);
    out.iterations = fixed_sweeps;
    out.value = bethe_free_energy_from<S>(t, std::move(log_r), std::move(log_c), cfg.damping);
    return out;
  }
  const BetheMessages msg = bethe_converge(values_of(t), cfg);
  out.iterations = msg.iterations;
  out.value = bethe_free_energy_sweep<S>(t, msg.log_r, msg.log_c, cfg.damping);
  return out;
}

template <class S>
struct SampleTerms {
  S loglik = S(0.0);
  S kl_lsigma = S(0.0);
  S kl_p = S(0.0);
  S elbo = S(0.0);
  int sinkhorn_iterations = 0;
  double sinkhorn_tolerance = 0.0;
  int bethe_iterations = 0;
};

// One ELBO sample under frozen noise.  `shape` supplies dimensions and mode
// flags; all parameter values come from `pp`.
template <class S>
SampleTerms<S> elbo_sample(const ParamPack<S>& pp, const VariationalState& shape,
                           const DataSummary& data, const PriorSpec& prior,
                           const FrozenNoise& noise, const SinkhornConfig& sk_cfg,
                           const BetheConfig& be_cfg, const SampleOptions& opts) {
  using std::exp;
  using ad::exp;  // NOLINT
  const int d = shape.d;
  const Eigen::Index l_dim = shape.l_dim();
  if ((prior.kind == WeightPriorKind::gaussian_marginal) != shape.marginalized_weights)
    throw std::invalid_argument("elbo_sample: prior kind and state mode disagree");

  // (l, log sigma) block and its variational density.
  const Vec<S> z = family_transform<S>(pp.family, noise.u);
  const S log_q_z = family_log_density<S>(pp.family, noise.u);
  Vec<S> log_sigma_d(d);
  for (int j = 0; j < d; ++j)
    log_sigma_d(j) = shape.equal_variance ? z(l_dim) : z(l_dim + j);

  // Permutation block: logits, soft relaxation, hard assignment.
  const Mat<S> logits = shape.mean_field ? squash_logits<S>(pp.free_logits)
                                         : conditional_logits_net<S>(pp.net, z, d);
  Mat<S> a0(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a0(i, j) = (logits(i, j) + S(noise.gumbel(i, j))) / S(shape.tau);
  const SinkhornReplay<S> sk = sinkhorn_replay<S>(a0, sk_cfg, opts.sinkhorn_fixed_iters,
                                                  opts.sinkhorn_diff_cap);
  Mat<S> soft(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) soft(i, j) = exp(sk.log_soft(i, j));

  Mat<S> pmat(d, d);
  if (opts.soft_forward) {
    pmat = soft;
  } else {
    const Permutation hard = hungarian(values_of(soft));
    for (int i = 0; i < d; ++i) {
      const int col = hard.mapping[static_cast<std::size_t>(i)];
      for (int j = 0; j < d; ++j) {
        const double hv = j == col ? 1.0 : 0.0;
        if constexpr (std::is_same_v<S, double>) {
          pmat(i, j) = hv;
        } else {
          pmat(i, j) = ad::straight_through(soft(i, j), hv);
        }
      }
    }
  }

  SampleTerms<S> terms;
  terms.sinkhorn_iterations = sk.iterations;
  terms.sinkhorn_tolerance = sk.achieved_tolerance;

  // KL of the permutation block against the uniform prior.
  S dot = S(0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) dot += logits(i, j) * pmat(i, j);
  const BetheReplay<S> bp = bethe_log_permanent_replay<S>(logits, be_cfg, opts.bethe_fixed_sweeps);
  terms.bethe_iterations = bp.iterations;
  terms.kl_p = dot - bp.value + S(std::lgamma(static_cast<double>(d) + 1.0));

  // Log-likelihood.
  if (shape.marginalized_weights) {
    if (opts.soft_forward)
      throw std::invalid_argument(
          "elbo_sample: the marginalized-weights likelihood needs a hard permutation");
    S acc = S(0.0);
    for (Eigen::Index r = 0; r < data.n; ++r) {
      const Eigen::VectorXd xr = data.rows->row(r).transpose();
      acc += gaussian_marginal_log_likelihood<S>(xr, pmat, log_sigma_d, prior.nu);
    }
    terms.loglik = acc;
  } else {
    Mat<S> lower = Mat<S>::Constant(d, d, S(0.0));
    for (int i = 1; i < d; ++i)
      for (int j = 0; j < i; ++j) lower(i, j) = z(LowerTriWeights::pack_index(i, j));
    const Mat<S> w = pmat * lower * pmat.transpose();
    terms.loglik = log_likelihood_scatter<S>(data.scatter, data.n, w, log_sigma_d);
  }

  // KL of (l, log sigma) against the priors.
  S weight_lp = S(0.0);
  if (!shape.marginalized_weights) {
    Vec<S> l(l_dim);
    for (Eigen::Index i = 0; i < l_dim; ++i) l(i) = z(i);
    weight_lp = prior.kind == WeightPriorKind::horseshoe
                    ? horseshoe_log_prior<S>(l, prior.eta)
                    : laplace_log_prior<S>(l, prior.laplace_b);
  }
  Vec<S> z_sigma(shape.sigma_dim());
  for (Eigen::Index i = 0; i < z_sigma.size(); ++i) z_sigma(i) = z(l_dim + i);
  terms.kl_lsigma = log_q_z - weight_lp - log_sigma_prior<S>(z_sigma, prior.s0);

  terms.elbo = terms.loglik - terms.kl_lsigma - terms.kl_p;
  return terms;
}

struct ElboReport {
  double elbo = 0.0;
  double expected_log_lik = 0.0;
  double kl_l_sigma = 0.0;
  double kl_p = 0.0;
  double grad_norm = 0.0;  // zero when no gradient was computed
  int step = 0;
};

ElboReport elbo_estimate(const VariationalState& state, const Dataset& data,
                         const PriorConfig& priors, Rng& rng, int mc_samples,
                         const SinkhornConfig& sk_cfg = {}, const BetheConfig& be_cfg = {});

struct GradientResult {
  Eigen::VectorXd grad;  // flat, canonical parameter order
  ElboReport report;
};

GradientResult elbo_gradient(const VariationalState& state, const Dataset& data,
                             const PriorConfig& priors, Rng& rng, int mc_samples = 1,
                             const SinkhornConfig& sk_cfg = {}, const BetheConfig& be_cfg = {},
                             int sinkhorn_diff_cap = 200);

// --- Smooth-surrogate evaluation under frozen noise (finite differences) ----

// Pin the Sinkhorn/Bethe sweep counts the adaptive run chooses at the current
// parameters, making the surrogate a fixed smooth composition.
SampleOptions freeze_iterations(const VariationalState& state, const Dataset& data,
                                const PriorConfig& priors, const FrozenNoise& noise,
                                const SinkhornConfig& sk_cfg = {}, const BetheConfig& be_cfg = {});

double elbo_value_frozen(const VariationalState& state, const Dataset& data,
                         const PriorConfig& priors, const FrozenNoise& noise,
                         const SampleOptions& opts, const SinkhornConfig& sk_cfg = {},
                         const BetheConfig& be_cfg = {});

Eigen::VectorXd elbo_gradient_frozen(const VariationalState& state, const Dataset& data,
                                     const PriorConfig& priors, const FrozenNoise& noise,
                                     const SampleOptions& opts, const SinkhornConfig& sk_cfg = {},
                                     const BetheConfig& be_cfg = {});

// --- Training loop -----------------------------------------------------------

struct TrainConfig {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_steps = 20000;
  int mc_samples = 1;
  double grad_tol = 0.01;          // converged when the gradient norm dips below
  int plateau_window = 2000;       // steps per windowed-mean comparison
  double plateau_tol = 0.01;       // minimum windowed-mean ELBO improvement
  int divergence_window = 500;
  double divergence_margin = 1e4;  // halt when the window falls this far below the start
  int max_skipped_steps = 50;      // consecutive non-finite evaluations tolerated
  double tau = 0.2;
  SinkhornConfig sinkhorn{};
  BetheConfig bethe{};
  int sinkhorn_diff_cap = 200;
  int trace_every = 50;
  int sample_kl_draws = 16;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::string checkpoint_path;
  std::string trace_path;  // non-empty: trace rows are also streamed to CSV
  std::uint64_t seed = 0;
};

struct TraceRow {
  int step = 0;
  double elbo = 0.0;
  double expected_log_lik = 0.0;
  double kl_l_sigma = 0.0;
  double kl_p = 0.0;
  double grad_norm = 0.0;
  double sample_kl = 0.0;
  double wall_time_sec = 0.0;
};

struct TrainResult {
  VariationalState state;
  std::vector<TraceRow> trace;
  std::string stop_reason;  // max_steps | grad_tol | plateau | diverged | non_finite
  int steps = 0;
  double final_elbo = 0.0;         // last step's stochastic estimate
  double final_window_mean = 0.0;  // mean ELBO over the trailing window
};

TrainResult train(const TrainConfig& config, const Dataset& data, const PriorConfig& priors,
                  VariationalState initial);

// --- Posterior draws and diagnostics ----------------------------------------

// A draw of explicit SEM parameters from the fitted posterior.  In the
// marginalized-weights mode the weights come from their exact conditional
// Gaussian posterior given (P, Sigma) — per-node ridge regression in the
// canonical coordinates.
struct PosteriorDraw {
  SemParams params;
  Eigen::MatrixXd w;
};

LowerTriWeights conditional_weights_draw(const Eigen::MatrixXd& x, const Permutation& p,
                                         const NoiseScales& noise, double nu, Rng& rng);

PosteriorDraw posterior_draw(const VariationalState& state, const Dataset& data,
                             const PriorConfig& priors, const SinkhornConfig& sk_cfg, Rng& rng);

// KL( N(0, empirical covariance) || N(0, inverse mean posterior precision) ).
struct SampleKl {
  double kl = 0.0;
  double ridge = 0.0;  // diagonal added to make the empirical covariance PD
};

SampleKl sample_kl_diagnostic(const Dataset& data, const VariationalState& state, int mc_samples,
                              Rng& rng, const PriorConfig& priors,
                              const SinkhornConfig& sk_cfg = {});

// Per-parameter-block empirical variance of the gradient estimator.
struct BlockVariance {
  std::string block;
  Eigen::Index size = 0;
  double variance = 0.0;  // mean over coordinates of the per-coordinate variance
};

std::vector<BlockVariance> gradient_variance_diagnostic(const VariationalState& state,
                                                        const Dataset& data,
                                                        const PriorConfig& priors, int repeats,
                                                        Rng& rng, int mc_samples = 1,
                                                        const SinkhornConfig& sk_cfg = {},
                                                        const BetheConfig& be_cfg = {});

}  // namespace bcd
