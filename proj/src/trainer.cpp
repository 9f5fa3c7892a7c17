#include "bcd/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace bcd {

namespace {

const char* non_finite_term(double loglik, double kl_lsigma, double kl_p) {
  if (!std::isfinite(loglik)) return "expected_log_lik";
  if (!std::isfinite(kl_lsigma)) return "kl_l_sigma";
  if (!std::isfinite(kl_p)) return "kl_p";
  return nullptr;
}

struct StepEval {
  Eigen::VectorXd grad;
  ElboReport report;
};

// One gradient step's forward+backward pass: mc_samples ELBO draws averaged
// on a shared tape.
StepEval gradient_step(const VariationalState& state, const DataSummary& data,
                       const PriorSpec& prior, Rng& rng, int mc_samples,
                       const SinkhornConfig& sk_cfg, const BetheConfig& be_cfg,
                       const SampleOptions& opts) {
  if (mc_samples < 1) throw std::invalid_argument("gradient_step: mc_samples must be >= 1");
  static thread_local ad::Tape tape;
  tape.clear();
  ad::TapeScope scope(tape);
  const ParamPack<ad::Var> pp = lift_params<ad::Var>(state);
  const auto param_count = static_cast<Eigen::Index>(flatten_state(state).size());

  ad::Var elbo_acc = 0.0;
  StepEval out;
  for (int s = 0; s < mc_samples; ++s) {
    const FrozenNoise noise = draw_elbo_noise(state, rng);
    const SampleTerms<ad::Var> terms =
        elbo_sample<ad::Var>(pp, state, data, prior, noise, sk_cfg, be_cfg, opts);
    elbo_acc += terms.elbo;
    out.report.expected_log_lik += terms.loglik.value();
    out.report.kl_l_sigma += terms.kl_lsigma.value();
    out.report.kl_p += terms.kl_p.value();
  }
  const double inv = 1.0 / mc_samples;
  elbo_acc *= inv;
  out.report.expected_log_lik *= inv;
  out.report.kl_l_sigma *= inv;
  out.report.kl_p *= inv;
  out.report.elbo = elbo_acc.value();

  if (const char* term = non_finite_term(out.report.expected_log_lik, out.report.kl_l_sigma,
                                         out.report.kl_p))
    throw std::runtime_error(std::string("non-finite ELBO term: ") + term);

  const std::vector<double> adj = tape.gradient(elbo_acc.index());
  out.grad.resize(param_count);
  for (Eigen::Index k = 0; k < param_count; ++k) {
    out.grad(k) = adj[static_cast<std::size_t>(k)];
    if (!std::isfinite(out.grad(k)))
      throw std::runtime_error("non-finite gradient at flat parameter index " + std::to_string(k));
  }
  out.report.grad_norm = out.grad.norm();
  return out;
}

}  // namespace

ElboReport elbo_estimate(const VariationalState& state, const Dataset& data,
                         const PriorConfig& priors, Rng& rng, int mc_samples,
                         const SinkhornConfig& sk_cfg, const BetheConfig& be_cfg) {
  if (mc_samples < 1) throw std::invalid_argument("elbo_estimate: mc_samples must be >= 1");
  if (data.dim() != state.d) throw std::invalid_argument("elbo_estimate: dimension mismatch");
  const DataSummary summary = summarize(data);
  const PriorSpec prior = resolve_prior(priors, state.d, data.n());
  const ParamPack<double> pp = lift_params<double>(state);
  ElboReport report;
  for (int s = 0; s < mc_samples; ++s) {
    const FrozenNoise noise = draw_elbo_noise(state, rng);
    const SampleTerms<double> terms =
        elbo_sample<double>(pp, state, summary, prior, noise, sk_cfg, be_cfg, SampleOptions{});
    report.elbo += terms.elbo;
    report.expected_log_lik += terms.loglik;
    report.kl_l_sigma += terms.kl_lsigma;
    report.kl_p += terms.kl_p;
  }
  const double inv = 1.0 / mc_samples;
  report.elbo *= inv;
  report.expected_log_lik *= inv;
  report.kl_l_sigma *= inv;
  report.kl_p *= inv;
  if (const char* term =
          non_finite_term(report.expected_log_lik, report.kl_l_sigma, report.kl_p))
    throw std::runtime_error(std::string("non-finite ELBO term: ") + term);
  return report;
}

GradientResult elbo_gradient(const VariationalState& state, const Dataset& data,
                             const PriorConfig& priors, Rng& rng, int mc_samples,
                             const SinkhornConfig& sk_cfg, const BetheConfig& be_cfg,
                             int sinkhorn_diff_cap) {
  if (data.dim() != state.d) throw std::invalid_argument("elbo_gradient: dimension mismatch");
  const DataSummary summary = summarize(data);
  const PriorSpec prior = resolve_prior(priors, state.d, data.n());
  SampleOptions opts;
  opts.sinkhorn_diff_cap = sinkhorn_diff_cap;
  StepEval eval = gradient_step(state, summary, prior, rng, mc_samples, sk_cfg, be_cfg, opts);
  return GradientResult{std::move(eval.grad), eval.report};
}

SampleOptions freeze_iterations(const VariationalState& state, const Dataset& data,
                                const PriorConfig& priors, const FrozenNoise& noise,
                                const SinkhornConfig& sk_cfg, const BetheConfig& be_cfg) {
  const DataSummary summary = summarize(data);
  const PriorSpec prior = resolve_prior(priors, state.d, data.n());
  SampleOptions probe;
  probe.soft_forward = true;
  const ParamPack<double> pp = lift_params<double>(state);
  const SampleTerms<double> terms =
      elbo_sample<double>(pp, state, summary, prior, noise, sk_cfg, be_cfg, probe);
  SampleOptions frozen;
  frozen.soft_forward = true;
  frozen.sinkhorn_fixed_iters = terms.sinkhorn_iterations;
  frozen.bethe_fixed_sweeps = terms.bethe_iterations;
  frozen.sinkhorn_diff_cap = std::numeric_limits<int>::max();  // differentiate every sweep
  return frozen;
}

double elbo_value_frozen(const VariationalState& state, const Dataset& data,
                         const PriorConfig& priors, const FrozenNoise& noise,
                         const SampleOptions& opts, const SinkhornConfig& sk_cfg,
                         const BetheConfig& be_cfg) {
  const DataSummary summary = summarize(data);
  const PriorSpec prior = resolve_prior(priors, state.d, data.n());
  const ParamPack<double> pp = lift_params<double>(state);
  return elbo_sample<double>(pp, state, summary, prior, noise, sk_cfg, be_cfg, opts).elbo;
}

Eigen::VectorXd elbo_gradient_frozen(const VariationalState& state, const Dataset& data,
                                     const PriorConfig& priors, const FrozenNoise& noise,
                                     const SampleOptions& opts, const SinkhornConfig& sk_cfg,
                                     const BetheConfig& be_cfg) {
  const DataSummary summary = summarize(data);
  const PriorSpec prior = resolve_prior(priors, state.d, data.n());
  static thread_local ad::Tape tape;
  tape.clear();
  ad::TapeScope scope(tape);
  const ParamPack<ad::Var> pp = lift_params<ad::Var>(state);
  const SampleTerms<ad::Var> terms =
      elbo_sample<ad::Var>(pp, state, summary, prior, noise, sk_cfg, be_cfg, opts);
  const auto param_count = static_cast<Eigen::Index>(flatten_state(state).size());
  const std::vector<double> adj = tape.gradient(terms.elbo.index());
  Eigen::VectorXd grad(param_count);
  for (Eigen::Index k = 0; k < param_count; ++k) grad(k) = adj[static_cast<std::size_t>(k)];
  return grad;
}

TrainResult train(const TrainConfig& config, const Dataset& data, const PriorConfig& priors,
                  VariationalState initial) {
  if (config.step_size <= 0.0 || config.max_steps < 1 || config.mc_samples < 1 ||
      config.plateau_window < 2 || config.divergence_window < 1 || config.trace_every < 1)
    throw std::invalid_argument("train: invalid configuration");
  if (data.dim() != initial.d) throw std::invalid_argument("train: dimension mismatch");

  TrainResult result;
  result.state = std::move(initial);
  const DataSummary summary = summarize(data);
  const PriorSpec prior = resolve_prior(priors, result.state.d, data.n());
  Rng rng(config.seed);

  std::vector<double> flat = flatten_state(result.state);
  const auto p_count = static_cast<Eigen::Index>(flat.size());
  Eigen::VectorXd moment1 = Eigen::VectorXd::Zero(p_count);
  Eigen::VectorXd moment2 = Eigen::VectorXd::Zero(p_count);

  SampleOptions opts;
  opts.sinkhorn_diff_cap = config.sinkhorn_diff_cap;

  std::ofstream trace_os;
  if (!config.trace_path.empty()) {
    trace_os.open(config.trace_path, std::ios::trunc);
    if (!trace_os) throw std::runtime_error("train: cannot open trace file " + config.trace_path);
    trace_os << "step,elbo,expected_log_lik,kl_l_sigma,kl_p,grad_norm,sample_kl,wall_time_sec\n"
             << std::setprecision(17);
  }

  // Rolling ELBO window shared by the plateau and divergence rules.
  std::vector<double> window(static_cast<std::size_t>(
      std::max(config.plateau_window, config.divergence_window)));
  std::int64_t seen = 0;
  const auto window_mean = [&](int span) {
    const auto k = std::min<std::int64_t>(seen, span);
    double acc = 0.0;
    for (std::int64_t i = seen - k; i < seen; ++i)
      acc += window[static_cast<std::size_t>(i % static_cast<std::int64_t>(window.size()))];
    return k > 0 ? acc / static_cast<double>(k) : std::numeric_limits<double>::quiet_NaN();
  };

  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  const auto emit_trace = [&](const ElboReport& report, int step) {
    TraceRow row;
    row.step = step;
    row.elbo = report.elbo;
    row.expected_log_lik = report.expected_log_lik;
    row.kl_l_sigma = report.kl_l_sigma;
    row.kl_p = report.kl_p;
    row.grad_norm = report.grad_norm;
    // diagnostics draw from their own stream so the training trajectory is
    // independent of the trace cadence
    Rng diag_rng(substream(config.seed, 0xD1A60000ull + static_cast<std::uint64_t>(step)));
    row.sample_kl =
        sample_kl_diagnostic(data, result.state, config.sample_kl_draws, diag_rng, priors,
                             config.sinkhorn)
            .kl;
    row.wall_time_sec = elapsed();
    result.trace.push_back(row);
    if (trace_os)
      trace_os << row.step << ',' << row.elbo << ',' << row.expected_log_lik << ','
               << row.kl_l_sigma << ',' << row.kl_p << ',' << row.grad_norm << ','
               << row.sample_kl << ',' << row.wall_time_sec << '\n';
  };

  double initial_elbo = std::numeric_limits<double>::quiet_NaN();
  double prev_plateau_mean = -std::numeric_limits<double>::infinity();
  int consecutive_skips = 0;
  int adam_t = 0;

  for (int step = 1; step <= config.max_steps; ++step) {
    StepEval eval;
    try {
      eval = gradient_step(result.state, summary, prior, rng, config.mc_samples, config.sinkhorn,
                           config.bethe, opts);
    } catch (const std::runtime_error& err) {
      if (++consecutive_skips > config.max_skipped_steps) {
        result.stop_reason = std::string("non_finite: ") + err.what();
        break;
      }
      continue;  // skip the update, draw fresh noise next step
    }
    consecutive_skips = 0;
    result.steps = step;
    result.final_elbo = eval.report.elbo;
    if (std::isnan(initial_elbo)) initial_elbo = eval.report.elbo;

    // Adam ascent with bias correction.
    ++adam_t;
    const double bc1 = 1.0 - std::pow(config.beta1, adam_t);
    const double bc2 = 1.0 - std::pow(config.beta2, adam_t);
    for (Eigen::Index k = 0; k < p_count; ++k) {
      const double g = eval.grad(k);
      moment1(k) = config.beta1 * moment1(k) + (1.0 - config.beta1) * g;
      moment2(k) = config.beta2 * moment2(k) + (1.0 - config.beta2) * g * g;
      flat[static_cast<std::size_t>(k)] +=
          config.step_size * (moment1(k) / bc1) / (std::sqrt(moment2(k) / bc2) + config.adam_eps);
    }
    unflatten_state(result.state, flat);

    window[static_cast<std::size_t>(seen % static_cast<std::int64_t>(window.size()))] =
        eval.report.elbo;
    ++seen;

    if (step == 1 || step % config.trace_every == 0) {
      eval.report.step = step;
      emit_trace(eval.report, step);
    }
    if (config.checkpoint_every > 0 && !config.checkpoint_path.empty() &&
        step % config.checkpoint_every == 0)
      save_checkpoint(config.checkpoint_path, result.state);

    if (eval.report.grad_norm < config.grad_tol) {
      result.stop_reason = "grad_tol";
      break;
    }
    if (seen >= config.divergence_window) {
      const double recent = window_mean(config.divergence_window);
      if (recent < initial_elbo - config.divergence_margin) {
        result.stop_reason = "diverged";
        break;
      }
    }
    if (step % config.plateau_window == 0) {
      const double mean = window_mean(config.plateau_window);
      if (mean - prev_plateau_mean <= config.plateau_tol) {
        result.stop_reason = "plateau";
        break;
      }
      prev_plateau_mean = mean;
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "max_steps";
  result.final_window_mean = window_mean(config.plateau_window);
  if (!config.checkpoint_path.empty()) save_checkpoint(config.checkpoint_path, result.state);
  return result;
}

LowerTriWeights conditional_weights_draw(const Eigen::MatrixXd& x, const Permutation& p,
                                         const NoiseScales& noise, double nu, Rng& rng) {
  const int d = p.size();
  if (x.cols() != d) throw std::invalid_argument("conditional_weights_draw: dimension mismatch");
  if (nu <= 0.0) throw std::invalid_argument("conditional_weights_draw: nu must be positive");
  const Eigen::MatrixXd y = x * p.matrix();  // canonical coordinates, row-wise y = Pᵀx
  const Eigen::VectorXd sigma = noise.sigma_vector(d);
  const Permutation inv = p.inverse();
  Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(d, d);
  for (int a = 0; a < d - 1; ++a) {
    const int np = d - 1 - a;  // canonical node a regresses on nodes a+1..d-1
    const double s2 = ad::square(sigma(inv.mapping[static_cast<std::size_t>(a)]));
    const Eigen::MatrixXd z = y.rightCols(np);
    const Eigen::VectorXd t = y.col(a);
    Eigen::MatrixXd lambda = z.transpose() * z / s2;
    lambda.diagonal().array() += 1.0 / (nu * nu);
    const Eigen::LLT<Eigen::MatrixXd> llt(lambda);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("conditional_weights_draw: posterior precision not PD");
    const Eigen::VectorXd mean = llt.solve(z.transpose() * t / s2);
    Eigen::VectorXd xi(np);
    for (int i = 0; i < np; ++i) xi(i) = draw_normal(rng);
    // Λ = LLᵀ, so mean + L⁻ᵀξ has covariance L⁻ᵀL⁻¹ = Λ⁻¹.
    const Eigen::VectorXd draw = mean + llt.matrixU().solve(xi);
    for (int i = 0; i < np; ++i) lower(a + 1 + i, a) = draw(i);
  }
  return LowerTriWeights::from_matrix(lower);
}

PosteriorDraw posterior_draw(const VariationalState& state, const Dataset& data,
                             const PriorConfig& priors, const SinkhornConfig& sk_cfg, Rng& rng) {
  const JointDraw jd = sample_joint(state, sk_cfg, rng);
  PosteriorDraw out;
  out.params.p = jd.perm.hard;
  out.params.noise = jd.noise;
  if (state.marginalized_weights) {
    const PriorSpec prior = resolve_prior(priors, state.d, data.n());
    out.params.weights =
        conditional_weights_draw(data.x, out.params.p, out.params.noise, prior.nu, rng);
  } else {
    out.params.weights = jd.weights;
  }
  out.w = compose_adjacency(out.params.p, out.params.weights);
  return out;
}

namespace {

double log_det_spd(const Eigen::MatrixXd& m) {
  const Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw std::runtime_error("log_det_spd: matrix not PD");
  const Eigen::MatrixXd l = llt.matrixL();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) acc += std::log(l(i, i));
  return 2.0 * acc;
}

}  // namespace

SampleKl sample_kl_diagnostic(const Dataset& data, const VariationalState& state, int mc_samples,
                              Rng& rng, const PriorConfig& priors,
                              const SinkhornConfig& sk_cfg) {
  if (mc_samples < 1) throw std::invalid_argument("sample_kl_diagnostic: mc_samples must be >= 1");
  const int d = data.dim();
  SampleKl out;
  Eigen::MatrixXd cov = data.scatter() / static_cast<double>(data.n());
  // Ridge the empirical covariance until it is comfortably PD.
  double scale = cov.diagonal().maxCoeff();
  if (!(scale > 0.0)) scale = 1.0;
  double eps = 0.0;
  while (true) {
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 1e-12 * scale)
      break;
    eps = eps == 0.0 ? 1e-10 * scale : eps * 10.0;
    cov.diagonal().array() += eps;
    out.ridge += eps;
    if (eps > scale) throw std::runtime_error("sample_kl_diagnostic: covariance unregularizable");
  }

  Eigen::MatrixXd mean_precision = Eigen::MatrixXd::Zero(d, d);
  for (int s = 0; s < mc_samples; ++s) {
    const PosteriorDraw draw = posterior_draw(state, data, priors, sk_cfg, rng);
    mean_precision += precision_matrix(draw.w, draw.params.noise);
  }
  mean_precision /= static_cast<double>(mc_samples);

  const double trace_term = (mean_precision * cov).trace();
  out.kl = 0.5 * (trace_term - d - log_det_spd(mean_precision) - log_det_spd(cov));
  return out;
}

std::vector<BlockVariance> gradient_variance_diagnostic(const VariationalState& state,
                                                        const Dataset& data,
                                                        const PriorConfig& priors, int repeats,
                                                        Rng& rng, int mc_samples,
                                                        const SinkhornConfig& sk_cfg,
                                                        const BetheConfig& be_cfg) {
  if (repeats < 2) throw std::invalid_argument("gradient_variance_diagnostic: repeats must be >= 2");
  std::vector<Eigen::VectorXd> grads;
  grads.reserve(static_cast<std::size_t>(repeats));
  for (int r = 0; r < repeats; ++r)
    grads.push_back(
        elbo_gradient(state, data, priors, rng, mc_samples, sk_cfg, be_cfg).grad);

  struct Block {
    const char* name;
    Eigen::Index size;
  };
  const Eigen::Index z = state.z_dim();
  const Block blocks[] = {
      {"mean", z},
      {"log_scale", z},
      {"chol_lower", state.family.chol_lower.size()},
      {"net_w1", state.net.w1.size()},
      {"net_b1", state.net.b1.size()},
      {"net_w2", state.net.w2.size()},
      {"net_b2", state.net.b2.size()},
      {"free_logits", state.free_logits.size()},
  };
  std::vector<BlockVariance> out;
  Eigen::Index offset = 0;
  for (const Block& b : blocks) {
    if (b.size == 0) continue;
    double acc = 0.0;
    for (Eigen::Index k = offset; k < offset + b.size; ++k) {
      double mean = 0.0;
      for (const auto& g : grads) mean += g(k);
      mean /= repeats;
      double var = 0.0;
      for (const auto& g : grads) var += ad::square(g(k) - mean);
      acc += var / (repeats - 1);
    }
    out.push_back(BlockVariance{b.name, b.size, acc / static_cast<double>(b.size)});
    offset += b.size;
  }
  return out;
}

}  // namespace bcd
