#pragma once

// Priors over the SEM parameterization (l, log sigma, P) and the closed-form
// marginal likelihood of a single observation when the weights carry an
// isotropic Gaussian prior.

#include <cmath>
#include <numbers>

#include "bcd/autodiff.hpp"
#include "bcd/types.hpp"

namespace bcd {

enum class WeightPriorKind { horseshoe, laplace, gaussian_marginal };

struct PriorConfig {
  WeightPriorKind kind = WeightPriorKind::horseshoe;
  double rho = 2.0;           // horseshoe global scale rule: eta = rho / (d sqrt(n))
  double eta_override = 0.0;  // > 0 pins eta directly
  double laplace_b = 0.0;     // <= 0 defaults to the eta value
  double s0 = 10.0;           // prior standard deviation of log sigma
  double nu = 1.0;            // gaussian_marginal: weight prior sd
};

inline double eta_rule_of_thumb(int d, Eigen::Index n, double rho = 2.0) {
  return rho / (static_cast<double>(d) * std::sqrt(static_cast<double>(n)));
}

inline double weight_prior_scale(const PriorConfig& cfg, int d, Eigen::Index n) {
  const double eta = cfg.eta_override > 0.0 ? cfg.eta_override : eta_rule_of_thumb(d, n, cfg.rho);
  if (cfg.kind == WeightPriorKind::laplace && cfg.laplace_b > 0.0) return cfg.laplace_b;
  return eta;
}

// --- Horseshoe marginal ---------------------------------------------------
// p(beta; eta) = ∫ N(beta; 0, lambda² eta²) C⁺(lambda; 0, 1) dlambda has no
// closed form; it is evaluated by quadrature on a dense log-spaced grid of
// r = |beta|/eta at startup and interpolated with a C¹ cubic Hermite spline.
// Beyond the grid the Cauchy-like tail log g(r) = log sqrt(2/pi³) − 2 log r
// takes over.

struct HorseshoeEval {
  double log_density = 0.0;
  double dlog_density_dbeta = 0.0;
};

// Single-coordinate evaluation of log p(beta; eta) and its beta-derivative.
HorseshoeEval horseshoe_eval(double beta, double eta);

// Brute-force quadrature of the same marginal through an independent
// parameterization; slow, used to validate the table.
double horseshoe_log_density_quadrature(double beta, double eta);

template <class S>
S horseshoe_log_prior(const Vec<S>& l, double eta) {
  S total = S(0.0);
  for (Eigen::Index i = 0; i < l.size(); ++i) {
    const HorseshoeEval e = horseshoe_eval(ad::value_of(l(i)), eta);
    if constexpr (std::is_same_v<S, double>) {
      total += e.log_density;
    } else {
      total += ad::custom_unary(l(i), e.log_density, e.dlog_density_dbeta);
    }
  }
  return total;
}

// --- Laplace prior on the packed weights -----------------------------------
template <class S>
S laplace_log_prior(const Vec<S>& l, double b) {
  using std::abs;
  using ad::abs;  // NOLINT
  S total = S(l.size() * -std::log(2.0 * b));
  for (Eigen::Index i = 0; i < l.size(); ++i) total -= abs(l(i)) / S(b);
  return total;
}

// --- Gaussian prior on log sigma -------------------------------------------
template <class S>
S log_sigma_prior(const Vec<S>& log_sigma, double s0) {
  const double c = -0.5 * std::log(2.0 * std::numbers::pi) - std::log(s0);
  S total = S(static_cast<double>(log_sigma.size()) * c);
  for (Eigen::Index i = 0; i < log_sigma.size(); ++i)
    total -= log_sigma(i) * log_sigma(i) / S(2.0 * s0 * s0);
  return total;
}

// --- Uniform prior over permutations ----------------------------------------
inline double log_permutation_prior(int d) { return -std::lgamma(static_cast<double>(d) + 1.0); }

// --- Closed-form marginal likelihood under N(0, nu²) weights ----------------
// For a single observation x of the model x = P L Pᵀ x + eps with
// l ~ N(0, nu² I) integrated out:
//   log p(x | P, Sigma, nu) = −(d/2) log 2pi − Σ log sigma_j − (d−1) log nu
//       + ½ xᵀ (S − Sigma⁻¹) x − ½ log det D' − ½ log det (Sigma'⁻¹ + D'⁻¹ nu⁻²)
// with D = diag(P G Pᵀ x∘x) (G strictly-lower all-ones),
// S_jj = nu² D_jj / (sigma_j² (sigma_j² + nu² D_jj)), and the primed
// matrices dropping the single zero diagonal entry of D (the root node).
// Templated so relaxed permutation matrices can flow gradients.
template <class S>
S gaussian_marginal_log_likelihood(const Eigen::VectorXd& x, const Mat<S>& pmat,
                                   const Vec<S>& log_sigma, double nu) {
  const Eigen::Index d = x.size();
  if (d < 1 || pmat.rows() != d || log_sigma.size() != d)
    throw std::invalid_argument("gaussian_marginal_log_likelihood: dimension mismatch");
  using std::exp;
  using std::log;
  using ad::exp;  // NOLINT
  using ad::log;  // NOLINT

  // D = diag(P G Pᵀ x²) computed as nested matrix-vector products.
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 1; i < d; ++i)
    for (Eigen::Index j = 0; j < i; ++j) g(i, j) = 1.0;
  const Mat<S> gm = lift_matrix<S>(g);
  Vec<S> x2(d);
  for (Eigen::Index i = 0; i < d; ++i) x2(i) = S(x(i) * x(i));
  const Vec<S> dvec = pmat * (gm * (pmat.transpose() * x2));

  // Exactly one diagonal entry of D must vanish (the root in the induced
  // topological order); more than one indicates a degenerate observation.
  Eigen::Index zero_idx = -1;
  for (Eigen::Index j = 0; j < d; ++j) {
    if (ad::value_of(dvec(j)) == 0.0) {
      if (zero_idx >= 0)
        throw std::invalid_argument("gaussian_marginal_log_likelihood: degenerate observation");
      zero_idx = j;
    }
  }
  if (zero_idx < 0)
    throw std::invalid_argument("gaussian_marginal_log_likelihood: no root entry in D");

  const double log2pi = std::log(2.0 * std::numbers::pi);
  S total = S(-0.5 * static_cast<double>(d) * log2pi);
  total -= S(static_cast<double>(d - 1)) * S(std::log(nu));
  S quad = S(0.0);
  for (Eigen::Index j = 0; j < d; ++j) {
    const S ls = log_sigma(j);
    total -= ls;
    const S sig2 = exp(S(2.0) * ls);
    const S dj = dvec(j);
    const S s_jj = S(nu * nu) * dj / (sig2 * (sig2 + S(nu * nu) * dj));
    quad += S(x(j) * x(j)) * (s_jj - S(1.0) / sig2);
    if (j != zero_idx) {
      total -= S(0.5) * log(dj);
      total -= S(0.5) * log(S(1.0) / sig2 + S(1.0) / (dj * S(nu * nu)));
    }
  }
  total += S(0.5) * quad;
  return total;
}

inline double marginal_log_likelihood_gaussian_prior(const Eigen::VectorXd& x,
                                                     const Permutation& p,
                                                     const NoiseScales& noise, double nu) {
  const int d = static_cast<int>(x.size());
  const Mat<double> pm = p.matrix();
  const Vec<double> ls = noise.log_sigma_vector(d);
  return gaussian_marginal_log_likelihood<double>(x, pm, ls, nu);
}

}  // namespace bcd
