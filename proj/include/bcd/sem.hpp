#pragma once

// Linear-Gaussian structural equation model x = Wᵀ x + ε with ε ~ N(0, Σ),
// Σ = diag(σ²).  The implied precision of x is Θ = (I − W) Σ⁻¹ (I − W)ᵀ,
// and because W is a permuted strictly-lower matrix, det(I − W) = 1, so
// log det Θ = −2 Σⱼ log σⱼ.

#include <cmath>
#include <numbers>

#include "bcd/autodiff.hpp"
#include "bcd/linalg.hpp"
#include "bcd/rng.hpp"
#include "bcd/types.hpp"

namespace bcd {

// W = P L Pᵀ on raw matrices; templated so the trainer can differentiate
// through relaxed permutations.
template <class S>
Mat<S> compose_adjacency_mats(const Mat<S>& p, const Mat<S>& lower) {
  return p * lower * p.transpose();
}

inline Eigen::MatrixXd compose_adjacency(const Permutation& p, const LowerTriWeights& w) {
  if (p.size() != w.d) throw std::invalid_argument("compose_adjacency: dimension mismatch");
  const Eigen::MatrixXd pm = p.matrix();
  return pm * w.to_matrix() * pm.transpose();
}

inline Eigen::MatrixXd adjacency(const SemParams& params) {
  return compose_adjacency(params.p, params.weights);
}

// Θ = (I − W) Σ⁻¹ (I − W)ᵀ
inline Eigen::MatrixXd precision_matrix(const Eigen::MatrixXd& w, const NoiseScales& noise) {
  const int d = static_cast<int>(w.rows());
  const Eigen::VectorXd sigma = noise.sigma_vector(d);
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(d, d) - w;
  return a * sigma.array().pow(-2.0).matrix().asDiagonal() * a.transpose();
}

// Core of the Gaussian log-likelihood in terms of the scatter matrix
// S = Σᵢ xᵢxᵢᵀ:  (n/2)(log det Θ − d log 2π) − ½ tr(Θ S).
// log det Θ is evaluated through log|det(I − W)| so that gradients of
// relaxed adjacencies (where det(I − W) ≠ 1) remain correct.
template <class S>
S log_likelihood_scatter(const Eigen::MatrixXd& scatter, Eigen::Index n, const Mat<S>& w,
                         const Vec<S>& log_sigma) {
  const Eigen::Index d = w.rows();
  using std::exp;
  using ad::exp;  // NOLINT
  Mat<S> a = Mat<S>::Identity(d, d) - w;  // I − W
  S log_det_theta = S(2.0) * log_abs_det<S>(a);
  for (Eigen::Index j = 0; j < d; ++j) log_det_theta -= S(2.0) * log_sigma(j);

  // tr(Θ S) = Σⱼ σⱼ⁻² · aⱼᵀ S aⱼ with aⱼ the j-th column of (I − W).
  const Mat<S> sc = lift_matrix<S>(scatter);
  S quad = S(0.0);
  for (Eigen::Index j = 0; j < d; ++j) {
    S col_form = S(0.0);
    for (Eigen::Index r = 0; r < d; ++r) {
      S acc = S(0.0);
      for (Eigen::Index c = 0; c < d; ++c) acc += sc(r, c) * a(c, j);
      col_form += a(r, j) * acc;
    }
    quad += col_form * exp(S(-2.0) * log_sigma(j));
  }
  const double log2pi = std::log(2.0 * std::numbers::pi);
  return S(0.5 * static_cast<double>(n)) * (log_det_theta - S(static_cast<double>(d) * log2pi)) -
         S(0.5) * quad;
}

inline double log_likelihood(const Dataset& data, const Eigen::MatrixXd& w,
                             const NoiseScales& noise) {
  if (data.dim() != w.rows()) throw std::invalid_argument("log_likelihood: dimension mismatch");
  const Eigen::VectorXd ls = noise.log_sigma_vector(data.dim());
  return log_likelihood_scatter<double>(data.scatter(), data.n(), w, ls);
}

namespace detail {
inline double draw_noise(Rng& rng, double sigma, NoiseKind kind) {
  if (kind == NoiseKind::gaussian) return draw_normal(rng, 0.0, sigma);
  // Gumbel moment-matched to mean 0 and variance sigma²:
  // scale b = sigma·√6/π, location −b·γ (Euler–Mascheroni constant).
  const double b = sigma * std::sqrt(6.0) / std::numbers::pi;
  return -b * std::numbers::egamma + b * draw_gumbel(rng);
}
}  // namespace detail

// Ancestral sampling.  With y = Pᵀx the model reads y = Lᵀy + Pᵀε, and Lᵀ is
// strictly upper-triangular, so y is filled by back-substitution from the
// last coordinate.  `intervened` (canonical coordinate) pins that entry.
inline Eigen::VectorXd sample_one(const SemParams& params, Rng& rng, NoiseKind kind,
                                  int intervened_canonical = -1, double intervened_value = 0.0) {
  const int d = params.dim();
  const Eigen::MatrixXd lm = params.weights.to_matrix();
  const Eigen::VectorXd sigma = params.noise.sigma_vector(d);
  const Permutation inv = params.p.inverse();
  Eigen::VectorXd y(d);
  for (int j = d - 1; j >= 0; --j) {
    if (j == intervened_canonical) {
      y(j) = intervened_value;
      continue;
    }
    // e_j = (Pᵀ ε)_j = ε_{inv.mapping[j]}
    double v = detail::draw_noise(rng, sigma(inv.mapping[static_cast<std::size_t>(j)]), kind);
    for (int k = j + 1; k < d; ++k) v += lm(k, j) * y(k);
    y(j) = v;
  }
  Eigen::VectorXd x(d);
  for (int i = 0; i < d; ++i) x(i) = y(params.p.mapping[static_cast<std::size_t>(i)]);
  return x;
}

inline Dataset sample_observational(const SemParams& params, Eigen::Index n, NoiseKind kind,
                                    Rng& rng) {
  Dataset out;
  out.x.resize(n, params.dim());
  for (Eigen::Index i = 0; i < n; ++i) out.x.row(i) = sample_one(params, rng, kind).transpose();
  out.truth = params;
  out.source = "synthetic";
  return out;
}

// Samples under do(x_node = value): the node's structural equation is
// replaced by the constant, severing the influence of its parents.
inline Eigen::MatrixXd sample_interventional(const SemParams& params, int node, double value,
                                             Eigen::Index n, NoiseKind kind, Rng& rng) {
  if (node < 0 || node >= params.dim())
    throw std::invalid_argument("sample_interventional: node out of range");
  const int canonical = params.p.mapping[static_cast<std::size_t>(node)];
  Eigen::MatrixXd out(n, params.dim());
  for (Eigen::Index i = 0; i < n; ++i)
    out.row(i) = sample_one(params, rng, kind, canonical, value).transpose();
  return out;
}

}  // namespace bcd
