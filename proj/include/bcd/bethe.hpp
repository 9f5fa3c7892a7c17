#pragma once

// Bethe approximation of the matrix permanent of exp(t), via damped belief
// propagation on the bipartite exactly-one factor graph, evaluated in log
// space.  The Bethe free energy at the pseudo-marginals gives
//   log perm(exp t) − (d/2) log 2  <=  log perm_B(exp t)  <=  log perm(exp t),
// so the Boltzmann density over permutations built from it over-estimates
// the true density (keeping the evidence bound a lower bound).

#include <cmath>

#include "bcd/autodiff.hpp"
#include "bcd/linalg.hpp"
#include "bcd/types.hpp"

namespace bcd {

struct BetheConfig {
  int max_iters = 200;
  double damping = 0.5;  // weight of the previous message in each update
  double tol = 1e-10;    // belief residual for early exit
};

struct BetheMessages {
  Eigen::MatrixXd log_r;  // row-constraint -> entry, log ratio messages
  Eigen::MatrixXd log_c;  // column-constraint -> entry
  int iterations = 0;
  double residual = 0.0;  // max abs change of the beliefs over the last sweep
};

namespace detail {
// One damped sweep: update all row messages from the current column
// messages, then all column messages from the new row messages.  Templated
// so the final sweep can run under reverse-mode differentiation with the
// converged messages held constant.
template <class S>
void bethe_sweep(const Mat<S>& t, Mat<S>& log_r, Mat<S>& log_c, double damping) {
  const Eigen::Index d = t.rows();
  std::vector<S> buf(static_cast<std::size_t>(d - 1));
  const S keep = S(damping), fresh = S(1.0 - damping);
  Mat<S> new_r(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      Eigen::Index m = 0;
      for (Eigen::Index k = 0; k < d; ++k)
        if (k != j) buf[static_cast<std::size_t>(m++)] = t(i, k) + log_c(i, k);
      new_r(i, j) = keep * log_r(i, j) + fresh * (-log_sum_exp<S>(buf.data(), m));
    }
  log_r = new_r;
  Mat<S> new_c(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) {
      Eigen::Index m = 0;
      for (Eigen::Index k = 0; k < d; ++k)
        if (k != i) buf[static_cast<std::size_t>(m++)] = t(k, j) + log_r(k, j);
      new_c(i, j) = keep * log_c(i, j) + fresh * (-log_sum_exp<S>(buf.data(), m));
    }
  log_c = new_c;
}
}  // namespace detail

// Convergence is measured on the pseudo-marginal beliefs sigma(t + log_r +
// log_c), not on the raw messages: when the Bethe optimum sits at a vertex of
// the Birkhoff polytope the log-odds legitimately run off to +-inf at a
// constant rate, so the messages never settle, while the beliefs (the only
// thing the free energy depends on) saturate and do.
inline BetheMessages bethe_converge(const Eigen::MatrixXd& t, const BetheConfig& cfg = {}) {
  const Eigen::Index d = t.rows();
  if (d != t.cols()) throw std::invalid_argument("bethe_converge: matrix must be square");
  BetheMessages msg;
  msg.log_r = Eigen::MatrixXd::Zero(d, d);
  msg.log_c = Eigen::MatrixXd::Zero(d, d);
  if (d <= 1) return msg;
  const auto beliefs = [&]() -> Eigen::MatrixXd {
    return (t + msg.log_r + msg.log_c).unaryExpr([](double o) { return ad::sigmoid(o); });
  };
  Eigen::MatrixXd prev = beliefs();
  for (int it = 0; it < cfg.max_iters; ++it) {
    detail::bethe_sweep<double>(t, msg.log_r, msg.log_c, cfg.damping);
    ++msg.iterations;
    Eigen::MatrixXd cur = beliefs();
    msg.residual = (cur - prev).cwiseAbs().maxCoeff();
    prev = std::move(cur);
    if (msg.residual < cfg.tol) break;
  }
  return msg;
}

// Bethe free energy (sign flipped: this IS log perm_B) evaluated after one
// more damped sweep from the supplied messages.  Pseudo-marginal beliefs
// have log-odds o = t + log_r + log_c, and
//   log perm_B = Σ_ij [ β t + β softplus(−o) − (1−β) softplus(o) ].
template <class S>
S bethe_free_energy_from(const Mat<S>& t, Mat<S> log_r, Mat<S> log_c, double damping) {
  const Eigen::Index d = t.rows();
  if (d == 1) return t(0, 0);
  using ad::sigmoid;   // NOLINT: double and Var overloads
  using ad::softplus;  // NOLINT
  detail::bethe_sweep<S>(t, log_r, log_c, damping);
  S f = S(0.0);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      const S o = t(i, j) + log_r(i, j) + log_c(i, j);
      const S beta = sigmoid(o);
      f += beta * t(i, j) + beta * softplus(-o) - (S(1.0) - beta) * softplus(o);
    }
  return f;
}

// Same, from converged double messages held constant: only the final sweep is
// seen by reverse-mode differentiation.
template <class S>
S bethe_free_energy_sweep(const Mat<S>& t, const Eigen::MatrixXd& log_r_pre,
                          const Eigen::MatrixXd& log_c_pre, double damping) {
  if (t.rows() == 1) return t(0, 0);
  return bethe_free_energy_from<S>(t, lift_matrix<S>(log_r_pre), lift_matrix<S>(log_c_pre),
                                   damping);
}

inline double log_bethe_permanent(const Eigen::MatrixXd& t, const BetheConfig& cfg = {}) {
  if (t.rows() == 1) return t(0, 0);
  const BetheMessages msg = bethe_converge(t, cfg);
  return bethe_free_energy_sweep<double>(t, msg.log_r, msg.log_c, cfg.damping);
}

// log of the (Bethe-normalized) Boltzmann probability of permutation p
// under energy matrix t: <t, P> − log perm_B(exp t).
inline double boltzmann_log_prob(const Permutation& p, const Eigen::MatrixXd& t,
                                 const BetheConfig& cfg = {}) {
  if (p.size() != t.rows()) throw std::invalid_argument("boltzmann_log_prob: dimension mismatch");
  double dot = 0.0;
  for (int i = 0; i < p.size(); ++i) dot += t(i, p.mapping[static_cast<std::size_t>(i)]);
  return dot - log_bethe_permanent(t, cfg);
}

}  // namespace bcd
