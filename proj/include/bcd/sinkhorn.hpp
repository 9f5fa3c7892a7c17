#pragma once

// Log-space Sinkhorn normalization and the Gumbel relaxation of permutation
// sampling.  All normalization happens on the log matrix (row/column
// log-sum-exp subtraction), so logits of magnitude O(100) are safe.

#include "bcd/autodiff.hpp"
#include "bcd/hungarian.hpp"
#include "bcd/linalg.hpp"
#include "bcd/rng.hpp"
#include "bcd/types.hpp"

namespace bcd {

struct SinkhornConfig {
  double tol = 0.01;     // max deviation of any row/col sum from 1
  int max_iters = 2000;  // adaptive cap; the fixed-budget ablation sets 100
};

struct DoublyStochastic {
  Eigen::MatrixXd m;
  double achieved_tolerance = 0.0;
  int iterations = 0;
};

// One full row-then-column normalization pass on the log matrix.
template <class S>
void sinkhorn_sweep(Mat<S>& a) {
  const Eigen::Index d = a.rows();
  std::vector<S> buf(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) buf[static_cast<std::size_t>(j)] = a(i, j);
    const S lse = log_sum_exp<S>(buf.data(), d);
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) -= lse;
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) buf[static_cast<std::size_t>(i)] = a(i, j);
    const S lse = log_sum_exp<S>(buf.data(), d);
    for (Eigen::Index i = 0; i < d; ++i) a(i, j) -= lse;
  }
}

inline double sinkhorn_deviation(const Eigen::MatrixXd& log_a) {
  const Eigen::MatrixXd m = log_a.array().exp().matrix();
  double dev = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) dev = std::max(dev, std::abs(m.row(i).sum() - 1.0));
  for (Eigen::Index j = 0; j < m.cols(); ++j) dev = std::max(dev, std::abs(m.col(j).sum() - 1.0));
  return dev;
}

// Adaptive runner on plain doubles; returns the final log matrix.
struct SinkhornRun {
  Eigen::MatrixXd log_m;
  int iterations = 0;
  double achieved_tolerance = 0.0;
};

inline SinkhornRun sinkhorn_log(const Eigen::MatrixXd& t, const SinkhornConfig& cfg = {}) {
  if (t.rows() != t.cols()) throw std::invalid_argument("sinkhorn: matrix must be square");
  SinkhornRun run;
  run.log_m = t;
  run.achieved_tolerance = sinkhorn_deviation(run.log_m);
  while (run.achieved_tolerance > cfg.tol && run.iterations < cfg.max_iters) {
    sinkhorn_sweep<double>(run.log_m);
    ++run.iterations;
    run.achieved_tolerance = sinkhorn_deviation(run.log_m);
  }
  return run;
}

inline DoublyStochastic sinkhorn(const Eigen::MatrixXd& t, const SinkhornConfig& cfg = {}) {
  const SinkhornRun run = sinkhorn_log(t, cfg);
  return DoublyStochastic{run.log_m.array().exp().matrix(), run.achieved_tolerance, run.iterations};
}

struct GumbelSinkhornDraw {
  Eigen::MatrixXd logits;  // T
  Eigen::MatrixXd gumbel;  // γ
  double tau = 0.2;
  DoublyStochastic soft;   // S((T + γ)/τ)
  Permutation hard;        // max-weight matching of the soft matrix
};

inline Eigen::MatrixXd draw_gumbel_matrix(int d, Rng& rng) {
  Eigen::MatrixXd g(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) g(i, j) = draw_gumbel(rng);
  return g;
}

inline GumbelSinkhornDraw gumbel_sinkhorn_sample(const Eigen::MatrixXd& t, double tau,
                                                 const SinkhornConfig& cfg, Rng& rng) {
  GumbelSinkhornDraw draw;
  draw.logits = t;
  draw.tau = tau;
  draw.gumbel = draw_gumbel_matrix(static_cast<int>(t.rows()), rng);
  draw.soft = sinkhorn(((t + draw.gumbel) / tau).eval(), cfg);
  draw.hard = hungarian(draw.soft.m);
  return draw;
}

}  // namespace bcd
