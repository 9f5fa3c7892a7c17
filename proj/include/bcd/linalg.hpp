#pragma once

// Small dense linear-algebra helpers templated on the scalar type so the
// same code path serves plain evaluation and reverse-mode differentiation.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "bcd/autodiff.hpp"

namespace bcd {

// log |det A| via LU with partial pivoting (destroys a local copy).
// Pivot selection compares magnitudes of current values, so the computed
// value is an exact elementary-arithmetic function of the inputs.
template <class S>
S log_abs_det(Mat<S> a) {
  const Eigen::Index n = a.rows();
  if (n != a.cols()) throw std::invalid_argument("log_abs_det: matrix must be square");
  S acc = S(0.0);
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index piv = k;
    double best = std::abs(ad::value_of(a(k, k)));
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double m = std::abs(ad::value_of(a(i, k)));
      if (m > best) {
        best = m;
        piv = i;
      }
    }
    if (best == 0.0) throw std::runtime_error("log_abs_det: singular matrix");
    if (piv != k) a.row(piv).swap(a.row(k));
    using std::abs;
    using std::log;
    using ad::abs;   // NOLINT
    using ad::log;   // NOLINT
    acc += log(abs(a(k, k)));
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const S f = a(i, k) / a(k, k);
      for (Eigen::Index j = k + 1; j < n; ++j) a(i, j) -= f * a(k, j);
    }
  }
  return acc;
}

// Stable log(sum exp(x_i)) over a contiguous range.  The max shift is
// detached (a plain double); the analytic derivative is still the exact
// softmax because the shift contributions cancel.
template <class S>
S log_sum_exp(const S* x, Eigen::Index n) {
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) m = std::max(m, ad::value_of(x[i]));
  if (!std::isfinite(m)) return S(m);
  using std::exp;
  using std::log;
  using ad::exp;  // NOLINT
  using ad::log;  // NOLINT
  S s = S(0.0);
  for (Eigen::Index i = 0; i < n; ++i) s += exp(x[i] - S(m));
  return S(m) + log(s);
}

template <class S>
S log_sum_exp(const Vec<S>& x) {
  return log_sum_exp(x.data(), x.size());
}

}  // namespace bcd
