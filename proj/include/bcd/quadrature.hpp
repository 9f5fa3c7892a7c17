#pragma once

// Adaptive Simpson quadrature.  Used to build the horseshoe marginal table
// and by oracle-style computations in tests.

#include <cmath>
#include <functional>

namespace bcd {

namespace detail {
inline double simpson(double a, double fa, double b, double fb, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <class F>
double adaptive_simpson_rec(F&& f, double a, double fa, double b, double fb, double m, double fm,
                            double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson(a, fa, m, fm, flm);
  const double right = simpson(m, fm, b, fb, frm);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson_rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

template <class F>
double adaptive_simpson(F&& f, double a, double b, double tol, int max_depth = 40) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = detail::simpson(a, fa, b, fb, fm);
  return detail::adaptive_simpson_rec(f, a, fa, b, fb, m, fm, whole, tol, max_depth);
}

// Integrate over [a, b] split into n equal panels, each refined adaptively.
// Robust when the integrand has a sharp localized peak the single-interval
// starter grid would miss.
template <class F>
double panel_integrate(F&& f, double a, double b, int panels, double tol_per_panel) {
  double total = 0.0;
  const double h = (b - a) / panels;
  for (int k = 0; k < panels; ++k)
    total += adaptive_simpson(f, a + k * h, a + (k + 1) * h, tol_per_panel);
  return total;
}

}  // namespace bcd
