#pragma once

// Reverse-mode automatic differentiation on a flat tape.
//
// Var is a double value plus an index into the thread-local active tape.
// Constants carry index -1 and never allocate tape nodes, so mixing plain
// doubles into an expression is free.  Gradients are obtained by seeding a
// scalar output and sweeping the tape backwards once.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace bcd::ad {

struct TapeNode {
  double w0 = 0.0, w1 = 0.0;   // local partials wrt parents
  int32_t p0 = -1, p1 = -1;    // parent node indices (-1: none)
};

class Tape {
 public:
  void clear() { nodes_.clear(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  int32_t push_leaf() {
    nodes_.emplace_back();
    return static_cast<int32_t>(nodes_.size() - 1);
  }
  int32_t push1(int32_t p, double w) {
    TapeNode n;
    n.p0 = p;
    n.w0 = w;
    nodes_.push_back(n);
    return static_cast<int32_t>(nodes_.size() - 1);
  }
  int32_t push2(int32_t pa, double wa, int32_t pb, double wb) {
    TapeNode n;
    n.p0 = pa;
    n.w0 = wa;
    n.p1 = pb;
    n.w1 = wb;
    nodes_.push_back(n);
    return static_cast<int32_t>(nodes_.size() - 1);
  }

  // Adjoints of every node with respect to the node at `seed`.
  [[nodiscard]] std::vector<double> gradient(int32_t seed) const {
    if (seed < 0 || static_cast<std::size_t>(seed) >= nodes_.size())
      throw std::invalid_argument("gradient seed is not a tape node");
    std::vector<double> adj(nodes_.size(), 0.0);
    adj[static_cast<std::size_t>(seed)] = 1.0;
    for (int32_t k = seed; k >= 0; --k) {
      const double a = adj[static_cast<std::size_t>(k)];
      if (a == 0.0) continue;
      const TapeNode& n = nodes_[static_cast<std::size_t>(k)];
      if (n.p0 >= 0) adj[static_cast<std::size_t>(n.p0)] += n.w0 * a;
      if (n.p1 >= 0) adj[static_cast<std::size_t>(n.p1)] += n.w1 * a;
    }
    return adj;
  }

 private:
  std::vector<TapeNode> nodes_;
};

// Thread-local active tape.  Ops record onto it; RAII scope installs one.
inline Tape*& active_tape() {
  thread_local Tape* t = nullptr;
  return t;
}

struct TapeScope {
  explicit TapeScope(Tape& t) : prev_(active_tape()) { active_tape() = &t; }
  ~TapeScope() { active_tape() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

class Var {
 public:
  Var() = default;
  Var(double v) : v_(v) {}  // NOLINT: implicit constant lift is the point

  // A differentiable input registered on the active tape.
  static Var leaf(double v) {
    Tape* t = active_tape();
    assert(t != nullptr && "Var::leaf requires an active tape");
    return Var(v, t->push_leaf());
  }

  [[nodiscard]] double value() const { return v_; }
  [[nodiscard]] int32_t index() const { return i_; }
  [[nodiscard]] bool is_const() const { return i_ < 0; }

  static Var from_node(double v, int32_t i) { return Var(v, i); }

  Var& operator+=(const Var& o);
  Var& operator-=(const Var& o);
  Var& operator*=(const Var& o);
  Var& operator/=(const Var& o);

 private:
  Var(double v, int32_t i) : v_(v), i_(i) {}
  double v_ = 0.0;
  int32_t i_ = -1;
};

namespace detail {
inline Var unary(const Var& x, double value, double partial) {
  if (x.is_const()) return Var(value);
  return Var::from_node(value, active_tape()->push1(x.index(), partial));
}
inline Var binary(const Var& a, const Var& b, double value, double wa, double wb) {
  const bool ca = a.is_const(), cb = b.is_const();
  if (ca && cb) return Var(value);
  Tape* t = active_tape();
  if (ca) return Var::from_node(value, t->push1(b.index(), wb));
  if (cb) return Var::from_node(value, t->push1(a.index(), wa));
  return Var::from_node(value, t->push2(a.index(), wa, b.index(), wb));
}
}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
  return detail::binary(a, b, a.value() + b.value(), 1.0, 1.0);
}
inline Var operator-(const Var& a, const Var& b) {
  return detail::binary(a, b, a.value() - b.value(), 1.0, -1.0);
}
inline Var operator*(const Var& a, const Var& b) {
  return detail::binary(a, b, a.value() * b.value(), b.value(), a.value());
}
inline Var operator/(const Var& a, const Var& b) {
  const double ib = 1.0 / b.value();
  return detail::binary(a, b, a.value() * ib, ib, -a.value() * ib * ib);
}
inline Var operator-(const Var& x) { return detail::unary(x, -x.value(), -1.0); }
inline Var operator+(const Var& x) { return x; }

inline Var& Var::operator+=(const Var& o) { return *this = *this + o; }
inline Var& Var::operator-=(const Var& o) { return *this = *this - o; }
inline Var& Var::operator*=(const Var& o) { return *this = *this * o; }
inline Var& Var::operator/=(const Var& o) { return *this = *this / o; }

inline bool operator<(const Var& a, const Var& b) { return a.value() < b.value(); }
inline bool operator>(const Var& a, const Var& b) { return a.value() > b.value(); }
inline bool operator<=(const Var& a, const Var& b) { return a.value() <= b.value(); }
inline bool operator>=(const Var& a, const Var& b) { return a.value() >= b.value(); }
inline bool operator==(const Var& a, const Var& b) { return a.value() == b.value(); }
inline bool operator!=(const Var& a, const Var& b) { return a.value() != b.value(); }

inline Var exp(const Var& x) {
  const double e = std::exp(x.value());
  return detail::unary(x, e, e);
}
inline Var log(const Var& x) { return detail::unary(x, std::log(x.value()), 1.0 / x.value()); }
inline Var log1p(const Var& x) {
  return detail::unary(x, std::log1p(x.value()), 1.0 / (1.0 + x.value()));
}
inline Var sqrt(const Var& x) {
  const double s = std::sqrt(x.value());
  return detail::unary(x, s, 0.5 / s);
}
inline Var tanh(const Var& x) {
  const double t = std::tanh(x.value());
  return detail::unary(x, t, 1.0 - t * t);
}
inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline Var sigmoid(const Var& x) {
  const double s = sigmoid(x.value());
  return detail::unary(x, s, s * (1.0 - s));
}
inline double softplus(double x) { return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline Var softplus(const Var& x) {
  return detail::unary(x, softplus(x.value()), sigmoid(x.value()));
}
inline Var abs(const Var& x) {
  return detail::unary(x, std::abs(x.value()), x.value() >= 0.0 ? 1.0 : -1.0);
}
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline Var relu(const Var& x) {
  return detail::unary(x, relu(x.value()), x.value() > 0.0 ? 1.0 : 0.0);
}
inline Var square(const Var& x) { return x * x; }
inline double square(double x) { return x * x; }

// Forward value `hard`, gradient routed one-to-one to `soft`.
inline Var straight_through(const Var& soft, double hard) {
  if (soft.is_const()) return Var(hard);
  return Var::from_node(hard, active_tape()->push1(soft.index(), 1.0));
}

// A custom differentiable primitive: caller supplies value and d(value)/dx.
inline Var custom_unary(const Var& x, double value, double partial) {
  return detail::unary(x, value, partial);
}

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }

inline bool isfinite(const Var& x) { return std::isfinite(x.value()); }

}  // namespace bcd::ad

// Eigen interoperability: dense matrices over Var.
#include <Eigen/Core>

namespace Eigen {
template <>
struct NumTraits<bcd::ad::Var> {
  typedef bcd::ad::Var Real;
  typedef bcd::ad::Var NonInteger;
  typedef bcd::ad::Var Nested;
  typedef bcd::ad::Var Literal;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 3,
    MulCost = 3,
  };
  static inline Real epsilon() { return Real(NumTraits<double>::epsilon()); }
  static inline Real dummy_precision() { return Real(NumTraits<double>::dummy_precision()); }
  static inline Real highest() { return Real(NumTraits<double>::highest()); }
  static inline Real lowest() { return Real(NumTraits<double>::lowest()); }
  static inline int digits10() { return NumTraits<double>::digits10(); }
};
}  // namespace Eigen

namespace bcd {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Lift a double matrix/vector into AD constants (no tape nodes).
template <class S>
Mat<S> lift_matrix(const Eigen::MatrixXd& m) {
  if constexpr (std::is_same_v<S, double>) {
    return m;
  } else {
    Mat<S> out(m.rows(), m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) out(i, j) = S(m(i, j));
    return out;
  }
}
template <class S>
Vec<S> lift_vector(const Eigen::VectorXd& v) {
  if constexpr (std::is_same_v<S, double>) {
    return v;
  } else {
    Vec<S> out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = S(v(i));
    return out;
  }
}

inline Eigen::MatrixXd values_of(const Mat<ad::Var>& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) out(i, j) = m(i, j).value();
  return out;
}
inline Eigen::MatrixXd values_of(const Eigen::MatrixXd& m) { return m; }
inline Eigen::VectorXd values_of(const Vec<ad::Var>& v) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = v(i).value();
  return out;
}
inline Eigen::VectorXd values_of(const Eigen::VectorXd& v) { return v; }

}  // namespace bcd
