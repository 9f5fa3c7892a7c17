#pragma once

// The variational posterior over (L, Sigma, P): a Gaussian family on the
// concatenated vector z = (l, log sigma) — diagonal or full-covariance via a
// Cholesky factor — and a conditional distribution over permutations whose
// logits come from a one-hidden-layer MLP applied to z (or a free logit
// matrix in the mean-field ablation).  Logits are squashed to (−20, 20) by
// 20·(2·sigmoid(y) − 1).

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "bcd/autodiff.hpp"
#include "bcd/rng.hpp"
#include "bcd/sem.hpp"
#include "bcd/sinkhorn.hpp"
#include "bcd/types.hpp"

namespace bcd {

enum class FamilyVariant : std::uint32_t { diagonal = 0, full = 1 };

struct LSigmaFamily {
  FamilyVariant variant = FamilyVariant::diagonal;
  Eigen::VectorXd mean;        // dim
  Eigen::VectorXd log_scale;   // dim: log std devs (diagonal of the Cholesky)
  Eigen::VectorXd chol_lower;  // full variant: strictly-lower Cholesky, packed row-major

  [[nodiscard]] Eigen::Index dim() const { return mean.size(); }

  static LSigmaFamily init(FamilyVariant variant, Eigen::Index dim, double init_log_scale) {
    LSigmaFamily f;
    f.variant = variant;
    f.mean = Eigen::VectorXd::Zero(dim);
    f.log_scale = Eigen::VectorXd::Constant(dim, init_log_scale);
    f.chol_lower = variant == FamilyVariant::full
                       ? Eigen::VectorXd::Zero(dim * (dim - 1) / 2)
                       : Eigen::VectorXd();
    return f;
  }
};

struct ConditionalPermutationNet {
  Eigen::MatrixXd w1;  // hidden x in
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // out x hidden
  Eigen::VectorXd b2;  // out (= d²), logits reshaped row-major

  static ConditionalPermutationNet he_init(Eigen::Index in, Eigen::Index hidden, Eigen::Index out,
                                           Rng& rng) {
    ConditionalPermutationNet net;
    net.w1.resize(hidden, in);
    net.b1 = Eigen::VectorXd::Zero(hidden);
    net.w2.resize(out, hidden);
    net.b2 = Eigen::VectorXd::Zero(out);
    const double s1 = std::sqrt(2.0 / static_cast<double>(in));
    const double s2 = std::sqrt(2.0 / static_cast<double>(hidden));
    for (Eigen::Index i = 0; i < hidden; ++i)
      for (Eigen::Index j = 0; j < in; ++j) net.w1(i, j) = draw_normal(rng, 0.0, s1);
    for (Eigen::Index i = 0; i < out; ++i)
      for (Eigen::Index j = 0; j < hidden; ++j) net.w2(i, j) = draw_normal(rng, 0.0, s2);
    return net;
  }
};

struct VariationalState {
  int d = 0;
  bool equal_variance = true;
  bool mean_field = false;           // free logits instead of the conditional net
  bool marginalized_weights = false; // z carries only log sigma (Gaussian-weight marginal mode)
  double tau = 0.2;
  LSigmaFamily family;
  ConditionalPermutationNet net;
  Eigen::MatrixXd free_logits;  // d x d pre-squash parameters (mean-field only)

  [[nodiscard]] Eigen::Index l_dim() const {
    return marginalized_weights ? 0 : LowerTriWeights::dim_packed(d);
  }
  [[nodiscard]] Eigen::Index sigma_dim() const { return equal_variance ? 1 : d; }
  [[nodiscard]] Eigen::Index z_dim() const { return l_dim() + sigma_dim(); }

  static VariationalState init(int d, bool equal_variance, FamilyVariant variant, double tau,
                               Eigen::Index hidden, bool mean_field, bool marginalized_weights,
                               Rng& rng, double init_log_scale = std::log(0.1)) {
    VariationalState st;
    st.d = d;
    st.equal_variance = equal_variance;
    st.mean_field = mean_field;
    st.marginalized_weights = marginalized_weights;
    st.tau = tau;
    st.family = LSigmaFamily::init(variant, st.z_dim(), init_log_scale);
    if (mean_field) {
      st.free_logits = Eigen::MatrixXd::Zero(d, d);
    } else {
      st.net = ConditionalPermutationNet::he_init(st.z_dim(), hidden,
                                                  static_cast<Eigen::Index>(d) * d, rng);
    }
    return st;
  }
};

// --- Templated building blocks (double for evaluation, Var for gradients) ---

template <class S>
struct FamilyParams {
  FamilyVariant variant = FamilyVariant::diagonal;
  Vec<S> mean, log_scale, chol_lower;
};

template <class S>
struct NetParams {
  Mat<S> w1;
  Vec<S> b1;
  Mat<S> w2;
  Vec<S> b2;
};

// z = mean + C u where C is diagonal exp(log_scale) or the full Cholesky.
template <class S>
Vec<S> family_transform(const FamilyParams<S>& f, const Eigen::VectorXd& u) {
  using ad::exp;  // NOLINT
  using std::exp;
  const Eigen::Index k = f.mean.size();
  Vec<S> z(k);
  for (Eigen::Index i = 0; i < k; ++i) z(i) = f.mean(i) + exp(f.log_scale(i)) * S(u(i));
  if (f.variant == FamilyVariant::full) {
    Eigen::Index idx = 0;
    for (Eigen::Index i = 1; i < k; ++i)
      for (Eigen::Index j = 0; j < i; ++j) z(i) += f.chol_lower(idx++) * S(u(j));
  }
  return z;
}

// log q(z) evaluated through the reparameterization (z = mean + C u):
// −½‖u‖² − Σ log C_ii − (k/2) log 2π.  The total derivative with respect to
// the parameters of the composed expression matches the true gradient of
// log q(z(φ); φ) by the standard reparameterization cancellation.
template <class S>
S family_log_density(const FamilyParams<S>& f, const Eigen::VectorXd& u) {
  const Eigen::Index k = f.mean.size();
  S total = S(-0.5 * static_cast<double>(k) * std::log(2.0 * std::numbers::pi) - 0.5 * u.squaredNorm());
  for (Eigen::Index i = 0; i < k; ++i) total -= f.log_scale(i);
  return total;
}

// Squashed logits: entries strictly inside (−20, 20).
template <class S>
Mat<S> squash_logits(const Mat<S>& raw) {
  using ad::sigmoid;  // NOLINT
  Mat<S> out(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i)
    for (Eigen::Index j = 0; j < raw.cols(); ++j)
      out(i, j) = S(20.0) * (S(2.0) * sigmoid(raw(i, j)) - S(1.0));
  return out;
}

// MLP: z -> relu(w1 z + b1) -> w2 h + b2, reshaped (row-major) to d x d,
// then squashed.
template <class S>
Mat<S> conditional_logits_net(const NetParams<S>& net, const Vec<S>& z, int d) {
  using ad::relu;  // NOLINT
  const Eigen::Index hidden = net.b1.size();
  Vec<S> h(hidden);
  for (Eigen::Index i = 0; i < hidden; ++i) {
    S acc = net.b1(i);
    for (Eigen::Index j = 0; j < z.size(); ++j) acc += net.w1(i, j) * z(j);
    h(i) = relu(acc);
  }
  Mat<S> raw(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      const Eigen::Index row = i * d + j;
      S acc = net.b2(row);
      for (Eigen::Index k = 0; k < hidden; ++k) acc += net.w2(row, k) * h(k);
      raw(i, j) = acc;
    }
  return squash_logits<S>(raw);
}

// Double-precision logits for a given z under the state's parameters.
inline Eigen::MatrixXd conditional_logits(const VariationalState& st, const Eigen::VectorXd& z) {
  if (st.mean_field) return squash_logits<double>(st.free_logits);
  NetParams<double> np{st.net.w1, st.net.b1, st.net.w2, st.net.b2};
  return conditional_logits_net<double>(np, z, st.d);
}

// A full posterior draw on the double path.
struct JointDraw {
  Eigen::VectorXd z;
  Eigen::VectorXd u;
  LowerTriWeights weights;
  NoiseScales noise;
  Eigen::MatrixXd logits;
  GumbelSinkhornDraw perm;
  Eigen::MatrixXd w;  // hard-permutation adjacency P L Pᵀ
};

inline NoiseScales noise_from_z(const VariationalState& st, const Eigen::VectorXd& z) {
  if (st.equal_variance) return NoiseScales::equal_scale(z(st.l_dim()));
  return NoiseScales::per_node(z.tail(st.d));
}

inline JointDraw sample_joint(const VariationalState& st, const SinkhornConfig& cfg, Rng& rng) {
  JointDraw out;
  out.u.resize(st.z_dim());
  for (Eigen::Index i = 0; i < out.u.size(); ++i) out.u(i) = draw_normal(rng);
  FamilyParams<double> fp{st.family.variant, st.family.mean, st.family.log_scale,
                          st.family.chol_lower};
  out.z = family_transform<double>(fp, out.u);
  out.weights = st.marginalized_weights
                    ? LowerTriWeights::zero(st.d)
                    : LowerTriWeights(st.d, out.z.head(st.l_dim()));
  out.noise = noise_from_z(st, out.z);
  out.logits = conditional_logits(st, out.z);
  out.perm = gumbel_sinkhorn_sample(out.logits, st.tau, cfg, rng);
  out.w = compose_adjacency(out.perm.hard, out.weights);
  return out;
}

// --- Checkpoint serialization ----------------------------------------------
// Binary layout (little-endian): magic "BCDC", u32 version, u32 d,
// u32 variant, u8 equal_variance, u8 mean_field, u8 marginalized_weights,
// u8 pad, u32 hidden, f64 tau, u64 count, then count f64 parameters in order:
// family.mean, family.log_scale, family.chol_lower, net.w1 (row-major),
// net.b1, net.w2 (row-major), net.b2, free_logits (row-major).
void save_checkpoint(const std::string& path, const VariationalState& st);
VariationalState load_checkpoint(const std::string& path);

// Canonical flat parameter order (the checkpoint order above); the optimizer
// and gradient code index parameters the same way.
std::vector<double> flatten_state(const VariationalState& st);
void unflatten_state(VariationalState& st, const std::vector<double>& flat);

}  // namespace bcd
