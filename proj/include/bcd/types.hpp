#pragma once

// Core value types for linear structural equation models whose weighted
// adjacency factors as W = P L Pᵀ with P a permutation and L strictly
// lower-triangular.  Entry w(i,j) is the weight of edge i -> j.

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bcd {

struct Permutation {
  // mapping[i] = j means the matrix form has its single 1 of row i in column j.
  std::vector<int> mapping;

  Permutation() = default;
  explicit Permutation(std::vector<int> m) : mapping(std::move(m)) {
    if (!is_valid()) throw std::invalid_argument("Permutation: mapping is not a bijection");
  }

  static Permutation identity(int d) {
    Permutation p;
    p.mapping.resize(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) p.mapping[static_cast<std::size_t>(i)] = i;
    return p;
  }

  [[nodiscard]] int size() const { return static_cast<int>(mapping.size()); }

  [[nodiscard]] bool is_valid() const {
    const int d = size();
    std::vector<char> seen(static_cast<std::size_t>(d), 0);
    for (int v : mapping) {
      if (v < 0 || v >= d || seen[static_cast<std::size_t>(v)]) return false;
      seen[static_cast<std::size_t>(v)] = 1;
    }
    return true;
  }

  [[nodiscard]] Eigen::MatrixXd matrix() const {
    const int d = size();
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) p(i, mapping[static_cast<std::size_t>(i)]) = 1.0;
    return p;
  }

  [[nodiscard]] Permutation inverse() const {
    Permutation out;
    out.mapping.resize(mapping.size());
    for (int i = 0; i < size(); ++i) out.mapping[static_cast<std::size_t>(mapping[static_cast<std::size_t>(i)])] = i;
    return out;
  }

  // Matrix-product composition: (a.compose(b)).matrix() == a.matrix() * b.matrix().
  [[nodiscard]] Permutation compose(const Permutation& b) const {
    if (size() != b.size()) throw std::invalid_argument("Permutation::compose: size mismatch");
    Permutation out;
    out.mapping.resize(mapping.size());
    for (int i = 0; i < size(); ++i)
      out.mapping[static_cast<std::size_t>(i)] =
          b.mapping[static_cast<std::size_t>(mapping[static_cast<std::size_t>(i)])];
    return out;
  }

  bool operator==(const Permutation& o) const { return mapping == o.mapping; }
};

// Strictly lower-triangular weights packed row-major:
// rows i = 1..d-1, columns j = 0..i-1; entry (i,j) sits at index i(i-1)/2 + j.
struct LowerTriWeights {
  int d = 0;
  Eigen::VectorXd l;  // length d(d-1)/2

  LowerTriWeights() = default;
  LowerTriWeights(int dim, Eigen::VectorXd packed) : d(dim), l(std::move(packed)) {
    if (l.size() != dim_packed(dim))
      throw std::invalid_argument("LowerTriWeights: packed length does not match d");
  }

  static Eigen::Index dim_packed(int d) { return static_cast<Eigen::Index>(d) * (d - 1) / 2; }
  static Eigen::Index pack_index(int i, int j) {
    return static_cast<Eigen::Index>(i) * (i - 1) / 2 + j;
  }

  static LowerTriWeights zero(int d) {
    return LowerTriWeights(d, Eigen::VectorXd::Zero(dim_packed(d)));
  }

  [[nodiscard]] Eigen::MatrixXd to_matrix() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
    for (int i = 1; i < d; ++i)
      for (int j = 0; j < i; ++j) m(i, j) = l(pack_index(i, j));
    return m;
  }

  static LowerTriWeights from_matrix(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("from_matrix: matrix must be square");
    const int d = static_cast<int>(m.rows());
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j)
        if (m(i, j) != 0.0)
          throw std::invalid_argument("from_matrix: diagonal/upper entries must be zero");
    LowerTriWeights out = zero(d);
    for (int i = 1; i < d; ++i)
      for (int j = 0; j < i; ++j) out.l(pack_index(i, j)) = m(i, j);
    return out;
  }
};

// Per-node noise standard deviations stored on the log scale.  In equal
// mode a single value is shared by every node.
struct NoiseScales {
  bool equal = true;
  Eigen::VectorXd log_sigma;  // size 1 when equal, size d otherwise

  static NoiseScales equal_scale(double log_sigma_value) {
    NoiseScales n;
    n.equal = true;
    n.log_sigma = Eigen::VectorXd::Constant(1, log_sigma_value);
    return n;
  }
  static NoiseScales per_node(Eigen::VectorXd log_sigmas) {
    NoiseScales n;
    n.equal = false;
    n.log_sigma = std::move(log_sigmas);
    return n;
  }

  [[nodiscard]] Eigen::VectorXd log_sigma_vector(int d) const {
    if (equal) return Eigen::VectorXd::Constant(d, log_sigma(0));
    if (log_sigma.size() != d) throw std::invalid_argument("NoiseScales: dimension mismatch");
    return log_sigma;
  }
  [[nodiscard]] Eigen::VectorXd sigma_vector(int d) const {
    return log_sigma_vector(d).array().exp().matrix();
  }
};

struct SemParams {
  Permutation p;
  LowerTriWeights weights;
  NoiseScales noise;

  [[nodiscard]] int dim() const { return p.size(); }
};

enum class NoiseKind { gaussian, gumbel };
enum class VarianceMode { equal, nonequal };

// Synthetic generation protocol for a random DAG instance.
struct GraphSpec {
  int d = 8;
  double avg_degree = 1.0;  // expected edge count is avg_degree * d / 2
  double weight_min = 0.5;  // magnitude range; sign is a fair coin
  double weight_max = 2.0;
  NoiseKind noise_kind = NoiseKind::gaussian;
  VarianceMode variance_mode = VarianceMode::equal;
  double sigma_min = 0.5;  // nonequal mode draws sigma uniformly from this range
  double sigma_max = 2.0;
};

struct Dataset {
  Eigen::MatrixXd x;  // n rows of d-dimensional observations
  std::optional<SemParams> truth;
  std::string source;      // provenance label ("synthetic", file path, ...)
  bool centered = false;

  [[nodiscard]] Eigen::Index n() const { return x.rows(); }
  [[nodiscard]] int dim() const { return static_cast<int>(x.cols()); }

  // Scatter matrix sum_i x_i x_iᵀ; likelihood evaluations only need this.
  [[nodiscard]] Eigen::MatrixXd scatter() const { return x.transpose() * x; }
};

}  // namespace bcd
