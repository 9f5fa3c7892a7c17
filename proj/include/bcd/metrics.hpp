#pragma once

// Structure-recovery metrics (SHD, CPDAG-level SHD, classification rates,
// expected posterior SHD) and the one-dimensional Wasserstein distance.

#include <cstdint>
#include <utility>
#include <vector>

#include "bcd/types.hpp"
#include "bcd/variational.hpp"

namespace bcd {

// Directed graph on d nodes as a dense adjacency (row-major, no self-loops).
struct BinaryGraph {
  int d = 0;
  std::vector<std::uint8_t> adj;  // adj[i*d + j] == 1 iff edge i -> j

  BinaryGraph() = default;
  explicit BinaryGraph(int dim) : d(dim), adj(static_cast<std::size_t>(dim) * dim, 0) {}

  [[nodiscard]] bool has(int i, int j) const {
    return adj[static_cast<std::size_t>(i) * d + j] != 0;
  }
  void set(int i, int j, bool present = true) {
    if (i == j) throw std::invalid_argument("BinaryGraph: self-loops are not representable");
    adj[static_cast<std::size_t>(i) * d + j] = present ? 1 : 0;
  }
  [[nodiscard]] int edge_count() const {
    int c = 0;
    for (auto v : adj) c += v;
    return c;
  }
  [[nodiscard]] std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        if (has(i, j)) out.emplace_back(i, j);
    return out;
  }
  bool operator==(const BinaryGraph& o) const { return d == o.d && adj == o.adj; }
};

// Completed partially directed acyclic graph: compelled edges stay directed,
// reversible ones become undirected.
struct Cpdag {
  int d = 0;
  std::vector<std::uint8_t> directed;    // row-major, directed[i*d+j] = i -> j
  std::vector<std::uint8_t> undirected;  // symmetric, stored for i < j only

  explicit Cpdag(int dim = 0)
      : d(dim),
        directed(static_cast<std::size_t>(dim) * dim, 0),
        undirected(static_cast<std::size_t>(dim) * dim, 0) {}
};

// Edge (i,j) present iff |w(i,j)| strictly exceeds the threshold.
BinaryGraph threshold_edges(const Eigen::MatrixXd& w, double threshold = 0.3);

BinaryGraph graph_of(const SemParams& params, double threshold = 0.0);

[[nodiscard]] bool is_acyclic(const BinaryGraph& g);

// Structural Hamming distance: number of unordered node pairs whose edge
// status (none / i->j / j->i / both) differs; a reversal costs 1.
int shd(const BinaryGraph& a, const BinaryGraph& b);

// Compelled/reversible labeling of a DAG's edges (order-edges + label-edges).
Cpdag dag_to_cpdag(const BinaryGraph& g);

// SHD between CPDAGs: pair status in {none, undirected, i->j, j->i}, each
// difference costs 1.
int shd_c(const BinaryGraph& a, const BinaryGraph& b);

struct ClassificationRates {
  double tpr = 0.0;
  double fpr = 0.0;
  double fdr = 0.0;
};

// Per directed-edge-slot confusion counts.  Conventions: fdr = 0 when there
// are no predicted edges; tpr = 1 when there are no true edges; fpr = 0 when
// every slot carries a true edge.
ClassificationRates classification_rates(const BinaryGraph& pred, const BinaryGraph& truth);

// Mean SHD between thresholded posterior draws and the ground truth.
double expected_shd(const VariationalState& state, const BinaryGraph& truth, int samples,
                    double threshold, Rng& rng, const SinkhornConfig& cfg = {});

// Same statistics over an explicit set of weight-matrix draws (used when the
// posterior draws are produced elsewhere, e.g. the marginalized-weights mode).
struct PosteriorGraphStats {
  double expected_shd = 0.0;
  double expected_shd_c = 0.0;
  ClassificationRates mean_rates;  // averaged over draws
};
PosteriorGraphStats posterior_graph_stats(const std::vector<Eigen::MatrixXd>& draws,
                                          const BinaryGraph& truth, double threshold);

// W1 distance between empirical distributions: mean |difference| of sorted
// samples; unequal lengths are first resampled to max(n, m) quantile
// midpoints.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

}  // namespace bcd
