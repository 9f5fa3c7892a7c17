#include "bcd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "bcd/sem.hpp"

namespace bcd {

BinaryGraph threshold_edges(const Eigen::MatrixXd& w, double threshold) {
  if (w.rows() != w.cols()) throw std::invalid_argument("threshold_edges: matrix must be square");
  if (threshold < 0.0) throw std::invalid_argument("threshold_edges: threshold must be >= 0");
  BinaryGraph g(static_cast<int>(w.rows()));
  for (int i = 0; i < g.d; ++i)
    for (int j = 0; j < g.d; ++j)
      if (i != j && std::abs(w(i, j)) > threshold) g.set(i, j);
  return g;
}

BinaryGraph graph_of(const SemParams& params, double threshold) {
  return threshold_edges(adjacency(params), threshold);
}

bool is_acyclic(const BinaryGraph& g) {
  // Kahn's algorithm: the graph is a DAG iff every node gets popped.
  std::vector<int> indeg(static_cast<std::size_t>(g.d), 0);
  for (int i = 0; i < g.d; ++i)
    for (int j = 0; j < g.d; ++j)
      if (g.has(i, j)) ++indeg[static_cast<std::size_t>(j)];
  std::queue<int> q;
  for (int v = 0; v < g.d; ++v)
    if (indeg[static_cast<std::size_t>(v)] == 0) q.push(v);
  int popped = 0;
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    ++popped;
    for (int j = 0; j < g.d; ++j)
      if (g.has(v, j) && --indeg[static_cast<std::size_t>(j)] == 0) q.push(j);
  }
  return popped == g.d;
}

int shd(const BinaryGraph& a, const BinaryGraph& b) {
  if (a.d != b.d) throw std::invalid_argument("shd: dimension mismatch");
  int dist = 0;
  for (int i = 0; i < a.d; ++i)
    for (int j = i + 1; j < a.d; ++j) {
      // Pair status: 0 none, 1 i->j, 2 j->i, 3 both.
      const int sa = (a.has(i, j) ? 1 : 0) | (a.has(j, i) ? 2 : 0);
      const int sb = (b.has(i, j) ? 1 : 0) | (b.has(j, i) ? 2 : 0);
      if (sa != sb) ++dist;
    }
  return dist;
}

namespace {

std::vector<int> topological_positions(const BinaryGraph& g) {
  std::vector<int> indeg(static_cast<std::size_t>(g.d), 0);
  for (int i = 0; i < g.d; ++i)
    for (int j = 0; j < g.d; ++j)
      if (g.has(i, j)) ++indeg[static_cast<std::size_t>(j)];
  // Deterministic Kahn: always pop the smallest eligible node index.
  std::priority_queue<int, std::vector<int>, std::greater<>> q;
  for (int v = 0; v < g.d; ++v)
    if (indeg[static_cast<std::size_t>(v)] == 0) q.push(v);
  std::vector<int> pos(static_cast<std::size_t>(g.d), -1);
  int next = 0;
  while (!q.empty()) {
    const int v = q.top();
    q.pop();
    pos[static_cast<std::size_t>(v)] = next++;
    for (int j = 0; j < g.d; ++j)
      if (g.has(v, j) && --indeg[static_cast<std::size_t>(j)] == 0) q.push(j);
  }
  if (next != g.d) throw std::invalid_argument("dag_to_cpdag: input graph is cyclic");
  return pos;
}

}  // namespace

Cpdag dag_to_cpdag(const BinaryGraph& g) {
  const int d = g.d;
  const std::vector<int> pos = topological_positions(g);

  // Stage 1: impose a total order on the edges.  Repeatedly take the
  // lowest-positioned sink y with an unordered incoming edge, then the
  // highest-positioned unordered parent x of y.
  const auto slot = [d](int i, int j) { return static_cast<std::size_t>(i) * d + j; };
  std::vector<int> order(static_cast<std::size_t>(d) * d, -1);
  std::vector<std::pair<int, int>> by_order;
  int remaining = g.edge_count();
  while (remaining > 0) {
    int y = -1;
    for (int v = 0; v < d; ++v) {
      bool pending = false;
      for (int u = 0; u < d; ++u)
        if (g.has(u, v) && order[slot(u, v)] < 0) pending = true;
      if (pending && (y < 0 || pos[static_cast<std::size_t>(v)] < pos[static_cast<std::size_t>(y)]))
        y = v;
    }
    int x = -1;
    for (int u = 0; u < d; ++u)
      if (g.has(u, y) && order[slot(u, y)] < 0 &&
          (x < 0 || pos[static_cast<std::size_t>(u)] > pos[static_cast<std::size_t>(x)]))
        x = u;
    order[slot(x, y)] = static_cast<int>(by_order.size());
    by_order.emplace_back(x, y);
    --remaining;
  }

  // Stage 2: label edges compelled/reversible in that order.
  enum : std::uint8_t { kUnknown = 0, kCompelled = 1, kReversible = 2 };
  std::vector<std::uint8_t> label(static_cast<std::size_t>(d) * d, kUnknown);
  for (const auto& [x, y] : by_order) {
    if (label[slot(x, y)] != kUnknown) continue;
    bool closed = false;
    for (int w = 0; w < d && !closed; ++w) {
      if (!g.has(w, x) || label[slot(w, x)] != kCompelled) continue;
      if (!g.has(w, y)) {
        // w -> x compelled but w is no parent of y: every edge into y is
        // compelled, x -> y included.
        for (int u = 0; u < d; ++u)
          if (g.has(u, y)) label[slot(u, y)] = kCompelled;
        closed = true;
      } else {
        label[slot(w, y)] = kCompelled;
      }
    }
    if (closed) continue;
    bool outside_parent = false;  // some z -> y with z != x and z not a parent of x
    for (int z = 0; z < d; ++z)
      if (z != x && g.has(z, y) && !g.has(z, x)) outside_parent = true;
    const std::uint8_t verdict = outside_parent ? kCompelled : kReversible;
    if (label[slot(x, y)] == kUnknown) label[slot(x, y)] = verdict;
    for (int u = 0; u < d; ++u)
      if (g.has(u, y) && label[slot(u, y)] == kUnknown) label[slot(u, y)] = verdict;
  }

  Cpdag out(d);
  for (const auto& [x, y] : by_order) {
    if (label[slot(x, y)] == kCompelled) {
      out.directed[slot(x, y)] = 1;
    } else {
      out.undirected[slot(std::min(x, y), std::max(x, y))] = 1;
    }
  }
  return out;
}

int shd_c(const BinaryGraph& a, const BinaryGraph& b) {
  if (a.d != b.d) throw std::invalid_argument("shd_c: dimension mismatch");
  const Cpdag ca = dag_to_cpdag(a), cb = dag_to_cpdag(b);
  const int d = a.d;
  const auto slot = [d](int i, int j) { return static_cast<std::size_t>(i) * d + j; };
  const auto status = [&](const Cpdag& c, int i, int j) -> int {
    if (c.undirected[slot(i, j)]) return 1;
    if (c.directed[slot(i, j)]) return 2;
    if (c.directed[slot(j, i)]) return 3;
    return 0;
  };
  int dist = 0;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (status(ca, i, j) != status(cb, i, j)) ++dist;
  return dist;
}

ClassificationRates classification_rates(const BinaryGraph& pred, const BinaryGraph& truth) {
  if (pred.d != truth.d) throw std::invalid_argument("classification_rates: dimension mismatch");
  int tp = 0, fp = 0, fn = 0, tn = 0;
  for (int i = 0; i < pred.d; ++i)
    for (int j = 0; j < pred.d; ++j) {
      if (i == j) continue;
      const bool p = pred.has(i, j), t = truth.has(i, j);
      if (p && t) ++tp;
      else if (p) ++fp;
      else if (t) ++fn;
      else ++tn;
    }
  ClassificationRates r;
  r.tpr = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 1.0;
  r.fpr = fp + tn > 0 ? static_cast<double>(fp) / (fp + tn) : 0.0;
  r.fdr = tp + fp > 0 ? static_cast<double>(fp) / (tp + fp) : 0.0;
  return r;
}

double expected_shd(const VariationalState& state, const BinaryGraph& truth, int samples,
                    double threshold, Rng& rng, const SinkhornConfig& cfg) {
  if (samples < 1) throw std::invalid_argument("expected_shd: samples must be >= 1");
  if (state.marginalized_weights)
    throw std::invalid_argument(
        "expected_shd: marginalized-weights posteriors need explicit draws "
        "(posterior_graph_stats)");
  double total = 0.0;
  for (int s = 0; s < samples; ++s) {
    const JointDraw draw = sample_joint(state, cfg, rng);
    total += shd(threshold_edges(draw.w, threshold), truth);
  }
  return total / samples;
}

PosteriorGraphStats posterior_graph_stats(const std::vector<Eigen::MatrixXd>& draws,
                                          const BinaryGraph& truth, double threshold) {
  if (draws.empty()) throw std::invalid_argument("posterior_graph_stats: no draws");
  PosteriorGraphStats out;
  for (const auto& w : draws) {
    const BinaryGraph g = threshold_edges(w, threshold);
    out.expected_shd += shd(g, truth);
    out.expected_shd_c += shd_c(g, truth);
    const ClassificationRates r = classification_rates(g, truth);
    out.mean_rates.tpr += r.tpr;
    out.mean_rates.fpr += r.fpr;
    out.mean_rates.fdr += r.fdr;
  }
  const double k = static_cast<double>(draws.size());
  out.expected_shd /= k;
  out.expected_shd_c /= k;
  out.mean_rates.tpr /= k;
  out.mean_rates.fpr /= k;
  out.mean_rates.fdr /= k;
  return out;
}

namespace {

// Resample to k quantile midpoints: value at quantile (t + 0.5)/k is the
// sorted sample at index floor(q * n), clamped to the last element.
std::vector<double> quantile_midpoints(const std::vector<double>& sorted, std::size_t k) {
  const std::size_t n = sorted.size();
  std::vector<double> out(k);
  for (std::size_t t = 0; t < k; ++t) {
    const double q = (static_cast<double>(t) + 0.5) / static_cast<double>(k);
    const auto idx = std::min(n - 1, static_cast<std::size_t>(q * static_cast<double>(n)));
    out[t] = sorted[idx];
  }
  return out;
}

}  // namespace

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein_1d: empty sample vector");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() != b.size()) {
    const std::size_t k = std::max(a.size(), b.size());
    a = quantile_midpoints(a, k);
    b = quantile_midpoints(b, k);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

}  // namespace bcd
