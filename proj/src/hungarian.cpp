#include "bcd/hungarian.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace bcd {
namespace {

// Classical O(n^3) assignment with potentials, minimization form.
// Returns row->col and fills dual potentials (u on rows, v on cols) with
// cost(i,j) - u[i] - v[j] >= 0 and equality on assignment edges.
void solve_min_assignment(const Eigen::MatrixXd& cost, std::vector<int>& row_to_col,
                          std::vector<double>& u_out, std::vector<double>& v_out) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  row_to_col.assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    if (p[static_cast<std::size_t>(j)] > 0) row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)]) - 1] = j - 1;
  u_out.assign(u.begin() + 1, u.end());
  v_out.assign(v.begin() + 1, v.end());
}

// Kuhn's augmenting-path matching restricted to allowed edges; used to test
// whether a partial lexicographic choice can still complete to a perfect
// matching inside the tight-edge graph.
bool try_augment(int row, const std::vector<std::vector<int>>& adj, std::vector<char>& visited,
                 std::vector<int>& col_match) {
  for (int c : adj[static_cast<std::size_t>(row)]) {
    if (visited[static_cast<std::size_t>(c)]) continue;
    visited[static_cast<std::size_t>(c)] = 1;
    if (col_match[static_cast<std::size_t>(c)] < 0 ||
        try_augment(col_match[static_cast<std::size_t>(c)], adj, visited, col_match)) {
      col_match[static_cast<std::size_t>(c)] = row;
      return true;
    }
  }
  return false;
}

bool has_perfect_matching(const std::vector<std::vector<int>>& adj, int n,
                          const std::vector<int>& fixed_rows_to_col) {
  std::vector<int> col_match(static_cast<std::size_t>(n), -1);
  for (std::size_t r = 0; r < fixed_rows_to_col.size(); ++r)
    if (fixed_rows_to_col[r] >= 0) col_match[static_cast<std::size_t>(fixed_rows_to_col[r])] = static_cast<int>(r);
  for (int r = 0; r < n; ++r) {
    if (r < static_cast<int>(fixed_rows_to_col.size()) && fixed_rows_to_col[static_cast<std::size_t>(r)] >= 0)
      continue;
    std::vector<char> visited(static_cast<std::size_t>(n), 0);
    // Fixed columns must stay taken: mark them visited so augmentation
    // cannot steal them.
    for (int c : fixed_rows_to_col)
      if (c >= 0) visited[static_cast<std::size_t>(c)] = 1;
    if (!try_augment(r, adj, visited, col_match)) return false;
  }
  return true;
}

}  // namespace

Permutation hungarian(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw std::invalid_argument("hungarian: matrix must be square and nonempty");
  if (!m.allFinite()) throw std::invalid_argument("hungarian: entries must be finite");
  const int n = static_cast<int>(m.rows());
  const Eigen::MatrixXd cost = -m;  // maximize m == minimize -m

  std::vector<int> row_to_col;
  std::vector<double> u, v;
  solve_min_assignment(cost, row_to_col, u, v);

  // Tight edges (zero reduced cost) carry every maximizing assignment.  If
  // they are exactly the found assignment the solution is unique and we are
  // done; otherwise pick the lexicographically smallest perfect matching
  // inside the tight graph.
  const double scale = m.cwiseAbs().maxCoeff() + 1.0;
  const double eps = 1e-11 * scale;
  std::vector<std::vector<int>> tight(static_cast<std::size_t>(n));
  int tight_count = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (std::abs(cost(i, j) - u[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(j)]) <= eps) {
        tight[static_cast<std::size_t>(i)].push_back(j);
        ++tight_count;
      }

  if (tight_count > n) {
    std::vector<int> fixed(static_cast<std::size_t>(n), -1);
    for (int i = 0; i < n; ++i) {
      bool placed = false;
      for (int c : tight[static_cast<std::size_t>(i)]) {
        bool taken = false;
        for (int f : fixed)
          if (f == c) taken = true;
        if (taken) continue;
        fixed[static_cast<std::size_t>(i)] = c;
        if (has_perfect_matching(tight, n, fixed)) {
          placed = true;
          break;
        }
        fixed[static_cast<std::size_t>(i)] = -1;
      }
      if (!placed) {  // numerical safety: fall back to the solver's answer
        fixed = row_to_col;
        break;
      }
    }
    row_to_col = fixed;
  }

  Permutation p;
  p.mapping = row_to_col;
  if (!p.is_valid()) throw std::runtime_error("hungarian: internal error, invalid assignment");
  return p;
}

}  // namespace bcd
