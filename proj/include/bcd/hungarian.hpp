#pragma once

// Maximum-weight perfect matching (assignment) on a dense square matrix.
// Deterministic: among maximizers, the lexicographically smallest mapping
// (row 0's column first, then row 1's, ...) is returned.

#include <Eigen/Dense>

#include "bcd/types.hpp"

namespace bcd {

// argmax over permutations of sum_i m(i, sigma(i)).
Permutation hungarian(const Eigen::MatrixXd& m);

}  // namespace bcd
