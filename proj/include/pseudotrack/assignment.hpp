#pragma once

#include <Eigen/Core>

#include <limits>
#include <utility>
#include <vector>

namespace pseudotrack {

struct AssignmentResult {
  std::vector<std::pair<int, int>> matches;  // (row, col), ascending row
  std::vector<int> unmatched_rows;
  std::vector<int> unmatched_cols;
  double total_similarity = 0.0;  // over the kept matches
};

// Maximum-total-similarity one-to-one assignment of min(rows, cols) pairs
// (shortest augmenting path with potentials, O(n^2 m)). Pairs whose
// similarity is below `gate` are unmatched afterwards. Ties resolve to the
// lowest column index in scan order, so the result is deterministic.
AssignmentResult solve_assignment(const Eigen::MatrixXd& similarity,
                                  double gate = -std::numeric_limits<double>::infinity());

// Column assigned to each row of the full (ungated) optimum; -1 if none.
std::vector<int> optimal_assignment(const Eigen::MatrixXd& similarity);

// Entropic soft matching with a dustbin row and column. Returns an
// (n+1) x (m+1) matrix: each real row and real column sums to one, the
// dustbin row to m and the dustbin column to n. Starts with a row
// normalization of exp(S / temperature); each iteration then normalizes
// columns and rows once. Computed in the log domain.
Eigen::MatrixXd sinkhorn_soft_assignment(const Eigen::MatrixXd& similarity, double temperature,
                                         int iterations, double dustbin_score = 0.0);

}  // namespace pseudotrack
