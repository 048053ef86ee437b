#include "pseudotrack/assignment.hpp"

#include "pseudotrack/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pseudotrack {

namespace {

// Minimum-cost assignment of every row to a distinct column, rows <= cols.
// Returns the column of each row.
std::vector<int> min_cost_rows_to_cols(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is the virtual start.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> owner(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    owner[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = owner[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const int j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of_row(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (owner[j] != 0) col_of_row[owner[j] - 1] = j - 1;
  }
  return col_of_row;
}

}  // namespace

std::vector<int> optimal_assignment(const Eigen::MatrixXd& similarity) {
  if (!similarity.allFinite()) throw ValidationError("solve_assignment: non-finite similarity");
  const int rows = static_cast<int>(similarity.rows());
  const int cols = static_cast<int>(similarity.cols());
  if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);
  if (rows <= cols) return min_cost_rows_to_cols(-similarity);
  const std::vector<int> row_of_col = min_cost_rows_to_cols(-similarity.transpose());
  std::vector<int> col_of_row(rows, -1);
  for (int c = 0; c < cols; ++c) col_of_row[row_of_col[c]] = c;
  return col_of_row;
}

AssignmentResult solve_assignment(const Eigen::MatrixXd& similarity, double gate) {
  const auto col_of_row = optimal_assignment(similarity);
  AssignmentResult result;
  std::vector<char> col_used(similarity.cols(), 0);
  for (int r = 0; r < static_cast<int>(col_of_row.size()); ++r) {
    const int c = col_of_row[r];
    if (c >= 0 && similarity(r, c) >= gate) {
      result.matches.emplace_back(r, c);
      result.total_similarity += similarity(r, c);
      col_used[c] = 1;
    } else {
      result.unmatched_rows.push_back(r);
    }
  }
  for (int c = 0; c < static_cast<int>(similarity.cols()); ++c) {
    if (!col_used[c]) result.unmatched_cols.push_back(c);
  }
  return result;
}

namespace {

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double mx = x.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((x.array() - mx).exp().sum());
}

}  // namespace

Eigen::MatrixXd sinkhorn_soft_assignment(const Eigen::MatrixXd& similarity, double temperature,
                                         int iterations, double dustbin_score) {
  if (!(temperature > 0.0)) throw ValidationError("sinkhorn: temperature must be positive");
  if (iterations < 0) throw ValidationError("sinkhorn: iterations must be >= 0");
  const Eigen::Index n = similarity.rows();
  const Eigen::Index m = similarity.cols();

  Eigen::MatrixXd log_k = Eigen::MatrixXd::Constant(n + 1, m + 1, dustbin_score / temperature);
  log_k.topLeftCorner(n, m) = similarity / temperature;

  Eigen::VectorXd log_a = Eigen::VectorXd::Zero(n + 1);
  Eigen::VectorXd log_b = Eigen::VectorXd::Zero(m + 1);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  log_a(n) = m > 0 ? std::log(static_cast<double>(m)) : neg_inf;
  log_b(m) = n > 0 ? std::log(static_cast<double>(n)) : neg_inf;

  Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(m + 1);
  auto normalize_rows = [&] {
    for (Eigen::Index i = 0; i <= n; ++i) {
      u(i) = std::isfinite(log_a(i)) ? log_a(i) - log_sum_exp(log_k.row(i).transpose() + v)
                                     : neg_inf;
    }
  };
  auto normalize_cols = [&] {
    for (Eigen::Index j = 0; j <= m; ++j) {
      v(j) = std::isfinite(log_b(j)) ? log_b(j) - log_sum_exp(log_k.col(j) + u) : neg_inf;
    }
  };

  normalize_rows();
  for (int it = 0; it < iterations; ++it) {
    normalize_cols();
    normalize_rows();
  }

  Eigen::MatrixXd out(n + 1, m + 1);
  for (Eigen::Index i = 0; i <= n; ++i) {
    for (Eigen::Index j = 0; j <= m; ++j) {
      const double l = log_k(i, j) + u(i) + v(j);
      out(i, j) = std::isfinite(l) ? std::exp(l) : 0.0;
    }
  }
  return out;
}

}  // namespace pseudotrack
