#include "idpp/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "idpp/errors.hpp"

namespace idpp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest-augmenting-path assignment with potentials, for a matrix with
// rows <= cols. Indices are 1-based internally; column 0 is the virtual
// start of each augmenting path. Returns the matched column per row.
std::vector<int> solve_square(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), min_slack(m + 1, 0.0);
  std::vector<int> col_to_row(m + 1, 0), path(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    col_to_row[0] = i;
    int j0 = 0;
    std::fill(min_slack.begin(), min_slack.end(), kInf);
    std::vector<char> visited(m + 1, 0);
    do {
      visited[j0] = 1;
      const int i0 = col_to_row[j0];
      int j_next = 0;
      double delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (visited[j]) continue;
        const double slack = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (slack < min_slack[j]) {
          min_slack[j] = slack;
          path[j] = j0;
        }
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          j_next = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (visited[j]) {
          u[col_to_row[j]] += delta;
          v[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      j0 = j_next;
    } while (col_to_row[j0] != 0);
    do {
      const int j_prev = path[j0];
      col_to_row[j0] = col_to_row[j_prev];
      j0 = j_prev;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (col_to_row[j] != 0) row_to_col[col_to_row[j] - 1] = j - 1;
  }
  return row_to_col;
}

// Optimal total cost of matching min(rows, cols) pairs.
double optimal_value(const Eigen::MatrixXd& cost) {
  if (cost.rows() == 0 || cost.cols() == 0) return 0.0;
  double total = 0.0;
  if (cost.rows() <= cost.cols()) {
    const std::vector<int> match = solve_square(cost);
    for (int i = 0; i < static_cast<int>(match.size()); ++i) total += cost(i, match[i]);
  } else {
    const Eigen::MatrixXd t = cost.transpose();
    const std::vector<int> match = solve_square(t);
    for (int i = 0; i < static_cast<int>(match.size()); ++i) total += t(i, match[i]);
  }
  return total;
}

Eigen::MatrixXd residual_matrix(const Eigen::MatrixXd& cost, int first_row,
                                const std::vector<int>& cols, int skip_pos) {
  const int rows = static_cast<int>(cost.rows()) - first_row;
  const int n_cols = static_cast<int>(cols.size()) - (skip_pos >= 0 ? 1 : 0);
  Eigen::MatrixXd out(rows, n_cols);
  for (int r = 0; r < rows; ++r) {
    int w = 0;
    for (int ci = 0; ci < static_cast<int>(cols.size()); ++ci) {
      if (ci == skip_pos) continue;
      out(r, w++) = cost(first_row + r, cols[ci]);
    }
  }
  return out;
}

}  // namespace

Assignment hungarian(const Eigen::MatrixXd& cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  Assignment out;
  if (rows == 0 || cols == 0) return out;
  if (!cost.allFinite()) {
    throw validation_error("hungarian: cost matrix has non-finite entries");
  }

  const double best = optimal_value(cost);
  const double tol = 1e-9 * (1.0 + std::abs(best));

  // Rebuild the optimal assignment row by row, always taking the smallest
  // feasible column; a row is left unmatched only when no column keeps the
  // total at the optimum. This pins down the lexicographically smallest
  // optimal pair set.
  std::vector<int> cols_left(cols);
  std::iota(cols_left.begin(), cols_left.end(), 0);
  double prefix = 0.0;
  int need = std::min(rows, cols);
  for (int r = 0; r < rows && need > 0; ++r) {
    int chosen_pos = -1;
    for (int ci = 0; ci < static_cast<int>(cols_left.size()); ++ci) {
      const int c = cols_left[ci];
      const Eigen::MatrixXd rest = residual_matrix(cost, r + 1, cols_left, ci);
      const double completion = prefix + cost(r, c) + optimal_value(rest);
      if (completion <= best + tol) {
        chosen_pos = ci;
        break;
      }
    }
    if (chosen_pos >= 0) {
      const int c = cols_left[chosen_pos];
      out.pairs.emplace_back(r, c);
      prefix += cost(r, c);
      cols_left.erase(cols_left.begin() + chosen_pos);
      --need;
    } else if (rows - r - 1 < need) {
      throw numerical_error("hungarian: assignment reconstruction lost feasibility");
    }
  }

  out.total_cost = 0.0;
  for (const auto& [r, c] : out.pairs) out.total_cost += cost(r, c);
  return out;
}

std::vector<int> match_representatives(const std::vector<Candidate>& candidates,
                                       const std::vector<GroundTruthObject>& ground_truth,
                                       std::optional<int> class_filter) {
  std::vector<int> cand_idx;
  for (int i = 0; i < static_cast<int>(candidates.size()); ++i) {
    if (!class_filter || argmax_class(candidates[i].class_scores) == *class_filter) {
      cand_idx.push_back(i);
    }
  }
  std::vector<int> gt_idx;
  for (int j = 0; j < static_cast<int>(ground_truth.size()); ++j) {
    if (!class_filter || ground_truth[j].class_id == *class_filter) gt_idx.push_back(j);
  }
  if (cand_idx.empty() || gt_idx.empty()) return {};

  Eigen::MatrixXd overlap(cand_idx.size(), gt_idx.size());
  for (int r = 0; r < static_cast<int>(cand_idx.size()); ++r) {
    for (int c = 0; c < static_cast<int>(gt_idx.size()); ++c) {
      overlap(r, c) = iou(candidates[cand_idx[r]].box, ground_truth[gt_idx[c]].box);
    }
  }
  const Assignment asg = hungarian(Eigen::MatrixXd(1.0 - overlap.array()));

  std::vector<int> matched;
  for (const auto& [r, c] : asg.pairs) {
    if (overlap(r, c) > 0.0) matched.push_back(cand_idx[r]);
  }
  std::sort(matched.begin(), matched.end());
  return matched;
}

}  // namespace idpp
