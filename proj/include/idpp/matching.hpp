#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

#include "idpp/candidate.hpp"

namespace idpp {

// Result of a rectangular assignment: pairs (row, col), exactly
// min(rows, cols) of them, sorted by row. total_cost sums the chosen cost
// entries in row order.
struct Assignment {
  std::vector<std::pair<int, int>> pairs;
  double total_cost = 0.0;
};

// Minimum-cost assignment on a rectangular cost matrix. Among all optimal
// assignments, returns the one whose sorted pair list is lexicographically
// smallest. Empty matrix yields an empty assignment.
Assignment hungarian(const Eigen::MatrixXd& cost);

// Matches candidates to ground-truth objects with cost 1 - IoU and drops
// pairs whose IoU is exactly zero. When class_filter is set, only candidates
// whose argmax class equals the filter and ground truths of that class
// participate. Returns matched candidate indices, ascending.
std::vector<int> match_representatives(const std::vector<Candidate>& candidates,
                                       const std::vector<GroundTruthObject>& ground_truth,
                                       std::optional<int> class_filter = std::nullopt);

}  // namespace idpp
