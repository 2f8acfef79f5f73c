#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "idpp/dpp.hpp"
#include "idpp/geometry.hpp"
#include "idpp/rng.hpp"

namespace test_support {

inline idpp::BoundingBox random_box(idpp::Rng& rng, double extent = 100.0) {
  const double w = extent * rng.uniform(0.15, 0.4);
  const double h = extent * rng.uniform(0.15, 0.4);
  const double x = rng.uniform(0.0, extent - w);
  const double y = rng.uniform(0.0, extent - h);
  return {x, y, x + w, y + h};
}

inline std::vector<idpp::BoundingBox> random_boxes(idpp::Rng& rng, int n,
                                                   double extent = 100.0) {
  std::vector<idpp::BoundingBox> boxes;
  boxes.reserve(n);
  for (int i = 0; i < n; ++i) boxes.push_back(random_box(rng, extent));
  return boxes;
}

inline Eigen::MatrixXd random_features(idpp::Rng& rng, int n, int r) {
  Eigen::MatrixXd raw(n, r);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < r; ++j) raw(i, j) = rng.normal();
  }
  return raw;
}

struct Instance {
  idpp::SimilarityMatrix sim;
  Eigen::MatrixXd iou_mat;
  Eigen::MatrixXd V;
  Eigen::VectorXd q;
};

// Random scene-shaped kernel inputs: unit features, boxes dense enough to
// overlap, qualities in [1, e^beta).
inline Instance random_instance(idpp::Rng& rng, int n, int r, double lambda = 0.6,
                                double beta = 2.0) {
  Instance inst;
  const idpp::FeatureMatrix feats = idpp::FeatureMatrix::from_raw(random_features(rng, n, r));
  inst.iou_mat = idpp::iou_matrix(random_boxes(rng, n), idpp::Exec::serial);
  inst.sim = idpp::build_similarity(feats, inst.iou_mat, lambda, idpp::PsdRepairKind::eigenclip,
                                    1e-8, idpp::Exec::serial);
  inst.V = feats.V;
  inst.q.resize(n);
  for (int i = 0; i < n; ++i) inst.q(i) = std::exp(beta * rng.uniform());
  return inst;
}

// Independent overlap oracle: counts cells of a uniform grid laid over the
// joint bounding region whose centers fall in each box.
inline double rasterized_iou(const idpp::BoundingBox& a, const idpp::BoundingBox& b,
                             int cells_per_axis) {
  const double x_lo = std::min(a.x_min, b.x_min);
  const double y_lo = std::min(a.y_min, b.y_min);
  const double x_hi = std::max(a.x_max, b.x_max);
  const double y_hi = std::max(a.y_max, b.y_max);
  const double dx = (x_hi - x_lo) / cells_per_axis;
  const double dy = (y_hi - y_lo) / cells_per_axis;
  auto contains = [](const idpp::BoundingBox& box, double x, double y) {
    return x >= box.x_min && x < box.x_max && y >= box.y_min && y < box.y_max;
  };
  long long in_a = 0, in_b = 0, in_both = 0;
  for (int i = 0; i < cells_per_axis; ++i) {
    const double x = x_lo + (i + 0.5) * dx;
    for (int j = 0; j < cells_per_axis; ++j) {
      const double y = y_lo + (j + 0.5) * dy;
      const bool ia = contains(a, x, y);
      const bool ib = contains(b, x, y);
      in_a += ia;
      in_b += ib;
      in_both += ia && ib;
    }
  }
  const long long in_union = in_a + in_b - in_both;
  return in_union == 0 ? 0.0 : static_cast<double>(in_both) / static_cast<double>(in_union);
}

// Sum of det(L_Y) over every subset, the brute-force normalization constant.
inline double subset_determinant_sum(const Eigen::MatrixXd& L) {
  const int n = static_cast<int>(L.rows());
  double total = 0.0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) idx.push_back(i);
    }
    total += idx.empty() ? 1.0 : idpp::select_submatrix(L, idx).determinant();
  }
  return total;
}

// Minimum assignment cost by enumerating permutations of the larger side.
// Each candidate sum is accumulated in ascending row order, the same order
// hungarian uses, so optimal costs compare bitwise.
inline double brute_force_assignment(const Eigen::MatrixXd& cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  if (rows == 0 || cols == 0) return 0.0;
  const int small = std::min(rows, cols);
  const int large = std::max(rows, cols);
  std::vector<int> perm(large);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::pair<int, int>> pairs(small);
  do {
    for (int i = 0; i < small; ++i) {
      pairs[i] = rows <= cols ? std::make_pair(i, perm[i]) : std::make_pair(perm[i], i);
    }
    std::sort(pairs.begin(), pairs.end());
    double s = 0.0;
    for (const auto& [r, c] : pairs) s += cost(r, c);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline std::vector<int> random_subset(idpp::Rng& rng, int n, int min_size) {
  std::vector<int> out;
  for (;;) {
    out.clear();
    for (int i = 0; i < n; ++i) {
      if (rng.uniform() < 0.5) out.push_back(i);
    }
    if (static_cast<int>(out.size()) >= min_size) return out;
  }
}

}  // namespace test_support
