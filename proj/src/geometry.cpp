#include "idpp/geometry.hpp"

#include <algorithm>
#include <set>

#include "idpp/errors.hpp"

namespace idpp {

static void check_box(const BoundingBox& b, const char* who) {
  if (!b.valid()) {
    throw validation_error(std::string(who) + ": degenerate box [" +
                           std::to_string(b.x_min) + "," + std::to_string(b.y_min) + "," +
                           std::to_string(b.x_max) + "," + std::to_string(b.y_max) + "]");
  }
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  check_box(a, "iou");
  check_box(b, "iou");
  const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

Eigen::MatrixXd iou_matrix(const std::vector<BoundingBox>& boxes, Exec exec) {
  const int n = static_cast<int>(boxes.size());
  for (const auto& b : boxes) check_box(b, "iou_matrix");
  Eigen::MatrixXd m(n, n);

  // Upper triangle only; mirrored afterwards so the matrix is bitwise
  // symmetric regardless of the execution policy.
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 8)
    for (int i = 0; i < n; ++i) {
      m(i, i) = 1.0;
      for (int j = i + 1; j < n; ++j) m(i, j) = iou(boxes[i], boxes[j]);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      m(i, i) = 1.0;
      for (int j = i + 1; j < n; ++j) m(i, j) = iou(boxes[i], boxes[j]);
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) m(j, i) = m(i, j);
  return m;
}

std::vector<int> crowd_objects(const std::vector<GroundTruthObject>& gts, double tau) {
  if (tau < 0.0 || tau > 1.0) throw validation_error("crowd_objects: tau outside [0,1]");
  std::set<int> ids;
  const int n = static_cast<int>(gts.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (iou(gts[i].box, gts[j].box) > tau) {
        ids.insert(gts[i].instance_id);
        ids.insert(gts[j].instance_id);
      }
    }
  }
  return std::vector<int>(ids.begin(), ids.end());
}

}  // namespace idpp
