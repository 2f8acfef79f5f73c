#pragma once

#include <Eigen/Dense>
#include <vector>

#include "idpp/parallel.hpp"

namespace idpp {

// Axis-aligned box with continuous corner coordinates. Zero-area boxes are
// rejected everywhere; they indicate upstream data bugs rather than a
// legitimate IoU of zero.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const { return x_max > x_min && y_max > y_min; }
};

struct GroundTruthObject {
  BoundingBox box;
  int class_id = 0;
  int instance_id = 0;
};

// Continuous-area intersection over union. Symmetric, in [0, 1].
// Throws validation_error on degenerate boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

// Pairwise IoU matrix: unit diagonal, symmetric.
Eigen::MatrixXd iou_matrix(const std::vector<BoundingBox>& boxes,
                           Exec exec = Exec::parallel);

// Instance ids of objects whose IoU with at least one other object in the
// scene strictly exceeds tau. Default tau is 0.3.
std::vector<int> crowd_objects(const std::vector<GroundTruthObject>& gts,
                               double tau = 0.3);

}  // namespace idpp
