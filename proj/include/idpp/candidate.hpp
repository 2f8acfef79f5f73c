#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "idpp/geometry.hpp"

namespace idpp {

// Detection candidate: a box with per-class scores (post-softmax) and an
// appearance feature vector.
struct Candidate {
  BoundingBox box;
  Eigen::VectorXd class_scores;
  Eigen::VectorXd feature;
};

// One image worth of candidates and annotations; the unit the CLI reads
// and writes.
struct SceneData {
  std::string image_id;
  std::vector<Candidate> candidates;
  std::vector<GroundTruthObject> ground_truth;
};

// Final per-class detection, used by NMS and the evaluation metrics.
struct Detection {
  BoundingBox box;
  int class_id = 0;
  double score = 0.0;
};

// Highest-scoring class; ties go to the lowest class id.
inline int argmax_class(const Eigen::VectorXd& scores) {
  int best = 0;
  for (int c = 1; c < scores.size(); ++c) {
    if (scores(c) > scores(best)) best = c;
  }
  return best;
}

}  // namespace idpp
