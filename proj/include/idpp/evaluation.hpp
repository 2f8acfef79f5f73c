#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "idpp/candidate.hpp"

namespace idpp {

// One image's detections and annotations, the unit of metric aggregation.
struct ImageEval {
  std::string image_id;
  std::vector<Detection> detections;
  std::vector<GroundTruthObject> ground_truth;
};

// One point of a crowd-recall curve. defined is false when no ground-truth
// object qualifies at this threshold, in which case recall is meaningless.
struct RecallPoint {
  double threshold = 0.0;
  double recall = 0.0;
  bool defined = false;
};

struct EvalReport {
  std::map<int, double> ap_per_class;
  double map = 0.0;
  double coco_map = 0.0;
  std::vector<RecallPoint> recall_curve;
  std::optional<double> correct_box_prob;
  int n_images = 0;
  int n_crowd_images = 0;
};

// Single-class average precision at one IoU threshold: detections sorted by
// descending score greedily claim the highest-IoU unmatched ground truth;
// duplicates count as false positives. Area under the all-points
// interpolated precision-recall curve. Requires at least one ground truth.
double average_precision(const std::vector<Detection>& detections,
                         const std::vector<BoundingBox>& gts, double iou_thresh);

// Mean of average_precision over IoU thresholds 0.50, 0.55, ..., 0.95.
double coco_ap(const std::vector<Detection>& detections,
               const std::vector<BoundingBox>& gts);

// Recall restricted to crowded objects: at each threshold t, a ground truth
// qualifies when some other ground truth in its image overlaps it with
// IoU > t (any class); it counts as detected when some same-class detection
// reaches IoU >= 0.5. Per-class recalls are averaged over classes.
std::vector<RecallPoint> crowd_recall(const std::vector<ImageEval>& images,
                                      const std::vector<double>& overlap_thresholds);

// Among entries with score strictly above score_thresh, the fraction whose
// box overlaps a same-class ground truth with IoU >= 0.5. Empty denominator
// yields nullopt.
std::optional<double> correct_box_probability(const std::vector<Detection>& entries,
                                              const std::vector<GroundTruthObject>& gts,
                                              double score_thresh = 0.01);

// One entry per (candidate, class) pair, carrying that class's score.
std::vector<Detection> expand_candidates(const std::vector<Candidate>& candidates);

// Ids of images containing at least one ground-truth pair with IoU
// strictly above crowd_tau, in input order.
std::vector<std::string> build_crowd_subset(const std::vector<ImageEval>& images,
                                            double crowd_tau = 0.3);

// Full dataset report: per-class AP at IoU 0.5 pooled across images, its
// mean, the ten-threshold mean, the crowd-recall curve, and the pooled
// correct-box probability of the detections themselves.
EvalReport evaluate(const std::vector<ImageEval>& images, double crowd_tau = 0.3,
                    const std::vector<double>& recall_thresholds = {0.0, 0.1, 0.2, 0.3, 0.4},
                    double score_thresh = 0.01);

}  // namespace idpp
