#include "idpp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "idpp/errors.hpp"
#include "idpp/geometry.hpp"

namespace idpp {
namespace {

struct GroupedDet {
  int group = 0;
  int order = 0;
  BoundingBox box;
  double score = 0.0;
};

// AP over detection groups (one group per image); matching never crosses
// groups. All inputs belong to a single class.
double ap_core(std::vector<GroupedDet> dets,
               const std::vector<std::vector<BoundingBox>>& gts_per_group,
               double iou_thresh) {
  int n_gt = 0;
  for (const auto& g : gts_per_group) n_gt += static_cast<int>(g.size());
  if (n_gt == 0) throw validation_error("average_precision: no ground truth");
  if (dets.empty()) return 0.0;

  std::sort(dets.begin(), dets.end(), [](const GroupedDet& a, const GroupedDet& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.group != b.group) return a.group < b.group;
    return a.order < b.order;
  });

  std::vector<std::vector<char>> claimed;
  claimed.reserve(gts_per_group.size());
  for (const auto& g : gts_per_group) claimed.emplace_back(g.size(), 0);

  const int n_det = static_cast<int>(dets.size());
  std::vector<double> precision(n_det), recall(n_det);
  int tp = 0;
  for (int k = 0; k < n_det; ++k) {
    const GroupedDet& d = dets[k];
    const std::vector<BoundingBox>& gts = gts_per_group[d.group];
    int best = -1;
    double best_overlap = 0.0;
    for (int g = 0; g < static_cast<int>(gts.size()); ++g) {
      if (claimed[d.group][g]) continue;
      const double o = iou(d.box, gts[g]);
      if (o > best_overlap) {
        best_overlap = o;
        best = g;
      }
    }
    if (best >= 0 && best_overlap >= iou_thresh) {
      claimed[d.group][best] = 1;
      ++tp;
    }
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(n_gt);
  }

  // All-points interpolation: walk backwards carrying the precision
  // envelope, adding area at each recall increment.
  double ap = 0.0;
  double envelope = 0.0;
  for (int k = n_det - 1; k >= 0; --k) {
    envelope = std::max(envelope, precision[k]);
    const double prev_recall = k > 0 ? recall[k - 1] : 0.0;
    if (recall[k] > prev_recall) ap += (recall[k] - prev_recall) * envelope;
  }
  return ap;
}

std::vector<GroupedDet> single_group(const std::vector<Detection>& detections) {
  std::vector<GroupedDet> out;
  out.reserve(detections.size());
  for (int i = 0; i < static_cast<int>(detections.size()); ++i) {
    out.push_back({0, i, detections[i].box, detections[i].score});
  }
  return out;
}

struct BoxCounts {
  int total = 0;
  int correct = 0;
};

BoxCounts count_correct_boxes(const std::vector<Detection>& entries,
                              const std::vector<GroundTruthObject>& gts,
                              double score_thresh) {
  BoxCounts counts;
  for (const Detection& e : entries) {
    if (!(e.score > score_thresh)) continue;
    ++counts.total;
    for (const GroundTruthObject& gt : gts) {
      if (gt.class_id == e.class_id && iou(e.box, gt.box) >= 0.5) {
        ++counts.correct;
        break;
      }
    }
  }
  return counts;
}

bool has_crowd_pair(const std::vector<GroundTruthObject>& gts, double tau) {
  for (std::size_t a = 0; a < gts.size(); ++a) {
    for (std::size_t b = a + 1; b < gts.size(); ++b) {
      if (iou(gts[a].box, gts[b].box) > tau) return true;
    }
  }
  return false;
}

}  // namespace

double average_precision(const std::vector<Detection>& detections,
                         const std::vector<BoundingBox>& gts, double iou_thresh) {
  if (iou_thresh <= 0.0 || iou_thresh >= 1.0) {
    throw validation_error("average_precision: iou_thresh outside (0, 1)");
  }
  return ap_core(single_group(detections), {gts}, iou_thresh);
}

double coco_ap(const std::vector<Detection>& detections,
               const std::vector<BoundingBox>& gts) {
  double total = 0.0;
  for (int k = 0; k < 10; ++k) {
    total += ap_core(single_group(detections), {gts}, 0.5 + 0.05 * k);
  }
  return total / 10.0;
}

std::vector<RecallPoint> crowd_recall(const std::vector<ImageEval>& images,
                                      const std::vector<double>& overlap_thresholds) {
  for (std::size_t i = 0; i < overlap_thresholds.size(); ++i) {
    const double t = overlap_thresholds[i];
    if (t < 0.0 || t > 1.0) throw validation_error("crowd_recall: threshold outside [0, 1]");
    if (i > 0 && t <= overlap_thresholds[i - 1]) {
      throw validation_error("crowd_recall: thresholds must be ascending");
    }
  }

  std::vector<RecallPoint> curve;
  for (const double t : overlap_thresholds) {
    std::map<int, int> qualifying, detected;
    for (const ImageEval& image : images) {
      const auto& gts = image.ground_truth;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        bool crowded = false;
        for (std::size_t o = 0; o < gts.size() && !crowded; ++o) {
          if (o != g && iou(gts[g].box, gts[o].box) > t) crowded = true;
        }
        if (!crowded) continue;
        qualifying[gts[g].class_id] += 1;
        for (const Detection& d : image.detections) {
          if (d.class_id == gts[g].class_id && iou(d.box, gts[g].box) >= 0.5) {
            detected[gts[g].class_id] += 1;
            break;
          }
        }
      }
    }

    RecallPoint point;
    point.threshold = t;
    if (!qualifying.empty()) {
      double sum = 0.0;
      for (const auto& [class_id, count] : qualifying) {
        sum += static_cast<double>(detected[class_id]) / static_cast<double>(count);
      }
      point.recall = sum / static_cast<double>(qualifying.size());
      point.defined = true;
    }
    curve.push_back(point);
  }
  return curve;
}

std::optional<double> correct_box_probability(const std::vector<Detection>& entries,
                                              const std::vector<GroundTruthObject>& gts,
                                              double score_thresh) {
  const BoxCounts counts = count_correct_boxes(entries, gts, score_thresh);
  if (counts.total == 0) return std::nullopt;
  return static_cast<double>(counts.correct) / static_cast<double>(counts.total);
}

std::vector<Detection> expand_candidates(const std::vector<Candidate>& candidates) {
  std::vector<Detection> out;
  for (const Candidate& c : candidates) {
    for (int k = 0; k < c.class_scores.size(); ++k) {
      out.push_back({c.box, k, c.class_scores(k)});
    }
  }
  return out;
}

std::vector<std::string> build_crowd_subset(const std::vector<ImageEval>& images,
                                            double crowd_tau) {
  if (crowd_tau < 0.0 || crowd_tau > 1.0) {
    throw validation_error("build_crowd_subset: crowd_tau outside [0, 1]");
  }
  std::vector<std::string> out;
  for (const ImageEval& image : images) {
    if (has_crowd_pair(image.ground_truth, crowd_tau)) out.push_back(image.image_id);
  }
  return out;
}

EvalReport evaluate(const std::vector<ImageEval>& images, double crowd_tau,
                    const std::vector<double>& recall_thresholds, double score_thresh) {
  EvalReport report;
  report.n_images = static_cast<int>(images.size());
  report.n_crowd_images = static_cast<int>(build_crowd_subset(images, crowd_tau).size());

  std::set<int> classes;
  for (const ImageEval& image : images) {
    for (const GroundTruthObject& gt : image.ground_truth) classes.insert(gt.class_id);
  }

  double coco_sum = 0.0;
  for (const int class_id : classes) {
    std::vector<GroupedDet> dets;
    std::vector<std::vector<BoundingBox>> gts_per_group(images.size());
    for (int g = 0; g < static_cast<int>(images.size()); ++g) {
      int order = 0;
      for (const Detection& d : images[g].detections) {
        if (d.class_id == class_id) dets.push_back({g, order++, d.box, d.score});
      }
      for (const GroundTruthObject& gt : images[g].ground_truth) {
        if (gt.class_id == class_id) gts_per_group[g].push_back(gt.box);
      }
    }
    report.ap_per_class[class_id] = ap_core(dets, gts_per_group, 0.5);
    double class_coco = 0.0;
    for (int k = 0; k < 10; ++k) class_coco += ap_core(dets, gts_per_group, 0.5 + 0.05 * k);
    coco_sum += class_coco / 10.0;
  }
  if (!classes.empty()) {
    double sum = 0.0;
    for (const auto& [class_id, ap] : report.ap_per_class) sum += ap;
    report.map = sum / static_cast<double>(classes.size());
    report.coco_map = coco_sum / static_cast<double>(classes.size());
  }

  report.recall_curve = crowd_recall(images, recall_thresholds);

  BoxCounts pooled;
  for (const ImageEval& image : images) {
    const BoxCounts counts =
        count_correct_boxes(image.detections, image.ground_truth, score_thresh);
    pooled.total += counts.total;
    pooled.correct += counts.correct;
  }
  if (pooled.total > 0) {
    report.correct_box_prob =
        static_cast<double>(pooled.correct) / static_cast<double>(pooled.total);
  }
  return report;
}

}  // namespace idpp
