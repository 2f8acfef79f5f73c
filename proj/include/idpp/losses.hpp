#pragma once

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "idpp/dpp.hpp"

namespace idpp {

// One (RoI, category) entry produced by expanding per-RoI top-m categories.
struct ScoredEntry {
  int roi = 0;
  int class_id = 0;
  double score = 0.0;
};

// Expanded candidate pool: entries lists the top-m category entries of every
// RoI (grouped by RoI, score-descending within; score ties to the lowest
// class id). y_pos indexes each RoI's top-1 entry within entries. The full
// entry range is the selection pool itself.
struct TopMSelection {
  std::vector<ScoredEntry> entries;
  std::vector<int> y_pos;
};

// Expands per-RoI top-m categories from an n_roi x n_classes score matrix.
// Requires 1 <= m <= n_classes.
TopMSelection select_top_m(const Eigen::MatrixXd& scores, int m);

// Negative log-likelihood of the positive subset under the kernel built over
// the expanded pool: -log det(L_pos + I) + log det(L + I). Non-negative.
double ss_loss(const KernelMatrix& kernel, const std::vector<int>& y_pos);

// Instance-discrimination loss value. A singular representative submatrix
// (duplicate features) yields value = +inf with the singular flag set, so a
// trainer can detect feature collapse instead of crashing.
struct IdLoss {
  double value = 0.0;
  bool singular = false;
};

// -log det(L_rep) + log det(L + I) over the gt-intersecting pool. y_rep must
// be nonempty.
IdLoss id_loss_all(const KernelMatrix& kernel, const std::vector<int>& y_rep);

// Same objective restricted to a single category's candidate pool.
inline IdLoss id_loss_ic(const KernelMatrix& kernel, const std::vector<int>& y_ck) {
  return id_loss_all(kernel, y_ck);
}

// id_all plus the mean of the per-class losses. An empty map (no class with
// a matched representative) contributes nothing.
double id_loss_total(double id_all, const std::map<int, double>& id_ic_per_class);

// Per-iteration loss record kept by the toy trainer.
struct LossBundle {
  double ss = 0.0;
  double id_all = 0.0;
  std::map<int, double> id_ic_per_class;
  double id_total = 0.0;
  double smooth_l1 = 0.0;
  double cross_entropy = 0.0;
};

// Standard smooth-L1 summed over coordinates: 0.5 d^2 for |d| < 1, else
// |d| - 0.5.
double smooth_l1(const Eigen::VectorXd& pred, const Eigen::VectorXd& target);

// Softmax cross-entropy via a max-shifted log-sum-exp.
double cross_entropy(const Eigen::VectorXd& logits, int label);

// Max-shifted softmax.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// Per-RoI inputs for the multi-task objective: two classification heads plus
// their box-regression targets. Label 0 means background; a background label
// zeroes that head's regression term.
struct RoiLossTerms {
  Eigen::VectorXd base_logits;
  int base_label = 0;
  Eigen::VectorXd base_box_pred;
  Eigen::VectorXd base_box_target;
  Eigen::VectorXd refine_logits;
  int refine_label = 0;
  Eigen::VectorXd refine_box_pred;
  Eigen::VectorXd refine_box_target;
};

// Unnormalized sum over RoIs of both classification losses and the
// foreground-gated regression losses.
double multi_task_loss(const std::vector<RoiLossTerms>& rois);

}  // namespace idpp
