#include "idpp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "idpp/errors.hpp"

namespace idpp {
namespace {

void check_subset(const std::vector<int>& idx, int n, const char* what) {
  std::vector<char> seen(n, 0);
  for (int i : idx) {
    if (i < 0 || i >= n) throw validation_error(std::string(what) + ": index out of range");
    if (seen[i]) throw validation_error(std::string(what) + ": duplicate index");
    seen[i] = 1;
  }
}

}  // namespace

TopMSelection select_top_m(const Eigen::MatrixXd& scores, int m) {
  const int n_roi = static_cast<int>(scores.rows());
  const int n_classes = static_cast<int>(scores.cols());
  if (m < 1 || m > n_classes) {
    throw validation_error("select_top_m: m must lie in [1, n_classes]");
  }

  TopMSelection out;
  out.entries.reserve(static_cast<std::size_t>(n_roi) * m);
  std::vector<int> order(n_classes);
  for (int roi = 0; roi < n_roi; ++roi) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (scores(roi, a) != scores(roi, b)) return scores(roi, a) > scores(roi, b);
      return a < b;
    });
    out.y_pos.push_back(static_cast<int>(out.entries.size()));
    for (int rank = 0; rank < m; ++rank) {
      out.entries.push_back({roi, order[rank], scores(roi, order[rank])});
    }
  }
  return out;
}

double ss_loss(const KernelMatrix& kernel, const std::vector<int>& y_pos) {
  const int n = kernel.size();
  check_subset(y_pos, n, "ss_loss");
  const Eigen::MatrixXd sub = select_submatrix(kernel.L, y_pos);
  const Eigen::MatrixXd pos_plus_i =
      sub + Eigen::MatrixXd::Identity(sub.rows(), sub.cols());
  const Eigen::MatrixXd full_plus_i =
      kernel.L + Eigen::MatrixXd::Identity(n, n);
  return -log_det_psd(pos_plus_i) + log_det_psd(full_plus_i);
}

IdLoss id_loss_all(const KernelMatrix& kernel, const std::vector<int>& y_rep) {
  const int n = kernel.size();
  if (y_rep.empty()) throw validation_error("id_loss_all: empty representative set");
  check_subset(y_rep, n, "id_loss_all");

  const Eigen::MatrixXd sub = select_submatrix(kernel.L, y_rep);
  const double log_det_rep = log_det_psd(sub, /*allow_singular=*/true);
  const Eigen::MatrixXd full_plus_i =
      kernel.L + Eigen::MatrixXd::Identity(n, n);
  const double log_norm = log_det_psd(full_plus_i);

  IdLoss out;
  if (std::isinf(log_det_rep)) {
    out.value = std::numeric_limits<double>::infinity();
    out.singular = true;
  } else {
    out.value = -log_det_rep + log_norm;
  }
  return out;
}

double id_loss_total(double id_all, const std::map<int, double>& id_ic_per_class) {
  if (id_ic_per_class.empty()) return id_all;
  double sum = 0.0;
  for (const auto& [class_id, value] : id_ic_per_class) sum += value;
  return id_all + sum / static_cast<double>(id_ic_per_class.size());
}

double smooth_l1(const Eigen::VectorXd& pred, const Eigen::VectorXd& target) {
  if (pred.size() != target.size()) {
    throw validation_error("smooth_l1: size mismatch");
  }
  double total = 0.0;
  for (int i = 0; i < pred.size(); ++i) {
    const double d = std::abs(pred(i) - target(i));
    total += d < 1.0 ? 0.5 * d * d : d - 0.5;
  }
  return total;
}

double cross_entropy(const Eigen::VectorXd& logits, int label) {
  if (label < 0 || label >= logits.size()) {
    throw validation_error("cross_entropy: label out of range");
  }
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(label);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

double multi_task_loss(const std::vector<RoiLossTerms>& rois) {
  double total = 0.0;
  for (const RoiLossTerms& roi : rois) {
    total += cross_entropy(roi.base_logits, roi.base_label);
    if (roi.base_label > 0) total += smooth_l1(roi.base_box_pred, roi.base_box_target);
    total += cross_entropy(roi.refine_logits, roi.refine_label);
    if (roi.refine_label > 0) total += smooth_l1(roi.refine_box_pred, roi.refine_box_target);
  }
  return total;
}

}  // namespace idpp
