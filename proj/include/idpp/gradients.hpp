#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <vector>

#include "idpp/parallel.hpp"

namespace idpp {

// Analytic gradients of one scene plus the worst finite-difference deviation
// observed when validating them.
struct GradientBundle {
  Eigen::VectorXd d_ss_dq;
  Eigen::MatrixXd d_id_dV;
  double max_fd_rel_err = 0.0;
};

// Gradient of the selection loss with respect to the quality vector, with S
// held fixed: -2 (S_pos o (L_pos+I)^-1) q_pos scattered at y_pos, plus
// +2 (S_m o (L_m+I)^-1) q_m scattered at y_m (o = elementwise product).
// Entries outside the pool are exactly zero.
Eigen::VectorXd grad_ss_wrt_q(const Eigen::MatrixXd& S, const Eigen::VectorXd& q,
                              const std::vector<int>& y_pos,
                              const std::vector<int>& y_m);

// Index sets for one category's loss term: y_ck the matched representatives,
// pool the category's full candidate set.
struct ClassSets {
  std::vector<int> y_ck;
  std::vector<int> pool;
};

// Gradient of the instance-discrimination loss with respect to the feature
// rows, with q held fixed and row normalization treated as preprocessing:
// -2 lambda (L_rep^-1 o Q) V on the representative rows, +2 lambda
// ((L_s+I)^-1 o Q) V on the pool rows, plus per-class terms weighted by
// 1/per_class.size(). All index sets address rows of V.
Eigen::MatrixXd grad_id_wrt_V(const Eigen::MatrixXd& V, const Eigen::MatrixXd& iou_mat,
                              const Eigen::VectorXd& q, double lambda,
                              const std::vector<int>& y_rep, const std::vector<int>& y_s,
                              const std::map<int, ClassSets>& per_class);

// Central-difference gradient estimates, one loss evaluation pair per
// coordinate. Non-finite loss values propagate into the estimate.
Eigen::VectorXd finite_diff(const std::function<double(const Eigen::VectorXd&)>& loss_fn,
                            const Eigen::VectorXd& x, double h = 1e-6,
                            Exec exec = Exec::parallel);
Eigen::MatrixXd finite_diff(const std::function<double(const Eigen::MatrixXd&)>& loss_fn,
                            const Eigen::MatrixXd& x, double h = 1e-6,
                            Exec exec = Exec::parallel);

// max over entries of |a - f| / max(1, |a|, |f|).
double max_relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& fd);

}  // namespace idpp
