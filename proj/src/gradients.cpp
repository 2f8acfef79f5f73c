#include "idpp/gradients.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "idpp/dpp.hpp"
#include "idpp/errors.hpp"

namespace idpp {
namespace {

void check_indices(const std::vector<int>& idx, int n, const char* what) {
  for (int i : idx) {
    if (i < 0 || i >= n) throw validation_error(std::string(what) + ": index out of range");
  }
}

// Solves M^-1 through Cholesky; M must be positive definite.
Eigen::MatrixXd pd_inverse(const Eigen::MatrixXd& M, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) {
    throw numerical_error(std::string(what) + ": matrix not positive definite");
  }
  return llt.solve(Eigen::MatrixXd::Identity(M.rows(), M.cols()));
}

}  // namespace

Eigen::VectorXd grad_ss_wrt_q(const Eigen::MatrixXd& S, const Eigen::VectorXd& q,
                              const std::vector<int>& y_pos,
                              const std::vector<int>& y_m) {
  const int n = static_cast<int>(S.rows());
  if (S.cols() != n || q.size() != n) {
    throw validation_error("grad_ss_wrt_q: shape mismatch");
  }
  check_indices(y_pos, n, "grad_ss_wrt_q");
  check_indices(y_m, n, "grad_ss_wrt_q");

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
  const auto accumulate = [&](const std::vector<int>& set, double coef) {
    if (set.empty()) return;
    const Eigen::MatrixXd s_sub = select_submatrix(S, set);
    const Eigen::VectorXd q_sub = select_subvector(q, set);
    const Eigen::MatrixXd m =
        Eigen::MatrixXd(s_sub.cwiseProduct(q_sub * q_sub.transpose())) +
        Eigen::MatrixXd::Identity(set.size(), set.size());
    const Eigen::MatrixXd m_inv = pd_inverse(m, "grad_ss_wrt_q");
    const Eigen::VectorXd w = s_sub.cwiseProduct(m_inv) * q_sub;
    for (int a = 0; a < static_cast<int>(set.size()); ++a) grad(set[a]) += coef * w(a);
  };
  accumulate(y_pos, -2.0);
  accumulate(y_m, 2.0);
  return grad;
}

Eigen::MatrixXd grad_id_wrt_V(const Eigen::MatrixXd& V, const Eigen::MatrixXd& iou_mat,
                              const Eigen::VectorXd& q, double lambda,
                              const std::vector<int>& y_rep, const std::vector<int>& y_s,
                              const std::map<int, ClassSets>& per_class) {
  const int n = static_cast<int>(V.rows());
  const int r = static_cast<int>(V.cols());
  if (iou_mat.rows() != n || iou_mat.cols() != n || q.size() != n) {
    throw validation_error("grad_id_wrt_V: shape mismatch");
  }
  if (lambda < 0.0 || lambda > 1.0) {
    throw validation_error("grad_id_wrt_V: lambda outside [0, 1]");
  }
  if ((q.array() <= 0.0).any()) {
    throw validation_error("grad_id_wrt_V: qualities must be positive");
  }
  check_indices(y_rep, n, "grad_id_wrt_V");
  check_indices(y_s, n, "grad_id_wrt_V");

  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, r);
  if (lambda == 0.0) return grad;

  // coef * (inv o Q) V scattered over the set's rows, where inv is the
  // inverse of the subset kernel itself (add_identity false, the -log det
  // term) or of kernel + I (the normalizer term).
  const auto accumulate = [&](const std::vector<int>& set, double coef, bool add_identity) {
    if (set.empty()) return;
    const int k = static_cast<int>(set.size());
    const Eigen::MatrixXd v_sub = select_submatrix_rows(V, set);
    const Eigen::VectorXd q_sub = select_subvector(q, set);
    const Eigen::MatrixXd big_q = q_sub * q_sub.transpose();
    const Eigen::MatrixXd s_sub =
        lambda * (v_sub * v_sub.transpose()) + (1.0 - lambda) * select_submatrix(iou_mat, set);
    Eigen::MatrixXd m = s_sub.cwiseProduct(big_q);
    if (add_identity) m += Eigen::MatrixXd::Identity(k, k);
    const Eigen::MatrixXd m_inv =
        pd_inverse(m, add_identity ? "grad_id_wrt_V (normalizer)"
                                   : "grad_id_wrt_V (singular representative kernel)");
    const Eigen::MatrixXd g_sub = (m_inv.cwiseProduct(big_q)) * v_sub;
    for (int a = 0; a < k; ++a) grad.row(set[a]) += coef * g_sub.row(a);
  };

  accumulate(y_rep, -2.0 * lambda, false);
  accumulate(y_s, 2.0 * lambda, true);
  if (!per_class.empty()) {
    const double w = 1.0 / static_cast<double>(per_class.size());
    for (const auto& [class_id, sets] : per_class) {
      check_indices(sets.y_ck, n, "grad_id_wrt_V");
      check_indices(sets.pool, n, "grad_id_wrt_V");
      accumulate(sets.y_ck, -2.0 * lambda * w, false);
      accumulate(sets.pool, 2.0 * lambda * w, true);
    }
  }
  return grad;
}

Eigen::VectorXd finite_diff(const std::function<double(const Eigen::VectorXd&)>& loss_fn,
                            const Eigen::VectorXd& x, double h, Exec exec) {
  if (h <= 0.0) throw validation_error("finite_diff: step must be positive");
  const int n = static_cast<int>(x.size());
  Eigen::VectorXd grad(n);

  bool failed = false;
  std::string failure;
  const auto coordinate = [&](int i) {
    Eigen::VectorXd plus = x;
    Eigen::VectorXd minus = x;
    plus(i) += h;
    minus(i) -= h;
    grad(i) = (loss_fn(plus) - loss_fn(minus)) / (2.0 * h);
  };

  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      try {
        coordinate(i);
      } catch (const std::exception& e) {
#pragma omp critical
        {
          failed = true;
          failure = e.what();
        }
      }
    }
  } else {
    for (int i = 0; i < n; ++i) coordinate(i);
  }
  if (failed) throw numerical_error("finite_diff: loss evaluation failed: " + failure);
  return grad;
}

Eigen::MatrixXd finite_diff(const std::function<double(const Eigen::MatrixXd&)>& loss_fn,
                            const Eigen::MatrixXd& x, double h, Exec exec) {
  const int rows = static_cast<int>(x.rows());
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
  const auto flat_fn = [&](const Eigen::VectorXd& v) {
    return loss_fn(Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, x.cols()));
  };
  const Eigen::VectorXd grad = finite_diff(flat_fn, flat, h, exec);
  return Eigen::Map<const Eigen::MatrixXd>(grad.data(), rows, x.cols());
}

double max_relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& fd) {
  if (analytic.rows() != fd.rows() || analytic.cols() != fd.cols()) {
    throw validation_error("max_relative_error: shape mismatch");
  }
  double worst = 0.0;
  for (int j = 0; j < analytic.cols(); ++j) {
    for (int i = 0; i < analytic.rows(); ++i) {
      const double a = analytic(i, j);
      const double f = fd(i, j);
      const double scale = std::max({1.0, std::abs(a), std::abs(f)});
      worst = std::max(worst, std::abs(a - f) / scale);
    }
  }
  return worst;
}

}  // namespace idpp
