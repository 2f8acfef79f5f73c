#include "idpp/dpp.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

#include "idpp/errors.hpp"

namespace idpp {

namespace {

constexpr double kIndefiniteTol = 1e-8;
// A Cholesky pivot^2 at or below this (relative to the diagonal scale)
// marks the matrix as numerically singular.
constexpr double kSingularPivotTol = 1e-12;

void check_symmetric(const Eigen::MatrixXd& M, const char* who) {
  if (M.rows() != M.cols()) throw validation_error(std::string(who) + ": matrix not square");
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw validation_error(std::string(who) + ": matrix not symmetric");
  }
}

}  // namespace

FeatureMatrix FeatureMatrix::from_raw(const Eigen::MatrixXd& F) {
  FeatureMatrix out;
  out.V = F;
  for (int i = 0; i < F.rows(); ++i) {
    const double norm = F.row(i).norm();
    if (norm == 0.0) {
      throw validation_error("FeatureMatrix: zero-norm feature row " + std::to_string(i));
    }
    out.V.row(i) /= norm;
  }
  return out;
}

Eigen::MatrixXd feature_gram(const Eigen::MatrixXd& V, Exec exec) {
  const int n = static_cast<int>(V.rows());
  Eigen::MatrixXd G(n, n);
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 8)
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) G(i, j) = V.row(i).dot(V.row(j));
    }
  } else {
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) G(i, j) = V.row(i).dot(V.row(j));
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) G(j, i) = G(i, j);
  return G;
}

SimilarityMatrix build_similarity(const FeatureMatrix& features,
                                  const Eigen::MatrixXd& iou_mat, double lambda,
                                  PsdRepairKind repair, double epsilon, Exec exec) {
  if (lambda < 0.0 || lambda > 1.0) throw validation_error("build_similarity: lambda outside [0,1]");
  const int n = features.count();
  if (iou_mat.rows() != n || iou_mat.cols() != n) {
    throw validation_error("build_similarity: IoU matrix dimension mismatch");
  }
  for (int i = 0; i < n; ++i) {
    if (std::abs(features.V.row(i).norm() - 1.0) > 1e-9) {
      throw validation_error("build_similarity: feature row " + std::to_string(i) +
                             " is not unit-norm");
    }
  }

  SimilarityMatrix out;
  out.lambda = lambda;
  out.S = lambda * feature_gram(features.V, exec) + (1.0 - lambda) * iou_mat;
  // Exact unit diagonal; the blend above only guarantees it to rounding.
  out.S.diagonal().setOnes();

  if (n == 0) return out;

  // Cheap PSD probe first; only diagnose with an eigensolver on failure.
  Eigen::LLT<Eigen::MatrixXd> llt(out.S);
  if (llt.info() == Eigen::Success) return out;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.S);
  const double min_eig = eig.eigenvalues().minCoeff();
  if (min_eig >= 0.0) return out;  // semi-definite; Cholesky alone balked

  out.psd_repair.min_eigenvalue_before = min_eig;
  out.psd_repair.epsilon = epsilon;
  out.psd_repair.kind = repair;
  switch (repair) {
    case PsdRepairKind::none:
      break;  // leave indefinite; downstream log-dets will reject it
    case PsdRepairKind::jitter: {
      out.S.diagonal().array() += (-min_eig + epsilon);
      out.psd_repair.applied = true;
      break;
    }
    case PsdRepairKind::eigenclip: {
      Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(epsilon);
      out.S = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
      out.S = ((out.S + out.S.transpose()) / 2.0).eval();
      out.psd_repair.applied = true;
      break;
    }
  }
  return out;
}

KernelMatrix build_kernel(const SimilarityMatrix& sim, const Eigen::VectorXd& q) {
  const int n = sim.size();
  if (q.size() != n) throw validation_error("build_kernel: quality vector dimension mismatch");
  for (int i = 0; i < n; ++i) {
    if (!(q(i) > 0.0)) {
      throw validation_error("build_kernel: non-positive quality at index " + std::to_string(i));
    }
  }
  KernelMatrix out;
  out.q = q;
  out.L = sim.S.cwiseProduct(q * q.transpose());
  return out;
}

double log_det_psd(const Eigen::MatrixXd& M, bool allow_singular, double epsilon,
                   double* jitter_applied) {
  if (jitter_applied) *jitter_applied = 0.0;
  check_symmetric(M, "log_det_psd");
  const int n = static_cast<int>(M.rows());
  if (n == 0) return 0.0;

  const double diag_scale = std::max(1.0, M.diagonal().cwiseAbs().maxCoeff());

  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() == Eigen::Success) {
    const Eigen::VectorXd d = llt.matrixLLT().diagonal();
    const double min_pivot_sq = d.minCoeff() * d.minCoeff();
    if (min_pivot_sq > kSingularPivotTol * diag_scale) {
      return 2.0 * d.array().log().sum();
    }
    // fall through: numerically singular despite a completed factorization
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M, Eigen::EigenvaluesOnly);
  const double min_eig = eig.eigenvalues().minCoeff();
  if (min_eig < -kIndefiniteTol) {
    throw numerical_error("log_det_psd: indefinite matrix (min eigenvalue " +
                          std::to_string(min_eig) + ")");
  }
  if (min_eig <= kSingularPivotTol * diag_scale) {
    if (allow_singular) return -std::numeric_limits<double>::infinity();
    throw numerical_error("log_det_psd: singular matrix");
  }

  // Positive spectrum but Cholesky still failed: retry with growing jitter.
  for (double jitter : {epsilon, 10.0 * epsilon, 100.0 * epsilon}) {
    Eigen::MatrixXd Mj = M;
    Mj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> retry(Mj);
    if (retry.info() == Eigen::Success) {
      if (jitter_applied) *jitter_applied = jitter;
      return 2.0 * retry.matrixLLT().diagonal().array().log().sum();
    }
  }
  throw numerical_error("log_det_psd: factorization failed after jitter retries");
}

double dpp_log_prob(const KernelMatrix& kernel, const std::vector<int>& subset) {
  const int n = kernel.size();
  for (int i : subset) {
    if (i < 0 || i >= n) throw validation_error("dpp_log_prob: subset index out of range");
  }
  Eigen::MatrixXd L_plus_I = kernel.L;
  L_plus_I.diagonal().array() += 1.0;
  const double log_norm = log_det_psd(L_plus_I);
  if (subset.empty()) return -log_norm;
  const double log_num = log_det_psd(select_submatrix(kernel.L, subset), /*allow_singular=*/true);
  return log_num - log_norm;
}

Eigen::MatrixXd select_submatrix(const Eigen::MatrixXd& M, const std::vector<int>& idx) {
  const int k = static_cast<int>(idx.size());
  Eigen::MatrixXd out(k, k);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) out(a, b) = M(idx[a], idx[b]);
  return out;
}

Eigen::MatrixXd select_submatrix_rows(const Eigen::MatrixXd& M, const std::vector<int>& idx) {
  Eigen::MatrixXd out(static_cast<int>(idx.size()), M.cols());
  for (int a = 0; a < static_cast<int>(idx.size()); ++a) out.row(a) = M.row(idx[a]);
  return out;
}

Eigen::VectorXd select_subvector(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(static_cast<int>(idx.size()));
  for (int a = 0; a < static_cast<int>(idx.size()); ++a) out(a) = v(idx[a]);
  return out;
}

}  // namespace idpp
