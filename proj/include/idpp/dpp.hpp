#pragma once

#include <Eigen/Dense>
#include <vector>

#include "idpp/parallel.hpp"

namespace idpp {

// Row-normalized feature matrix. Rows are unit vectors so V*V^T holds
// pairwise cosine similarities.
struct FeatureMatrix {
  Eigen::MatrixXd V;  // n x r

  int count() const { return static_cast<int>(V.rows()); }
  int dim() const { return static_cast<int>(V.cols()); }

  // Normalizes each row of F to unit length. Rows with zero norm are
  // rejected (validation_error).
  static FeatureMatrix from_raw(const Eigen::MatrixXd& F);
};

enum class PsdRepairKind {
  none,
  jitter,
  eigenclip,
};

// Record of any PSD repair applied to a similarity matrix.
struct PsdRepair {
  PsdRepairKind kind = PsdRepairKind::none;
  double epsilon = 0.0;
  double min_eigenvalue_before = 0.0;
  bool applied = false;
};

// S = lambda * V*V^T + (1 - lambda) * IoU. Unit diagonal, symmetric,
// entries in [-lambda, 1].
struct SimilarityMatrix {
  Eigen::MatrixXd S;
  double lambda = 0.6;
  PsdRepair psd_repair;

  int size() const { return static_cast<int>(S.rows()); }
};

// L = S (.) q q^T with q > 0.
struct KernelMatrix {
  Eigen::MatrixXd L;
  Eigen::VectorXd q;

  int size() const { return static_cast<int>(L.rows()); }
};

// Cosine gram matrix V*V^T with per-entry dot products. The parallel
// variant writes disjoint entries, so both policies agree bitwise.
Eigen::MatrixXd feature_gram(const Eigen::MatrixXd& V, Exec exec = Exec::parallel);

// Blends visual and spatial similarity, then repairs indefiniteness with
// the configured policy (default: clip eigenvalues below epsilon up to
// epsilon). The repair, if any, is recorded on the result.
SimilarityMatrix build_similarity(const FeatureMatrix& features,
                                  const Eigen::MatrixXd& iou_mat,
                                  double lambda = 0.6,
                                  PsdRepairKind repair = PsdRepairKind::eigenclip,
                                  double epsilon = 1e-8,
                                  Exec exec = Exec::parallel);

KernelMatrix build_kernel(const SimilarityMatrix& sim, const Eigen::VectorXd& q);

// log det of a symmetric PSD matrix via Cholesky, with diagonal jitter
// retries (eps, 10 eps, 100 eps) before giving up. An empty matrix has
// determinant 1. Singular input returns -inf when allow_singular is set,
// otherwise throws numerical_error; an indefinite matrix (eigenvalue below
// -1e-8) always throws. Any jitter used is reported through jitter_applied.
double log_det_psd(const Eigen::MatrixXd& M, bool allow_singular = false,
                   double epsilon = 1e-8, double* jitter_applied = nullptr);

// log P(Y) = log det(L_Y) - log det(L + I). Empty Y has log det 0.
// Singular L_Y yields -inf (a zero-probability subset, not an error).
double dpp_log_prob(const KernelMatrix& kernel, const std::vector<int>& subset);

// Rows/columns of M at the given indices, in the given order.
Eigen::MatrixXd select_submatrix(const Eigen::MatrixXd& M, const std::vector<int>& idx);
Eigen::MatrixXd select_submatrix_rows(const Eigen::MatrixXd& M, const std::vector<int>& idx);
Eigen::VectorXd select_subvector(const Eigen::VectorXd& v, const std::vector<int>& idx);

}  // namespace idpp
