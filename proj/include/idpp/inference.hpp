#pragma once

#include <Eigen/Dense>
#include <vector>

#include "idpp/candidate.hpp"
#include "idpp/dpp.hpp"
#include "idpp/parallel.hpp"

namespace idpp {

enum class SelectionMethod { idpp, exact, nms };

struct SelectionResult {
  // Greedy: acceptance order. Exact: ascending. NMS: descending score order.
  std::vector<int> selected;
  double final_cost = 0.0;
  // Greedy only: cost after each acceptance, strictly increasing.
  std::vector<double> step_costs;
  SelectionMethod method = SelectionMethod::idpp;
};

// Maps a softmax score into a usable quality: q = exp(beta * score). Raw
// softmax scores lie in (0, 1), where every nonempty subset prices below the
// empty set and selection degenerates; exponentiation lifts them above 1.
double quality_transform(double score, double beta);

// Greedy maximum-cost selection: starting from the empty set (cost 0),
// repeatedly add the candidate maximizing the subset cost, accepting only
// strict improvements; the first rejection terminates the loop. Ties go to
// the smallest index.
SelectionResult idpp_greedy(const SimilarityMatrix& sim, const Eigen::VectorXd& q,
                            Exec exec = Exec::parallel);

// Exhaustive maximum-cost subset over all 2^n subsets; the brute-force
// oracle for idpp_greedy. Refuses n > n_max.
SelectionResult exact_map(const SimilarityMatrix& sim, const Eigen::VectorXd& q,
                          int n_max = 15);

// Classic per-class greedy suppression: walk detections by descending score
// (ties by index), keep a box unless a kept box of the same class overlaps
// it with IoU > tau_nms.
SelectionResult nms(const std::vector<Detection>& detections, double tau_nms);

// Cost of one subset: sum_i 2 ln q_i + ln det(S_Y), with the empty set at 0
// and non-positive-definite S_Y at -inf. Greedy and exact selection price
// subsets through this same factorization, so their costs agree bitwise.
double subset_cost(const SimilarityMatrix& sim, const Eigen::VectorXd& q,
                   const std::vector<int>& subset);

// Per-scene assembly for the CLI and trainer: row-normalized features and
// box overlaps blended into S, plus qualities from per-candidate max scores.
// raw_scores skips quality_transform to expose the degenerate regime.
struct ScenePreparation {
  SimilarityMatrix sim;
  Eigen::VectorXd q;
};
ScenePreparation prepare_scene(const SceneData& scene, double lambda, double beta,
                               bool raw_scores, PsdRepairKind repair, double epsilon,
                               Exec exec = Exec::parallel);

}  // namespace idpp
