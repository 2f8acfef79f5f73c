#include "idpp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "idpp/errors.hpp"
#include "idpp/geometry.hpp"

namespace idpp {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Computes row `a` of the lower Cholesky factor of S restricted to idx,
// assuming rows 0..a-1 of fac are in place. Returns false on a non-positive
// pivot (subset not positive definite). Every subset pricing in this file
// funnels through this loop with idx ascending, so a given subset always
// factors to identical bits no matter which algorithm asks.
bool chol_row(const Eigen::MatrixXd& S, const std::vector<int>& idx,
              Eigen::MatrixXd& fac, int a) {
  for (int b = 0; b <= a; ++b) {
    double sum = S(idx[a], idx[b]);
    for (int t = 0; t < b; ++t) sum -= fac(a, t) * fac(b, t);
    if (b == a) {
      if (!(sum > 0.0)) return false;
      fac(a, a) = std::sqrt(sum);
    } else {
      fac(a, b) = sum / fac(b, b);
    }
  }
  return true;
}

// sum_a (2 ln q_idx[a] + 2 ln fac_aa), accumulated in ascending index order.
double accumulate_cost(const Eigen::VectorXd& q, const std::vector<int>& idx,
                       const Eigen::MatrixXd& fac) {
  double cost = 0.0;
  for (int a = 0; a < static_cast<int>(idx.size()); ++a) {
    cost += 2.0 * std::log(q(idx[a])) + 2.0 * std::log(fac(a, a));
  }
  return cost;
}

// Cost of sel (sorted, factored in fac) with j inserted at its sorted
// position: prefix rows above the insertion point are reused, the rest
// refactored. Optionally hands back the merged set and factor.
double insertion_cost(const Eigen::MatrixXd& S, const Eigen::VectorXd& q,
                      const std::vector<int>& sel, const Eigen::MatrixXd& fac, int j,
                      std::vector<int>* out_idx = nullptr,
                      Eigen::MatrixXd* out_fac = nullptr) {
  std::vector<int> merged = sel;
  const auto at = std::lower_bound(merged.begin(), merged.end(), j);
  const int pos = static_cast<int>(at - merged.begin());
  merged.insert(at, j);

  const int k = static_cast<int>(merged.size());
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(k, k);
  for (int a = 0; a < pos; ++a) f.row(a).head(a + 1) = fac.row(a).head(a + 1);
  for (int a = pos; a < k; ++a) {
    if (!chol_row(S, merged, f, a)) return kNegInf;
  }
  const double cost = accumulate_cost(q, merged, f);
  if (out_idx) *out_idx = std::move(merged);
  if (out_fac) *out_fac = std::move(f);
  return cost;
}

void check_inputs(const SimilarityMatrix& sim, const Eigen::VectorXd& q,
                  const char* what) {
  const Eigen::MatrixXd& S = sim.S;
  const int n = static_cast<int>(S.rows());
  if (S.cols() != n || q.size() != n) {
    throw validation_error(std::string(what) + ": shape mismatch");
  }
  if (!S.allFinite() || !q.allFinite()) {
    throw validation_error(std::string(what) + ": non-finite input");
  }
  if ((q.array() <= 0.0).any()) {
    throw validation_error(std::string(what) + ": qualities must be positive");
  }
  for (int i = 0; i < n; ++i) {
    // PSD repair may nudge the diagonal off 1; reject only gross violations.
    if (S(i, i) < 0.5 || S(i, i) > 1.5) {
      throw validation_error(std::string(what) + ": similarity diagonal far from 1");
    }
    for (int j = i + 1; j < n; ++j) {
      if (std::abs(S(i, j) - S(j, i)) > 1e-9) {
        throw validation_error(std::string(what) + ": similarity not symmetric");
      }
    }
  }
}

}  // namespace

double quality_transform(double score, double beta) {
  constexpr double kSlack = 1e-9;
  if (score < -kSlack || score > 1.0 + kSlack) {
    throw validation_error("quality_transform: score outside [0, 1]");
  }
  return std::exp(beta * std::clamp(score, 0.0, 1.0));
}

double subset_cost(const SimilarityMatrix& sim, const Eigen::VectorXd& q,
                   const std::vector<int>& subset) {
  check_inputs(sim, q, "subset_cost");
  const int n = static_cast<int>(q.size());
  std::vector<int> idx = subset;
  std::sort(idx.begin(), idx.end());
  for (std::size_t a = 0; a < idx.size(); ++a) {
    if (idx[a] < 0 || idx[a] >= n) throw validation_error("subset_cost: index out of range");
    if (a > 0 && idx[a] == idx[a - 1]) throw validation_error("subset_cost: duplicate index");
  }
  const int k = static_cast<int>(idx.size());
  Eigen::MatrixXd fac = Eigen::MatrixXd::Zero(k, k);
  for (int a = 0; a < k; ++a) {
    if (!chol_row(sim.S, idx, fac, a)) return kNegInf;
  }
  return accumulate_cost(q, idx, fac);
}

SelectionResult idpp_greedy(const SimilarityMatrix& sim, const Eigen::VectorXd& q,
                            Exec exec) {
  check_inputs(sim, q, "idpp_greedy");
  const Eigen::MatrixXd& S = sim.S;
  const int n = static_cast<int>(q.size());

  SelectionResult result;
  result.method = SelectionMethod::idpp;

  std::vector<int> sel_sorted;
  Eigen::MatrixXd fac;
  std::vector<char> in_sel(n, 0);
  double current = 0.0;

  while (static_cast<int>(sel_sorted.size()) < n) {
    std::vector<double> costs(n, kNegInf);
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 4)
      for (int j = 0; j < n; ++j) {
        if (!in_sel[j]) costs[j] = insertion_cost(S, q, sel_sorted, fac, j);
      }
    } else {
      for (int j = 0; j < n; ++j) {
        if (!in_sel[j]) costs[j] = insertion_cost(S, q, sel_sorted, fac, j);
      }
    }

    int best = -1;
    for (int j = 0; j < n; ++j) {
      if (!in_sel[j] && (best < 0 || costs[j] > costs[best])) best = j;
    }
    if (best < 0 || !(costs[best] > current)) break;

    std::vector<int> merged;
    Eigen::MatrixXd merged_fac;
    const double accepted = insertion_cost(S, q, sel_sorted, fac, best, &merged, &merged_fac);
    sel_sorted = std::move(merged);
    fac = std::move(merged_fac);
    in_sel[best] = 1;
    current = accepted;
    result.selected.push_back(best);
    result.step_costs.push_back(accepted);
  }

  result.final_cost = current;
  return result;
}

SelectionResult exact_map(const SimilarityMatrix& sim, const Eigen::VectorXd& q,
                          int n_max) {
  check_inputs(sim, q, "exact_map");
  const int n = static_cast<int>(q.size());
  if (n > n_max) {
    throw validation_error("exact_map: candidate count exceeds n_max");
  }
  const Eigen::MatrixXd& S = sim.S;

  SelectionResult result;
  result.method = SelectionMethod::exact;
  result.final_cost = 0.0;

  std::vector<int> idx;
  Eigen::MatrixXd fac = Eigen::MatrixXd::Zero(n, n);

  // Depth-first over ascending index sequences; a non-positive-definite
  // subset prunes all supersets (interlacing), and strict improvement keeps
  // the first, lexicographically smallest maximizer.
  const auto dfs = [&](const auto& self, int start) -> void {
    for (int j = start; j < n; ++j) {
      idx.push_back(j);
      const int a = static_cast<int>(idx.size()) - 1;
      if (chol_row(S, idx, fac, a)) {
        const double cost = accumulate_cost(q, idx, fac);
        if (cost > result.final_cost) {
          result.final_cost = cost;
          result.selected = idx;
        }
        self(self, j + 1);
      }
      idx.pop_back();
    }
  };
  dfs(dfs, 0);
  return result;
}

SelectionResult nms(const std::vector<Detection>& detections, double tau_nms) {
  if (tau_nms < 0.0 || tau_nms > 1.0) {
    throw validation_error("nms: tau_nms outside [0, 1]");
  }
  const int n = static_cast<int>(detections.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (detections[a].score != detections[b].score) {
      return detections[a].score > detections[b].score;
    }
    return a < b;
  });

  SelectionResult result;
  result.method = SelectionMethod::nms;
  for (int i : order) {
    bool suppressed = false;
    for (int k : result.selected) {
      if (detections[k].class_id == detections[i].class_id &&
          iou(detections[k].box, detections[i].box) > tau_nms) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) result.selected.push_back(i);
  }
  return result;
}

ScenePreparation prepare_scene(const SceneData& scene, double lambda, double beta,
                               bool raw_scores, PsdRepairKind repair, double epsilon,
                               Exec exec) {
  const int n = static_cast<int>(scene.candidates.size());
  if (n == 0) {
    ScenePreparation prep;
    prep.sim.S.resize(0, 0);
    prep.sim.lambda = lambda;
    prep.q.resize(0);
    return prep;
  }

  const int r = static_cast<int>(scene.candidates[0].feature.size());
  Eigen::MatrixXd raw(n, r);
  std::vector<BoundingBox> boxes;
  boxes.reserve(n);
  Eigen::VectorXd q(n);
  for (int i = 0; i < n; ++i) {
    const Candidate& c = scene.candidates[i];
    if (c.feature.size() != r) {
      throw validation_error("prepare_scene: inconsistent feature dimensions");
    }
    raw.row(i) = c.feature.transpose();
    boxes.push_back(c.box);
    const double top = c.class_scores.maxCoeff();
    // Raw mode feeds the score straight through to demonstrate that
    // sub-unit qualities select nothing; the floor only avoids log(0).
    q(i) = raw_scores ? std::max(top, 1e-300) : quality_transform(top, beta);
  }

  ScenePreparation prep;
  const FeatureMatrix features = FeatureMatrix::from_raw(raw);
  const Eigen::MatrixXd overlaps = iou_matrix(boxes, exec);
  prep.sim = build_similarity(features, overlaps, lambda, repair, epsilon, exec);
  prep.q = q;
  return prep;
}

}  // namespace idpp
