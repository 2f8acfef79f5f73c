#include "idpp/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "idpp/dpp.hpp"
#include "idpp/errors.hpp"
#include "idpp/geometry.hpp"
#include "idpp/gradients.hpp"
#include "idpp/inference.hpp"
#include "idpp/matching.hpp"
#include "idpp/rng.hpp"

namespace idpp {
namespace {

constexpr int kMaxRetries = 64;

void check_spec(const SceneSpec& spec) {
  if (spec.n_objects < 1 || spec.n_classes < 1 || spec.candidates_per_object < 1 ||
      spec.feature_dim < 1) {
    throw validation_error("generate_scene: counts must be positive");
  }
  if (spec.overlap_level < 0.0 || spec.overlap_level > 1.0) {
    throw validation_error("generate_scene: overlap_level outside [0, 1]");
  }
  if (spec.jitter_scale < 0.0 || spec.image_extent <= 0.0) {
    throw validation_error("generate_scene: invalid geometry parameters");
  }
}

// Positions of subset members within a sorted pool; subset must be a subset
// of pool (guaranteed by how the caller builds both).
std::vector<int> positions_in(const std::vector<int>& pool, const std::vector<int>& subset) {
  std::vector<int> out;
  out.reserve(subset.size());
  for (int s : subset) {
    const auto it = std::lower_bound(pool.begin(), pool.end(), s);
    if (it == pool.end() || *it != s) {
      throw numerical_error("train_toy: representative index escaped its pool");
    }
    out.push_back(static_cast<int>(it - pool.begin()));
  }
  return out;
}

Eigen::VectorXd box_corners(const BoundingBox& b) {
  Eigen::VectorXd v(4);
  v << b.x_min, b.y_min, b.x_max, b.y_max;
  return v;
}

// Per-scene constants: geometry, targets, and the score-independent index
// sets. Boxes never move during toy training, so all of this is fixed.
struct SceneContext {
  int n = 0;
  int n_classes = 0;
  std::vector<GroundTruthObject> gts;
  Eigen::MatrixXd iou_full;
  std::vector<int> labels;
  double smooth_l1_value = 0.0;
  std::vector<int> y_s;
  std::vector<int> y_rep;
};

SceneContext build_context(const SceneData& scene) {
  SceneContext ctx;
  ctx.n = static_cast<int>(scene.candidates.size());
  if (ctx.n == 0) throw validation_error("train_toy: scene has no candidates");
  if (scene.ground_truth.empty()) throw validation_error("train_toy: scene has no ground truth");
  ctx.n_classes = static_cast<int>(scene.candidates[0].class_scores.size());
  ctx.gts = scene.ground_truth;

  std::vector<BoundingBox> boxes;
  boxes.reserve(ctx.n);
  for (const Candidate& c : scene.candidates) boxes.push_back(c.box);
  ctx.iou_full = iou_matrix(boxes);

  for (int i = 0; i < ctx.n; ++i) {
    int best_gt = 0;
    double best_overlap = -1.0;
    for (int g = 0; g < static_cast<int>(ctx.gts.size()); ++g) {
      const double o = iou(boxes[i], ctx.gts[g].box);
      if (o > best_overlap) {
        best_overlap = o;
        best_gt = g;
      }
    }
    // Only candidates localizing some object (overlap >= 0.5, the same bar
    // match_representatives uses) carry a class label; the rest have no
    // class supervision and their logits move only through the selection
    // loss. Label -1 marks an unsupervised candidate.
    if (best_overlap >= 0.5) {
      ctx.labels.push_back(ctx.gts[best_gt].class_id);
      ctx.smooth_l1_value +=
          smooth_l1(box_corners(boxes[i]), box_corners(ctx.gts[best_gt].box));
    } else {
      ctx.labels.push_back(-1);
    }
    if (best_overlap > 0.0) ctx.y_s.push_back(i);
  }
  if (ctx.y_s.empty()) {
    throw validation_error("train_toy: no candidate intersects any ground truth");
  }
  ctx.y_rep = match_representatives(scene.candidates, ctx.gts);
  if (ctx.y_rep.empty()) {
    throw validation_error("train_toy: no representative candidate matched");
  }
  return ctx;
}

std::vector<Candidate> with_scores(const SceneData& scene, const Eigen::MatrixXd& logits) {
  std::vector<Candidate> out = scene.candidates;
  for (int i = 0; i < static_cast<int>(out.size()); ++i) {
    out[i].class_scores = softmax(logits.row(i).transpose());
  }
  return out;
}

// Per-class pools and matched representatives under the given scores; only
// classes with at least one matched representative appear.
std::map<int, ClassSets> class_sets(const std::vector<Candidate>& candidates,
                                    const std::vector<GroundTruthObject>& gts) {
  std::map<int, ClassSets> out;
  std::map<int, std::vector<int>> pools;
  for (int i = 0; i < static_cast<int>(candidates.size()); ++i) {
    pools[argmax_class(candidates[i].class_scores)].push_back(i);
  }
  for (const auto& [class_id, pool] : pools) {
    std::vector<int> y_ck = match_representatives(candidates, gts, class_id);
    if (!y_ck.empty()) out[class_id] = ClassSets{std::move(y_ck), pool};
  }
  return out;
}

struct IdEval {
  double id_all = 0.0;
  std::map<int, double> per_class;
  double id_total = 0.0;
  bool singular = false;
};

IdEval eval_id(const SceneContext& ctx, const Eigen::MatrixXd& gram,
               const Eigen::VectorXd& q, double lambda,
               const std::map<int, ClassSets>& per_class) {
  const Eigen::MatrixXd S = lambda * gram + (1.0 - lambda) * ctx.iou_full;
  const Eigen::MatrixXd L = S.cwiseProduct(q * q.transpose());

  IdEval out;
  const KernelMatrix kernel_s{select_submatrix(L, ctx.y_s), select_subvector(q, ctx.y_s)};
  const IdLoss all = id_loss_all(kernel_s, positions_in(ctx.y_s, ctx.y_rep));
  out.id_all = all.value;
  out.singular = all.singular;
  for (const auto& [class_id, sets] : per_class) {
    const KernelMatrix kernel_k{select_submatrix(L, sets.pool),
                                select_subvector(q, sets.pool)};
    const IdLoss ic = id_loss_ic(kernel_k, positions_in(sets.pool, sets.y_ck));
    out.per_class[class_id] = ic.value;
    out.singular = out.singular || ic.singular;
  }
  out.id_total = id_loss_total(out.id_all, out.per_class);
  return out;
}

Eigen::VectorXd qualities_from_scores(const Eigen::MatrixXd& scores, double beta) {
  Eigen::VectorXd q(scores.rows());
  for (int i = 0; i < scores.rows(); ++i) {
    q(i) = quality_transform(scores.row(i).maxCoeff(), beta);
  }
  return q;
}

struct Phase1Eval {
  double ss = 0.0;
  double ce = 0.0;
  Eigen::MatrixXd d_logits;
};

// Cross-entropy plus the selection loss at the current logits. The gradient
// treats the similarity matrix and the top-m sets as fixed; only the score
// pathway (q through softmax) is differentiated.
Phase1Eval eval_phase1(const SceneContext& ctx, const Eigen::MatrixXd& gram,
                       const Eigen::MatrixXd& logits, int m, double beta,
                       double lambda, double lambda_ss_t, bool want_grad) {
  const int n = ctx.n;
  const int n_c = ctx.n_classes;
  Phase1Eval out;
  out.d_logits = Eigen::MatrixXd::Zero(n, n_c);

  Eigen::MatrixXd scores(n, n_c);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd row_logits = logits.row(i).transpose();
    scores.row(i) = softmax(row_logits).transpose();
    if (ctx.labels[i] < 0) continue;
    out.ce += cross_entropy(row_logits, ctx.labels[i]);
    if (want_grad) {
      out.d_logits.row(i) = scores.row(i);
      out.d_logits(i, ctx.labels[i]) -= 1.0;
    }
  }

  const TopMSelection topm = select_top_m(scores, m);
  const int n_entries = static_cast<int>(topm.entries.size());
  Eigen::MatrixXd s_entries(n_entries, n_entries);
  Eigen::VectorXd q_entries(n_entries);
  for (int a = 0; a < n_entries; ++a) {
    const int ra = topm.entries[a].roi;
    q_entries(a) = quality_transform(topm.entries[a].score, beta);
    for (int b = 0; b < n_entries; ++b) {
      const int rb = topm.entries[b].roi;
      s_entries(a, b) = lambda * gram(ra, rb) + (1.0 - lambda) * ctx.iou_full(ra, rb);
    }
  }
  const KernelMatrix kernel{
      s_entries.cwiseProduct(q_entries * q_entries.transpose()), q_entries};
  out.ss = ss_loss(kernel, topm.y_pos);

  if (want_grad && lambda_ss_t > 0.0) {
    std::vector<int> y_m(n_entries);
    for (int e = 0; e < n_entries; ++e) y_m[e] = e;
    const Eigen::VectorXd g_q = grad_ss_wrt_q(s_entries, q_entries, topm.y_pos, y_m);

    Eigen::MatrixXd d_scores = Eigen::MatrixXd::Zero(n, n_c);
    for (int e = 0; e < n_entries; ++e) {
      // dq/ds = beta * q for q = exp(beta * s)
      d_scores(topm.entries[e].roi, topm.entries[e].class_id) +=
          g_q(e) * beta * q_entries(e);
    }
    for (int i = 0; i < n; ++i) {
      const Eigen::RowVectorXd s = scores.row(i);
      const Eigen::RowVectorXd g = d_scores.row(i);
      const double pull = g.dot(s);
      out.d_logits.row(i) += lambda_ss_t * (s.cwiseProduct(g) - pull * s);
    }
  }
  return out;
}

void renormalize_rows(Eigen::MatrixXd& V, int iteration) {
  for (int i = 0; i < V.rows(); ++i) {
    const double norm = V.row(i).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw numerical_error("train_toy: feature row " + std::to_string(i) +
                            " collapsed at iteration " + std::to_string(iteration));
    }
    V.row(i) /= norm;
  }
}

}  // namespace

GeneratedScene generate_scene(const SceneSpec& spec) {
  check_spec(spec);
  Rng rng(spec.rng_seed);
  const double extent = spec.image_extent;
  const double margin = 0.02 * extent;
  const double ov = spec.overlap_level;

  std::vector<GroundTruthObject> gts;
  for (int i = 0; i < spec.n_objects; ++i) {
    const bool is_partner = (i % 2 == 1) && ov > 0.0;
    if (is_partner) {
      const GroundTruthObject& prev = gts.back();
      const double w = prev.box.width();
      const double h = prev.box.height();
      // A pure horizontal shift dx on equal boxes gives IoU (w-dx)/(w+dx),
      // which meets ov exactly at dx_max; sampled fractions below 1 land
      // strictly above, and a small vertical shift is verified afterwards.
      const double dx_max = w * (1.0 - ov) / (1.0 + ov);
      bool placed = false;
      for (int t = 0; t < kMaxRetries && !placed; ++t) {
        const double dx = rng.uniform(0.25, 0.95) * dx_max;
        const double dy = rng.uniform(-0.05, 0.05) * h;
        const BoundingBox box{prev.box.x_min + dx, prev.box.y_min + dy,
                              prev.box.x_max + dx, prev.box.y_max + dy};
        if (box.x_max <= extent - margin && box.y_min >= margin &&
            box.y_max <= extent - margin && iou(prev.box, box) >= ov) {
          gts.push_back({box, prev.class_id, i});
          placed = true;
        }
      }
      if (!placed) {
        const double dx = 0.5 * dx_max;
        const BoundingBox box{prev.box.x_min + dx, prev.box.y_min,
                              prev.box.x_max + dx, prev.box.y_max};
        if (box.x_max > extent || iou(prev.box, box) < ov) {
          throw validation_error(
              "generate_scene: cannot place crowd partner (overlap_level "
              "infeasible for image_extent)");
        }
        gts.push_back({box, prev.class_id, i});
      }
    } else {
      const double w = extent * rng.uniform(0.18, 0.30);
      const double h = extent * rng.uniform(0.18, 0.30);
      // The next object may need room to shift right of this one.
      const bool reserves = (i + 1 < spec.n_objects) && (i % 2 == 0) && ov > 0.0;
      const double reserve = reserves ? w : 0.0;
      if (2.0 * margin + w + reserve >= extent || 2.0 * margin + h >= extent) {
        throw validation_error("generate_scene: image_extent too small for object boxes");
      }
      BoundingBox box{};
      bool separated = false;
      for (int t = 0; t < kMaxRetries && !separated; ++t) {
        const double x0 = rng.uniform(margin, extent - margin - w - reserve);
        const double y0 = rng.uniform(margin, extent - margin - h);
        box = BoundingBox{x0, y0, x0 + w, y0 + h};
        separated = true;
        for (const GroundTruthObject& g : gts) {
          if (iou(box, g.box) > 0.3) separated = false;
        }
      }
      // Accidental overlap with an earlier object is untidy but valid.
      gts.push_back({box, static_cast<int>(rng.index(spec.n_classes)), i});
    }
  }

  GeneratedScene out;
  out.scene.image_id = "synthetic-" + std::to_string(spec.rng_seed);
  out.scene.ground_truth = gts;
  for (const GroundTruthObject& gt : gts) {
    const double w = gt.box.width();
    const double h = gt.box.height();
    for (int c = 0; c < spec.candidates_per_object; ++c) {
      BoundingBox box = gt.box;
      bool usable = false;
      for (int t = 0; t < kMaxRetries && !usable; ++t) {
        box = BoundingBox{gt.box.x_min + rng.normal() * spec.jitter_scale * w,
                          gt.box.y_min + rng.normal() * spec.jitter_scale * h,
                          gt.box.x_max + rng.normal() * spec.jitter_scale * w,
                          gt.box.y_max + rng.normal() * spec.jitter_scale * h};
        usable = box.x_max - box.x_min > 1e-6 && box.y_max - box.y_min > 1e-6 &&
                 iou(box, gt.box) > 0.1;
      }
      if (!usable) box = gt.box;

      Eigen::VectorXd feature(spec.feature_dim);
      double norm = 0.0;
      while (norm == 0.0) {
        for (int d = 0; d < spec.feature_dim; ++d) feature(d) = rng.normal();
        norm = feature.norm();
      }
      feature /= norm;

      Eigen::VectorXd logits(spec.n_classes);
      for (int k = 0; k < spec.n_classes; ++k) logits(k) = 0.3 * rng.normal();

      out.scene.candidates.push_back({box, softmax(logits), feature});
      out.spawner_instance.push_back(gt.instance_id);
    }
  }
  return out;
}

TrainState train_toy(const std::vector<SceneData>& scenes, const Config& config) {
  validate_config(config);
  if (scenes.empty()) throw validation_error("train_toy: no scenes");

  const int n_scenes = static_cast<int>(scenes.size());
  std::vector<SceneContext> contexts;
  std::vector<Eigen::MatrixXd> grams;
  TrainState state;
  for (const SceneData& scene : scenes) {
    contexts.push_back(build_context(scene));
    const SceneContext& ctx = contexts.back();

    Eigen::MatrixXd raw(ctx.n, scene.candidates[0].feature.size());
    Eigen::MatrixXd logits(ctx.n, ctx.n_classes);
    for (int i = 0; i < ctx.n; ++i) {
      raw.row(i) = scene.candidates[i].feature.transpose();
      for (int k = 0; k < ctx.n_classes; ++k) {
        // log is the softmax inverse up to a shift; the floor only guards
        // hand-written scenes with exact zeros.
        logits(i, k) = std::log(std::max(scene.candidates[i].class_scores(k), 1e-12));
      }
    }
    state.scenes.push_back({FeatureMatrix::from_raw(raw).V, std::move(logits)});
    grams.push_back(state.scenes.back().v_params * state.scenes.back().v_params.transpose());
  }

  const auto record_or_abort = [&](const LossBundle& bundle) {
    if (!std::isfinite(bundle.ss) || !std::isfinite(bundle.cross_entropy) ||
        !std::isfinite(bundle.id_total)) {
      throw numerical_error("train_toy: non-finite loss at iteration " +
                            std::to_string(state.step) +
                            " (feature collapse or degenerate scores)");
    }
    state.loss_history.push_back(bundle);
    ++state.step;
  };

  // Phase 1: scores descend cross-entropy plus the gated selection loss.
  const int switch_at = static_cast<int>(config.ss_switch_fraction *
                                         static_cast<double>(config.phase1_iters));
  for (int t = 0; t < config.phase1_iters; ++t) {
    const double lambda_ss_t = t < switch_at ? 0.0 : config.lambda_ss;
    LossBundle bundle;
    for (int si = 0; si < n_scenes; ++si) {
      const SceneContext& ctx = contexts[si];
      SceneParams& params = state.scenes[si];
      // m caps at the class count so small class spaces stay usable.
      const Phase1Eval ev =
          eval_phase1(ctx, grams[si], params.score_logits, std::min(config.m, ctx.n_classes),
                      config.beta, config.lambda, lambda_ss_t, true);

      Eigen::MatrixXd scores(ctx.n, ctx.n_classes);
      for (int i = 0; i < ctx.n; ++i) {
      scores.row(i) = softmax(params.score_logits.row(i).transpose()).transpose();
    }
      const IdEval idv = eval_id(ctx, grams[si],
                                 qualities_from_scores(scores, config.beta), config.lambda,
                                 class_sets(with_scores(scenes[si], params.score_logits),
                                            ctx.gts));

      bundle.ss += ev.ss;
      bundle.cross_entropy += ev.ce;
      bundle.smooth_l1 += ctx.smooth_l1_value;
      bundle.id_all += idv.id_all;
      for (const auto& [class_id, value] : idv.per_class) {
        bundle.id_ic_per_class[class_id] += value;
      }
      bundle.id_total += idv.id_total;

      params.score_logits -= config.lr_scores * ev.d_logits;
    }
    record_or_abort(bundle);
  }

  // Freeze the score side; the quality vector and per-class sets stay fixed
  // through phase 2.
  std::vector<Eigen::VectorXd> frozen_q;
  std::vector<std::map<int, ClassSets>> frozen_sets;
  std::vector<double> frozen_ss(n_scenes), frozen_ce(n_scenes);
  for (int si = 0; si < n_scenes; ++si) {
    const SceneContext& ctx = contexts[si];
    const SceneParams& params = state.scenes[si];
    Eigen::MatrixXd scores(ctx.n, ctx.n_classes);
    for (int i = 0; i < ctx.n; ++i) {
      scores.row(i) = softmax(params.score_logits.row(i).transpose()).transpose();
    }
    frozen_q.push_back(qualities_from_scores(scores, config.beta));
    frozen_sets.push_back(class_sets(with_scores(scenes[si], params.score_logits), ctx.gts));
    const Phase1Eval ev =
        eval_phase1(ctx, grams[si], params.score_logits, std::min(config.m, ctx.n_classes),
                    config.beta, config.lambda, 0.0, false);
    frozen_ss[si] = ev.ss;
    frozen_ce[si] = ev.ce;
  }

  // Phase 2: features descend the instance-discrimination loss.
  for (int t = 0; t < config.phase2_iters; ++t) {
    LossBundle bundle;
    for (int si = 0; si < n_scenes; ++si) {
      const SceneContext& ctx = contexts[si];
      SceneParams& params = state.scenes[si];
      const Eigen::MatrixXd gram = params.v_params * params.v_params.transpose();
      const IdEval idv = eval_id(ctx, gram, frozen_q[si], config.lambda, frozen_sets[si]);
      if (idv.singular) {
        throw numerical_error("train_toy: representative kernel went singular at iteration " +
                              std::to_string(state.step) + " (duplicate features)");
      }

      bundle.ss += frozen_ss[si];
      bundle.cross_entropy += frozen_ce[si];
      bundle.smooth_l1 += ctx.smooth_l1_value;
      bundle.id_all += idv.id_all;
      for (const auto& [class_id, value] : idv.per_class) {
        bundle.id_ic_per_class[class_id] += value;
      }
      bundle.id_total += idv.id_total;

      const Eigen::MatrixXd grad =
          grad_id_wrt_V(params.v_params, ctx.iou_full, frozen_q[si], config.lambda,
                        ctx.y_rep, ctx.y_s, frozen_sets[si]);
      params.v_params -= config.lr_features * grad;
      renormalize_rows(params.v_params, state.step);
    }
    record_or_abort(bundle);
  }

  return state;
}

SceneData apply_params(const SceneData& scene, const SceneParams& params) {
  const int n = static_cast<int>(scene.candidates.size());
  if (params.v_params.rows() != n || params.score_logits.rows() != n) {
    throw validation_error("apply_params: parameter shape mismatch");
  }
  SceneData out = scene;
  for (int i = 0; i < n; ++i) {
    out.candidates[i].class_scores = softmax(params.score_logits.row(i).transpose());
    const double norm = params.v_params.row(i).norm();
    if (!(norm > 0.0)) throw validation_error("apply_params: zero feature row");
    out.candidates[i].feature = params.v_params.row(i).transpose() / norm;
  }
  return out;
}

}  // namespace idpp
