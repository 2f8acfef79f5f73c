#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "idpp/candidate.hpp"
#include "idpp/config.hpp"
#include "idpp/losses.hpp"

namespace idpp {

// Recipe for one synthetic crowded scene. Odd-indexed objects are placed as
// crowd partners of their predecessor whenever overlap_level > 0, sharing
// its class with pairwise IoU >= overlap_level.
struct SceneSpec {
  int n_objects = 2;
  int n_classes = 3;
  double overlap_level = 0.0;
  int candidates_per_object = 8;
  double jitter_scale = 0.15;
  double image_extent = 256.0;
  int feature_dim = 16;
  std::uint64_t rng_seed = 0;
};

// Generated scene plus the spawning instance of each candidate. The labels
// never feed training; they exist so evaluations can score feature
// separation against the truth.
struct GeneratedScene {
  SceneData scene;
  std::vector<int> spawner_instance;
};

// Deterministic in rng_seed. Throws validation_error when the requested
// overlap cannot be placed within the extent after bounded retries.
GeneratedScene generate_scene(const SceneSpec& spec);

// Free parameters for one scene: per-candidate feature rows (row-normalized
// after every update) and classification logits.
struct SceneParams {
  Eigen::MatrixXd v_params;
  Eigen::MatrixXd score_logits;
};

struct TrainState {
  std::vector<SceneParams> scenes;
  int step = 0;
  // One record per iteration, summed across scenes, evaluated before that
  // iteration's update; loss_history.size() == step.
  std::vector<LossBundle> loss_history;
};

// Two-phase alternating descent: phase 1 updates score_logits against
// cross-entropy plus the gated selection loss (features fixed); phase 2
// updates v_params against the instance-discrimination loss (qualities
// fixed). Aborts with numerical_error on non-finite losses.
TrainState train_toy(const std::vector<SceneData>& scenes, const Config& config);

// Scene with trained parameters substituted: scores = softmax(logits),
// features = normalized v_params rows.
SceneData apply_params(const SceneData& scene, const SceneParams& params);

}  // namespace idpp
