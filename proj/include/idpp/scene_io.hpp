#pragma once

#include <string>
#include <vector>

#include "idpp/candidate.hpp"
#include "idpp/evaluation.hpp"
#include "idpp/inference.hpp"
#include "idpp/synthetic.hpp"

namespace idpp {

// Scene file: {image_id, candidates: [{box, scores, feature}],
// ground_truth: [{box, class_id, instance_id}]}. Parsing errors name the
// offending field; emission is byte-stable (fixed field order).
SceneData scene_from_json(const std::string& text);
std::string scene_to_json(const SceneData& scene);
SceneData load_scene_file(const std::string& path);

// Selection file: {method, selected, final_cost, step_costs}.
std::string selection_to_json(const SelectionResult& result);
SelectionResult selection_from_json(const std::string& text);

// Detections file: [{image_id, detections: [{box, class_id, score}]}].
// Ground truth file: [{image_id, ground_truth: [{box, class_id,
// instance_id}]}], or a COCO-like {images, annotations} object when coco_gt
// is set. Images are merged by id and returned sorted by image_id.
std::vector<ImageEval> load_eval_inputs(const std::string& detections_path,
                                        const std::string& ground_truth_path,
                                        bool coco_gt);

std::string report_to_json(const EvalReport& report);

std::string train_state_to_json(const TrainState& state);

// Spec file for the toy trainer: any subset of the SceneSpec fields plus an
// optional "n_scenes" (default 1). Unknown fields are rejected by name.
struct TrainSpec {
  SceneSpec scene;
  int n_scenes = 1;
};
TrainSpec train_spec_from_json(const std::string& text);
std::string train_spec_to_json(const TrainSpec& spec);

// CSV columns: iteration, ss, id_all, id_total, ce.
std::string loss_history_csv(const std::vector<LossBundle>& history);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace idpp
