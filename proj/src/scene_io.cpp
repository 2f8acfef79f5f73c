#include "idpp/scene_io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "idpp/errors.hpp"

namespace idpp {
namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json parse_text(const std::string& text, const std::string& what) {
  try {
    return ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw validation_error(what + ": invalid JSON: " + e.what());
  }
}

double as_number(const ordered_json& j, const std::string& where) {
  if (!j.is_number()) throw validation_error(where + ": expected a number");
  return j.get<double>();
}

int as_int(const ordered_json& j, const std::string& where) {
  if (!j.is_number_integer()) throw validation_error(where + ": expected an integer");
  return j.get<int>();
}

std::string as_string(const ordered_json& j, const std::string& where) {
  if (!j.is_string()) throw validation_error(where + ": expected a string");
  return j.get<std::string>();
}

const ordered_json& field(const ordered_json& j, const char* name,
                          const std::string& where) {
  if (!j.is_object() || !j.contains(name)) {
    throw validation_error(where + ": missing field '" + name + "'");
  }
  return j.at(name);
}

BoundingBox parse_box(const ordered_json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) {
    throw validation_error(where + ": expected [x_min, y_min, x_max, y_max]");
  }
  BoundingBox box{as_number(j[0], where), as_number(j[1], where),
                  as_number(j[2], where), as_number(j[3], where)};
  if (!(box.x_max > box.x_min) || !(box.y_max > box.y_min)) {
    throw validation_error(where + ": degenerate box");
  }
  return box;
}

Eigen::VectorXd parse_vector(const ordered_json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) {
    throw validation_error(where + ": expected a non-empty array of numbers");
  }
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = as_number(j[i], where);
  return v;
}

ordered_json box_json(const BoundingBox& b) {
  return ordered_json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

ordered_json vector_json(const Eigen::VectorXd& v) {
  ordered_json a = ordered_json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

GroundTruthObject parse_gt(const ordered_json& j, const std::string& where) {
  GroundTruthObject gt;
  gt.box = parse_box(field(j, "box", where), where + ".box");
  gt.class_id = as_int(field(j, "class_id", where), where + ".class_id");
  gt.instance_id = as_int(field(j, "instance_id", where), where + ".instance_id");
  return gt;
}

const char* method_name(SelectionMethod method) {
  switch (method) {
    case SelectionMethod::idpp: return "idpp";
    case SelectionMethod::exact: return "exact";
    case SelectionMethod::nms: return "nms";
  }
  throw validation_error("selection: unknown method");
}

}  // namespace

SceneData scene_from_json(const std::string& text) {
  const ordered_json j = parse_text(text, "scene");
  SceneData scene;
  scene.image_id = as_string(field(j, "image_id", "scene"), "scene.image_id");

  const ordered_json& cands = field(j, "candidates", "scene");
  if (!cands.is_array()) throw validation_error("scene.candidates: expected an array");
  int feature_dim = -1;
  int n_classes = -1;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const std::string where = "scene.candidates[" + std::to_string(i) + "]";
    Candidate c;
    c.box = parse_box(field(cands[i], "box", where), where + ".box");
    c.class_scores = parse_vector(field(cands[i], "scores", where), where + ".scores");
    c.feature = parse_vector(field(cands[i], "feature", where), where + ".feature");
    for (int k = 0; k < c.class_scores.size(); ++k) {
      if (c.class_scores(k) < 0.0 || c.class_scores(k) > 1.0) {
        throw validation_error(where + ".scores: entries must lie in [0, 1]");
      }
    }
    if (n_classes < 0) n_classes = static_cast<int>(c.class_scores.size());
    if (feature_dim < 0) feature_dim = static_cast<int>(c.feature.size());
    if (c.class_scores.size() != n_classes) {
      throw validation_error(where + ".scores: inconsistent class count");
    }
    if (c.feature.size() != feature_dim) {
      throw validation_error(where + ".feature: inconsistent dimension");
    }
    scene.candidates.push_back(std::move(c));
  }

  const ordered_json& gts = field(j, "ground_truth", "scene");
  if (!gts.is_array()) throw validation_error("scene.ground_truth: expected an array");
  for (std::size_t i = 0; i < gts.size(); ++i) {
    scene.ground_truth.push_back(
        parse_gt(gts[i], "scene.ground_truth[" + std::to_string(i) + "]"));
  }
  return scene;
}

std::string scene_to_json(const SceneData& scene) {
  ordered_json j;
  j["image_id"] = scene.image_id;
  j["candidates"] = ordered_json::array();
  for (const Candidate& c : scene.candidates) {
    ordered_json cand;
    cand["box"] = box_json(c.box);
    cand["scores"] = vector_json(c.class_scores);
    cand["feature"] = vector_json(c.feature);
    j["candidates"].push_back(std::move(cand));
  }
  j["ground_truth"] = ordered_json::array();
  for (const GroundTruthObject& gt : scene.ground_truth) {
    ordered_json g;
    g["box"] = box_json(gt.box);
    g["class_id"] = gt.class_id;
    g["instance_id"] = gt.instance_id;
    j["ground_truth"].push_back(std::move(g));
  }
  return j.dump(2) + "\n";
}

SceneData load_scene_file(const std::string& path) {
  return scene_from_json(read_file(path));
}

std::string selection_to_json(const SelectionResult& result) {
  ordered_json j;
  j["method"] = method_name(result.method);
  j["selected"] = result.selected;
  j["final_cost"] = result.final_cost;
  j["step_costs"] = result.step_costs;
  return j.dump(2) + "\n";
}

SelectionResult selection_from_json(const std::string& text) {
  const ordered_json j = parse_text(text, "selection");
  SelectionResult result;
  const std::string method = as_string(field(j, "method", "selection"), "selection.method");
  if (method == "idpp") result.method = SelectionMethod::idpp;
  else if (method == "exact") result.method = SelectionMethod::exact;
  else if (method == "nms") result.method = SelectionMethod::nms;
  else throw validation_error("selection.method: unknown value '" + method + "'");

  const ordered_json& sel = field(j, "selected", "selection");
  if (!sel.is_array()) throw validation_error("selection.selected: expected an array");
  for (std::size_t i = 0; i < sel.size(); ++i) {
    result.selected.push_back(as_int(sel[i], "selection.selected"));
  }
  result.final_cost = as_number(field(j, "final_cost", "selection"), "selection.final_cost");
  const ordered_json& steps = field(j, "step_costs", "selection");
  if (!steps.is_array()) throw validation_error("selection.step_costs: expected an array");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    result.step_costs.push_back(as_number(steps[i], "selection.step_costs"));
  }
  return result;
}

namespace {

std::map<std::string, ImageEval> parse_ground_truth(const ordered_json& j) {
  std::map<std::string, ImageEval> images;
  if (!j.is_array()) {
    throw validation_error("ground_truth file: expected an array of images");
  }
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string where = "ground_truth[" + std::to_string(i) + "]";
    const std::string id = as_string(field(j[i], "image_id", where), where + ".image_id");
    ImageEval& image = images[id];
    image.image_id = id;
    const ordered_json& gts = field(j[i], "ground_truth", where);
    if (!gts.is_array()) throw validation_error(where + ".ground_truth: expected an array");
    for (std::size_t g = 0; g < gts.size(); ++g) {
      image.ground_truth.push_back(
          parse_gt(gts[g], where + ".ground_truth[" + std::to_string(g) + "]"));
    }
  }
  return images;
}

// COCO-like shape: {images: [{id, ...}], annotations: [{image_id,
// category_id, bbox: [x, y, w, h], id}]}. bbox converts from corner+size to
// corners; ids become decimal strings.
std::map<std::string, ImageEval> parse_coco_ground_truth(const ordered_json& j) {
  std::map<std::string, ImageEval> images;
  const ordered_json& image_list = field(j, "images", "coco ground_truth");
  if (!image_list.is_array()) {
    throw validation_error("coco ground_truth.images: expected an array");
  }
  for (std::size_t i = 0; i < image_list.size(); ++i) {
    const std::string where = "coco ground_truth.images[" + std::to_string(i) + "]";
    const int id = as_int(field(image_list[i], "id", where), where + ".id");
    const std::string key = std::to_string(id);
    images[key].image_id = key;
  }
  const ordered_json& annotations = field(j, "annotations", "coco ground_truth");
  if (!annotations.is_array()) {
    throw validation_error("coco ground_truth.annotations: expected an array");
  }
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const std::string where = "coco ground_truth.annotations[" + std::to_string(i) + "]";
    const std::string key =
        std::to_string(as_int(field(annotations[i], "image_id", where), where + ".image_id"));
    const auto it = images.find(key);
    if (it == images.end()) {
      throw validation_error(where + ".image_id: not listed in images");
    }
    const ordered_json& bbox = field(annotations[i], "bbox", where);
    if (!bbox.is_array() || bbox.size() != 4) {
      throw validation_error(where + ".bbox: expected [x, y, width, height]");
    }
    const double x = as_number(bbox[0], where + ".bbox");
    const double y = as_number(bbox[1], where + ".bbox");
    const double w = as_number(bbox[2], where + ".bbox");
    const double h = as_number(bbox[3], where + ".bbox");
    if (!(w > 0.0) || !(h > 0.0)) throw validation_error(where + ".bbox: degenerate size");
    GroundTruthObject gt;
    gt.box = BoundingBox{x, y, x + w, y + h};
    gt.class_id = as_int(field(annotations[i], "category_id", where), where + ".category_id");
    gt.instance_id = as_int(field(annotations[i], "id", where), where + ".id");
    it->second.ground_truth.push_back(gt);
  }
  return images;
}

}  // namespace

std::vector<ImageEval> load_eval_inputs(const std::string& detections_path,
                                        const std::string& ground_truth_path,
                                        bool coco_gt) {
  const ordered_json gt_json = parse_text(read_file(ground_truth_path), "ground_truth file");
  std::map<std::string, ImageEval> images =
      coco_gt ? parse_coco_ground_truth(gt_json) : parse_ground_truth(gt_json);

  const ordered_json det_json = parse_text(read_file(detections_path), "detections file");
  if (!det_json.is_array()) {
    throw validation_error("detections file: expected an array of images");
  }
  for (std::size_t i = 0; i < det_json.size(); ++i) {
    const std::string where = "detections[" + std::to_string(i) + "]";
    const std::string id =
        as_string(field(det_json[i], "image_id", where), where + ".image_id");
    ImageEval& image = images[id];
    image.image_id = id;
    const ordered_json& dets = field(det_json[i], "detections", where);
    if (!dets.is_array()) throw validation_error(where + ".detections: expected an array");
    for (std::size_t d = 0; d < dets.size(); ++d) {
      const std::string dwhere = where + ".detections[" + std::to_string(d) + "]";
      Detection det;
      det.box = parse_box(field(dets[d], "box", dwhere), dwhere + ".box");
      det.class_id = as_int(field(dets[d], "class_id", dwhere), dwhere + ".class_id");
      det.score = as_number(field(dets[d], "score", dwhere), dwhere + ".score");
      image.detections.push_back(det);
    }
  }

  std::vector<ImageEval> out;
  out.reserve(images.size());
  for (auto& [id, image] : images) out.push_back(std::move(image));
  std::sort(out.begin(), out.end(),
            [](const ImageEval& a, const ImageEval& b) { return a.image_id < b.image_id; });
  return out;
}

std::string report_to_json(const EvalReport& report) {
  ordered_json j;
  ordered_json ap = ordered_json::object();
  for (const auto& [class_id, value] : report.ap_per_class) {
    ap[std::to_string(class_id)] = value;
  }
  j["ap_per_class"] = std::move(ap);
  j["map"] = report.map;
  j["coco_map"] = report.coco_map;
  j["recall_curve"] = ordered_json::array();
  for (const RecallPoint& point : report.recall_curve) {
    ordered_json p;
    p["threshold"] = point.threshold;
    p["defined"] = point.defined;
    if (point.defined) p["recall"] = point.recall;
    j["recall_curve"].push_back(std::move(p));
  }
  if (report.correct_box_prob) {
    j["correct_box_prob"] = *report.correct_box_prob;
  } else {
    j["correct_box_prob"] = nullptr;
  }
  j["n_images"] = report.n_images;
  j["n_crowd_images"] = report.n_crowd_images;
  return j.dump(2) + "\n";
}

std::string train_state_to_json(const TrainState& state) {
  ordered_json j;
  j["step"] = state.step;
  j["scenes"] = ordered_json::array();
  for (const SceneParams& params : state.scenes) {
    ordered_json scene;
    ordered_json v = ordered_json::array();
    for (int i = 0; i < params.v_params.rows(); ++i) {
      v.push_back(vector_json(params.v_params.row(i).transpose()));
    }
    ordered_json logits = ordered_json::array();
    for (int i = 0; i < params.score_logits.rows(); ++i) {
      logits.push_back(vector_json(params.score_logits.row(i).transpose()));
    }
    scene["v_params"] = std::move(v);
    scene["score_logits"] = std::move(logits);
    j["scenes"].push_back(std::move(scene));
  }
  return j.dump(2) + "\n";
}

TrainSpec train_spec_from_json(const std::string& text) {
  const ordered_json j = parse_text(text, "train spec");
  if (!j.is_object()) throw validation_error("train spec: expected an object");
  TrainSpec spec;
  for (const auto& [key, value] : j.items()) {
    const std::string where = "train spec." + key;
    if (key == "n_objects") spec.scene.n_objects = as_int(value, where);
    else if (key == "n_classes") spec.scene.n_classes = as_int(value, where);
    else if (key == "overlap_level") spec.scene.overlap_level = as_number(value, where);
    else if (key == "candidates_per_object") {
      spec.scene.candidates_per_object = as_int(value, where);
    } else if (key == "jitter_scale") spec.scene.jitter_scale = as_number(value, where);
    else if (key == "image_extent") spec.scene.image_extent = as_number(value, where);
    else if (key == "feature_dim") spec.scene.feature_dim = as_int(value, where);
    else if (key == "rng_seed") spec.scene.rng_seed = as_int(value, where);
    else if (key == "n_scenes") spec.n_scenes = as_int(value, where);
    else throw validation_error("train spec: unknown field '" + key + "'");
  }
  if (spec.n_scenes < 1) throw validation_error("train spec.n_scenes: must be >= 1");
  return spec;
}

std::string train_spec_to_json(const TrainSpec& spec) {
  ordered_json j;
  j["n_objects"] = spec.scene.n_objects;
  j["n_classes"] = spec.scene.n_classes;
  j["overlap_level"] = spec.scene.overlap_level;
  j["candidates_per_object"] = spec.scene.candidates_per_object;
  j["jitter_scale"] = spec.scene.jitter_scale;
  j["image_extent"] = spec.scene.image_extent;
  j["feature_dim"] = spec.scene.feature_dim;
  j["rng_seed"] = spec.scene.rng_seed;
  j["n_scenes"] = spec.n_scenes;
  return j.dump(2) + "\n";
}

std::string loss_history_csv(const std::vector<LossBundle>& history) {
  std::ostringstream out;
  out << "iteration,ss,id_all,id_total,ce\n";
  out.precision(17);
  for (std::size_t i = 0; i < history.size(); ++i) {
    out << i << ',' << history[i].ss << ',' << history[i].id_all << ','
        << history[i].id_total << ',' << history[i].cross_entropy << '\n';
  }
  return out.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw validation_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw validation_error("cannot write '" + path + "'");
  out << content;
}

}  // namespace idpp
