#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "json.hpp"

#include "idpp/errors.hpp"
#include "idpp/scene_io.hpp"

using doctest::Contains;
using idpp::SceneData;
using idpp::SelectionResult;

namespace {

namespace fs = std::filesystem;

// Per-process scratch directory so parallel test runs cannot collide.
fs::path scratch_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() /
                 ("idpp_io_tests_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string temp_file(const std::string& name, const std::string& content) {
  const fs::path path = scratch_dir() / name;
  idpp::write_file(path.string(), content);
  return path.string();
}

SceneData sample_scene() {
  SceneData scene;
  scene.image_id = "img-17";
  idpp::Candidate c;
  c.box = {1.25, 2.5, 10.75, 20.125};
  c.class_scores = (Eigen::VectorXd(3) << 0.5, 0.3, 0.2).finished();
  c.feature = (Eigen::VectorXd(4) << 0.1, -0.7, 0.69, 0.1234567890123456).finished();
  scene.candidates.push_back(c);
  c.box = {3.0, 4.0, 9.0, 11.0};
  c.class_scores = (Eigen::VectorXd(3) << 0.2, 0.2, 0.6).finished();
  c.feature = (Eigen::VectorXd(4) << -0.5, 0.5, 0.5, 0.5).finished();
  scene.candidates.push_back(c);
  scene.ground_truth.push_back({{0.0, 0.0, 12.0, 22.0}, 1, 100});
  return scene;
}

}  // namespace

TEST_CASE("scene serialization round-trips exactly") {
  const SceneData scene = sample_scene();
  const std::string text = idpp::scene_to_json(scene);
  const SceneData back = idpp::scene_from_json(text);
  CHECK(back.image_id == scene.image_id);
  REQUIRE(back.candidates.size() == scene.candidates.size());
  for (std::size_t i = 0; i < scene.candidates.size(); ++i) {
    CHECK(back.candidates[i].box.x_min == scene.candidates[i].box.x_min);
    CHECK(back.candidates[i].box.y_max == scene.candidates[i].box.y_max);
    CHECK(back.candidates[i].class_scores == scene.candidates[i].class_scores);
    CHECK(back.candidates[i].feature == scene.candidates[i].feature);
  }
  REQUIRE(back.ground_truth.size() == 1);
  CHECK(back.ground_truth[0].class_id == 1);
  CHECK(back.ground_truth[0].instance_id == 100);
  // Emission is byte-stable across a round trip.
  CHECK(idpp::scene_to_json(back) == text);
}

TEST_CASE("scene emission keeps a fixed field order") {
  const std::string text = idpp::scene_to_json(sample_scene());
  const auto pos_id = text.find("\"image_id\"");
  const auto pos_cands = text.find("\"candidates\"");
  const auto pos_gt = text.find("\"ground_truth\"");
  REQUIRE(pos_id != std::string::npos);
  REQUIRE(pos_cands != std::string::npos);
  REQUIRE(pos_gt != std::string::npos);
  CHECK(pos_id < pos_cands);
  CHECK(pos_cands < pos_gt);
  const auto pos_box = text.find("\"box\"");
  const auto pos_scores = text.find("\"scores\"");
  const auto pos_feature = text.find("\"feature\"");
  CHECK(pos_box < pos_scores);
  CHECK(pos_scores < pos_feature);
}

TEST_CASE("scene parse errors name the offending field") {
  CHECK_THROWS_WITH_AS(idpp::scene_from_json("{not json"), Contains("scene: invalid JSON"),
                       idpp::validation_error);
  CHECK_THROWS_WITH_AS(idpp::scene_from_json(R"({"candidates": [], "ground_truth": []})"),
                       Contains("missing field 'image_id'"), idpp::validation_error);
  CHECK_THROWS_WITH_AS(
      idpp::scene_from_json(
          R"({"image_id": "x", "candidates": [{"scores": [0.5], "feature": [1.0]}],
              "ground_truth": []})"),
      Contains("scene.candidates[0]: missing field 'box'"), idpp::validation_error);
  CHECK_THROWS_WITH_AS(
      idpp::scene_from_json(
          R"({"image_id": "x",
              "candidates": [{"box": [0, 0, 5, 5], "scores": [1.5], "feature": [1.0]}],
              "ground_truth": []})"),
      Contains("scene.candidates[0].scores"), idpp::validation_error);
  CHECK_THROWS_WITH_AS(
      idpp::scene_from_json(
          R"({"image_id": "x",
              "candidates": [{"box": [5, 0, 5, 5], "scores": [0.5], "feature": [1.0]}],
              "ground_truth": []})"),
      Contains("degenerate box"), idpp::validation_error);
  CHECK_THROWS_WITH_AS(
      idpp::scene_from_json(
          R"({"image_id": "x",
              "candidates": [{"box": [0, 0, 5, 5], "scores": [0.5], "feature": [1.0, 2.0]},
                             {"box": [0, 0, 5, 5], "scores": [0.5], "feature": [1.0]}],
              "ground_truth": []})"),
      Contains("scene.candidates[1].feature: inconsistent dimension"), idpp::validation_error);
  CHECK_THROWS_WITH_AS(
      idpp::scene_from_json(
          R"({"image_id": "x", "candidates": [],
              "ground_truth": [{"box": [0, 0, 5, 5], "class_id": 1}]})"),
      Contains("scene.ground_truth[0]: missing field 'instance_id'"), idpp::validation_error);
}

TEST_CASE("selection serialization round-trips every method") {
  SelectionResult result;
  result.method = idpp::SelectionMethod::idpp;
  result.selected = {3, 0, 5};
  result.final_cost = 1.4738;
  result.step_costs = {0.81, 1.2, 1.4738};
  for (auto method : {idpp::SelectionMethod::idpp, idpp::SelectionMethod::exact,
                      idpp::SelectionMethod::nms}) {
    result.method = method;
    const SelectionResult back = idpp::selection_from_json(idpp::selection_to_json(result));
    CHECK(back.method == method);
    CHECK(back.selected == result.selected);
    CHECK(back.final_cost == result.final_cost);
    CHECK(back.step_costs == result.step_costs);
  }
  CHECK_THROWS_WITH_AS(
      idpp::selection_from_json(
          R"({"method": "magic", "selected": [], "final_cost": 0, "step_costs": []})"),
      Contains("selection.method: unknown value 'magic'"), idpp::validation_error);
}

TEST_CASE("evaluation inputs merge detections and annotations by image id") {
  const std::string gt_path = temp_file("gt.json", R"([
    {"image_id": "a",
     "ground_truth": [{"box": [0, 0, 10, 10], "class_id": 1, "instance_id": 0}]},
    {"image_id": "b",
     "ground_truth": [{"box": [5, 5, 15, 15], "class_id": 2, "instance_id": 1}]}
  ])");
  const std::string det_path = temp_file("det.json", R"([
    {"image_id": "b",
     "detections": [{"box": [5, 5, 15, 15], "class_id": 2, "score": 0.9}]},
    {"image_id": "c",
     "detections": [{"box": [0, 0, 4, 4], "class_id": 1, "score": 0.5}]}
  ])");
  const auto images = idpp::load_eval_inputs(det_path, gt_path, false);
  REQUIRE(images.size() == 3);
  CHECK(images[0].image_id == "a");
  CHECK(images[0].detections.empty());
  CHECK(images[0].ground_truth.size() == 1);
  CHECK(images[1].image_id == "b");
  CHECK(images[1].detections.size() == 1);
  CHECK(images[1].detections[0].score == 0.9);
  CHECK(images[1].ground_truth.size() == 1);
  // Detection-only images participate with no annotations.
  CHECK(images[2].image_id == "c");
  CHECK(images[2].ground_truth.empty());
}

TEST_CASE("the corner-plus-size annotation format converts to corners") {
  const std::string gt_path = temp_file("coco.json", R"({
    "images": [{"id": 3}, {"id": 7}],
    "annotations": [
      {"image_id": 3, "category_id": 2, "bbox": [10, 20, 30, 40], "id": 99}
    ]
  })");
  const std::string det_path = temp_file("coco_det.json", R"([
    {"image_id": "3",
     "detections": [{"box": [10, 20, 40, 60], "class_id": 2, "score": 0.8}]}
  ])");
  const auto images = idpp::load_eval_inputs(det_path, gt_path, true);
  REQUIRE(images.size() == 2);
  CHECK(images[0].image_id == "3");
  REQUIRE(images[0].ground_truth.size() == 1);
  const auto& gt = images[0].ground_truth[0];
  CHECK(gt.box.x_min == 10.0);
  CHECK(gt.box.y_min == 20.0);
  CHECK(gt.box.x_max == 40.0);
  CHECK(gt.box.y_max == 60.0);
  CHECK(gt.class_id == 2);
  CHECK(gt.instance_id == 99);
  CHECK(images[1].image_id == "7");
  CHECK(images[1].ground_truth.empty());
}

TEST_CASE("annotation referencing an unlisted image is rejected") {
  const std::string gt_path = temp_file("coco_bad.json", R"({
    "images": [{"id": 3}],
    "annotations": [
      {"image_id": 4, "category_id": 2, "bbox": [10, 20, 30, 40], "id": 99}
    ]
  })");
  const std::string det_path = temp_file("coco_bad_det.json", "[]");
  CHECK_THROWS_WITH_AS(idpp::load_eval_inputs(det_path, gt_path, true),
                       Contains("not listed in images"), idpp::validation_error);

  const std::string gt_bad_bbox = temp_file("coco_bad_bbox.json", R"({
    "images": [{"id": 3}],
    "annotations": [
      {"image_id": 3, "category_id": 2, "bbox": [10, 20, 0, 40], "id": 99}
    ]
  })");
  CHECK_THROWS_WITH_AS(idpp::load_eval_inputs(det_path, gt_bad_bbox, true),
                       Contains("degenerate size"), idpp::validation_error);
}

TEST_CASE("report serialization mirrors the report structure") {
  idpp::EvalReport report;
  report.ap_per_class = {{1, 0.5}, {3, 1.0}};
  report.map = 0.75;
  report.coco_map = 0.6;
  report.recall_curve.push_back({0.0, 0.9, true});
  report.recall_curve.push_back({0.4, 0.0, false});
  report.correct_box_prob = std::nullopt;
  report.n_images = 4;
  report.n_crowd_images = 2;

  const std::string text = idpp::report_to_json(report);
  const auto j = nlohmann::json::parse(text);
  CHECK(j["ap_per_class"]["1"] == 0.5);
  CHECK(j["ap_per_class"]["3"] == 1.0);
  CHECK(j["map"] == 0.75);
  CHECK(j["coco_map"] == 0.6);
  REQUIRE(j["recall_curve"].size() == 2);
  CHECK(j["recall_curve"][0]["recall"] == 0.9);
  CHECK(j["recall_curve"][0]["defined"] == true);
  CHECK(j["recall_curve"][1]["defined"] == false);
  CHECK_FALSE(j["recall_curve"][1].contains("recall"));
  CHECK(j["correct_box_prob"].is_null());
  CHECK(j["n_images"] == 4);
  CHECK(j["n_crowd_images"] == 2);

  report.correct_box_prob = 0.25;
  const auto j2 = nlohmann::json::parse(idpp::report_to_json(report));
  CHECK(j2["correct_box_prob"] == 0.25);
}

TEST_CASE("trainer state serialization carries both parameter blocks") {
  idpp::TrainState state;
  state.step = 12;
  idpp::SceneParams params;
  params.v_params = (Eigen::MatrixXd(2, 2) << 0.6, 0.8, -1.0, 0.0).finished();
  params.score_logits = (Eigen::MatrixXd(2, 3) << 1.0, 2.0, 3.0, -0.5, 0.25, 0.0).finished();
  state.scenes.push_back(params);

  const auto j = nlohmann::json::parse(idpp::train_state_to_json(state));
  CHECK(j["step"] == 12);
  REQUIRE(j["scenes"].size() == 1);
  CHECK(j["scenes"][0]["v_params"][0][1] == 0.8);
  CHECK(j["scenes"][0]["v_params"][1][0] == -1.0);
  CHECK(j["scenes"][0]["score_logits"][1][1] == 0.25);
}

TEST_CASE("train spec serialization round-trips and rejects unknown fields") {
  idpp::TrainSpec spec;
  spec.scene.n_objects = 4;
  spec.scene.n_classes = 5;
  spec.scene.overlap_level = 0.45;
  spec.scene.candidates_per_object = 3;
  spec.scene.jitter_scale = 0.12;
  spec.scene.image_extent = 128.0;
  spec.scene.feature_dim = 6;
  spec.scene.rng_seed = 77;
  spec.n_scenes = 9;

  const idpp::TrainSpec back = idpp::train_spec_from_json(idpp::train_spec_to_json(spec));
  CHECK(back.scene.n_objects == 4);
  CHECK(back.scene.n_classes == 5);
  CHECK(back.scene.overlap_level == 0.45);
  CHECK(back.scene.candidates_per_object == 3);
  CHECK(back.scene.jitter_scale == 0.12);
  CHECK(back.scene.image_extent == 128.0);
  CHECK(back.scene.feature_dim == 6);
  CHECK(back.scene.rng_seed == 77);
  CHECK(back.n_scenes == 9);

  // Absent fields keep defaults.
  const idpp::TrainSpec sparse = idpp::train_spec_from_json(R"({"n_objects": 3})");
  CHECK(sparse.scene.n_objects == 3);
  CHECK(sparse.scene.n_classes == 3);
  CHECK(sparse.n_scenes == 1);

  CHECK_THROWS_WITH_AS(idpp::train_spec_from_json(R"({"objects": 3})"),
                       Contains("unknown field 'objects'"), idpp::validation_error);
  CHECK_THROWS_WITH_AS(idpp::train_spec_from_json(R"({"n_scenes": 0})"),
                       Contains("n_scenes"), idpp::validation_error);
}

TEST_CASE("config serialization round-trips") {
  idpp::Config cfg;
  cfg.lambda = 0.3;
  cfg.m = 7;
  cfg.rng_seed = 1234567;
  cfg.lr_features = 0.025;
  const idpp::Config back = idpp::config_from_json(idpp::config_to_json(cfg));
  CHECK(back.lambda == 0.3);
  CHECK(back.m == 7);
  CHECK(back.rng_seed == 1234567);
  CHECK(back.lr_features == 0.025);
  CHECK(back.beta == cfg.beta);
  CHECK_THROWS_WITH_AS(idpp::config_from_json(R"({"lambdaa": 0.5})"),
                       Contains("unknown field 'lambdaa'"), idpp::validation_error);
  CHECK_THROWS_WITH_AS(idpp::config_from_json(R"({"lambda": 1.5})"),
                       Contains("lambda"), idpp::validation_error);
}

TEST_CASE("loss history serializes to a parseable table") {
  std::vector<idpp::LossBundle> history(2);
  history[0].ss = 0.5;
  history[0].id_all = 1.0 / 3.0;
  history[0].id_total = 2.0 / 3.0;
  history[0].cross_entropy = 1.0986122886681098;
  history[1].ss = 0.25;
  history[1].id_all = 0.125;
  history[1].id_total = 0.1875;
  history[1].cross_entropy = 1.0;

  const std::string csv = idpp::loss_history_csv(history);
  std::istringstream lines(csv);
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line == "iteration,ss,id_all,id_total,ce");
  REQUIRE(std::getline(lines, line));
  // Values print with enough digits to round-trip exactly.
  std::istringstream row(line);
  std::string cell;
  std::getline(row, cell, ',');
  CHECK(cell == "0");
  std::getline(row, cell, ',');
  CHECK(std::stod(cell) == 0.5);
  std::getline(row, cell, ',');
  CHECK(std::stod(cell) == 1.0 / 3.0);
  std::getline(row, cell, ',');
  CHECK(std::stod(cell) == 2.0 / 3.0);
  std::getline(row, cell, ',');
  CHECK(std::stod(cell) == 1.0986122886681098);
  REQUIRE(std::getline(lines, line));
  CHECK(line.substr(0, 2) == "1,");
  CHECK_FALSE(std::getline(lines, line));
}

TEST_CASE("file helpers read back what they wrote") {
  const std::string path = temp_file("roundtrip.txt", "alpha\nbeta\n");
  CHECK(idpp::read_file(path) == "alpha\nbeta\n");
  CHECK_THROWS_WITH_AS(idpp::read_file((scratch_dir() / "absent.txt").string()),
                       Contains("cannot open"), idpp::validation_error);
}

TEST_CASE("scene file loader wires the parser to the filesystem") {
  const SceneData scene = sample_scene();
  const std::string path = temp_file("scene.json", idpp::scene_to_json(scene));
  const SceneData back = idpp::load_scene_file(path);
  CHECK(back.image_id == scene.image_id);
  CHECK(back.candidates.size() == scene.candidates.size());
}
