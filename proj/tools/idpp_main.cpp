#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "CLI11.hpp"

#include "idpp/config.hpp"
#include "idpp/dpp.hpp"
#include "idpp/errors.hpp"
#include "idpp/evaluation.hpp"
#include "idpp/geometry.hpp"
#include "idpp/gradients.hpp"
#include "idpp/inference.hpp"
#include "idpp/losses.hpp"
#include "idpp/matching.hpp"
#include "idpp/rng.hpp"
#include "idpp/scene_io.hpp"
#include "idpp/synthetic.hpp"

namespace {

using idpp::Config;
using idpp::ExitCode;

int code(ExitCode c) { return static_cast<int>(c); }

// Config file plus per-field flag overrides; a flag wins over the file.
struct ConfigArgs {
  std::string path;
  Config flags;
  std::map<std::string, CLI::Option*> set;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", path, "config JSON file");
    set["lambda"] = cmd->add_option("--lambda", flags.lambda, "visual-vs-spatial blend weight");
    set["lambda_ss"] =
        cmd->add_option("--lambda-ss", flags.lambda_ss, "selection-loss weight after the switch");
    set["ss_switch_fraction"] = cmd->add_option("--ss-switch-fraction", flags.ss_switch_fraction,
                                                "fraction of phase 1 before the selection loss");
    set["m"] = cmd->add_option("--m", flags.m, "top categories expanded per RoI");
    set["beta"] = cmd->add_option("--beta", flags.beta, "quality transform exponent");
    set["nms_tau"] = cmd->add_option("--nms-tau", flags.nms_tau, "suppression overlap threshold");
    set["crowd_tau"] =
        cmd->add_option("--crowd-tau", flags.crowd_tau, "crowd-pair overlap threshold");
    set["psd_epsilon"] =
        cmd->add_option("--psd-epsilon", flags.psd_epsilon, "similarity repair floor");
    set["fd_step"] = cmd->add_option("--fd-step", flags.fd_step, "finite-difference step");
    set["rng_seed"] = cmd->add_option("--rng-seed", flags.rng_seed, "base RNG seed");
    set["lr_scores"] = cmd->add_option("--lr-scores", flags.lr_scores, "phase-1 learning rate");
    set["lr_features"] =
        cmd->add_option("--lr-features", flags.lr_features, "phase-2 learning rate");
    set["phase1_iters"] = cmd->add_option("--phase1-iters", flags.phase1_iters,
                                          "score-update iterations");
    set["phase2_iters"] = cmd->add_option("--phase2-iters", flags.phase2_iters,
                                          "feature-update iterations");
  }

  Config resolve() const {
    Config cfg;
    if (!path.empty()) cfg = idpp::load_config_file(path);
    auto chosen = [&](const char* name) { return set.at(name)->count() > 0; };
    if (chosen("lambda")) cfg.lambda = flags.lambda;
    if (chosen("lambda_ss")) cfg.lambda_ss = flags.lambda_ss;
    if (chosen("ss_switch_fraction")) cfg.ss_switch_fraction = flags.ss_switch_fraction;
    if (chosen("m")) cfg.m = flags.m;
    if (chosen("beta")) cfg.beta = flags.beta;
    if (chosen("nms_tau")) cfg.nms_tau = flags.nms_tau;
    if (chosen("crowd_tau")) cfg.crowd_tau = flags.crowd_tau;
    if (chosen("psd_epsilon")) cfg.psd_epsilon = flags.psd_epsilon;
    if (chosen("fd_step")) cfg.fd_step = flags.fd_step;
    if (chosen("rng_seed")) cfg.rng_seed = flags.rng_seed;
    if (chosen("lr_scores")) cfg.lr_scores = flags.lr_scores;
    if (chosen("lr_features")) cfg.lr_features = flags.lr_features;
    if (chosen("phase1_iters")) cfg.phase1_iters = flags.phase1_iters;
    if (chosen("phase2_iters")) cfg.phase2_iters = flags.phase2_iters;
    idpp::validate_config(cfg);
    return cfg;
  }
};

idpp::SelectionResult run_method(const idpp::SceneData& scene, idpp::SelectionMethod method,
                                 const Config& cfg, bool raw_scores) {
  if (method == idpp::SelectionMethod::nms) {
    std::vector<idpp::Detection> dets;
    dets.reserve(scene.candidates.size());
    for (const idpp::Candidate& c : scene.candidates) {
      dets.push_back({c.box, idpp::argmax_class(c.class_scores), c.class_scores.maxCoeff()});
    }
    return idpp::nms(dets, cfg.nms_tau);
  }
  idpp::ScenePreparation prep =
      idpp::prepare_scene(scene, cfg.lambda, cfg.beta, raw_scores,
                          idpp::PsdRepairKind::eigenclip, cfg.psd_epsilon);
  if (method == idpp::SelectionMethod::exact) return idpp::exact_map(prep.sim, prep.q);
  return idpp::idpp_greedy(prep.sim, prep.q);
}

int cmd_infer(const std::vector<std::string>& files, const std::string& method_name,
              const std::string& out_dir, bool raw_scores, const Config& cfg) {
  idpp::SelectionMethod method = idpp::SelectionMethod::idpp;
  if (method_name == "exact") method = idpp::SelectionMethod::exact;
  if (method_name == "nms") method = idpp::SelectionMethod::nms;

  std::vector<idpp::SceneData> scenes;
  scenes.reserve(files.size());
  for (const std::string& path : files) scenes.push_back(idpp::load_scene_file(path));
  std::sort(scenes.begin(), scenes.end(),
            [](const idpp::SceneData& a, const idpp::SceneData& b) {
              return a.image_id < b.image_id;
            });
  for (std::size_t i = 1; i < scenes.size(); ++i) {
    if (scenes[i].image_id == scenes[i - 1].image_id) {
      throw idpp::validation_error("infer: duplicate image_id '" + scenes[i].image_id + "'");
    }
  }

  std::vector<idpp::SelectionResult> results(scenes.size());
  std::exception_ptr failure = nullptr;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < static_cast<int>(scenes.size()); ++i) {
    try {
      results[i] = run_method(scenes[i], method, cfg, raw_scores);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::filesystem::create_directories(out_dir);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const std::string out_path = out_dir + "/" + scenes[i].image_id + ".selection.json";
    idpp::write_file(out_path, idpp::selection_to_json(results[i]));
    std::cout << scenes[i].image_id << ": selected " << results[i].selected.size() << " of "
              << scenes[i].candidates.size() << ", final_cost=" << results[i].final_cost
              << " -> " << out_path << "\n";
  }
  return code(ExitCode::ok);
}

idpp::BoundingBox random_box(idpp::Rng& rng, double extent) {
  const double w = extent * rng.uniform(0.15, 0.4);
  const double h = extent * rng.uniform(0.15, 0.4);
  const double x = rng.uniform(0.0, extent - w);
  const double y = rng.uniform(0.0, extent - h);
  return {x, y, x + w, y + h};
}

std::vector<int> random_subset(idpp::Rng& rng, int n, int min_size) {
  std::vector<int> out;
  for (;;) {
    out.clear();
    for (int i = 0; i < n; ++i) {
      if (rng.uniform() < 0.5) out.push_back(i);
    }
    if (static_cast<int>(out.size()) >= min_size) return out;
  }
}

struct RandomInstance {
  idpp::SimilarityMatrix sim;
  Eigen::MatrixXd iou_mat;
  Eigen::MatrixXd V;
  Eigen::VectorXd q;
};

RandomInstance random_instance(idpp::Rng& rng, int n, int r, const Config& cfg) {
  RandomInstance inst;
  Eigen::MatrixXd raw(n, r);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < r; ++j) raw(i, j) = rng.normal();
  }
  const idpp::FeatureMatrix feats = idpp::FeatureMatrix::from_raw(raw);
  std::vector<idpp::BoundingBox> boxes;
  boxes.reserve(n);
  for (int i = 0; i < n; ++i) boxes.push_back(random_box(rng, 100.0));
  inst.iou_mat = idpp::iou_matrix(boxes, idpp::Exec::serial);
  inst.sim = idpp::build_similarity(feats, inst.iou_mat, cfg.lambda,
                                    idpp::PsdRepairKind::eigenclip, cfg.psd_epsilon,
                                    idpp::Exec::serial);
  inst.V = feats.V;
  inst.q.resize(n);
  for (int i = 0; i < n; ++i) inst.q(i) = std::exp(cfg.beta * rng.uniform());
  return inst;
}

int cmd_gradcheck(int seeds, bool inject_fault, const Config& cfg) {
  const double threshold = 1e-5;
  double worst_ss = 0.0;
  double worst_id = 0.0;

  for (int seed = 0; seed < seeds; ++seed) {
    idpp::Rng rng(cfg.rng_seed + 7919u * static_cast<std::uint64_t>(seed + 1));
    const int n = 3 + static_cast<int>(rng.index(6));
    const int r = 2 + static_cast<int>(rng.index(7));
    RandomInstance inst = random_instance(rng, n, r, cfg);

    std::vector<int> y_pos = random_subset(rng, n, 1);
    std::vector<int> y_all(n);
    std::iota(y_all.begin(), y_all.end(), 0);

    Eigen::VectorXd ss_analytic = idpp::grad_ss_wrt_q(inst.sim.S, inst.q, y_pos, y_all);
    if (inject_fault) ss_analytic(0) += 1e-3;
    auto ss_value = [&](const Eigen::VectorXd& qv) {
      return idpp::ss_loss(idpp::build_kernel(inst.sim, qv), y_pos);
    };
    const Eigen::VectorXd ss_fd = idpp::finite_diff(ss_value, inst.q, cfg.fd_step);
    worst_ss = std::max(worst_ss, idpp::max_relative_error(ss_analytic, ss_fd));

    std::vector<int> y_s = random_subset(rng, n, 2);
    std::vector<int> y_rep;
    while (y_rep.empty()) {
      for (int j : y_s) {
        if (rng.uniform() < 0.5) y_rep.push_back(j);
      }
    }
    std::map<int, idpp::ClassSets> per_class;
    {
      idpp::ClassSets even, odd;
      for (std::size_t i = 0; i < y_s.size(); ++i) {
        (i % 2 == 0 ? even : odd).pool.push_back(y_s[i]);
      }
      for (int j : y_rep) {
        auto& target = std::find(even.pool.begin(), even.pool.end(), j) != even.pool.end()
                           ? even
                           : odd;
        target.y_ck.push_back(j);
      }
      if (!even.y_ck.empty()) per_class[0] = even;
      if (!odd.y_ck.empty()) per_class[1] = odd;
    }

    Eigen::MatrixXd id_analytic =
        idpp::grad_id_wrt_V(inst.V, inst.iou_mat, inst.q, cfg.lambda, y_rep, y_s, per_class);
    if (inject_fault) id_analytic(0, 0) += 1e-3;
    auto id_value = [&](const Eigen::MatrixXd& Vm) {
      const Eigen::MatrixXd S =
          cfg.lambda * (Vm * Vm.transpose()) + (1.0 - cfg.lambda) * inst.iou_mat;
      const Eigen::MatrixXd L =
          S.cwiseProduct((inst.q * inst.q.transpose()).eval());
      auto logdet_open = [&](const std::vector<int>& idx) {
        return idpp::log_det_psd(idpp::select_submatrix(L, idx), true, cfg.psd_epsilon);
      };
      auto logdet_plus_i = [&](const std::vector<int>& idx) {
        Eigen::MatrixXd sub = idpp::select_submatrix(L, idx);
        sub += Eigen::MatrixXd::Identity(sub.rows(), sub.cols());
        return idpp::log_det_psd(sub, false, cfg.psd_epsilon);
      };
      double total = -logdet_open(y_rep) + logdet_plus_i(y_s);
      if (!per_class.empty()) {
        double sum = 0.0;
        for (const auto& [class_id, sets] : per_class) {
          sum += -logdet_open(sets.y_ck) + logdet_plus_i(sets.pool);
        }
        total += sum / static_cast<double>(per_class.size());
      }
      return total;
    };
    if (!std::isfinite(id_value(inst.V))) {
      throw idpp::numerical_error("gradcheck: degenerate instance at seed " +
                                  std::to_string(seed));
    }
    const Eigen::MatrixXd id_fd = idpp::finite_diff(id_value, inst.V, cfg.fd_step);
    worst_id = std::max(worst_id, idpp::max_relative_error(id_analytic, id_fd));
  }

  std::cout << "ss gradient: max relative error " << worst_ss << " over " << seeds
            << " seeds (threshold " << threshold << ")\n";
  std::cout << "id gradient: max relative error " << worst_id << " over " << seeds
            << " seeds (threshold " << threshold << ")\n";
  if (worst_ss > threshold || worst_id > threshold) {
    std::cout << "gradcheck: FAIL\n";
    return code(ExitCode::numerical);
  }
  std::cout << "gradcheck: PASS\n";
  return code(ExitCode::ok);
}

int cmd_train_toy(const std::string& spec_path, const std::string& state_out,
                  const std::string& csv_out, const Config& cfg) {
  const idpp::TrainSpec spec = idpp::train_spec_from_json(idpp::read_file(spec_path));
  std::vector<idpp::SceneData> scenes;
  scenes.reserve(spec.n_scenes);
  for (int i = 0; i < spec.n_scenes; ++i) {
    idpp::SceneSpec scene_spec = spec.scene;
    scene_spec.rng_seed = spec.scene.rng_seed + static_cast<std::uint64_t>(i);
    scenes.push_back(idpp::generate_scene(scene_spec).scene);
  }
  const idpp::TrainState state = idpp::train_toy(scenes, cfg);
  idpp::write_file(state_out, idpp::train_state_to_json(state));
  idpp::write_file(csv_out, idpp::loss_history_csv(state.loss_history));
  if (!state.loss_history.empty()) {
    const idpp::LossBundle& first = state.loss_history.front();
    const idpp::LossBundle& last = state.loss_history.back();
    std::cout << "trained " << scenes.size() << " scene(s), " << state.step << " iterations\n";
    std::cout << "id_total " << first.id_total << " -> " << last.id_total << ", ce "
              << first.cross_entropy << " -> " << last.cross_entropy << ", ss " << first.ss
              << " -> " << last.ss << "\n";
  }
  std::cout << "wrote " << state_out << " and " << csv_out << "\n";
  return code(ExitCode::ok);
}

int cmd_eval(const std::string& det_path, const std::string& gt_path, bool coco_gt,
             const std::string& out_path, const Config& cfg) {
  const std::vector<idpp::ImageEval> images = idpp::load_eval_inputs(det_path, gt_path, coco_gt);
  const idpp::EvalReport report = idpp::evaluate(images, cfg.crowd_tau);
  const std::string json = idpp::report_to_json(report);
  if (out_path.empty()) {
    std::cout << json;
  } else {
    idpp::write_file(out_path, json);
    std::cout << "wrote " << out_path << "\n";
  }
  return code(ExitCode::ok);
}

int cmd_selftest(const Config& cfg) {
  bool ok = true;

  {
    const int trials = 60;
    int passed = 0;
    for (int t = 0; t < trials; ++t) {
      idpp::Rng rng(cfg.rng_seed + 9000u + static_cast<std::uint64_t>(t));
      const int n = 2 + static_cast<int>(rng.index(7));
      RandomInstance inst = random_instance(rng, n, 4, cfg);
      const idpp::KernelMatrix kernel = idpp::build_kernel(inst.sim, inst.q);
      double total = 0.0;
      for (unsigned mask = 0; mask < (1u << n); ++mask) {
        std::vector<int> idx;
        for (int i = 0; i < n; ++i) {
          if (mask & (1u << i)) idx.push_back(i);
        }
        total += idx.empty() ? 1.0 : idpp::select_submatrix(kernel.L, idx).determinant();
      }
      const Eigen::MatrixXd li =
          kernel.L + Eigen::MatrixXd::Identity(kernel.size(), kernel.size());
      const double expected = li.determinant();
      if (std::abs(total - expected) / expected < 1e-10) ++passed;
    }
    std::cout << "normalization identity: " << passed << "/" << trials << " within 1e-10\n";
    ok = ok && passed == trials;
  }

  {
    const int trials = 100;
    int dominated = 0;
    int locally_optimal = 0;
    int exact_match = 0;
    for (int t = 0; t < trials; ++t) {
      idpp::Rng rng(cfg.rng_seed + 17000u + static_cast<std::uint64_t>(t));
      const int n = 2 + static_cast<int>(rng.index(9));
      RandomInstance inst = random_instance(rng, n, 4, cfg);
      const idpp::SelectionResult greedy = idpp::idpp_greedy(inst.sim, inst.q);
      const idpp::SelectionResult exact = idpp::exact_map(inst.sim, inst.q);
      if (greedy.final_cost <= exact.final_cost) ++dominated;
      if (greedy.final_cost == exact.final_cost) ++exact_match;
      bool local = true;
      for (int j = 0; j < n; ++j) {
        if (std::find(greedy.selected.begin(), greedy.selected.end(), j) !=
            greedy.selected.end()) {
          continue;
        }
        std::vector<int> augmented = greedy.selected;
        augmented.push_back(j);
        if (idpp::subset_cost(inst.sim, inst.q, augmented) > greedy.final_cost) local = false;
      }
      if (local) ++locally_optimal;
    }
    std::cout << "greedy dominance: " << dominated << "/" << trials << ", exact match "
              << exact_match << "/" << trials << "\n";
    std::cout << "local optimality: " << locally_optimal << "/" << trials << "\n";
    ok = ok && dominated == trials && locally_optimal == trials;
  }

  {
    const int trials = 200;
    int passed = 0;
    for (int t = 0; t < trials; ++t) {
      idpp::Rng rng(cfg.rng_seed + 31000u + static_cast<std::uint64_t>(t));
      const int rows = 1 + static_cast<int>(rng.index(5));
      const int cols = 1 + static_cast<int>(rng.index(5));
      Eigen::MatrixXd cost(rows, cols);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) cost(i, j) = rng.uniform();
      }
      const idpp::Assignment assignment = idpp::hungarian(cost);
      const int small = std::min(rows, cols);
      const int large = std::max(rows, cols);
      std::vector<int> perm(large);
      std::iota(perm.begin(), perm.end(), 0);
      double best = std::numeric_limits<double>::infinity();
      do {
        double s = 0.0;
        for (int i = 0; i < small; ++i) {
          s += rows <= cols ? cost(i, perm[i]) : cost(perm[i], i);
        }
        best = std::min(best, s);
      } while (std::next_permutation(perm.begin(), perm.end()));
      if (assignment.total_cost == best) ++passed;
    }
    std::cout << "hungarian vs brute force: " << passed << "/" << trials << " exact\n";
    ok = ok && passed == trials;
  }

  std::cout << (ok ? "selftest: PASS\n" : "selftest: FAIL\n");
  return ok ? code(ExitCode::ok) : code(ExitCode::numerical);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Determinantal candidate selection for object detection"};
  app.require_subcommand(1);
  int exit_code = code(ExitCode::ok);

  CLI::App* infer = app.add_subcommand("infer", "select candidates from scene files");
  std::vector<std::string> infer_files;
  std::string infer_method = "idpp";
  std::string infer_out_dir = ".";
  bool infer_raw_scores = false;
  ConfigArgs infer_cfg;
  infer->add_option("scenes", infer_files, "scene JSON files")->required();
  infer->add_option("--method", infer_method, "idpp|exact|nms")
      ->check(CLI::IsMember({"idpp", "exact", "nms"}));
  infer->add_option("--out-dir", infer_out_dir, "directory for selection files");
  infer->add_flag("--raw-scores", infer_raw_scores,
                  "use raw max scores as qualities (degenerate regime)");
  infer_cfg.attach(infer);
  infer->callback([&] {
    exit_code = cmd_infer(infer_files, infer_method, infer_out_dir, infer_raw_scores,
                          infer_cfg.resolve());
  });

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  int gradcheck_seeds = 20;
  bool gradcheck_fault = false;
  ConfigArgs gradcheck_cfg;
  gradcheck->add_option("--seeds", gradcheck_seeds, "number of random instances")
      ->check(CLI::PositiveNumber);
  gradcheck->add_flag("--inject-fault", gradcheck_fault,
                      "corrupt the analytic gradients to prove the check can fail");
  gradcheck_cfg.attach(gradcheck);
  gradcheck->callback(
      [&] { exit_code = cmd_gradcheck(gradcheck_seeds, gradcheck_fault, gradcheck_cfg.resolve()); });

  CLI::App* train = app.add_subcommand("train-toy", "run the synthetic two-phase trainer");
  std::string train_spec_path;
  std::string train_state_out = "train_state.json";
  std::string train_csv_out = "loss_history.csv";
  ConfigArgs train_cfg;
  train->add_option("spec", train_spec_path, "scene spec JSON file")->required();
  train->add_option("--state-out", train_state_out, "trained parameters output path");
  train->add_option("--csv-out", train_csv_out, "loss history CSV output path");
  train_cfg.attach(train);
  train->callback([&] {
    exit_code = cmd_train_toy(train_spec_path, train_state_out, train_csv_out,
                              train_cfg.resolve());
  });

  CLI::App* eval = app.add_subcommand("eval", "score detections against ground truth");
  std::string eval_dets;
  std::string eval_gt;
  std::string eval_out;
  bool eval_coco = false;
  ConfigArgs eval_cfg;
  eval->add_option("detections", eval_dets, "detections JSON file")->required();
  eval->add_option("ground_truth", eval_gt, "ground-truth JSON file")->required();
  eval->add_flag("--coco-gt", eval_coco, "ground truth is in the COCO-like annotation shape");
  eval->add_option("-o,--out", eval_out, "write the report here instead of stdout");
  eval_cfg.attach(eval);
  eval->callback(
      [&] { exit_code = cmd_eval(eval_dets, eval_gt, eval_coco, eval_out, eval_cfg.resolve()); });

  CLI::App* selftest = app.add_subcommand("selftest", "run built-in correctness checks");
  ConfigArgs selftest_cfg;
  selftest_cfg.attach(selftest);
  selftest->callback([&] { exit_code = cmd_selftest(selftest_cfg.resolve()); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int parse_code = app.exit(e);
    return parse_code == 0 ? code(ExitCode::ok) : code(ExitCode::usage);
  } catch (const idpp::validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return code(ExitCode::validation);
  } catch (const idpp::numerical_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return code(ExitCode::numerical);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return code(ExitCode::numerical);
  }
  return exit_code;
}
