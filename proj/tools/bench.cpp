#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "idpp/dpp.hpp"
#include "idpp/geometry.hpp"
#include "idpp/gradients.hpp"
#include "idpp/inference.hpp"
#include "idpp/rng.hpp"

namespace {

using idpp::Exec;
using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn) {
  const auto start = Clock::now();
  fn();
  const auto end = Clock::now();
  return std::chrono::duration<double, std::milli>(end - start).count();
}

void report(const std::string& name, const std::string& size, double serial_ms,
            double parallel_ms, bool equal) {
  std::cout << std::left << std::setw(16) << name << std::setw(16) << size << std::right
            << std::fixed << std::setprecision(3) << std::setw(12) << serial_ms << " ms"
            << std::setw(12) << parallel_ms << " ms" << std::setprecision(2) << std::setw(9)
            << serial_ms / std::max(parallel_ms, 1e-9) << "x   " << (equal ? "bitwise equal" : "MISMATCH")
            << "\n";
}

std::vector<idpp::BoundingBox> random_boxes(idpp::Rng& rng, int n) {
  std::vector<idpp::BoundingBox> boxes;
  boxes.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double w = rng.uniform(10.0, 60.0);
    const double h = rng.uniform(10.0, 60.0);
    const double x = rng.uniform(0.0, 500.0);
    const double y = rng.uniform(0.0, 500.0);
    boxes.push_back({x, y, x + w, y + h});
  }
  return boxes;
}

Eigen::MatrixXd random_features(idpp::Rng& rng, int n, int r) {
  Eigen::MatrixXd raw(n, r);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < r; ++j) raw(i, j) = rng.normal();
  }
  return raw;
}

void bench_iou(int n) {
  idpp::Rng rng(100 + static_cast<std::uint64_t>(n));
  const auto boxes = random_boxes(rng, n);
  Eigen::MatrixXd serial_out, parallel_out;
  const double s = time_ms([&] { serial_out = idpp::iou_matrix(boxes, Exec::serial); });
  const double p = time_ms([&] { parallel_out = idpp::iou_matrix(boxes, Exec::parallel); });
  report("iou_matrix", "n=" + std::to_string(n), s, p, serial_out == parallel_out);
}

void bench_gram(int n, int r) {
  idpp::Rng rng(200 + static_cast<std::uint64_t>(n));
  const Eigen::MatrixXd V = idpp::FeatureMatrix::from_raw(random_features(rng, n, r)).V;
  Eigen::MatrixXd serial_out, parallel_out;
  const double s = time_ms([&] { serial_out = idpp::feature_gram(V, Exec::serial); });
  const double p = time_ms([&] { parallel_out = idpp::feature_gram(V, Exec::parallel); });
  report("feature_gram", "n=" + std::to_string(n) + " r=" + std::to_string(r), s, p,
         serial_out == parallel_out);
}

void bench_greedy(int n) {
  idpp::Rng rng(300 + static_cast<std::uint64_t>(n));
  const auto boxes = random_boxes(rng, n);
  const idpp::FeatureMatrix feats = idpp::FeatureMatrix::from_raw(random_features(rng, n, 32));
  const Eigen::MatrixXd iou_mat = idpp::iou_matrix(boxes, Exec::parallel);
  const idpp::SimilarityMatrix sim = idpp::build_similarity(feats, iou_mat);
  Eigen::VectorXd q(n);
  for (int i = 0; i < n; ++i) q(i) = std::exp(2.0 * rng.uniform());
  idpp::SelectionResult serial_out, parallel_out;
  const double s = time_ms([&] { serial_out = idpp::idpp_greedy(sim, q, Exec::serial); });
  const double p = time_ms([&] { parallel_out = idpp::idpp_greedy(sim, q, Exec::parallel); });
  const bool equal = serial_out.selected == parallel_out.selected &&
                     serial_out.final_cost == parallel_out.final_cost &&
                     serial_out.step_costs == parallel_out.step_costs;
  report("idpp_greedy", "n=" + std::to_string(n), s, p, equal);
}

void bench_finite_diff(int n) {
  idpp::Rng rng(400 + static_cast<std::uint64_t>(n));
  Eigen::MatrixXd M = random_features(rng, n, n);
  M = (M * M.transpose()).eval();
  M.diagonal().array() += static_cast<double>(n);
  auto loss = [&](const Eigen::VectorXd& x) { return 0.5 * x.dot(M * x) + x.sum(); };
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = rng.uniform(-1.0, 1.0);
  Eigen::VectorXd serial_out, parallel_out;
  const double s = time_ms([&] { serial_out = idpp::finite_diff(loss, x, 1e-6, Exec::serial); });
  const double p =
      time_ms([&] { parallel_out = idpp::finite_diff(loss, x, 1e-6, Exec::parallel); });
  report("finite_diff", "n=" + std::to_string(n), s, p, serial_out == parallel_out);
}

}  // namespace

int main() {
  std::cout << std::left << std::setw(16) << "benchmark" << std::setw(16) << "size" << std::right
            << std::setw(15) << "serial" << std::setw(15) << "parallel" << std::setw(10)
            << "speedup" << "   check\n";
  for (int n : {100, 400, 800}) bench_iou(n);
  for (int n : {100, 400, 800}) bench_gram(n, 64);
  for (int n : {50, 100, 200}) bench_greedy(n);
  for (int n : {64, 128, 256}) bench_finite_diff(n);
  return 0;
}
