#include "doctest.h"

#include <Eigen/Dense>
#include <vector>

#include "idpp/matching.hpp"
#include "idpp/rng.hpp"
#include "test_support.hpp"

using idpp::Assignment;
using idpp::Candidate;
using idpp::GroundTruthObject;

namespace {

Eigen::MatrixXd random_cost(idpp::Rng& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(0.0, 10.0);
  return m;
}

Candidate make_candidate(const idpp::BoundingBox& box, int cls, int n_classes = 3) {
  Candidate c;
  c.box = box;
  c.class_scores = Eigen::VectorXd::Constant(n_classes, 0.1);
  c.class_scores(cls) = 0.8;
  c.feature = Eigen::VectorXd::Ones(4).normalized();
  return c;
}

}  // namespace

TEST_CASE("assignment picks the zero diagonal when it exists") {
  Eigen::MatrixXd cost = Eigen::MatrixXd::Ones(3, 3);
  cost.diagonal().setZero();
  const Assignment a = idpp::hungarian(cost);
  REQUIRE(a.pairs.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(a.pairs[i].first == i);
    CHECK(a.pairs[i].second == i);
  }
  CHECK(a.total_cost == 0.0);
}

TEST_CASE("assignment avoids the greedy trap") {
  // Row-greedy would take (0,0)+(1,1) = 1+1 = 2; so does the optimum, but via
  // either diagonal. The anti-diagonal 2+2 = 4 must not be chosen.
  Eigen::MatrixXd cost(2, 2);
  cost << 1.0, 2.0, 2.0, 1.0;
  const Assignment a = idpp::hungarian(cost);
  CHECK(a.total_cost == 2.0);
  CHECK(a.pairs[0] == std::pair<int, int>{0, 0});
  CHECK(a.pairs[1] == std::pair<int, int>{1, 1});
}

TEST_CASE("square assignment matches exhaustive permutation search") {
  idpp::Rng rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(rng.index(5));
    const Eigen::MatrixXd cost = random_cost(rng, n, n);
    const Assignment a = idpp::hungarian(cost);
    const double brute = test_support::brute_force_assignment(cost);
    CHECK(a.total_cost == brute);
  }
}

TEST_CASE("rectangular assignment matches exhaustive search both ways") {
  idpp::Rng rng(103);
  for (int trial = 0; trial < 30; ++trial) {
    const int rows = 1 + static_cast<int>(rng.index(5));
    const int cols = 1 + static_cast<int>(rng.index(5));
    const Eigen::MatrixXd cost = random_cost(rng, rows, cols);
    const Assignment a = idpp::hungarian(cost);
    CHECK(static_cast<int>(a.pairs.size()) == std::min(rows, cols));
    CHECK(a.total_cost == test_support::brute_force_assignment(cost));
    double resum = 0.0;
    for (const auto& [r, c] : a.pairs) resum += cost(r, c);
    CHECK(a.total_cost == resum);
  }
}

TEST_CASE("six by six assignment agrees with all 720 permutations") {
  idpp::Rng rng(107);
  const Eigen::MatrixXd cost = random_cost(rng, 6, 6);
  const Assignment a = idpp::hungarian(cost);
  CHECK(a.total_cost == test_support::brute_force_assignment(cost));
}

TEST_CASE("uniform cost shifts keep the chosen pair set") {
  idpp::Rng rng(109);
  const Eigen::MatrixXd cost = random_cost(rng, 4, 4);
  const Assignment base = idpp::hungarian(cost);
  const Assignment shifted = idpp::hungarian(cost.array() + 5.0);
  CHECK(base.pairs == shifted.pairs);
  CHECK(shifted.total_cost == doctest::Approx(base.total_cost + 20.0).epsilon(1e-12));
}

TEST_CASE("ties break toward the lexicographically smallest pair list") {
  // All-equal costs: every permutation is optimal; identity must win.
  const Assignment a = idpp::hungarian(Eigen::MatrixXd::Ones(3, 3));
  for (int i = 0; i < 3; ++i) CHECK(a.pairs[i] == std::pair<int, int>{i, i});
}

TEST_CASE("empty cost matrix yields an empty assignment") {
  CHECK(idpp::hungarian(Eigen::MatrixXd(0, 0)).pairs.empty());
  CHECK(idpp::hungarian(Eigen::MatrixXd(0, 0)).total_cost == 0.0);
}

TEST_CASE("single row picks its cheapest column") {
  Eigen::MatrixXd cost(1, 4);
  cost << 3.0, 0.5, 2.0, 0.9;
  const Assignment a = idpp::hungarian(cost);
  REQUIRE(a.pairs.size() == 1);
  CHECK(a.pairs[0] == std::pair<int, int>{0, 1});
  CHECK(a.total_cost == 0.5);
}

TEST_CASE("representative matching pairs each object with its best-overlap candidate") {
  std::vector<GroundTruthObject> gts;
  gts.push_back({{0.0, 0.0, 10.0, 10.0}, 0, 0});
  gts.push_back({{30.0, 0.0, 40.0, 10.0}, 1, 1});
  std::vector<Candidate> cands;
  cands.push_back(make_candidate({0.0, 0.0, 10.0, 9.0}, 0));    // near gt 0
  cands.push_back(make_candidate({29.0, 0.0, 39.0, 10.0}, 1));  // near gt 1
  cands.push_back(make_candidate({1.0, 1.0, 11.0, 11.0}, 0));   // weaker near gt 0
  const auto matched = idpp::match_representatives(cands, gts);
  CHECK(matched == std::vector<int>{0, 1});
}

TEST_CASE("representative matching drops zero-overlap pairs") {
  std::vector<GroundTruthObject> gts;
  gts.push_back({{0.0, 0.0, 10.0, 10.0}, 0, 0});
  gts.push_back({{100.0, 100.0, 110.0, 110.0}, 0, 1});
  std::vector<Candidate> cands;
  cands.push_back(make_candidate({0.0, 0.0, 10.0, 10.0}, 0));
  // Nothing anywhere near gt 1: the assignment would pair it with the leftover
  // candidate at IoU 0, which must be discarded.
  cands.push_back(make_candidate({50.0, 50.0, 60.0, 60.0}, 0));
  const auto matched = idpp::match_representatives(cands, gts);
  CHECK(matched == std::vector<int>{0});
}

TEST_CASE("representative matching respects the class filter") {
  std::vector<GroundTruthObject> gts;
  gts.push_back({{0.0, 0.0, 10.0, 10.0}, 0, 0});
  gts.push_back({{1.0, 0.0, 11.0, 10.0}, 1, 1});
  std::vector<Candidate> cands;
  cands.push_back(make_candidate({0.0, 0.0, 10.0, 10.0}, 0));
  cands.push_back(make_candidate({1.0, 0.0, 11.0, 10.0}, 1));
  const auto class0 = idpp::match_representatives(cands, gts, 0);
  CHECK(class0 == std::vector<int>{0});
  const auto class1 = idpp::match_representatives(cands, gts, 1);
  CHECK(class1 == std::vector<int>{1});
  // Filter on a class with no ground truth: nothing to match.
  CHECK(idpp::match_representatives(cands, gts, 2).empty());
}

TEST_CASE("representative matching output is ascending and duplicate-free") {
  idpp::Rng rng(113);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<GroundTruthObject> gts;
    const int n_gt = 1 + static_cast<int>(rng.index(4));
    for (int i = 0; i < n_gt; ++i) {
      gts.push_back({test_support::random_box(rng), static_cast<int>(rng.index(3)), i});
    }
    std::vector<Candidate> cands;
    const int n_cand = 1 + static_cast<int>(rng.index(8));
    for (int i = 0; i < n_cand; ++i) {
      cands.push_back(make_candidate(test_support::random_box(rng),
                                     static_cast<int>(rng.index(3))));
    }
    const auto matched = idpp::match_representatives(cands, gts);
    CHECK(static_cast<int>(matched.size()) <= std::min(n_gt, n_cand));
    for (std::size_t k = 1; k < matched.size(); ++k) CHECK(matched[k - 1] < matched[k]);
  }
}
