#include "doctest.h"

#include <cmath>

#include "idpp/geometry.hpp"
#include "idpp/rng.hpp"
#include "test_support.hpp"

using idpp::BoundingBox;
using idpp::GroundTruthObject;

TEST_CASE("box accessors and validity") {
  const BoundingBox b{2.0, 3.0, 10.0, 7.0};
  CHECK(b.width() == 8.0);
  CHECK(b.height() == 4.0);
  CHECK(b.area() == 32.0);
  CHECK(b.valid());
  CHECK_FALSE(BoundingBox{5.0, 0.0, 5.0, 10.0}.valid());
  CHECK_FALSE(BoundingBox{6.0, 0.0, 5.0, 10.0}.valid());
}

TEST_CASE("iou of half-offset unit squares is exactly one third") {
  // Intersection 0.5, union 1.5.
  const BoundingBox a{0.0, 0.0, 1.0, 1.0};
  const BoundingBox b{0.5, 0.0, 1.5, 1.0};
  CHECK(idpp::iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("iou special cases") {
  const BoundingBox a{0.0, 0.0, 10.0, 10.0};
  CHECK(idpp::iou(a, a) == 1.0);
  CHECK(idpp::iou(a, {20.0, 20.0, 30.0, 30.0}) == 0.0);
  // Shared edge only: zero-area intersection.
  CHECK(idpp::iou(a, {10.0, 0.0, 20.0, 10.0}) == 0.0);
  // Containment: 5x5 inside 10x10.
  CHECK(idpp::iou(a, {0.0, 0.0, 5.0, 5.0}) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("iou matches a rasterized pixel-count oracle on random boxes") {
  idpp::Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const BoundingBox a = test_support::random_box(rng);
    const BoundingBox b = test_support::random_box(rng);
    const double exact = idpp::iou(a, b);
    const double coarse = test_support::rasterized_iou(a, b, 400);
    const double fine = test_support::rasterized_iou(a, b, 800);
    // The raster estimate must converge toward the closed form.
    CHECK(std::abs(fine - exact) <= std::abs(coarse - exact) + 5e-3);
    CHECK(fine == doctest::Approx(exact).epsilon(0.02));
  }
}

TEST_CASE("iou shrinks when one box of an overlapping pair moves away") {
  const BoundingBox a{0.0, 0.0, 10.0, 10.0};
  double prev = 1.0;
  for (double shift = 1.0; shift <= 9.0; shift += 1.0) {
    const double cur = idpp::iou(a, {shift, 0.0, shift + 10.0, 10.0});
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("iou_matrix is symmetric with unit diagonal and matches pairwise calls") {
  idpp::Rng rng(7);
  const auto boxes = test_support::random_boxes(rng, 12);
  const Eigen::MatrixXd m = idpp::iou_matrix(boxes, idpp::Exec::serial);
  REQUIRE(m.rows() == 12);
  REQUIRE(m.cols() == 12);
  for (int i = 0; i < 12; ++i) {
    CHECK(m(i, i) == 1.0);
    for (int j = 0; j < 12; ++j) {
      CHECK(m(i, j) == m(j, i));
      CHECK(m(i, j) == idpp::iou(boxes[i], boxes[j]));
    }
  }
}

TEST_CASE("iou_matrix parallel output is bitwise equal to serial") {
  idpp::Rng rng(11);
  const auto boxes = test_support::random_boxes(rng, 40);
  const Eigen::MatrixXd serial = idpp::iou_matrix(boxes, idpp::Exec::serial);
  const Eigen::MatrixXd parallel = idpp::iou_matrix(boxes, idpp::Exec::parallel);
  CHECK(serial == parallel);
}

TEST_CASE("crowd_objects keeps exactly the members of overlapping pairs") {
  // Objects 0, 1, 2 overlap each other regardless of class; 3 is far away.
  // Crowding is class-agnostic and reported by instance id.
  std::vector<GroundTruthObject> gts;
  gts.push_back({{0.0, 0.0, 10.0, 10.0}, 1, 100});
  gts.push_back({{2.0, 0.0, 12.0, 10.0}, 1, 101});
  gts.push_back({{1.0, 0.0, 11.0, 10.0}, 2, 102});
  gts.push_back({{50.0, 50.0, 60.0, 60.0}, 1, 103});
  const auto crowd = idpp::crowd_objects(gts, 0.3);
  REQUIRE(crowd.size() == 3);
  CHECK(crowd[0] == 100);
  CHECK(crowd[1] == 101);
  CHECK(crowd[2] == 102);
}

TEST_CASE("crowd membership requires overlap strictly above the threshold") {
  // IoU of these boxes is exactly 0.25: intersection 40, union 160.
  std::vector<GroundTruthObject> gts;
  gts.push_back({{0.0, 0.0, 10.0, 10.0}, 1, 0});
  gts.push_back({{6.0, 0.0, 16.0, 10.0}, 1, 1});
  CHECK(idpp::iou(gts[0].box, gts[1].box) == 0.25);
  CHECK(idpp::crowd_objects(gts, 0.25).empty());
  CHECK(idpp::crowd_objects(gts, 0.2499).size() == 2);
}

TEST_CASE("crowd set never grows when the threshold rises") {
  idpp::Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<GroundTruthObject> gts;
    const int n = 3 + static_cast<int>(rng.index(5));
    for (int i = 0; i < n; ++i) {
      gts.push_back({test_support::random_box(rng), static_cast<int>(rng.index(2)), i});
    }
    std::size_t prev = idpp::crowd_objects(gts, 0.0).size();
    for (double tau : {0.1, 0.2, 0.3, 0.5, 0.9}) {
      const std::size_t cur = idpp::crowd_objects(gts, tau).size();
      CHECK(cur <= prev);
      prev = cur;
    }
  }
}

TEST_CASE("a single object is never a crowd") {
  std::vector<GroundTruthObject> gts;
  gts.push_back({{0.0, 0.0, 10.0, 10.0}, 1, 0});
  CHECK(idpp::crowd_objects(gts, 0.0).empty());
}
