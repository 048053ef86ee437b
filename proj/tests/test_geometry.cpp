#include <doctest.h>

#include "pseudotrack/errors.hpp"
#include "pseudotrack/geometry.hpp"
#include "support/oracles.hpp"

#include <random>

using namespace pseudotrack;

namespace {

PinholeIntrinsics cam100() { return {"c", 100.0, 100.0, 50.0, 50.0, 100, 100}; }

Pose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return Pose(q, Vec3(n(rng), n(rng), n(rng)) * 5.0);
}

}  // namespace

TEST_CASE("project: principal point and lateral offset") {
  const auto K = cam100();
  const Pose I = Pose::identity();
  auto p = project(Vec3(0, 0, 2), I, K);
  CHECK(p.pixel.x() == doctest::Approx(50.0));
  CHECK(p.pixel.y() == doctest::Approx(50.0));
  CHECK(p.depth == doctest::Approx(2.0));
  p = project(Vec3(1, 0, 2), I, K);
  CHECK(p.pixel.x() == doctest::Approx(100.0));
  CHECK(p.pixel.y() == doctest::Approx(50.0));
  CHECK(p.depth == doctest::Approx(2.0));
}

TEST_CASE("project: behind the camera") {
  CHECK_THROWS_AS(project(Vec3(0, 0, -1), Pose::identity(), cam100()), CheiralityViolation);
  CHECK_THROWS_AS(project(Vec3(0, 0, 0), Pose::identity(), cam100()), CheiralityViolation);
  CHECK_FALSE(try_project(Vec3(0, 0, -1), Pose::identity(), cam100()).has_value());
}

TEST_CASE("world_to_camera examples") {
  const Pose p(Eigen::Quaterniond::Identity(), Vec3(1, 2, 3));
  CHECK((world_to_camera(Vec3(1, 2, 3), p)).norm() == doctest::Approx(0.0));
  CHECK((world_to_camera(Vec3(1, 2, 5), p) - Vec3(0, 0, 2)).norm() < 1e-15);
}

TEST_CASE("camera/world round trip over random poses") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 10.0);
  for (int i = 0; i < 100; ++i) {
    const Pose pose = random_pose(rng);
    const Vec3 p(n(rng), n(rng), n(rng));
    CHECK((camera_to_world(world_to_camera(p, pose), pose) - p).norm() < 1e-12);
  }
}

TEST_CASE("project matches pinhole of world_to_camera and an independent formula") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  const PinholeIntrinsics K{"c", 420.0, 410.0, 320.0, 240.0, 640, 480};
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    const Pose pose = random_pose(rng);
    const Vec3 pc(n(rng), n(rng), 2.0 + std::abs(n(rng)) * 10.0);
    const Vec3 pw = pose.camera_to_world(pc);
    const auto pr = project(pw, pose, K);
    CHECK((pr.pixel - pinhole(world_to_camera(pw, pose), K)).norm() < 1e-12);
    const Vec2 ref = oracle::project(pose.rotation_matrix(), pose.translation(), K.fx, K.fy, K.cx, K.cy, pw);
    CHECK((pr.pixel - ref).norm() < 1e-9);
    ++checked;
  }
  CHECK(checked == 200);
}

TEST_CASE("pose inverse is an involution") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Pose p = random_pose(rng);
    const Pose back = p.inverse().inverse();
    CHECK(back.rotation().angularDistance(p.rotation()) < 1e-12);
    CHECK((back.translation() - p.translation()).norm() < 1e-12);
    const Pose id = p.compose(p.inverse());
    CHECK(id.translation().norm() < 1e-12);
  }
}

TEST_CASE("projection is constant along a ray") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  const PinholeIntrinsics K{"c", 500.0, 500.0, 320.0, 240.0, 640, 480};
  for (int i = 0; i < 50; ++i) {
    const Pose pose = random_pose(rng);
    const Vec3 dir_cam = Vec3(n(rng) * 0.3, n(rng) * 0.3, 1.0).normalized();
    const Vec3 dir = pose.rotation_matrix() * dir_cam;
    const Vec2 ref = project(pose.camera_center() + dir, pose, K).pixel;
    for (double s : {0.5, 2.0, 10.0, 100.0}) {
      CHECK((project(pose.camera_center() + s * dir, pose, K).pixel - ref).norm() < 1e-9);
    }
  }
}

TEST_CASE("point_in_bbox") {
  const auto K = cam100();
  BBox2D box;
  box.left = 40;
  box.top = 40;
  box.width_px = 20;
  box.height_px = 20;
  CHECK(point_in_bbox(Vec3(0, 0, 2), Pose::identity(), K, box));
  CHECK_FALSE(point_in_bbox(Vec3(1, 0, 2), Pose::identity(), K, box));
  CHECK_FALSE(point_in_bbox(Vec3(0, 0, -2), Pose::identity(), K, box));
}

TEST_CASE("intrinsics and pose validation") {
  PinholeIntrinsics K = cam100();
  K.fx = 0.0;
  CHECK_THROWS_AS(K.validate(), ValidationError);
  K = cam100();
  K.cx = 100.0;
  CHECK_THROWS_AS(K.validate(), ValidationError);
  CHECK_THROWS_AS(Pose(Eigen::Quaterniond(1.1, 0, 0, 0), Vec3::Zero()), ValidationError);
  CHECK_NOTHROW(Pose(Eigen::Quaterniond(1.0 + 5e-7, 0, 0, 0), Vec3::Zero()));
  const Pose p(Eigen::Quaterniond(1.0 + 5e-7, 0, 0, 0), Vec3::Zero());
  CHECK(std::abs(p.rotation().norm() - 1.0) < 1e-15);
}

TEST_CASE("bbox validation") {
  BBox2D b;
  b.width_px = 0;
  CHECK_THROWS_AS(b.validate(), ValidationError);
  b.width_px = 1;
  b.score = 1.5;
  CHECK_THROWS_AS(b.validate(), ValidationError);
}

TEST_CASE("calibration lookups") {
  Calibration c;
  c.add_camera(cam100());
  c.add_pose(Pose(Eigen::Quaterniond::Identity(), Vec3::Zero(), 0, "c"));
  CHECK(c.has_pose(0, "c"));
  CHECK_THROWS_AS(c.intrinsics("x"), DanglingReference);
  CHECK_THROWS_AS(c.pose(1, "c"), DanglingReference);
}
