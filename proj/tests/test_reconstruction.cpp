#include <doctest.h>

#include "pseudotrack/errors.hpp"
#include "pseudotrack/reconstruction.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <cstdlib>
#include <random>

using namespace pseudotrack;

namespace {

Vec3 random_point(std::mt19937_64& rng, double zmin = 5.0, double zmax = 30.0) {
  std::uniform_real_distribution<double> xy(-4.0, 4.0), z(zmin, zmax);
  return {xy(rng), xy(rng), z(rng)};
}

}  // namespace

TEST_CASE("triangulate_dlt: noiseless three views") {
  const auto calib = fixture::line_rig(3, 2.0);
  const Vec3 truth(3, 1, 10);
  const auto track = fixture::observe(truth, calib, 1);
  CHECK((triangulate_dlt(track, calib) - truth).norm() < 1e-6);
}

TEST_CASE("triangulate_dlt: degenerate inputs") {
  Calibration calib;
  calib.add_camera(fixture::default_camera());
  calib.add_pose(Pose(Eigen::Quaterniond::Identity(), Vec3::Zero(), 0, "cam0"));
  calib.add_pose(Pose(Eigen::Quaterniond::Identity(), Vec3::Zero(), 1, "cam0"));
  const auto track = fixture::observe(Vec3(1, 0, 10), calib, 1);
  CHECK_THROWS_AS(triangulate_dlt(track, calib), DegenerateGeometry);

  KeypointTrack single{2, {track.observations.front()}};
  CHECK_THROWS_AS(triangulate_dlt(single, calib), InsufficientObservations);
}

TEST_CASE("triangulate_dlt: two noiseless views satisfy both projections") {
  std::mt19937_64 rng(21);
  const auto calib = fixture::line_rig(2, 1.0);
  for (int i = 0; i < 50; ++i) {
    const Vec3 truth = random_point(rng);
    const auto track = fixture::observe(truth, calib, i);
    const Vec3 p = triangulate_dlt(track, calib);
    for (const auto& o : track.observations) CHECK(reprojection_error(p, o, calib) < 1e-8);
  }
}

TEST_CASE("refine_points_lm: noiseless scene") {
  std::mt19937_64 rng(4);
  const auto calib = fixture::line_rig(10, 5.0);
  std::vector<KeypointTrack> tracks;
  std::vector<Vec3> truth, init;
  std::normal_distribution<double> jitter(0.0, 0.2);
  for (int i = 0; i < 30; ++i) {
    truth.push_back(random_point(rng));
    tracks.push_back(fixture::observe(truth.back(), calib, i));
    init.push_back(truth.back() + Vec3(jitter(rng), jitter(rng), jitter(rng)));
  }
  const auto res = refine_points_lm(init, tracks, calib, LMConfig{});
  double max_err = 0.0, max_px = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    max_err = std::max(max_err, (res.points[i].position - truth[i]).norm());
    for (const auto& o : tracks[i].observations) max_px = std::max(max_px, reprojection_error(res.points[i].position, o, calib));
  }
  CHECK(max_err < 1e-6);
  CHECK(max_px < 1e-8);
  CHECK(res.final_cost <= res.initial_cost);
}

TEST_CASE("refine_points_lm: config limits and monotone cost") {
  LMConfig cfg;
  cfg.max_iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);

  std::mt19937_64 rng(9);
  const auto calib = fixture::line_rig(10, 5.0);
  std::vector<KeypointTrack> tracks;
  std::vector<Vec3> init;
  for (int i = 0; i < 20; ++i) {
    const Vec3 p = random_point(rng);
    tracks.push_back(fixture::observe(p, calib, i, 1.0, &rng));
    init.push_back(p + Vec3(0.5, -0.3, 1.0));
  }
  LMConfig one;
  one.max_iterations = 1;
  const auto r1 = refine_points_lm(init, tracks, calib, one);
  CHECK(r1.final_cost <= r1.initial_cost);

  const auto r = refine_points_lm(init, tracks, calib, LMConfig{});
  for (const auto& s : r.stats) {
    for (std::size_t k = 1; k < s.cost_history.size(); ++k) CHECK(s.cost_history[k] <= s.cost_history[k - 1]);
  }
}

TEST_CASE("reprojection_jacobian matches central differences") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto K = fixture::default_camera();
  for (int i = 0; i < 100; ++i) {
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    const Pose pose(q, Vec3(n(rng), n(rng), n(rng)));
    const Vec3 pc(n(rng), n(rng), 3.0 + std::abs(n(rng)) * 10.0);
    const Vec3 pw = pose.camera_to_world(pc);
    const auto J = reprojection_jacobian(pw, pose, K);
    Eigen::Matrix<double, 2, 3> fd;
    for (int c = 0; c < 3; ++c) {
      auto f = [&](int row) {
        return [&, row](const Eigen::VectorXd& x) { return project(Vec3(x), pose, K).pixel[row]; };
      };
      for (int row = 0; row < 2; ++row) {
        fd(row, c) = oracle::numeric_gradient(f(row), Eigen::VectorXd(pw), 1e-6)[c];
      }
    }
    CHECK((J - fd).norm() / std::max(1.0, fd.norm()) < 1e-5);
  }
}

TEST_CASE("refine_points_lm is equivariant under rigid world motion") {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto calib = fixture::line_rig(8, 10.0);
  std::vector<KeypointTrack> tracks;
  std::vector<Vec3> init;
  for (int i = 0; i < 15; ++i) {
    const Vec3 p = random_point(rng);
    tracks.push_back(fixture::observe(p, calib, i, 0.7, &rng));
    init.push_back(p + Vec3(n(rng), n(rng), n(rng)) * 0.3);
  }
  Eigen::Quaterniond g(0.9, 0.1, -0.3, 0.2);
  g.normalize();
  const Vec3 gt(4.0, -2.0, 7.0);
  Calibration moved;
  moved.add_camera(fixture::default_camera());
  for (const auto& [key, pose] : calib.poses()) {
    moved.add_pose(Pose(g * pose.rotation(), g * pose.translation() + gt, key.first, key.second));
  }
  std::vector<Vec3> init_moved;
  for (const auto& p : init) init_moved.push_back(g * p + gt);

  const auto a = refine_points_lm(init, tracks, calib, LMConfig{});
  const auto b = refine_points_lm(init_moved, tracks, moved, LMConfig{});
  for (std::size_t i = 0; i < init.size(); ++i) {
    CHECK((g * a.points[i].position + gt - b.points[i].position).norm() < 1e-8);
  }
}

TEST_CASE("refine_points_lm: Huber loss down-weights a gross outlier") {
  const auto calib = fixture::line_rig(8, 4.0);
  const Vec3 truth(1.0, 0.5, 12.0);
  auto track = fixture::observe(truth, calib, 1);
  track.observations[3].u += 60.0;
  LMConfig plain, huber;
  huber.huber_delta = 2.0;
  const auto rp = refine_points_lm({truth + Vec3(0.2, 0.2, 0.5)}, {track}, calib, plain);
  const auto rh = refine_points_lm({truth + Vec3(0.2, 0.2, 0.5)}, {track}, calib, huber);
  CHECK((rh.points[0].position - truth).norm() < (rp.points[0].position - truth).norm());
}

TEST_CASE("reject_outliers") {
  const auto calib = fixture::line_rig(6, 3.0);
  const Vec3 truth(0.5, -0.5, 15.0);
  auto track = fixture::observe(truth, calib, 7);
  const std::vector<WorldPoint> pts{{truth, 7}};

  auto r = reject_outliers({track}, pts, calib, 4.0);
  CHECK(r.removed_observations == 0);
  CHECK(r.tracks.size() == 1);
  CHECK(r.tracks[0].observations.size() == track.observations.size());

  auto perturbed = track;
  perturbed.observations[2].v += 50.0;
  r = reject_outliers({perturbed}, pts, calib, 4.0);
  CHECK(r.removed_observations == 1);
  REQUIRE(r.tracks.size() == 1);
  CHECK(r.tracks[0].observations.size() == track.observations.size() - 1);
  for (const auto& o : r.tracks[0].observations) CHECK(o.frame_index != 2);

  r = reject_outliers({perturbed}, pts, calib, std::numeric_limits<double>::infinity());
  CHECK(r.removed_observations == 0);
  CHECK(r.tracks[0].observations.size() == perturbed.observations.size());

  // Down to one observation -> dropped.
  KeypointTrack two{8, {track.observations[0], track.observations[1]}};
  two.observations[1].u += 40.0;
  r = reject_outliers({two}, {{truth, 8}}, calib, 4.0);
  CHECK(r.tracks.empty());
  CHECK(r.dropped_tracks == std::vector<int>{8});
}

TEST_CASE("ego_speed_gate") {
  auto rig = [](double step) {
    Calibration c;
    c.add_camera(fixture::default_camera());
    for (int f = 0; f < 10; ++f) c.add_pose(Pose(Eigen::Quaterniond::Identity(), Vec3(0, 0, step * f), f, "cam0"));
    return c;
  };
  CHECK_FALSE(ego_speed_gate(rig(0.0), 10.0, 0.01));
  CHECK(ego_speed_gate(rig(1.0), 10.0, 5.0));
  CHECK_FALSE(ego_speed_gate(rig(0.1), 10.0, 5.0));
  CHECK(mean_ego_speed(rig(1.0), 10.0) == doctest::Approx(10.0));

  Calibration one;
  one.add_camera(fixture::default_camera());
  one.add_pose(Pose::identity(0, "cam0"));
  CHECK_THROWS_AS(mean_ego_speed(one, 10.0), ValidationError);
}

TEST_CASE("reconstruct removes a moving point and keeps static ones") {
  std::mt19937_64 rng(2);
  const auto calib = fixture::line_rig(10, 4.0);
  std::vector<KeypointTrack> tracks;
  for (int i = 0; i < 10; ++i) tracks.push_back(fixture::observe(random_point(rng, 8, 20), calib, i));
  // Moving point: 1.5 m lateral motion per frame.
  KeypointTrack moving{99, {}};
  for (const auto& [key, pose] : calib.poses()) {
    const Vec3 p(-3.0 + 1.5 * key.first, 0.0, 12.0);
    const auto pr = project(p, pose, calib.intrinsics(key.second));
    moving.observations.push_back({key.first, key.second, pr.pixel.x(), pr.pixel.y()});
  }
  tracks.push_back(moving);
  const auto r = reconstruct(tracks, calib, ReconstructionConfig{});
  CHECK(r.points.size() == 10);
  for (const auto& p : r.points) CHECK(p.point.track_id != 99);
}

TEST_CASE("refinement is independent of thread count") {
  std::mt19937_64 rng(12);
  const auto calib = fixture::line_rig(10, 5.0);
  std::vector<KeypointTrack> tracks;
  std::vector<Vec3> init;
  for (int i = 0; i < 64; ++i) {
    const Vec3 p = random_point(rng);
    tracks.push_back(fixture::observe(p, calib, i, 0.5, &rng));
    init.push_back(triangulate_dlt(tracks.back(), calib));
  }
  setenv("PSEUDOTRACK_THREADS", "1", 1);
  const auto a = refine_points_lm(init, tracks, calib, LMConfig{});
  setenv("PSEUDOTRACK_THREADS", "4", 1);
  const auto b = refine_points_lm(init, tracks, calib, LMConfig{});
  unsetenv("PSEUDOTRACK_THREADS");
  for (std::size_t i = 0; i < init.size(); ++i) CHECK(a.points[i].position == b.points[i].position);
}
