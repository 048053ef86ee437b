#pragma once

#include "pseudotrack/geometry.hpp"
#include "pseudotrack/learning.hpp"
#include "pseudotrack/reconstruction.hpp"

#include <random>
#include <vector>

namespace fixture {

using namespace pseudotrack;

inline PinholeIntrinsics default_camera(const CameraId& id = "cam0") {
  return PinholeIntrinsics{id, 500.0, 500.0, 320.0, 240.0, 640, 480};
}

// One camera, `views` frames, centres spread evenly along x over `baseline`
// meters, all looking down +z.
inline Calibration line_rig(int views, double baseline, const PinholeIntrinsics& K = default_camera()) {
  Calibration c;
  c.add_camera(K);
  for (int f = 0; f < views; ++f) {
    const double x = views > 1 ? baseline * f / (views - 1) - 0.5 * baseline : 0.0;
    c.add_pose(Pose(Eigen::Quaterniond::Identity(), Vec3(x, 0.0, 0.0), f, K.camera_id));
  }
  return c;
}

// Observations of `p` in every pose of the calibration, with optional noise.
inline KeypointTrack observe(const Vec3& p, const Calibration& calib, int track_id, double sigma = 0.0,
                             std::mt19937_64* rng = nullptr) {
  KeypointTrack t{track_id, {}};
  std::normal_distribution<double> n(0.0, sigma > 0.0 ? sigma : 1.0);
  for (const auto& [key, pose] : calib.poses()) {
    const auto& K = calib.intrinsics(key.second);
    const auto pr = project(p, pose, K);
    double u = pr.pixel.x(), v = pr.pixel.y();
    if (sigma > 0.0 && rng) {
      u += n(*rng);
      v += n(*rng);
    }
    t.observations.push_back(KeypointObservation{key.first, key.second, u, v});
  }
  return t;
}

// Planted model: targets are an affine map of the descriptor.
inline std::vector<TrainingSample> planted_dataset(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::Matrix<double, 3, kDescriptorDim> A;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < kDescriptorDim; ++j) A(i, j) = u(rng) * 2.0 - 1.0;
  const Vec3 c(0.5, -0.2, 1.5);
  std::vector<TrainingSample> data;
  for (int k = 0; k < n; ++k) {
    Descriptor d;
    for (int j = 0; j < kDescriptorDim; ++j) d[j] = u(rng);
    data.push_back({d, A * d + c});
  }
  return data;
}

}  // namespace fixture
