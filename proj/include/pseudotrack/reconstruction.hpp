#pragma once

#include "pseudotrack/geometry.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

namespace pseudotrack {

struct KeypointObservation {
  int frame_index = 0;
  CameraId camera_id;
  double u = 0.0;
  double v = 0.0;
};

struct KeypointTrack {
  int track_id = 0;
  std::vector<KeypointObservation> observations;
};

struct LMConfig {
  int max_iterations = 50;
  double initial_damping = 1e-3;
  double damping_up = 10.0;
  double damping_down = 0.1;
  double cost_tolerance = 1e-10;
  std::optional<double> huber_delta;  // pixels; off by default

  void validate() const;
};

using ReprojectionJacobian = Eigen::Matrix<double, 2, 3>;

// d(u, v) / d(world point), analytic.
ReprojectionJacobian reprojection_jacobian(const Vec3& point, const Pose& pose,
                                           const PinholeIntrinsics& intrinsics);

// Linear (DLT) triangulation over every observation of the track.
Vec3 triangulate_dlt(const KeypointTrack& track, const Calibration& calib);

struct PointSolveStats {
  int track_id = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  std::size_t dropped_residuals = 0;   // observations behind the camera
  std::vector<double> cost_history;    // cost after each accepted step, starting at the initial cost
};

struct RefinementResult {
  std::vector<WorldPoint> points;
  std::vector<PointSolveStats> stats;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::size_t dropped_residuals = 0;
};

// Minimizes 0.5 * sum ||p - Pi(T, P, K)||^2 over points with poses fixed.
// tracks[i] provides the observations of initial[i]. Each point is an
// independent 3-parameter Levenberg-Marquardt problem.
RefinementResult refine_points_lm(const std::vector<Vec3>& initial,
                                  const std::vector<KeypointTrack>& tracks,
                                  const Calibration& calib, const LMConfig& cfg);

// Pixel reprojection error of one observation; +inf if behind the camera.
double reprojection_error(const Vec3& point, const KeypointObservation& obs,
                          const Calibration& calib);

struct OutlierFilterResult {
  std::vector<KeypointTrack> tracks;
  std::size_t removed_observations = 0;
  std::vector<int> dropped_tracks;
};

// Removes observations with reprojection error above the threshold, then
// drops tracks that fell below two observations or that kept less than
// min_inlier_fraction of their observations. points are matched to tracks by
// track_id; tracks without a point pass through unchanged.
OutlierFilterResult reject_outliers(const std::vector<KeypointTrack>& tracks,
                                    const std::vector<WorldPoint>& points,
                                    const Calibration& calib, double reproj_threshold_px,
                                    double min_inlier_fraction = 0.0);

// Mean camera-centre speed over consecutive frames, averaged over cameras.
double mean_ego_speed(const Calibration& calib, double frame_rate);

// true (keep the sequence) iff the mean ego speed is at least min_speed.
bool ego_speed_gate(const Calibration& calib, double frame_rate, double min_speed);

struct ReconstructionConfig {
  LMConfig lm;
  double reproj_threshold_px = 4.0;
  double min_inlier_fraction = 0.5;
  int gating_rounds = 3;
};

struct ReconstructedPoint {
  WorldPoint point;
  std::size_t num_observations = 0;
  double mean_reproj_error_px = 0.0;
};

struct ReconstructionResult {
  std::vector<ReconstructedPoint> points;  // sorted by track_id
  std::vector<KeypointTrack> inlier_tracks;
  std::size_t degenerate_tracks = 0;
  std::size_t removed_observations = 0;
  std::size_t dropped_tracks = 0;
  std::size_t dropped_residuals = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
};

// triangulate -> refine -> (reject outliers -> refine) repeated.
ReconstructionResult reconstruct(const std::vector<KeypointTrack>& tracks,
                                 const Calibration& calib, const ReconstructionConfig& cfg);

}  // namespace pseudotrack
