#include "pseudotrack/reconstruction.hpp"

#include "pseudotrack/errors.hpp"
#include "pseudotrack/parallel.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

namespace pseudotrack {

void LMConfig::validate() const {
  if (max_iterations < 1) throw ValidationError("LMConfig: max_iterations must be >= 1");
  if (!(initial_damping > 0.0) || !(damping_up > 0.0) || !(damping_down > 0.0) ||
      !(cost_tolerance > 0.0)) {
    throw ValidationError("LMConfig: damping factors and tolerance must be positive");
  }
  if (huber_delta && !(*huber_delta > 0.0)) {
    throw ValidationError("LMConfig: huber_delta must be positive");
  }
}

ReprojectionJacobian reprojection_jacobian(const Vec3& point, const Pose& pose,
                                           const PinholeIntrinsics& k) {
  const Vec3 pc = pose.world_to_camera(point);
  const double iz = 1.0 / pc.z();
  Eigen::Matrix<double, 2, 3> d_proj;
  d_proj << k.fx * iz, 0.0, -k.fx * pc.x() * iz * iz,  //
      0.0, k.fy * iz, -k.fy * pc.y() * iz * iz;
  // d(pc)/d(point) = R^T
  return d_proj * pose.rotation_matrix().transpose();
}

Vec3 triangulate_dlt(const KeypointTrack& track, const Calibration& calib) {
  std::set<std::pair<int, CameraId>> views;
  for (const auto& obs : track.observations) views.insert({obs.frame_index, obs.camera_id});
  if (views.size() < 2) {
    throw InsufficientObservations("track " + std::to_string(track.track_id) +
                                   ": triangulation needs two distinct views");
  }

  std::vector<const Pose*> poses;
  poses.reserve(track.observations.size());
  Vec3 origin = Vec3::Zero();
  for (const auto& obs : track.observations) {
    poses.push_back(&calib.pose(obs.frame_index, obs.camera_id));
    origin += poses.back()->camera_center();
  }
  origin /= static_cast<double>(poses.size());

  double baseline = 0.0;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    for (std::size_t j = i + 1; j < poses.size(); ++j) {
      baseline = std::max(baseline, (poses[i]->camera_center() - poses[j]->camera_center()).norm());
    }
  }
  if (baseline < 1e-6) {
    throw DegenerateGeometry("track " + std::to_string(track.track_id) + ": zero baseline");
  }

  // Rows built in normalized image coordinates, world shifted to the mean
  // camera centre for conditioning.
  Eigen::MatrixXd a(2 * track.observations.size(), 4);
  for (std::size_t i = 0; i < track.observations.size(); ++i) {
    const auto& obs = track.observations[i];
    const auto& k = calib.intrinsics(obs.camera_id);
    const Mat3 rt = poses[i]->rotation_matrix().transpose();
    Eigen::Matrix<double, 3, 4> p;
    p.leftCols<3>() = rt;
    p.col(3) = rt * (origin - poses[i]->translation());
    const double x = (obs.u - k.cx) / k.fx;
    const double y = (obs.v - k.cy) / k.fy;
    a.row(2 * i) = x * p.row(2) - p.row(0);
    a.row(2 * i + 1) = y * p.row(2) - p.row(1);
  }
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double n = a.row(r).norm();
    if (n > 0.0) a.row(r) /= n;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (s(2) <= 1e-12 * s(0)) {
    throw DegenerateGeometry("track " + std::to_string(track.track_id) +
                             ": rank-deficient triangulation system");
  }
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) <= 1e-12 * h.head<3>().norm()) {
    throw DegenerateGeometry("track " + std::to_string(track.track_id) + ": parallel rays");
  }
  const Vec3 point = h.head<3>() / h(3) + origin;
  if (!point.allFinite()) {
    throw DegenerateGeometry("track " + std::to_string(track.track_id) + ": non-finite solution");
  }
  const bool in_front = std::any_of(poses.begin(), poses.end(), [&](const Pose* pose) {
    return pose->world_to_camera(point).z() > kMinDepth;
  });
  if (!in_front) {
    throw DegenerateGeometry("track " + std::to_string(track.track_id) +
                             ": triangulated point behind every camera");
  }
  return point;
}

namespace {

struct Residual {
  const Pose* pose;
  const PinholeIntrinsics* intrinsics;
  Vec2 observed;
};

double robust_cost(double squared_norm, const std::optional<double>& huber) {
  if (!huber) return 0.5 * squared_norm;
  const double r = std::sqrt(squared_norm);
  const double d = *huber;
  return r <= d ? 0.5 * squared_norm : d * r - 0.5 * d * d;
}

// Returns nullopt if any residual is behind its camera.
std::optional<double> total_cost(const Vec3& point, const std::vector<Residual>& residuals,
                                 const std::optional<double>& huber) {
  double cost = 0.0;
  for (const auto& r : residuals) {
    const Vec3 pc = r.pose->world_to_camera(point);
    if (!(pc.z() > kMinDepth)) return std::nullopt;
    cost += robust_cost((pinhole(pc, *r.intrinsics) - r.observed).squaredNorm(), huber);
  }
  return cost;
}

PointSolveStats refine_one(Vec3& point, const KeypointTrack& track, const Calibration& calib,
                           const LMConfig& cfg) {
  PointSolveStats stats;
  stats.track_id = track.track_id;

  std::vector<Residual> residuals;
  residuals.reserve(track.observations.size());
  for (const auto& obs : track.observations) {
    const Pose& pose = calib.pose(obs.frame_index, obs.camera_id);
    if (!(pose.world_to_camera(point).z() > kMinDepth)) {
      ++stats.dropped_residuals;
      continue;
    }
    residuals.push_back({&pose, &calib.intrinsics(obs.camera_id), Vec2(obs.u, obs.v)});
  }

  double cost = total_cost(point, residuals, cfg.huber_delta).value_or(0.0);
  stats.initial_cost = cost;
  stats.cost_history.push_back(cost);
  if (residuals.empty()) {
    stats.final_cost = cost;
    return stats;
  }

  double damping = cfg.initial_damping;
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    stats.iterations = iter + 1;
    Mat3 normal = Mat3::Zero();
    Vec3 gradient = Vec3::Zero();
    for (const auto& r : residuals) {
      const Vec3 pc = r.pose->world_to_camera(point);
      const Vec2 res = pinhole(pc, *r.intrinsics) - r.observed;
      const ReprojectionJacobian j = reprojection_jacobian(point, *r.pose, *r.intrinsics);
      double weight = 1.0;
      if (cfg.huber_delta) {
        const double n = res.norm();
        if (n > *cfg.huber_delta) weight = *cfg.huber_delta / n;
      }
      normal.noalias() += weight * j.transpose() * j;
      gradient.noalias() += weight * j.transpose() * res;
    }
    if (gradient.squaredNorm() == 0.0) break;

    // Isotropic damping scaled by the mean curvature keeps the step sequence
    // equivariant under rigid changes of the world frame.
    const double scale = std::max(normal.trace() / 3.0, 1e-300);
    bool accepted = false;
    while (!accepted && damping < 1e16) {
      const Mat3 damped = normal + damping * scale * Mat3::Identity();
      const Vec3 step = damped.ldlt().solve(-gradient);
      const Vec3 candidate = point + step;
      const auto candidate_cost = total_cost(candidate, residuals, cfg.huber_delta);
      if (candidate.allFinite() && candidate_cost && *candidate_cost < cost) {
        const double decrease = (cost - *candidate_cost) / std::max(cost, 1e-300);
        point = candidate;
        cost = *candidate_cost;
        stats.cost_history.push_back(cost);
        damping = std::max(damping * cfg.damping_down, 1e-15);
        accepted = true;
        if (decrease < cfg.cost_tolerance) {
          stats.final_cost = cost;
          return stats;
        }
      } else {
        damping *= cfg.damping_up;
      }
    }
    if (!accepted) break;
  }
  stats.final_cost = cost;
  return stats;
}

}  // namespace

RefinementResult refine_points_lm(const std::vector<Vec3>& initial,
                                  const std::vector<KeypointTrack>& tracks,
                                  const Calibration& calib, const LMConfig& cfg) {
  cfg.validate();
  if (initial.size() != tracks.size()) {
    throw ValidationError("refine_points_lm: one track per initial point required");
  }
  RefinementResult result;
  result.points.resize(initial.size());
  result.stats.resize(initial.size());
  parallel_for(initial.size(), [&](std::size_t i) {
    Vec3 p = initial[i];
    result.stats[i] = refine_one(p, tracks[i], calib, cfg);
    result.points[i] = WorldPoint{p, tracks[i].track_id};
  });
  for (const auto& s : result.stats) {
    result.initial_cost += s.initial_cost;
    result.final_cost += s.final_cost;
    result.dropped_residuals += s.dropped_residuals;
  }
  return result;
}

double reprojection_error(const Vec3& point, const KeypointObservation& obs,
                          const Calibration& calib) {
  const auto proj =
      try_project(point, calib.pose(obs.frame_index, obs.camera_id), calib.intrinsics(obs.camera_id));
  if (!proj) return std::numeric_limits<double>::infinity();
  return (proj->pixel - Vec2(obs.u, obs.v)).norm();
}

OutlierFilterResult reject_outliers(const std::vector<KeypointTrack>& tracks,
                                    const std::vector<WorldPoint>& points,
                                    const Calibration& calib, double reproj_threshold_px,
                                    double min_inlier_fraction) {
  std::unordered_map<int, const WorldPoint*> by_id;
  for (const auto& p : points) by_id[p.track_id] = &p;

  OutlierFilterResult out;
  for (const auto& track : tracks) {
    auto it = by_id.find(track.track_id);
    if (it == by_id.end()) {
      out.tracks.push_back(track);
      continue;
    }
    KeypointTrack kept{track.track_id, {}};
    for (const auto& obs : track.observations) {
      if (reprojection_error(it->second->position, obs, calib) > reproj_threshold_px) {
        ++out.removed_observations;
      } else {
        kept.observations.push_back(obs);
      }
    }
    const std::size_t before = track.observations.size();
    const std::size_t after = kept.observations.size();
    const bool fell_below_two = after < 2 && after < before;
    const bool too_few_inliers =
        static_cast<double>(after) < min_inlier_fraction * static_cast<double>(before);
    if (fell_below_two || too_few_inliers) {
      out.dropped_tracks.push_back(track.track_id);
    } else {
      out.tracks.push_back(std::move(kept));
    }
  }
  return out;
}

double mean_ego_speed(const Calibration& calib, double frame_rate) {
  if (!(frame_rate > 0.0)) throw ValidationError("frame rate must be positive");
  double sum = 0.0;
  std::size_t intervals = 0;
  std::set<int> frames;
  for (const auto& [key, pose] : calib.poses()) frames.insert(key.first);
  if (frames.size() < 2) throw ValidationError("ego speed needs at least two frames");
  for (const auto& [id, k] : calib.cameras()) {
    const auto poses = calib.camera_poses(id);
    for (std::size_t i = 1; i < poses.size(); ++i) {
      const double dt =
          static_cast<double>(poses[i].frame_index() - poses[i - 1].frame_index()) / frame_rate;
      sum += (poses[i].camera_center() - poses[i - 1].camera_center()).norm() / dt;
      ++intervals;
    }
  }
  return intervals == 0 ? 0.0 : sum / static_cast<double>(intervals);
}

bool ego_speed_gate(const Calibration& calib, double frame_rate, double min_speed) {
  return mean_ego_speed(calib, frame_rate) >= min_speed;
}

ReconstructionResult reconstruct(const std::vector<KeypointTrack>& tracks,
                                 const Calibration& calib, const ReconstructionConfig& cfg) {
  cfg.lm.validate();
  ReconstructionResult result;

  std::vector<std::optional<Vec3>> initial(tracks.size());
  parallel_for(tracks.size(), [&](std::size_t i) {
    try {
      initial[i] = triangulate_dlt(tracks[i], calib);
    } catch (const DegenerateGeometry&) {
    } catch (const InsufficientObservations&) {
    }
  });

  std::vector<KeypointTrack> current;
  std::vector<Vec3> starts;
  std::map<int, std::size_t> original_counts;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (!initial[i]) {
      ++result.degenerate_tracks;
      continue;
    }
    current.push_back(tracks[i]);
    starts.push_back(*initial[i]);
    original_counts[tracks[i].track_id] = tracks[i].observations.size();
  }

  RefinementResult refined = refine_points_lm(starts, current, calib, cfg.lm);
  result.initial_cost = refined.initial_cost;

  for (int round = 0; round < cfg.gating_rounds; ++round) {
    auto filtered = reject_outliers(current, refined.points, calib, cfg.reproj_threshold_px);
    std::set<int> dropped(filtered.dropped_tracks.begin(), filtered.dropped_tracks.end());
    for (const auto& t : filtered.tracks) {
      const double kept = static_cast<double>(t.observations.size());
      if (kept < cfg.min_inlier_fraction * static_cast<double>(original_counts[t.track_id])) {
        dropped.insert(t.track_id);
      }
    }
    if (filtered.removed_observations == 0 && dropped.empty()) break;
    result.removed_observations += filtered.removed_observations;
    result.dropped_tracks += dropped.size();

    std::unordered_map<int, Vec3> estimate;
    for (const auto& p : refined.points) estimate[p.track_id] = p.position;
    current.clear();
    starts.clear();
    for (auto& t : filtered.tracks) {
      if (dropped.count(t.track_id)) continue;
      starts.push_back(estimate.at(t.track_id));
      current.push_back(std::move(t));
    }
    refined = refine_points_lm(starts, current, calib, cfg.lm);
  }

  result.final_cost = refined.final_cost;
  result.dropped_residuals = refined.dropped_residuals;
  for (std::size_t i = 0; i < current.size(); ++i) {
    ReconstructedPoint rp;
    rp.point = refined.points[i];
    rp.num_observations = current[i].observations.size();
    double err = 0.0;
    for (const auto& obs : current[i].observations) {
      err += reprojection_error(rp.point.position, obs, calib);
    }
    rp.mean_reproj_error_px = rp.num_observations ? err / rp.num_observations : 0.0;
    result.points.push_back(rp);
  }
  std::sort(result.points.begin(), result.points.end(),
            [](const auto& a, const auto& b) { return a.point.track_id < b.point.track_id; });
  result.inlier_tracks = std::move(current);
  std::sort(result.inlier_tracks.begin(), result.inlier_tracks.end(),
            [](const auto& a, const auto& b) { return a.track_id < b.track_id; });
  return result;
}

}  // namespace pseudotrack
