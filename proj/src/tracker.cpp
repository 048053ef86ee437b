#include "pseudotrack/tracker.hpp"

#include "pseudotrack/errors.hpp"
#include "pseudotrack/parallel.hpp"
#include "pseudotrack/scene.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>

namespace pseudotrack {

namespace {

void symmetrize(Mat6& m) { m = 0.5 * (m + m.transpose()).eval(); }

}  // namespace

TrackState kf_predict(TrackState state, double dt, const KalmanNoise& noise) {
  Mat6 f = Mat6::Identity();
  f.topRightCorner<3, 3>() = dt * Mat3::Identity();
  Vec6 q;
  q << Vec3::Constant(noise.process_position * std::abs(dt)),
      Vec3::Constant(noise.process_velocity * std::abs(dt));
  state.kf_mean = f * state.kf_mean;
  state.kf_covariance = f * state.kf_covariance * f.transpose();
  state.kf_covariance.diagonal() += q;
  symmetrize(state.kf_covariance);
  return state;
}

TrackState kf_update(TrackState state, const Vec3& measurement, const KalmanNoise& noise) {
  const Mat3 r = noise.measurement * Mat3::Identity();
  const Mat3 s = state.kf_covariance.topLeftCorner<3, 3>() + r;
  Eigen::SelfAdjointEigenSolver<Mat3> eig(s);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) {
    throw SingularInnovation("innovation covariance is numerically singular");
  }
  // K = P H^T S^-1, H = [I 0]
  const Eigen::Matrix<double, 6, 3> pht = state.kf_covariance.leftCols<3>();
  const Eigen::Matrix<double, 6, 3> gain = s.ldlt().solve(pht.transpose()).transpose();
  const Vec3 innovation = measurement - state.kf_mean.head<3>();
  state.kf_mean += gain * innovation;

  Mat6 ikh = Mat6::Identity();
  ikh.leftCols<3>() -= gain;
  state.kf_covariance = ikh * state.kf_covariance * ikh.transpose() + gain * r * gain.transpose();
  symmetrize(state.kf_covariance);
  return state;
}

double iou(const BBox2D& a, const BBox2D& b) {
  const double w = std::min(a.right(), b.right()) - std::max(a.left, b.left);
  const double h = std::min(a.bottom(), b.bottom()) - std::max(a.top, b.top);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  return inter / (a.area() + b.area() - inter);
}

void TrackerConfig::validate() const {
  if (!(low_score_floor >= 0.0 && low_score_floor < detection_threshold &&
        detection_threshold <= 1.0)) {
    throw ValidationError("tracker thresholds must satisfy 0 <= low_score_floor < "
                          "detection_threshold <= 1");
  }
  if (max_age < 1) throw ValidationError("max_age must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  if (!(kernel_scale > 0.0)) throw ValidationError("kernel scale must be positive");
  if (!(noise.measurement > 0.0) || noise.process_position < 0.0 || noise.process_velocity < 0.0 ||
      !(noise.initial_velocity_variance > 0.0)) {
    throw ValidationError("Kalman noise parameters must be non-negative (measurement positive)");
  }
}

OnlineTracker::OnlineTracker(TrackerConfig cfg, std::optional<EncoderWeights> encoder)
    : cfg_(std::move(cfg)), encoder_(std::move(encoder)) {
  cfg_.validate();
  if (encoder_) encoder_->validate();
  mode_ = cfg_.three_d_mode.value_or(encoder_ ? ThreeDMode::learned_cosine
                                              : ThreeDMode::geometric_kernel);
  if (mode_ == ThreeDMode::learned_cosine && !encoder_) {
    throw ValidationError("learned-cosine 3D similarity needs encoder weights");
  }
}

namespace {

// Fused feature with a zero 3D half when no 3D feature is available.
FeatureVector fused_feature(const Eigen::VectorXd& appearance, const std::optional<Vec3>& camera_pos,
                            const EncoderWeights* encoder) {
  const FeatureVector app{appearance, FeatureKind::appearance};
  if (encoder && camera_pos) {
    const FeatureVector f3 = encode_3d(*camera_pos, *encoder);
    if (f3.values.norm() > 0.0 && app.values.norm() > 0.0) return fuse(app, f3);
  }
  const Eigen::Index d = appearance.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(2 * d);
  const double n = appearance.norm();
  if (n > 0.0) out.head(d) = appearance / n;
  return FeatureVector{std::move(out), FeatureKind::fused};
}

}  // namespace

std::vector<TrackEvent> OnlineTracker::step(std::span<const Detection> detections, const Pose& pose,
                                            double dt) {
  for (auto& t : tracks_) t = kf_predict(std::move(t), dt, cfg_.noise);

  const EncoderWeights* enc = mode_ == ThreeDMode::learned_cosine ? &*encoder_ : nullptr;
  const SimilarityConfig sim_cfg{cfg_.alpha, cfg_.appearance_threshold, mode_, cfg_.kernel_scale};

  std::vector<AssociationInput> det_inputs;
  det_inputs.reserve(detections.size());
  for (const auto& d : detections) {
    AssociationInput in{fused_feature(d.appearance.values, d.position_3d, enc), std::nullopt};
    if (d.position_3d) in.position = pose.camera_to_world(*d.position_3d);
    det_inputs.push_back(std::move(in));
  }
  if (cfg_.use_gnn) {
    std::vector<FeatureVector> current;
    for (const auto& in : det_inputs) current.push_back(in.fused);
    auto aggregated = gnn_aggregate(current, previous_features_, cfg_.gnn);
    previous_features_ = std::move(current);
    for (std::size_t i = 0; i < det_inputs.size(); ++i) det_inputs[i].fused = std::move(aggregated[i]);
  }

  std::vector<AssociationInput> trk_inputs;
  trk_inputs.reserve(tracks_.size());
  for (const auto& t : tracks_) {
    std::optional<Vec3> cam;
    if (t.has_position) cam = pose.world_to_camera(t.position());
    AssociationInput in{fused_feature(t.appearance_memory, cam, enc), std::nullopt};
    if (t.has_position) in.position = t.position();
    trk_inputs.push_back(std::move(in));
  }

  std::vector<int> high, low;
  for (int i = 0; i < static_cast<int>(detections.size()); ++i) {
    const double s = detections[i].box.score;
    if (s >= cfg_.detection_threshold) {
      high.push_back(i);
    } else if (s >= cfg_.low_score_floor) {
      low.push_back(i);
    }
  }
  std::vector<int> free_tracks(tracks_.size());
  for (int j = 0; j < static_cast<int>(tracks_.size()); ++j) free_tracks[j] = j;

  std::vector<std::pair<int, int>> matches;  // (detection, track)

  // Rows/cols of `rows` x `cols`; accepted pairs leave both pools.
  auto run_stage = [&](std::vector<int>& rows, bool by_iou) {
    if (rows.empty() || free_tracks.empty()) return;
    Eigen::MatrixXd score(rows.size(), free_tracks.size());
    Eigen::MatrixXd appearance;
    double gate = -std::numeric_limits<double>::infinity();
    if (by_iou) {
      for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < free_tracks.size(); ++c)
          score(r, c) = iou(detections[rows[r]].box, tracks_[free_tracks[c]].last_box);
      gate = cfg_.iou_fallback_threshold;
    } else {
      std::vector<AssociationInput> d, t;
      for (int r : rows) d.push_back(det_inputs[r]);
      for (int c : free_tracks) t.push_back(trk_inputs[c]);
      auto sim = similarity_breakdown(d, t, sim_cfg);
      score = std::move(sim.combined);
      appearance = std::move(sim.appearance);
    }
    const auto result = solve_assignment(score, gate);
    std::set<int> used_rows, used_cols;
    for (const auto& [r, c] : result.matches) {
      if (!by_iou && appearance(r, c) < cfg_.appearance_threshold) continue;
      matches.emplace_back(rows[r], free_tracks[c]);
      used_rows.insert(r);
      used_cols.insert(c);
    }
    std::vector<int> rest_rows, rest_cols;
    for (int r = 0; r < static_cast<int>(rows.size()); ++r)
      if (!used_rows.count(r)) rest_rows.push_back(rows[r]);
    for (int c = 0; c < static_cast<int>(free_tracks.size()); ++c)
      if (!used_cols.count(c)) rest_cols.push_back(free_tracks[c]);
    rows = std::move(rest_rows);
    free_tracks = std::move(rest_cols);
  };

  run_stage(high, false);
  run_stage(low, !cfg_.low_score_uses_similarity);
  run_stage(high, true);

  std::vector<TrackEvent> events;
  std::vector<char> updated(tracks_.size(), 0);
  std::sort(matches.begin(), matches.end());
  for (const auto& [di, ti] : matches) {
    const auto& det = detections[di];
    auto& trk = tracks_[ti];
    if (det.position_3d) {
      const Vec3 z = pose.camera_to_world(*det.position_3d);
      if (trk.has_position) {
        trk = kf_update(std::move(trk), z, cfg_.noise);
      } else {
        trk.kf_mean << z, Vec3::Zero();
        trk.kf_covariance.setZero();
        trk.kf_covariance.diagonal() << Vec3::Constant(cfg_.noise.measurement),
            Vec3::Constant(cfg_.noise.initial_velocity_variance);
        trk.has_position = true;
      }
    }
    ++trk.appearance_count;
    trk.appearance_memory += (det.appearance.values - trk.appearance_memory) / trk.appearance_count;
    trk.last_box = det.box;
    trk.age_since_update = 0;
    ++trk.hit_count;
    updated[ti] = 1;
    events.push_back({TrackEventKind::matched, trk.track_id, det.det_index});
  }

  std::vector<TrackState> survivors;
  for (std::size_t j = 0; j < tracks_.size(); ++j) {
    if (!updated[j]) ++tracks_[j].age_since_update;
    if (tracks_[j].age_since_update > cfg_.max_age) {
      events.push_back({TrackEventKind::terminated, tracks_[j].track_id, -1});
    } else {
      survivors.push_back(std::move(tracks_[j]));
    }
  }
  tracks_ = std::move(survivors);

  // Only unmatched high-score detections start tracks.
  std::sort(high.begin(), high.end());
  for (int di : high) {
    const auto& det = detections[di];
    TrackState t;
    t.track_id = next_id_++;
    t.kf_covariance.setZero();
    t.kf_covariance.diagonal() << Vec3::Constant(cfg_.noise.measurement),
        Vec3::Constant(cfg_.noise.initial_velocity_variance);
    if (det.position_3d) {
      t.kf_mean << pose.camera_to_world(*det.position_3d), Vec3::Zero();
      t.has_position = true;
    }
    t.appearance_memory = det.appearance.values;
    t.appearance_count = 1;
    t.last_box = det.box;
    t.hit_count = 1;
    events.push_back({TrackEventKind::new_track, t.track_id, det.det_index});
    tracks_.push_back(std::move(t));
  }
  return events;
}

SequenceTracks run_sequence(const Scene& scene, const TrackerConfig& cfg,
                            const TrackingModels& models) {
  cfg.validate();
  for (std::size_t i = 1; i < scene.detections.size(); ++i) {
    if (scene.detections[i].frame_index < scene.detections[i - 1].frame_index) {
      throw InputNotSorted("detections are not sorted by frame (row " + std::to_string(i + 1) + ")");
    }
  }

  const auto keys = scene.detection_keys();
  Eigen::Index app_dim = 0;
  for (const auto& [k, v] : scene.embeddings) {
    app_dim = v.size();
    break;
  }
  if (!scene.embeddings.empty() && scene.embeddings.size() != scene.detections.size()) {
    throw ValidationError("embeddings must cover every detection or none");
  }

  std::vector<CameraId> cameras;
  for (const auto& [id, k] : scene.calib.cameras()) cameras.push_back(id);
  const int num_frames = scene.num_frames();
  const double dt = 1.0 / scene.frame_rate;

  std::vector<std::vector<TrackRow>> per_camera(cameras.size());
  std::vector<int> id_count(cameras.size(), 0);
  parallel_for(cameras.size(), [&](std::size_t ci) {
    const CameraId& cam = cameras[ci];
    const auto& intrinsics = scene.calib.intrinsics(cam);
    std::vector<std::vector<Detection>> frames(num_frames);
    for (std::size_t i = 0; i < scene.detections.size(); ++i) {
      const auto& box = scene.detections[i];
      if (box.camera_id != cam) continue;
      Detection d;
      d.box = box;
      d.det_index = keys[i].det_index;
      if (app_dim > 0) {
        d.appearance = FeatureVector{scene.embeddings.at(keys[i]), FeatureKind::appearance};
      } else {
        // No embeddings: every detection looks the same, association is 3D/IoU only.
        d.appearance = FeatureVector{Eigen::VectorXd::Ones(1), FeatureKind::appearance};
      }
      if (auto it = scene.positions.find(keys[i]); it != scene.positions.end()) {
        d.position_3d = it->second;
      } else if (models.regressor) {
        d.position_3d = regressor_forward(detection_descriptor(box, intrinsics), *models.regressor)
                            .position;
      }
      frames.at(box.frame_index).push_back(std::move(d));
    }

    OnlineTracker tracker(cfg, models.encoder);
    auto& rows = per_camera[ci];
    for (int f = 0; f < num_frames; ++f) {
      const Pose& pose = scene.calib.pose(f, cam);
      const auto events = tracker.step(frames[f], pose, dt);
      const std::size_t first = rows.size();
      for (const auto& e : events) {
        if (e.kind == TrackEventKind::terminated) continue;
        const auto& trk = *std::find_if(tracker.tracks().begin(), tracker.tracks().end(),
                                        [&](const auto& t) { return t.track_id == e.track_id; });
        const auto& det = *std::find_if(frames[f].begin(), frames[f].end(),
                                        [&](const auto& d) { return d.det_index == e.det_index; });
        TrackRow row;
        row.frame_index = f;
        row.track_id = e.track_id;
        row.box = det.box;
        row.score = det.box.score;
        if (trk.has_position) row.position_camera = pose.world_to_camera(trk.position());
        rows.push_back(row);
      }
      std::sort(rows.begin() + static_cast<std::ptrdiff_t>(first), rows.end(),
                [](const auto& a, const auto& b) { return a.track_id < b.track_id; });
    }
    for (const auto& r : rows) id_count[ci] = std::max(id_count[ci], r.track_id);
  });

  SequenceTracks out;
  int offset = 0;
  for (std::size_t ci = 0; ci < cameras.size(); ++ci) {
    for (auto& r : per_camera[ci]) r.track_id += offset;
    offset += id_count[ci];
    out[cameras[ci]] = std::move(per_camera[ci]);
  }
  return out;
}

}  // namespace pseudotrack
