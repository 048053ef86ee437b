#pragma once

#include "pseudotrack/association.hpp"
#include "pseudotrack/geometry.hpp"
#include "pseudotrack/learning.hpp"

#include <Eigen/Core>

#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace pseudotrack {

struct Scene;

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct Detection {
  BBox2D box;
  FeatureVector appearance;
  std::optional<Vec3> position_3d;  // camera frame
  int det_index = 0;
};

// Constant-velocity model noise. Q = diag(process_position * dt (x3),
// process_velocity * dt (x3)); R = measurement * I.
struct KalmanNoise {
  double process_position = 0.1;
  double process_velocity = 1.0;
  double measurement = 1.0;
  double initial_velocity_variance = 100.0;
};

struct TrackState {
  int track_id = 0;
  Vec6 kf_mean = Vec6::Zero();  // [x y z vx vy vz], world frame
  Mat6 kf_covariance = Mat6::Identity();
  bool has_position = false;
  Eigen::VectorXd appearance_memory;  // running mean, unnormalized
  int appearance_count = 0;
  BBox2D last_box;
  int age_since_update = 0;
  int hit_count = 0;

  Vec3 position() const { return kf_mean.head<3>(); }
};

TrackState kf_predict(TrackState state, double dt, const KalmanNoise& noise);
// Position-only measurement update, Joseph form. Throws SingularInnovation
// when the innovation covariance has condition number above 1e12.
TrackState kf_update(TrackState state, const Vec3& measurement, const KalmanNoise& noise);

double iou(const BBox2D& a, const BBox2D& b);

struct TrackerConfig {
  double detection_threshold = 0.5;
  double appearance_threshold = 0.6;
  double alpha = 0.4;
  int max_age = 30;
  double low_score_floor = 0.1;
  double iou_fallback_threshold = 0.3;
  KalmanNoise noise;
  // Unset: learned cosine when encoder weights are available, else geometric.
  std::optional<ThreeDMode> three_d_mode;
  double kernel_scale = 5.0;
  // Low-score stage scores with the alpha-weighted similarity (true) or IoU.
  bool low_score_uses_similarity = true;
  bool use_gnn = false;
  GNNConfig gnn = GNNConfig::identity(1);

  void validate() const;
};

enum class TrackEventKind { matched, new_track, terminated };

struct TrackEvent {
  TrackEventKind kind;
  int track_id = 0;
  int det_index = -1;  // -1 for terminations
};

// Online tracker for one camera. State carries across step() calls.
class OnlineTracker {
 public:
  explicit OnlineTracker(TrackerConfig cfg, std::optional<EncoderWeights> encoder = {});

  // All detections must come from one (frame, camera); pose is that frame's
  // camera-to-world pose and dt the time since the previous step.
  std::vector<TrackEvent> step(std::span<const Detection> detections, const Pose& pose, double dt);

  const std::vector<TrackState>& tracks() const { return tracks_; }
  const TrackerConfig& config() const { return cfg_; }
  ThreeDMode three_d_mode() const { return mode_; }

 private:
  TrackerConfig cfg_;
  std::optional<EncoderWeights> encoder_;
  ThreeDMode mode_;
  std::vector<TrackState> tracks_;
  std::vector<FeatureVector> previous_features_;
  int next_id_ = 1;
};

struct TrackRow {
  int frame_index = 0;
  int track_id = 0;
  BBox2D box;
  double score = 0.0;
  Vec3 position_camera = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
};

struct TrackingModels {
  std::optional<RegressorWeights> regressor;
  std::optional<EncoderWeights> encoder;
};

// Per-camera output rows, ordered by (frame, track_id). Track ids are unique
// across cameras: cameras are numbered in id order after local tracking.
using SequenceTracks = std::map<CameraId, std::vector<TrackRow>>;

// Runs an OnlineTracker per camera over every frame. Detection positions
// come from the scene's positions table, else the regressor if one is given.
// Throws InputNotSorted if raw detections are not in frame order.
SequenceTracks run_sequence(const Scene& scene, const TrackerConfig& cfg,
                            const TrackingModels& models = {});

}  // namespace pseudotrack
