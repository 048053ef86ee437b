#pragma once

#include "pseudotrack/scene.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace pseudotrack {

// Two appearance-identical objects crossing in image space at different
// depths: the near one moves left to right, the far one right to left, both
// reaching the image centre column at mid-sequence.
struct CrossingSpec {
  double near_depth = 10.0;  // meters
  double depth_gap = 5.0;    // meters
  double half_span = 3.0;    // lateral travel of the near object, meters
};

struct SynthConfig {
  std::uint64_t seed = 0;
  int num_static = 3;
  int num_dynamic = 0;
  double object_size = 1.0;  // cube edge holding the keypoints, meters
  int keypoints_per_object = 40;
  int background_points = 0;
  double camera_speed = 2.0;    // m/s
  double camera_heading = 0.0;  // radians from the camera x axis, in the x-z plane
  int num_frames = 10;
  double frame_rate = 10.0;
  double pixel_noise = 0.0;  // sigma, pixels
  int embedding_dim = 16;
  // 0 gives identical identity embeddings; 1 gives independent random ones.
  double embedding_separation = 1.0;
  double embedding_noise = 0.0;
  double detection_score = 0.9;
  double box_margin_px = 2.0;
  double min_depth = 10.0;
  double max_depth = 25.0;
  double lateral_range = 4.0;  // |x| of object centres at frame 0
  double dynamic_speed = 3.0;  // m/s
  std::optional<double> dynamic_heading;  // radians in the x-z plane; random when unset
  bool emit_positions = true;
  std::optional<CrossingSpec> crossing;
  PinholeIntrinsics intrinsics{"cam0", 500.0, 500.0, 320.0, 240.0, 640, 480};

  void validate() const;  // ValidationError
};

struct SynthObject {
  int object_id = 0;
  bool dynamic = false;
  bool crossing = false;
  Vec3 initial_center = Vec3::Zero();  // world
  Vec3 velocity = Vec3::Zero();        // world, m/s
  std::vector<Vec3> offsets;           // keypoints relative to the centre
  std::vector<int> track_ids;          // one keypoint track per offset

  Vec3 center_at(double t) const { return initial_center + velocity * t; }
};

struct SynthTruth {
  std::vector<SynthObject> objects;
  std::map<int, int> membership;  // keypoint track id -> object id, -1 for background
  std::map<int, Vec3> background;  // background track id -> world position
  // Static objects only: world centroid of the keypoints and their track ids.
  std::map<int, Vec3> static_centroids;
  std::map<int, std::vector<int>> expected_clusters;

  const SynthObject& object(int id) const;
};

struct SynthScene {
  Scene scene;
  SynthTruth truth;
};

// Deterministic under cfg.seed. Boxes are the pixel bounding rectangles (plus
// margin) of each object's projected keypoints, emitted as ground truth and
// as raw detections; frames where a keypoint falls behind the camera or the
// rectangle leaves the image produce no box.
SynthScene generate_synthetic_scene(const SynthConfig& cfg);

struct CrossingCheck {
  bool present = false;
  double max_iou = 0.0;
  double min_separation = 0.0;  // 3D, meters
  bool passed = false;          // max_iou > 0 and min_separation >= depth_gap
};

CrossingCheck crossing_self_check(const SynthScene& synth, const SynthConfig& cfg);

}  // namespace pseudotrack
