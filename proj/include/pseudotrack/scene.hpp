#pragma once

#include "pseudotrack/geometry.hpp"
#include "pseudotrack/reconstruction.hpp"

#include <Eigen/Core>

#include <compare>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pseudotrack {

// Addresses one raw detection: its index among the detections of the same
// (frame, camera) in file order.
struct DetectionKey {
  int frame_index = 0;
  CameraId camera_id;
  int det_index = 0;

  auto operator<=>(const DetectionKey&) const = default;
};

struct Scene {
  Calibration calib;
  std::vector<KeypointTrack> tracks;
  std::vector<BBox2D> gt_boxes;    // identity-annotated
  std::vector<BBox2D> detections;  // raw hypotheses, object_id unset
  std::map<DetectionKey, Eigen::VectorXd> embeddings;
  std::map<DetectionKey, Vec3> positions;  // camera frame
  double frame_rate = 10.0;

  // T: one past the largest pose frame.
  int num_frames() const;
  // Detection keys in file order, parallel to `detections`.
  std::vector<DetectionKey> detection_keys() const;
  // Throws DanglingReference / ValidationError.
  void validate() const;
};

bool operator==(const Scene& a, const Scene& b);

namespace scene_files {
inline constexpr const char* kIntrinsics = "intrinsics.txt";
inline constexpr const char* kPoses = "poses.txt";
inline constexpr const char* kTracks = "tracks.txt";
inline constexpr const char* kDetections = "detections.csv";
inline constexpr const char* kGroundTruth = "gt.csv";
inline constexpr const char* kEmbeddings = "embeddings.csv";
inline constexpr const char* kPositions = "positions.csv";
inline constexpr const char* kMeta = "scene.cfg";
}  // namespace scene_files

// Requires intrinsics, poses and detections; the rest is optional.
// Throws MissingFile, ParseError (with file and line) or DanglingReference.
Scene load_scene(const std::filesystem::path& dir);
void write_scene(const Scene& scene, const std::filesystem::path& dir);

}  // namespace pseudotrack
