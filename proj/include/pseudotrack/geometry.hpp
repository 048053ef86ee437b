#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pseudotrack {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

using CameraId = std::string;

struct PinholeIntrinsics {
  CameraId camera_id;
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  // Throws ValidationError when fx, fy are non-positive or the principal
  // point lies outside the image.
  void validate() const;
  Mat3 matrix() const;
};

// Rigid camera-to-world transform for one (frame, camera) pair. Camera frame
// is x-right, y-down, z-forward.
class Pose {
 public:
  Pose() = default;
  // Normalizes the quaternion; throws ValidationError if its norm differs
  // from 1 by more than the load tolerance (1e-6).
  Pose(const Eigen::Quaterniond& rotation, const Vec3& translation, int frame_index = 0,
       CameraId camera_id = {});

  static Pose identity(int frame_index = 0, CameraId camera_id = {});
  // Skips the load tolerance check; the quaternion is normalized.
  static Pose from_rotation_matrix(const Mat3& rotation, const Vec3& translation,
                                   int frame_index = 0, CameraId camera_id = {});

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  int frame_index() const { return frame_index_; }
  const CameraId& camera_id() const { return camera_id_; }

  Mat3 rotation_matrix() const { return rotation_.toRotationMatrix(); }
  Vec3 camera_center() const { return translation_; }

  Vec3 camera_to_world(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 world_to_camera(const Vec3& p) const { return rotation_.conjugate() * (p - translation_); }

  // World-to-camera transform expressed as a pose; same frame/camera tags.
  Pose inverse() const;
  // this ∘ other: applies other first.
  Pose compose(const Pose& other) const;

 private:
  Eigen::Quaterniond rotation_ = Eigen::Quaterniond::Identity();
  Vec3 translation_ = Vec3::Zero();
  int frame_index_ = 0;
  CameraId camera_id_;
};

struct BBox2D {
  double left = 0.0;
  double top = 0.0;
  double width_px = 1.0;
  double height_px = 1.0;
  double score = 1.0;
  int frame_index = 0;
  CameraId camera_id;
  std::optional<int> object_id;
  int class_id = 1;

  double right() const { return left + width_px; }
  double bottom() const { return top + height_px; }
  Vec2 center() const { return {left + 0.5 * width_px, top + 0.5 * height_px}; }
  double area() const { return width_px * height_px; }
  bool contains(const Vec2& uv) const {
    return uv.x() >= left && uv.x() <= right() && uv.y() >= top && uv.y() <= bottom();
  }
  void validate() const;
};

struct WorldPoint {
  Vec3 position = Vec3::Zero();
  int track_id = 0;
};

struct Projection {
  Vec2 pixel;
  double depth;
};

inline constexpr double kMinDepth = 1e-9;

Vec3 world_to_camera(const Vec3& point, const Pose& pose);
Vec3 camera_to_world(const Vec3& point, const Pose& pose);

// Pinhole formula on a camera-frame point. No cheirality check.
Vec2 pinhole(const Vec3& camera_point, const PinholeIntrinsics& intrinsics);

// Throws CheiralityViolation when the camera-frame depth is <= 1e-9.
Projection project(const Vec3& point, const Pose& pose, const PinholeIntrinsics& intrinsics);
std::optional<Projection> try_project(const Vec3& point, const Pose& pose,
                                      const PinholeIntrinsics& intrinsics);

bool point_in_bbox(const Vec3& point, const Pose& pose, const PinholeIntrinsics& intrinsics,
                   const BBox2D& box);

// Intrinsics per camera plus poses per (frame, camera). The shared lookup
// used by reconstruction, labeling and tracking.
class Calibration {
 public:
  void add_camera(PinholeIntrinsics intrinsics);
  void add_pose(Pose pose);

  bool has_camera(const CameraId& id) const { return cameras_.count(id) != 0; }
  bool has_pose(int frame, const CameraId& id) const { return poses_.count({frame, id}) != 0; }

  // Throw DanglingReference on unknown ids.
  const PinholeIntrinsics& intrinsics(const CameraId& id) const;
  const Pose& pose(int frame, const CameraId& id) const;

  const std::map<CameraId, PinholeIntrinsics>& cameras() const { return cameras_; }
  const std::map<std::pair<int, CameraId>, Pose>& poses() const { return poses_; }

  // Poses of one camera ordered by frame.
  std::vector<Pose> camera_poses(const CameraId& id) const;

 private:
  std::map<CameraId, PinholeIntrinsics> cameras_;
  std::map<std::pair<int, CameraId>, Pose> poses_;
};

}  // namespace pseudotrack
