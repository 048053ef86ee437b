#include "pseudotrack/geometry.hpp"

#include "pseudotrack/errors.hpp"

#include <cmath>
#include <limits>

namespace pseudotrack {

namespace {
constexpr double kQuaternionLoadTolerance = 1e-6;
}

void PinholeIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw ValidationError("camera " + camera_id + ": focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw ValidationError("camera " + camera_id + ": image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw ValidationError("camera " + camera_id + ": principal point outside the image");
  }
}

Mat3 PinholeIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Pose::Pose(const Eigen::Quaterniond& rotation, const Vec3& translation, int frame_index,
           CameraId camera_id)
    : rotation_(rotation),
      translation_(translation),
      frame_index_(frame_index),
      camera_id_(std::move(camera_id)) {
  const double norm = rotation_.norm();
  if (!std::isfinite(norm) || std::abs(norm - 1.0) > kQuaternionLoadTolerance) {
    throw ValidationError("pose quaternion is not unit norm (|q| = " + std::to_string(norm) + ")");
  }
  if (!translation_.allFinite()) {
    throw ValidationError("pose translation is not finite");
  }
  // Quaternions already within a few ulp of unit norm are kept as they are;
  // repeated normalization drifts, and keeping them makes a written and
  // re-read pose compare equal bit for bit.
  for (int i = 0; i < 4 && std::abs(rotation_.norm() - 1.0) > 4.0 * std::numeric_limits<double>::epsilon(); ++i) {
    rotation_.normalize();
  }
}

Pose Pose::identity(int frame_index, CameraId camera_id) {
  return Pose(Eigen::Quaterniond::Identity(), Vec3::Zero(), frame_index, std::move(camera_id));
}

Pose Pose::from_rotation_matrix(const Mat3& rotation, const Vec3& translation, int frame_index,
                                CameraId camera_id) {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  return Pose(q, translation, frame_index, std::move(camera_id));
}

Pose Pose::inverse() const {
  Eigen::Quaterniond inv = rotation_.conjugate();
  inv.normalize();
  return Pose(inv, -(inv * translation_), frame_index_, camera_id_);
}

Pose Pose::compose(const Pose& other) const {
  Eigen::Quaterniond q = rotation_ * other.rotation_;
  q.normalize();
  return Pose(q, rotation_ * other.translation_ + translation_, frame_index_, camera_id_);
}

void BBox2D::validate() const {
  if (!(width_px > 0.0) || !(height_px > 0.0)) {
    throw ValidationError("bounding box must have positive width and height");
  }
  if (!(score >= 0.0 && score <= 1.0)) {
    throw ValidationError("detection score outside [0, 1]");
  }
}

Vec3 world_to_camera(const Vec3& point, const Pose& pose) { return pose.world_to_camera(point); }

Vec3 camera_to_world(const Vec3& point, const Pose& pose) { return pose.camera_to_world(point); }

Vec2 pinhole(const Vec3& p, const PinholeIntrinsics& k) {
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

std::optional<Projection> try_project(const Vec3& point, const Pose& pose,
                                      const PinholeIntrinsics& intrinsics) {
  const Vec3 pc = pose.world_to_camera(point);
  if (!(pc.z() > kMinDepth)) return std::nullopt;
  return Projection{pinhole(pc, intrinsics), pc.z()};
}

Projection project(const Vec3& point, const Pose& pose, const PinholeIntrinsics& intrinsics) {
  auto proj = try_project(point, pose, intrinsics);
  if (!proj) throw CheiralityViolation("point lies behind the camera");
  return *proj;
}

bool point_in_bbox(const Vec3& point, const Pose& pose, const PinholeIntrinsics& intrinsics,
                   const BBox2D& box) {
  const auto proj = try_project(point, pose, intrinsics);
  return proj && box.contains(proj->pixel);
}

void Calibration::add_camera(PinholeIntrinsics intrinsics) {
  intrinsics.validate();
  auto id = intrinsics.camera_id;
  cameras_.insert_or_assign(std::move(id), std::move(intrinsics));
}

void Calibration::add_pose(Pose pose) {
  auto key = std::make_pair(pose.frame_index(), pose.camera_id());
  poses_.insert_or_assign(std::move(key), std::move(pose));
}

const PinholeIntrinsics& Calibration::intrinsics(const CameraId& id) const {
  auto it = cameras_.find(id);
  if (it == cameras_.end()) throw DanglingReference("unknown camera '" + id + "'");
  return it->second;
}

const Pose& Calibration::pose(int frame, const CameraId& id) const {
  auto it = poses_.find({frame, id});
  if (it == poses_.end()) {
    throw DanglingReference("no pose for frame " + std::to_string(frame) + " camera '" + id + "'");
  }
  return it->second;
}

std::vector<Pose> Calibration::camera_poses(const CameraId& id) const {
  std::vector<Pose> out;
  for (const auto& [key, pose] : poses_) {
    if (key.second == id) out.push_back(pose);
  }
  return out;
}

}  // namespace pseudotrack
