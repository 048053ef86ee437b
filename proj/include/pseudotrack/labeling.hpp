#pragma once

#include "pseudotrack/geometry.hpp"
#include "pseudotrack/reconstruction.hpp"

#include <map>
#include <optional>
#include <span>
#include <vector>

namespace pseudotrack {

struct Scene;

struct ClusterConfig {
  double delta = 0.5;  // meters, single-linkage hop
  int kappa = 30;      // minimum points per surviving cluster

  void validate() const;
};

struct PointCluster {
  int cluster_id = 0;
  std::vector<WorldPoint> members;  // ordered by track_id
  std::optional<int> assigned_track_id;

  std::size_t size() const { return members.size(); }
  int min_track_id() const { return members.front().track_id; }
};

struct PseudoLabel {
  int track_id = 0;
  int frame_index = 0;
  CameraId camera_id;
  Vec3 position_camera = Vec3::Zero();
  Vec3 position_world = Vec3::Zero();
  std::size_t support = 0;
};

// Single-linkage connected components (hop <= delta), each ordered by
// track_id; components ordered by descending size, then ascending smallest
// track_id. Input points with duplicate track_id must be identical.
std::vector<std::vector<WorldPoint>> connected_components(std::span<const WorldPoint> points,
                                                          double delta);

// Largest connected component of the points that fall inside one box.
PointCluster intra_pc(std::span<const WorldPoint> points, double delta);

// Components of the foreground union with at least kappa points; points are
// deduplicated by track_id first. Cluster ids follow the output order.
std::vector<PointCluster> inter_pc(std::span<const WorldPoint> points, const ClusterConfig& cfg);

struct ClusterMatch {
  std::map<int, int> cluster_to_track;  // cluster_id -> object_id
  std::vector<int> unassigned_clusters;
  // Contained reprojections per (cluster_id, object_id).
  std::map<int, std::map<int, std::size_t>> containment;
};

// Assigns each cluster the identity whose boxes contain most of its
// reprojected members (smaller id on ties). An identity goes to at most one
// cluster: larger clusters claim first. Clusters with no contained
// reprojection stay unassigned. Sets assigned_track_id on the clusters.
ClusterMatch match_clusters(std::vector<PointCluster>& clusters, std::span<const BBox2D> boxes,
                            const Calibration& calib);

// One label per box of the cluster's identity; the world barycenter is shared.
std::vector<PseudoLabel> make_labels(const PointCluster& cluster, std::span<const BBox2D> boxes,
                                     const Calibration& calib);

struct LabelingDiagnostics {
  double ego_speed = 0.0;
  std::size_t reconstructed_points = 0;
  std::size_t foreground_points = 0;
  std::size_t clusters = 0;
  std::size_t unassigned_clusters = 0;
  std::size_t total_tracks = 0;
  std::size_t labeled_tracks = 0;
  std::size_t removed_observations = 0;
  double labeled_fraction() const {
    return total_tracks ? static_cast<double>(labeled_tracks) / total_tracks : 0.0;
  }
};

struct LabelingConfig {
  ClusterConfig cluster;
  ReconstructionConfig reconstruction;
  double min_ego_speed = 1.0;  // m/s
};

struct LabelingResult {
  std::vector<PseudoLabel> labels;  // sorted by (track_id, frame, camera)
  std::vector<PointCluster> clusters;
  ReconstructionResult reconstruction;
  LabelingDiagnostics diagnostics;
};

// reconstruct -> foreground filter -> intra_pc per box -> inter_pc -> match
// -> labels. Throws GateRejected when the ego speed is below the minimum.
LabelingResult generate_pseudo_labels(const Scene& scene, const LabelingConfig& cfg);

}  // namespace pseudotrack
