#include "pseudotrack/labeling.hpp"

#include "pseudotrack/errors.hpp"
#include "pseudotrack/parallel.hpp"
#include "pseudotrack/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <tuple>
#include <unordered_map>

namespace pseudotrack {

void ClusterConfig::validate() const {
  if (!(delta > 0.0)) throw ValidationError("ClusterConfig: delta must be positive");
  if (kappa < 1) throw ValidationError("ClusterConfig: kappa must be >= 1");
}

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<int> rank_;
};

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : {k.x, k.y, k.z}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

CellKey cell_of(const Vec3& p, double size) {
  return {static_cast<std::int64_t>(std::floor(p.x() / size)),
          static_cast<std::int64_t>(std::floor(p.y() / size)),
          static_cast<std::int64_t>(std::floor(p.z() / size))};
}

std::vector<WorldPoint> unique_by_track(std::span<const WorldPoint> points) {
  std::vector<WorldPoint> sorted(points.begin(), points.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.track_id < b.track_id; });
  sorted.erase(std::unique(sorted.begin(), sorted.end(),
                           [](const auto& a, const auto& b) { return a.track_id == b.track_id; }),
               sorted.end());
  return sorted;
}

}  // namespace

std::vector<std::vector<WorldPoint>> connected_components(std::span<const WorldPoint> input,
                                                          double delta) {
  const auto points = unique_by_track(input);
  const double delta_sq = delta * delta;

  // Grid with cell size delta: any neighbour within delta lies in one of the
  // 27 surrounding cells.
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> grid;
  for (std::size_t i = 0; i < points.size(); ++i) {
    grid[cell_of(points[i].position, delta)].push_back(i);
  }
  DisjointSets sets(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const CellKey c = cell_of(points[i].position, delta);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == grid.end()) continue;
          for (std::size_t j : it->second) {
            if (j > i && (points[i].position - points[j].position).squaredNorm() <= delta_sq) {
              sets.unite(i, j);
            }
          }
        }
      }
    }
  }

  std::map<std::size_t, std::vector<WorldPoint>> groups;
  for (std::size_t i = 0; i < points.size(); ++i) groups[sets.find(i)].push_back(points[i]);
  std::vector<std::vector<WorldPoint>> out;
  out.reserve(groups.size());
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  // members already ordered by track_id since points were sorted
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a.front().track_id < b.front().track_id;
  });
  return out;
}

PointCluster intra_pc(std::span<const WorldPoint> points, double delta) {
  if (points.empty()) throw EmptyInput("intra_pc: no points inside the box");
  if (!(delta > 0.0)) throw ValidationError("intra_pc: delta must be positive");
  auto components = connected_components(points, delta);
  return PointCluster{0, std::move(components.front()), std::nullopt};
}

std::vector<PointCluster> inter_pc(std::span<const WorldPoint> points, const ClusterConfig& cfg) {
  cfg.validate();
  std::vector<PointCluster> out;
  for (auto& c : connected_components(points, cfg.delta)) {
    if (c.size() < static_cast<std::size_t>(cfg.kappa)) break;  // sorted by size
    out.push_back(PointCluster{static_cast<int>(out.size()), std::move(c), std::nullopt});
  }
  return out;
}

ClusterMatch match_clusters(std::vector<PointCluster>& clusters, std::span<const BBox2D> boxes,
                            const Calibration& calib) {
  std::vector<std::map<int, std::size_t>> counts(clusters.size());
  parallel_for(clusters.size(), [&](std::size_t c) {
    for (const auto& box : boxes) {
      if (!box.object_id) continue;
      const Pose& pose = calib.pose(box.frame_index, box.camera_id);
      const auto& k = calib.intrinsics(box.camera_id);
      std::size_t inside = 0;
      for (const auto& m : clusters[c].members) {
        if (point_in_bbox(m.position, pose, k, box)) ++inside;
      }
      if (inside) counts[c][*box.object_id] += inside;
    }
  });

  ClusterMatch match;
  std::vector<std::optional<int>> claim(clusters.size());
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    match.containment[clusters[c].cluster_id] = counts[c];
    // std::map iterates ids ascending, so strict > keeps the smaller id on ties.
    std::size_t best = 0;
    for (const auto& [id, n] : counts[c]) {
      if (n > best) {
        best = n;
        claim[c] = id;
      }
    }
  }

  std::vector<std::size_t> order(clusters.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (clusters[a].size() != clusters[b].size()) return clusters[a].size() > clusters[b].size();
    return clusters[a].cluster_id < clusters[b].cluster_id;
  });
  std::set<int> taken;
  for (std::size_t c : order) {
    auto& cluster = clusters[c];
    cluster.assigned_track_id.reset();
    if (claim[c] && taken.insert(*claim[c]).second) {
      cluster.assigned_track_id = claim[c];
      match.cluster_to_track[cluster.cluster_id] = *claim[c];
    } else {
      match.unassigned_clusters.push_back(cluster.cluster_id);
    }
  }
  std::sort(match.unassigned_clusters.begin(), match.unassigned_clusters.end());
  return match;
}

std::vector<PseudoLabel> make_labels(const PointCluster& cluster, std::span<const BBox2D> boxes,
                                     const Calibration& calib) {
  if (!cluster.assigned_track_id) {
    throw UnassignedCluster("cluster " + std::to_string(cluster.cluster_id) + " has no identity");
  }
  if (cluster.members.empty()) throw EmptyInput("make_labels: empty cluster");
  Vec3 barycenter = Vec3::Zero();
  for (const auto& m : cluster.members) barycenter += m.position;
  barycenter /= static_cast<double>(cluster.members.size());

  const int id = *cluster.assigned_track_id;
  std::vector<PseudoLabel> labels;
  for (const auto& box : boxes) {
    if (box.object_id != id) continue;
    const Pose& pose = calib.pose(box.frame_index, box.camera_id);
    labels.push_back(PseudoLabel{id, box.frame_index, box.camera_id,
                                 pose.world_to_camera(barycenter), barycenter,
                                 cluster.members.size()});
  }
  std::sort(labels.begin(), labels.end(), [](const auto& a, const auto& b) {
    return std::tie(a.frame_index, a.camera_id) < std::tie(b.frame_index, b.camera_id);
  });
  return labels;
}

LabelingResult generate_pseudo_labels(const Scene& scene, const LabelingConfig& cfg) {
  cfg.cluster.validate();
  LabelingResult result;
  auto& diag = result.diagnostics;

  diag.ego_speed = mean_ego_speed(scene.calib, scene.frame_rate);
  if (diag.ego_speed < cfg.min_ego_speed) {
    throw GateRejected("ego speed " + std::to_string(diag.ego_speed) + " m/s below minimum " +
                       std::to_string(cfg.min_ego_speed) + " m/s");
  }

  result.reconstruction = reconstruct(scene.tracks, scene.calib, cfg.reconstruction);
  diag.reconstructed_points = result.reconstruction.points.size();
  diag.removed_observations = result.reconstruction.removed_observations;

  std::vector<WorldPoint> points;
  points.reserve(result.reconstruction.points.size());
  for (const auto& p : result.reconstruction.points) points.push_back(p.point);

  std::vector<BBox2D> boxes;
  std::set<int> identities;
  for (const auto& b : scene.gt_boxes) {
    if (!b.object_id) continue;
    boxes.push_back(b);
    identities.insert(*b.object_id);
  }
  diag.total_tracks = identities.size();

  std::vector<std::vector<WorldPoint>> per_box(boxes.size());
  parallel_for(boxes.size(), [&](std::size_t b) {
    const Pose& pose = scene.calib.pose(boxes[b].frame_index, boxes[b].camera_id);
    const auto& k = scene.calib.intrinsics(boxes[b].camera_id);
    std::vector<WorldPoint> inside;
    for (const auto& p : points) {
      if (point_in_bbox(p.position, pose, k, boxes[b])) inside.push_back(p);
    }
    if (!inside.empty()) per_box[b] = intra_pc(inside, cfg.cluster.delta).members;
  });

  std::vector<WorldPoint> foreground;
  for (auto& members : per_box) foreground.insert(foreground.end(), members.begin(), members.end());
  result.clusters = inter_pc(foreground, cfg.cluster);
  std::set<int> fg_ids;
  for (const auto& p : foreground) fg_ids.insert(p.track_id);
  diag.foreground_points = fg_ids.size();
  diag.clusters = result.clusters.size();

  const auto match = match_clusters(result.clusters, boxes, scene.calib);
  diag.unassigned_clusters = match.unassigned_clusters.size();
  for (const auto& cluster : result.clusters) {
    if (!cluster.assigned_track_id) continue;
    auto labels = make_labels(cluster, boxes, scene.calib);
    result.labels.insert(result.labels.end(), labels.begin(), labels.end());
    ++diag.labeled_tracks;
  }
  std::sort(result.labels.begin(), result.labels.end(), [](const auto& a, const auto& b) {
    return std::tie(a.track_id, a.frame_index, a.camera_id) <
           std::tie(b.track_id, b.frame_index, b.camera_id);
  });
  return result;
}

}  // namespace pseudotrack
