#include "pseudotrack/synthetic.hpp"

#include "pseudotrack/errors.hpp"
#include "pseudotrack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace pseudotrack {

void SynthConfig::validate() const {
  if (num_static < 0 || num_dynamic < 0 || keypoints_per_object < 0 || background_points < 0) {
    throw ValidationError("synthetic counts must be non-negative");
  }
  if (num_frames < 1) throw ValidationError("synthetic scene needs at least one frame");
  if (!(frame_rate > 0.0)) throw ValidationError("frame_rate must be positive");
  if (!(object_size > 0.0)) throw ValidationError("object_size must be positive");
  if (!(pixel_noise >= 0.0) || !(embedding_noise >= 0.0)) {
    throw ValidationError("noise levels must be non-negative");
  }
  if (!(embedding_separation >= 0.0 && embedding_separation <= 1.0)) {
    throw ValidationError("embedding_separation must lie in [0, 1]");
  }
  if (embedding_dim < 1) throw ValidationError("embedding_dim must be positive");
  if (!(detection_score >= 0.0 && detection_score <= 1.0)) {
    throw ValidationError("detection_score must lie in [0, 1]");
  }
  if (!(min_depth > 0.0 && max_depth >= min_depth)) throw ValidationError("invalid depth range");
  if (crossing && (!(crossing->near_depth > 0.0) || !(crossing->depth_gap >= 0.0))) {
    throw ValidationError("invalid crossing spec");
  }
  intrinsics.validate();
}

const SynthObject& SynthTruth::object(int id) const {
  for (const auto& o : objects)
    if (o.object_id == id) return o;
  throw ValidationError("unknown synthetic object " + std::to_string(id));
}

namespace {

struct Rng {
  std::mt19937_64 engine;

  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(engine); }
  double normal(double sigma) {
    if (sigma == 0.0) return 0.0;
    return std::normal_distribution<double>(0.0, sigma)(engine);
  }
  Eigen::VectorXd unit(int dim) {
    Eigen::VectorXd v(dim);
    do {
      for (int k = 0; k < dim; ++k) v[k] = std::normal_distribution<double>(0.0, 1.0)(engine);
    } while (v.norm() < 1e-12);
    return v.normalized();
  }
};

Vec3 camera_position(const SynthConfig& cfg, double t) {
  const Vec3 dir(std::cos(cfg.camera_heading), 0.0, std::sin(cfg.camera_heading));
  return cfg.camera_speed * t * dir;
}

}  // namespace

SynthScene generate_synthetic_scene(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng{std::mt19937_64(cfg.seed)};
  SynthScene out;
  Scene& scene = out.scene;
  SynthTruth& truth = out.truth;
  scene.frame_rate = cfg.frame_rate;
  const PinholeIntrinsics& K = cfg.intrinsics;
  const CameraId& cam = K.camera_id;
  scene.calib.add_camera(K);

  const double duration = (cfg.num_frames - 1) / cfg.frame_rate;
  const double half = 0.5 * cfg.object_size;
  const double min_separation = 2.0 * cfg.object_size + 1.0;

  auto make_offsets = [&]() {
    std::vector<Vec3> offs(static_cast<std::size_t>(cfg.keypoints_per_object));
    for (auto& o : offs) o = Vec3(rng.uniform(-half, half), rng.uniform(-half, half), rng.uniform(-half, half));
    return offs;
  };

  int next_object = 1;
  std::vector<Vec3> placed;
  auto place_center = [&]() {
    Vec3 c = Vec3::Zero();
    for (int attempt = 0; attempt < 1000; ++attempt) {
      c = Vec3(rng.uniform(-cfg.lateral_range, cfg.lateral_range), rng.uniform(-1.0, 1.0),
               rng.uniform(cfg.min_depth, cfg.max_depth));
      bool ok = true;
      for (const auto& p : placed) ok = ok && (p - c).norm() >= min_separation;
      if (ok) break;
    }
    placed.push_back(c);
    return c;
  };

  for (int i = 0; i < cfg.num_static; ++i) {
    SynthObject o;
    o.object_id = next_object++;
    o.initial_center = place_center();
    o.offsets = make_offsets();
    truth.objects.push_back(std::move(o));
  }
  for (int i = 0; i < cfg.num_dynamic; ++i) {
    SynthObject o;
    o.object_id = next_object++;
    o.dynamic = true;
    o.initial_center = place_center();
    const double drawn = rng.uniform(0.0, 2.0 * M_PI);
    const double heading = cfg.dynamic_heading.value_or(drawn);
    o.velocity = cfg.dynamic_speed * Vec3(std::cos(heading), 0.0, std::sin(heading));
    o.offsets = make_offsets();
    truth.objects.push_back(std::move(o));
  }
  if (cfg.crossing) {
    const CrossingSpec& cs = *cfg.crossing;
    const double mid_x = camera_position(cfg, 0.5 * duration).x();
    const double t_half = duration > 0.0 ? 0.5 * duration : 1.0;
    const double far_depth = cs.near_depth + cs.depth_gap;
    const double far_span = cs.half_span * far_depth / cs.near_depth;
    SynthObject a;
    a.object_id = next_object++;
    a.dynamic = a.crossing = true;
    a.initial_center = Vec3(mid_x - cs.half_span, 0.0, cs.near_depth);
    a.velocity = Vec3(cs.half_span / t_half, 0.0, 0.0);
    a.offsets = make_offsets();
    SynthObject b;
    b.object_id = next_object++;
    b.dynamic = b.crossing = true;
    b.initial_center = Vec3(mid_x + far_span, 0.0, far_depth);
    b.velocity = Vec3(-far_span / t_half, 0.0, 0.0);
    b.offsets = make_offsets();
    truth.objects.push_back(std::move(a));
    truth.objects.push_back(std::move(b));
  }

  int next_track = 1;
  for (auto& o : truth.objects) {
    for (std::size_t k = 0; k < o.offsets.size(); ++k) {
      o.track_ids.push_back(next_track);
      truth.membership[next_track] = o.object_id;
      ++next_track;
    }
    if (!o.dynamic) {
      Vec3 sum = Vec3::Zero();
      for (const auto& off : o.offsets) sum += o.initial_center + off;
      if (!o.offsets.empty()) truth.static_centroids[o.object_id] = sum / static_cast<double>(o.offsets.size());
      truth.expected_clusters[o.object_id] = o.track_ids;
    }
  }
  for (int i = 0; i < cfg.background_points; ++i) {
    const Vec3 p(rng.uniform(-15.0, 15.0), rng.uniform(-3.0, 3.0),
                 rng.uniform(cfg.max_depth + 10.0, cfg.max_depth + 40.0));
    truth.membership[next_track] = -1;
    truth.background[next_track] = p;
    ++next_track;
  }

  // Identity embeddings: mix of a shared direction and a per-identity one.
  const Eigen::VectorXd common = rng.unit(cfg.embedding_dim);
  std::map<int, Eigen::VectorXd> identity_embedding;
  for (const auto& o : truth.objects) {
    const Eigen::VectorXd own = rng.unit(cfg.embedding_dim);
    Eigen::VectorXd e = (1.0 - cfg.embedding_separation) * common + cfg.embedding_separation * own;
    if (e.norm() < 1e-12) e = common;
    identity_embedding[o.object_id] = e.normalized();
  }

  std::map<int, std::size_t> track_index;
  auto observe = [&](int track_id, int frame, const Vec3& world, const Pose& pose) {
    const Vec3 pc = pose.world_to_camera(world);
    if (pc.z() <= kMinDepth) return;
    Vec2 uv = pinhole(pc, K);
    if (!(uv.x() >= 0.0 && uv.x() < K.width && uv.y() >= 0.0 && uv.y() < K.height)) return;
    uv.x() += rng.normal(cfg.pixel_noise);
    uv.y() += rng.normal(cfg.pixel_noise);
    auto [it, fresh] = track_index.emplace(track_id, scene.tracks.size());
    if (fresh) scene.tracks.push_back(KeypointTrack{track_id, {}});
    scene.tracks[it->second].observations.push_back(KeypointObservation{frame, cam, uv.x(), uv.y()});
  };

  for (int f = 0; f < cfg.num_frames; ++f) {
    const double t = f / cfg.frame_rate;
    const Pose pose(Eigen::Quaterniond::Identity(), camera_position(cfg, t), f, cam);
    scene.calib.add_pose(pose);

    struct FrameBox {
      BBox2D box;
      Vec3 position_camera;
      int object_id;
    };
    std::vector<FrameBox> boxes;
    for (const auto& o : truth.objects) {
      const Vec3 center = o.center_at(t);
      double l = std::numeric_limits<double>::infinity(), tp = l;
      double r = -l, b = -l;
      bool visible = !o.offsets.empty();
      for (std::size_t k = 0; k < o.offsets.size(); ++k) {
        const Vec3 world = center + o.offsets[k];
        const Vec3 pc = pose.world_to_camera(world);
        if (pc.z() <= kMinDepth) {
          visible = false;
          continue;
        }
        const Vec2 uv = pinhole(pc, K);
        l = std::min(l, uv.x());
        r = std::max(r, uv.x());
        tp = std::min(tp, uv.y());
        b = std::max(b, uv.y());
        observe(o.track_ids[k], f, world, pose);
      }
      if (!visible) continue;
      l -= cfg.box_margin_px;
      tp -= cfg.box_margin_px;
      r += cfg.box_margin_px;
      b += cfg.box_margin_px;
      if (r <= 0.0 || b <= 0.0 || l >= K.width || tp >= K.height) continue;
      BBox2D box;
      box.left = l;
      box.top = tp;
      box.width_px = r - l;
      box.height_px = b - tp;
      box.frame_index = f;
      box.camera_id = cam;
      box.object_id = o.object_id;
      box.score = 1.0;
      boxes.push_back(FrameBox{box, pose.world_to_camera(center), o.object_id});
    }
    for (const auto& [id, p] : truth.background) observe(id, f, p, pose);

    std::stable_sort(boxes.begin(), boxes.end(),
                     [](const FrameBox& x, const FrameBox& y) { return x.box.left < y.box.left; });
    int det_index = 0;
    for (const auto& fb : boxes) {
      scene.gt_boxes.push_back(fb.box);
      BBox2D det = fb.box;
      det.object_id.reset();
      det.score = cfg.detection_score;
      scene.detections.push_back(det);
      const DetectionKey key{f, cam, det_index++};
      Eigen::VectorXd e = identity_embedding[fb.object_id];
      if (cfg.embedding_noise > 0.0) {
        for (Eigen::Index k = 0; k < e.size(); ++k) e[k] += rng.normal(cfg.embedding_noise);
      }
      scene.embeddings[key] = e;
      if (cfg.emit_positions) scene.positions[key] = fb.position_camera;
    }
  }
  std::sort(scene.tracks.begin(), scene.tracks.end(),
            [](const KeypointTrack& a, const KeypointTrack& b) { return a.track_id < b.track_id; });
  scene.validate();
  return out;
}

CrossingCheck crossing_self_check(const SynthScene& synth, const SynthConfig& cfg) {
  CrossingCheck c;
  std::vector<const SynthObject*> pair;
  for (const auto& o : synth.truth.objects)
    if (o.crossing) pair.push_back(&o);
  if (pair.size() != 2 || !cfg.crossing) return c;
  c.present = true;
  c.min_separation = std::numeric_limits<double>::infinity();
  std::map<int, std::map<int, BBox2D>> by_frame;
  for (const auto& b : synth.scene.gt_boxes) by_frame[b.frame_index][*b.object_id] = b;
  for (int f = 0; f < cfg.num_frames; ++f) {
    const double t = f / cfg.frame_rate;
    c.min_separation = std::min(c.min_separation, (pair[0]->center_at(t) - pair[1]->center_at(t)).norm());
    const auto& boxes = by_frame[f];
    const auto a = boxes.find(pair[0]->object_id);
    const auto b = boxes.find(pair[1]->object_id);
    if (a != boxes.end() && b != boxes.end()) c.max_iou = std::max(c.max_iou, iou(a->second, b->second));
  }
  c.passed = c.max_iou > 0.0 && c.min_separation >= cfg.crossing->depth_gap - 1e-9;
  return c;
}

}  // namespace pseudotrack
