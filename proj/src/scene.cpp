#include "pseudotrack/scene.hpp"

#include "pseudotrack/errors.hpp"
#include "pseudotrack/io.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace pseudotrack {

namespace fs = std::filesystem;

int Scene::num_frames() const {
  int t = 0;
  for (const auto& [key, pose] : calib.poses()) t = std::max(t, key.first + 1);
  return t;
}

std::vector<DetectionKey> Scene::detection_keys() const {
  std::vector<DetectionKey> keys;
  keys.reserve(detections.size());
  std::map<std::pair<int, CameraId>, int> counter;
  for (const auto& d : detections) {
    int& n = counter[{d.frame_index, d.camera_id}];
    keys.push_back(DetectionKey{d.frame_index, d.camera_id, n++});
  }
  return keys;
}

namespace {

void check_camera_id(const CameraId& id) {
  if (id.empty() || id.find_first_of(" \t,\r\n#") != CameraId::npos) {
    throw ValidationError("camera id '" + id + "' must be non-empty without spaces or commas");
  }
}

void check_ref(const Calibration& calib, int frame, const CameraId& cam, const char* what) {
  if (!calib.has_camera(cam)) {
    throw DanglingReference(std::string(what) + " references undeclared camera '" + cam + "'");
  }
  if (!calib.has_pose(frame, cam)) {
    throw DanglingReference(std::string(what) + " references missing pose (frame " +
                            std::to_string(frame) + ", camera " + cam + ")");
  }
}

}  // namespace

void Scene::validate() const {
  for (const auto& [id, k] : calib.cameras()) {
    check_camera_id(id);
    k.validate();
  }
  std::set<int> frames;
  for (const auto& [key, pose] : calib.poses()) {
    if (!calib.has_camera(key.second)) {
      throw DanglingReference("pose references undeclared camera '" + key.second + "'");
    }
    if (key.first < 0) throw ValidationError("negative pose frame index");
    frames.insert(key.first);
  }
  if (!frames.empty() && (*frames.begin() != 0 || *frames.rbegin() + 1 != static_cast<int>(frames.size()))) {
    throw ValidationError("pose frames must be contiguous from 0");
  }

  std::set<int> track_ids;
  for (const auto& t : tracks) {
    if (!track_ids.insert(t.track_id).second) {
      throw ValidationError("duplicate keypoint track id " + std::to_string(t.track_id));
    }
    for (const auto& o : t.observations) check_ref(calib, o.frame_index, o.camera_id, "keypoint observation");
  }
  for (const auto& b : gt_boxes) {
    check_ref(calib, b.frame_index, b.camera_id, "ground-truth box");
    b.validate();
    if (!b.object_id) throw ValidationError("ground-truth box without object id");
  }
  for (const auto& b : detections) {
    check_ref(calib, b.frame_index, b.camera_id, "detection");
    b.validate();
  }

  const auto keys = detection_keys();
  const std::set<DetectionKey> key_set(keys.begin(), keys.end());
  Eigen::Index dim = -1;
  for (const auto& [key, e] : embeddings) {
    if (!key_set.count(key)) {
      throw DanglingReference("embedding references missing detection (frame " +
                              std::to_string(key.frame_index) + ", camera " + key.camera_id +
                              ", index " + std::to_string(key.det_index) + ")");
    }
    if (dim < 0) dim = e.size();
    if (e.size() != dim || dim == 0) throw ShapeMismatch("embeddings must share one non-zero dimension");
  }
  for (const auto& [key, p] : positions) {
    if (!key_set.count(key)) {
      throw DanglingReference("position references missing detection (frame " +
                              std::to_string(key.frame_index) + ", camera " + key.camera_id +
                              ", index " + std::to_string(key.det_index) + ")");
    }
  }
  if (!(frame_rate > 0.0)) throw ValidationError("frame_rate must be positive");
}

namespace {

bool same_box(const BBox2D& a, const BBox2D& b) {
  return a.left == b.left && a.top == b.top && a.width_px == b.width_px &&
         a.height_px == b.height_px && a.score == b.score && a.frame_index == b.frame_index &&
         a.camera_id == b.camera_id && a.object_id == b.object_id && a.class_id == b.class_id;
}

template <class T, class Eq>
bool same_seq(const std::vector<T>& a, const std::vector<T>& b, Eq eq) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), eq);
}

}  // namespace

bool operator==(const Scene& a, const Scene& b) {
  if (a.frame_rate != b.frame_rate) return false;
  const auto& ca = a.calib.cameras();
  const auto& cb = b.calib.cameras();
  if (ca.size() != cb.size()) return false;
  for (auto ia = ca.begin(), ib = cb.begin(); ia != ca.end(); ++ia, ++ib) {
    const auto& x = ia->second;
    const auto& y = ib->second;
    if (ia->first != ib->first || x.camera_id != y.camera_id || x.fx != y.fx || x.fy != y.fy ||
        x.cx != y.cx || x.cy != y.cy || x.width != y.width || x.height != y.height) {
      return false;
    }
  }
  const auto& pa = a.calib.poses();
  const auto& pb = b.calib.poses();
  if (pa.size() != pb.size()) return false;
  for (auto ia = pa.begin(), ib = pb.begin(); ia != pa.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    if (ia->second.rotation().coeffs() != ib->second.rotation().coeffs() ||
        ia->second.translation() != ib->second.translation()) {
      return false;
    }
  }
  const bool tracks_equal = same_seq(a.tracks, b.tracks, [](const KeypointTrack& x, const KeypointTrack& y) {
    return x.track_id == y.track_id &&
           same_seq(x.observations, y.observations,
                    [](const KeypointObservation& o, const KeypointObservation& p) {
                      return o.frame_index == p.frame_index && o.camera_id == p.camera_id &&
                             o.u == p.u && o.v == p.v;
                    });
  });
  if (!tracks_equal) return false;
  if (!same_seq(a.gt_boxes, b.gt_boxes, same_box) || !same_seq(a.detections, b.detections, same_box)) {
    return false;
  }
  if (a.embeddings.size() != b.embeddings.size() || a.positions.size() != b.positions.size()) {
    return false;
  }
  for (auto ia = a.embeddings.begin(), ib = b.embeddings.begin(); ia != a.embeddings.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.size() != ib->second.size() || ia->second != ib->second) {
      return false;
    }
  }
  for (auto ia = a.positions.begin(), ib = b.positions.begin(); ia != a.positions.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second != ib->second) return false;
  }
  return true;
}

namespace {

void require(const std::vector<std::string_view>& f, std::size_t n, const std::string& file,
             std::size_t line) {
  if (f.size() != n) {
    throw ParseError(file, line,
                     "expected " + std::to_string(n) + " fields, got " + std::to_string(f.size()));
  }
}

fs::path required_file(const fs::path& dir, const char* name) {
  const fs::path p = dir / name;
  if (!fs::is_regular_file(p)) throw MissingFile("scene file missing: " + p.string());
  return p;
}

DetectionKey parse_key(const std::vector<std::string_view>& f, const std::string& file,
                       std::size_t line) {
  DetectionKey k;
  k.frame_index = parse_int(f[0], file, line);
  k.camera_id = std::string(f[1]);
  k.det_index = parse_int(f[2], file, line);
  return k;
}

void load_intrinsics(Scene& s, const fs::path& p) {
  const std::string file = p.string();
  for (const auto& line : read_lines(p)) {
    const auto f = split_ws(line.text);
    require(f, 7, file, line.number);
    PinholeIntrinsics k;
    k.camera_id = std::string(f[0]);
    k.fx = parse_double(f[1], file, line.number);
    k.fy = parse_double(f[2], file, line.number);
    k.cx = parse_double(f[3], file, line.number);
    k.cy = parse_double(f[4], file, line.number);
    k.width = parse_int(f[5], file, line.number);
    k.height = parse_int(f[6], file, line.number);
    if (s.calib.has_camera(k.camera_id)) {
      throw ParseError(file, line.number, "camera '" + k.camera_id + "' declared twice");
    }
    try {
      s.calib.add_camera(k);
    } catch (const ValidationError& e) {
      throw ParseError(file, line.number, e.what());
    }
  }
}

void load_poses(Scene& s, const fs::path& p) {
  const std::string file = p.string();
  for (const auto& line : read_lines(p)) {
    const auto f = split_ws(line.text);
    require(f, 9, file, line.number);
    const int frame = parse_int(f[0], file, line.number);
    const CameraId cam(f[1]);
    Vec3 t;
    for (int k = 0; k < 3; ++k) t[k] = parse_double(f[2 + static_cast<std::size_t>(k)], file, line.number);
    const double qx = parse_double(f[5], file, line.number);
    const double qy = parse_double(f[6], file, line.number);
    const double qz = parse_double(f[7], file, line.number);
    const double qw = parse_double(f[8], file, line.number);
    if (!s.calib.has_camera(cam)) {
      throw DanglingReference(file + ":" + std::to_string(line.number) +
                              ": pose references undeclared camera '" + cam + "'");
    }
    if (s.calib.has_pose(frame, cam)) {
      throw ParseError(file, line.number, "duplicate pose for this frame and camera");
    }
    try {
      s.calib.add_pose(Pose(Eigen::Quaterniond(qw, qx, qy, qz), t, frame, cam));
    } catch (const ValidationError& e) {
      throw ParseError(file, line.number, e.what());
    }
  }
}

void load_tracks(Scene& s, const fs::path& p) {
  const std::string file = p.string();
  std::map<int, std::size_t> index;
  for (const auto& line : read_lines(p)) {
    const auto f = split_ws(line.text);
    require(f, 5, file, line.number);
    const int id = parse_int(f[0], file, line.number);
    KeypointObservation o;
    o.frame_index = parse_int(f[1], file, line.number);
    o.camera_id = std::string(f[2]);
    o.u = parse_double(f[3], file, line.number);
    o.v = parse_double(f[4], file, line.number);
    auto [it, fresh] = index.emplace(id, s.tracks.size());
    if (fresh) s.tracks.push_back(KeypointTrack{id, {}});
    s.tracks[it->second].observations.push_back(std::move(o));
  }
}

void load_embeddings(Scene& s, const fs::path& p) {
  const std::string file = p.string();
  for (const auto& line : read_lines(p)) {
    const auto f = split_csv(line.text);
    if (f.size() < 4) throw ParseError(file, line.number, "embedding line needs at least 4 fields");
    const auto key = parse_key(f, file, line.number);
    Eigen::VectorXd v(static_cast<Eigen::Index>(f.size() - 3));
    for (std::size_t k = 3; k < f.size(); ++k) {
      v[static_cast<Eigen::Index>(k - 3)] = parse_double(f[k], file, line.number);
    }
    if (!s.embeddings.emplace(key, std::move(v)).second) {
      throw ParseError(file, line.number, "duplicate embedding key");
    }
  }
}

void load_positions(Scene& s, const fs::path& p) {
  const std::string file = p.string();
  for (const auto& line : read_lines(p)) {
    const auto f = split_csv(line.text);
    require(f, 6, file, line.number);
    const auto key = parse_key(f, file, line.number);
    Vec3 x;
    for (int k = 0; k < 3; ++k) x[k] = parse_double(f[3 + static_cast<std::size_t>(k)], file, line.number);
    if (!s.positions.emplace(key, x).second) {
      throw ParseError(file, line.number, "duplicate position key");
    }
  }
}

void load_meta(Scene& s, const fs::path& p) {
  const std::string file = p.string();
  for (const auto& line : read_lines(p)) {
    const auto eq = line.text.find('=');
    if (eq == std::string::npos) throw ParseError(file, line.number, "expected key=value");
    const std::string_view text(line.text);
    const auto key = split_ws(text.substr(0, eq));
    const auto val = split_ws(text.substr(eq + 1));
    if (val.size() != 1) throw ParseError(file, line.number, "malformed value");
    const std::string value(val.front());
    if (key.size() != 1) throw ParseError(file, line.number, "malformed key");
    if (key[0] == "frame_rate") {
      s.frame_rate = parse_double(value, file, line.number);
    } else {
      throw ParseError(file, line.number, "unknown key '" + std::string(key[0]) + "'");
    }
  }
}

}  // namespace

Scene load_scene(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw MissingFile("scene directory not found: " + dir.string());
  Scene s;
  load_intrinsics(s, required_file(dir, scene_files::kIntrinsics));
  load_poses(s, required_file(dir, scene_files::kPoses));
  s.detections = read_boxes(required_file(dir, scene_files::kDetections));
  for (auto& d : s.detections) d.object_id.reset();
  if (fs::is_regular_file(dir / scene_files::kTracks)) load_tracks(s, dir / scene_files::kTracks);
  if (fs::is_regular_file(dir / scene_files::kGroundTruth)) {
    s.gt_boxes = read_boxes(dir / scene_files::kGroundTruth);
  }
  if (fs::is_regular_file(dir / scene_files::kEmbeddings)) {
    load_embeddings(s, dir / scene_files::kEmbeddings);
  }
  if (fs::is_regular_file(dir / scene_files::kPositions)) {
    load_positions(s, dir / scene_files::kPositions);
  }
  if (fs::is_regular_file(dir / scene_files::kMeta)) load_meta(s, dir / scene_files::kMeta);
  s.validate();
  return s;
}

void write_scene(const Scene& scene, const fs::path& dir) {
  scene.validate();
  fs::create_directories(dir);
  {
    std::ostringstream os;
    for (const auto& [id, k] : scene.calib.cameras()) {
      os << id << ' ' << format_double(k.fx) << ' ' << format_double(k.fy) << ' '
         << format_double(k.cx) << ' ' << format_double(k.cy) << ' ' << k.width << ' '
         << k.height << '\n';
    }
    write_text_file(dir / scene_files::kIntrinsics, os.str());
  }
  {
    std::ostringstream os;
    for (const auto& [key, pose] : scene.calib.poses()) {
      const auto& t = pose.translation();
      const auto& q = pose.rotation();
      os << key.first << ' ' << key.second << ' ' << format_double(t.x()) << ' '
         << format_double(t.y()) << ' ' << format_double(t.z()) << ' ' << format_double(q.x())
         << ' ' << format_double(q.y()) << ' ' << format_double(q.z()) << ' '
         << format_double(q.w()) << '\n';
    }
    write_text_file(dir / scene_files::kPoses, os.str());
  }
  write_text_file(dir / scene_files::kDetections, format_boxes(scene.detections));

  const auto remove_if_present = [&](const char* name) { fs::remove(dir / name); };
  if (!scene.tracks.empty()) {
    std::ostringstream os;
    for (const auto& t : scene.tracks) {
      for (const auto& o : t.observations) {
        os << t.track_id << ' ' << o.frame_index << ' ' << o.camera_id << ' '
           << format_double(o.u) << ' ' << format_double(o.v) << '\n';
      }
    }
    write_text_file(dir / scene_files::kTracks, os.str());
  } else {
    remove_if_present(scene_files::kTracks);
  }
  if (!scene.gt_boxes.empty()) {
    write_text_file(dir / scene_files::kGroundTruth, format_boxes(scene.gt_boxes));
  } else {
    remove_if_present(scene_files::kGroundTruth);
  }
  if (!scene.embeddings.empty()) {
    std::ostringstream os;
    for (const auto& [key, v] : scene.embeddings) {
      os << key.frame_index << ',' << key.camera_id << ',' << key.det_index;
      for (Eigen::Index k = 0; k < v.size(); ++k) os << ',' << format_double(v[k]);
      os << '\n';
    }
    write_text_file(dir / scene_files::kEmbeddings, os.str());
  } else {
    remove_if_present(scene_files::kEmbeddings);
  }
  if (!scene.positions.empty()) {
    std::ostringstream os;
    for (const auto& [key, x] : scene.positions) {
      os << key.frame_index << ',' << key.camera_id << ',' << key.det_index << ','
         << format_double(x.x()) << ',' << format_double(x.y()) << ',' << format_double(x.z())
         << '\n';
    }
    write_text_file(dir / scene_files::kPositions, os.str());
  } else {
    remove_if_present(scene_files::kPositions);
  }
  write_text_file(dir / scene_files::kMeta, "frame_rate=" + format_double(scene.frame_rate) + "\n");
}

}  // namespace pseudotrack
