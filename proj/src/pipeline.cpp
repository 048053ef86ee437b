#include "pseudotrack/pipeline.hpp"

#include "pseudotrack/io.hpp"

#include <json.hpp>

#include <Eigen/Core>

#include <chrono>
#include <functional>
#include <set>
#include <sstream>

#ifndef PSEUDOTRACK_VERSION
#define PSEUDOTRACK_VERSION "0.1.0"
#endif

namespace pseudotrack {

namespace fs = std::filesystem;

namespace {

double to_double(const std::string& value) {
  try {
    return parse_double(value, "", 0);
  } catch (const ParseError&) {
    throw ValidationError("expected a number, got '" + value + "'");
  }
}

int to_int(const std::string& value) {
  try {
    return parse_int(value, "", 0);
  } catch (const ParseError&) {
    throw ValidationError("expected an integer, got '" + value + "'");
  }
}

bool to_bool(const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ValidationError("expected true or false, got '" + value + "'");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

struct Field {
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <class Get>
Field real(Get get) {
  return Field{[get](PipelineConfig& c, const std::string& v) { get(c) = to_double(v); },
               [get](const PipelineConfig& c) { return format_double(get(const_cast<PipelineConfig&>(c))); }};
}

template <class Get>
Field integer(Get get) {
  return Field{[get](PipelineConfig& c, const std::string& v) { get(c) = to_int(v); },
               [get](const PipelineConfig& c) { return std::to_string(get(const_cast<PipelineConfig&>(c))); }};
}

template <class Get>
Field boolean(Get get) {
  return Field{[get](PipelineConfig& c, const std::string& v) { get(c) = to_bool(v); },
               [get](const PipelineConfig& c) { return from_bool(get(const_cast<PipelineConfig&>(c))); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["cluster.delta"] = real([](PipelineConfig& c) -> double& { return c.labeling.cluster.delta; });
    t["cluster.kappa"] = Field{
        [](PipelineConfig& c, const std::string& v) {
          const int k = to_int(v);
          if (k < 1) throw ValidationError("must be >= 1");
          c.labeling.cluster.kappa = k;
        },
        [](const PipelineConfig& c) { return std::to_string(c.labeling.cluster.kappa); }};
    t["label.min_ego_speed"] = real([](PipelineConfig& c) -> double& { return c.labeling.min_ego_speed; });
    t["reconstruction.reproj_threshold_px"] =
        real([](PipelineConfig& c) -> double& { return c.labeling.reconstruction.reproj_threshold_px; });
    t["reconstruction.min_inlier_fraction"] =
        real([](PipelineConfig& c) -> double& { return c.labeling.reconstruction.min_inlier_fraction; });
    t["reconstruction.gating_rounds"] =
        integer([](PipelineConfig& c) -> int& { return c.labeling.reconstruction.gating_rounds; });
    t["lm.max_iterations"] = integer([](PipelineConfig& c) -> int& { return c.labeling.reconstruction.lm.max_iterations; });
    t["lm.initial_damping"] = real([](PipelineConfig& c) -> double& { return c.labeling.reconstruction.lm.initial_damping; });
    t["lm.damping_up"] = real([](PipelineConfig& c) -> double& { return c.labeling.reconstruction.lm.damping_up; });
    t["lm.damping_down"] = real([](PipelineConfig& c) -> double& { return c.labeling.reconstruction.lm.damping_down; });
    t["lm.cost_tolerance"] = real([](PipelineConfig& c) -> double& { return c.labeling.reconstruction.lm.cost_tolerance; });
    t["lm.huber_delta"] = Field{
        [](PipelineConfig& c, const std::string& v) {
          if (v == "none") {
            c.labeling.reconstruction.lm.huber_delta.reset();
          } else {
            c.labeling.reconstruction.lm.huber_delta = to_double(v);
          }
        },
        [](const PipelineConfig& c) {
          const auto& h = c.labeling.reconstruction.lm.huber_delta;
          return h ? format_double(*h) : std::string("none");
        }};
    t["train.learning_rate"] = real([](PipelineConfig& c) -> double& { return c.train.learning_rate; });
    t["train.epochs"] = integer([](PipelineConfig& c) -> int& { return c.train.epochs; });
    t["train.hidden"] = integer([](PipelineConfig& c) -> int& { return c.train.hidden; });
    t["train.seed"] = Field{
        [](PipelineConfig& c, const std::string& v) {
          const int s = to_int(v);
          if (s < 0) throw ValidationError("must be non-negative");
          c.train.seed = static_cast<std::uint64_t>(s);
        },
        [](const PipelineConfig& c) { return std::to_string(c.train.seed); }};
    t["track.detection_threshold"] = real([](PipelineConfig& c) -> double& { return c.tracker.detection_threshold; });
    t["track.appearance_threshold"] = real([](PipelineConfig& c) -> double& { return c.tracker.appearance_threshold; });
    t["track.alpha"] = real([](PipelineConfig& c) -> double& { return c.tracker.alpha; });
    t["track.max_age"] = integer([](PipelineConfig& c) -> int& { return c.tracker.max_age; });
    t["track.low_score_floor"] = real([](PipelineConfig& c) -> double& { return c.tracker.low_score_floor; });
    t["track.iou_fallback_threshold"] = real([](PipelineConfig& c) -> double& { return c.tracker.iou_fallback_threshold; });
    t["track.kernel_scale"] = real([](PipelineConfig& c) -> double& { return c.tracker.kernel_scale; });
    t["track.low_score_uses_similarity"] =
        boolean([](PipelineConfig& c) -> bool& { return c.tracker.low_score_uses_similarity; });
    t["track.use_gnn"] = boolean([](PipelineConfig& c) -> bool& { return c.tracker.use_gnn; });
    t["track.gnn_layers"] = Field{
        [](PipelineConfig& c, const std::string& v) {
          const int n = to_int(v);
          if (n < 0) throw ValidationError("must be >= 0");
          c.tracker.gnn = GNNConfig::identity(n);
        },
        [](const PipelineConfig& c) { return std::to_string(c.tracker.gnn.num_layers()); }};
    t["track.process_position"] = real([](PipelineConfig& c) -> double& { return c.tracker.noise.process_position; });
    t["track.process_velocity"] = real([](PipelineConfig& c) -> double& { return c.tracker.noise.process_velocity; });
    t["track.measurement_noise"] = real([](PipelineConfig& c) -> double& { return c.tracker.noise.measurement; });
    t["track.three_d_mode"] = Field{
        [](PipelineConfig& c, const std::string& v) {
          if (v == "auto") {
            c.tracker.three_d_mode.reset();
          } else if (v == "learned") {
            c.tracker.three_d_mode = ThreeDMode::learned_cosine;
          } else if (v == "geometric") {
            c.tracker.three_d_mode = ThreeDMode::geometric_kernel;
          } else {
            throw ValidationError("expected auto, learned or geometric");
          }
        },
        [](const PipelineConfig& c) -> std::string {
          if (!c.tracker.three_d_mode) return "auto";
          return *c.tracker.three_d_mode == ThreeDMode::learned_cosine ? "learned" : "geometric";
        }};
    t["track.position_source"] = Field{
        [](PipelineConfig& c, const std::string& v) {
          static const std::map<std::string, PositionSource> m{{"auto", PositionSource::automatic},
                                                               {"scene", PositionSource::scene},
                                                               {"regressor", PositionSource::regressor},
                                                               {"none", PositionSource::none}};
          const auto it = m.find(v);
          if (it == m.end()) throw ValidationError("expected auto, scene, regressor or none");
          c.position_source = it->second;
        },
        [](const PipelineConfig& c) -> std::string {
          switch (c.position_source) {
            case PositionSource::automatic: return "auto";
            case PositionSource::scene: return "scene";
            case PositionSource::regressor: return "regressor";
            case PositionSource::none: return "none";
          }
          return "auto";
        }};
    t["track.encoder_path"] = Field{[](PipelineConfig& c, const std::string& v) { c.encoder_path = v; },
                                    [](const PipelineConfig& c) { return c.encoder_path; }};
    t["eval.iou_threshold"] = real([](PipelineConfig& c) -> double& { return c.eval_iou; });
    return t;
  }();
  return table;
}

}  // namespace

void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ValidationError("unknown config key '" + key + "'");
  try {
    it->second.set(cfg, value);
  } catch (const ValidationError& e) {
    throw ValidationError("config key '" + key + "': " + e.what());
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

PipelineConfig load_config(const fs::path& path) {
  PipelineConfig cfg;
  const std::string file = path.string();
  for (const auto& line : read_lines(path)) {
    const auto eq = line.text.find('=');
    if (eq == std::string::npos) throw ParseError(file, line.number, "expected key=value");
    const auto key = split_ws(std::string_view(line.text).substr(0, eq));
    const auto val = split_ws(std::string_view(line.text).substr(eq + 1));
    if (key.size() != 1 || val.size() > 1) throw ParseError(file, line.number, "malformed key=value");
    try {
      set_config_value(cfg, std::string(key[0]), val.empty() ? std::string{} : std::string(val[0]));
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      throw ParseError(file, line.number, e.what());
    }
  }
  return cfg;
}

std::string format_config(const PipelineConfig& cfg) {
  std::ostringstream os;
  for (const auto& [k, f] : fields()) os << k << '=' << f.get(cfg) << '\n';
  return os.str();
}

std::uint64_t config_hash(const PipelineConfig& cfg) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : format_config(cfg)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string version_string() { return PSEUDOTRACK_VERSION; }

std::vector<TrainingSample> training_samples(const Scene& scene, const std::vector<PseudoLabel>& labels) {
  std::map<std::tuple<int, int, CameraId>, const BBox2D*> boxes;
  for (const auto& b : scene.gt_boxes) boxes[{*b.object_id, b.frame_index, b.camera_id}] = &b;
  std::vector<TrainingSample> out;
  for (const auto& l : labels) {
    const auto it = boxes.find({l.track_id, l.frame_index, l.camera_id});
    if (it == boxes.end()) continue;
    const auto& K = scene.calib.intrinsics(l.camera_id);
    out.push_back(TrainingSample{detection_descriptor(*it->second, K), l.position_camera});
  }
  return out;
}

BoxSequence track_rows_to_sequence(const std::vector<TrackRow>& rows, const CameraId& camera) {
  BoxSequence s;
  for (const auto& r : rows) {
    BBox2D b = r.box;
    b.frame_index = r.frame_index;
    b.camera_id = camera;
    b.object_id = r.track_id;
    s.add(b);
  }
  return s;
}

BoxSequence gt_sequence(const Scene& scene, const CameraId& camera) {
  BoxSequence s;
  for (const auto& b : scene.gt_boxes)
    if (b.camera_id == camera) s.add(b);
  return s;
}

SequenceEvaluation evaluate_tracks(const Scene& scene, const SequenceTracks& tracks, double iou_threshold) {
  SequenceEvaluation out;
  std::set<CameraId> cams;
  for (const auto& b : scene.gt_boxes) cams.insert(b.camera_id);
  std::vector<EvalReport> reports;
  static const std::vector<TrackRow> kNone;
  for (const auto& cam : cams) {
    const auto it = tracks.find(cam);
    const auto& rows = it == tracks.end() ? kNone : it->second;
    auto r = evaluate(gt_sequence(scene, cam), track_rows_to_sequence(rows, cam), iou_threshold);
    out.per_sequence.emplace_back(cam, r);
    reports.push_back(r);
  }
  out.total = aggregate(reports);
  return out;
}

namespace {

template <class Fn>
auto run_stage(const std::string& name, std::map<std::string, double>& timings, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  auto finish = [&] {
    timings[name] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      finish();
    } else {
      auto r = fn();
      finish();
      return r;
    }
  } catch (const StageError&) {
    throw;
  } catch (const ValidationError& e) {
    throw StageError(name, std::current_exception(), e.what(), true);
  } catch (const std::exception& e) {
    throw StageError(name, std::current_exception(), e.what(), false);
  }
}

}  // namespace

PipelineResult run_pipeline(const fs::path& scene_dir, const PipelineConfig& cfg, const fs::path& out_dir) {
  PipelineResult res;
  auto& timings = res.timings_ms;

  Scene scene = run_stage("load", timings, [&] { return load_scene(scene_dir); });
  fs::create_directories(out_dir);
  auto emit = [&](const char* name, const std::string& contents) {
    write_text_file(out_dir / name, contents);
    res.outputs.push_back(out_dir / name);
  };

  res.labeling = run_stage("label", timings, [&] {
    auto r = generate_pseudo_labels(scene, cfg.labeling);
    emit(pipeline_files::kLabels, format_labels(r.labels));
    emit(pipeline_files::kPoints, format_points(r.reconstruction.points));
    return r;
  });

  const bool want_regressor = cfg.position_source == PositionSource::regressor ||
                              (cfg.position_source == PositionSource::automatic && scene.positions.empty());
  res.training = run_stage("train", timings, [&] {
    const auto samples = training_samples(scene, res.labeling.labels);
    if (samples.empty()) throw EmptyInput("no pseudo labels with a matching ground-truth box to train on");
    auto r = train_regressor(samples, cfg.train);
    write_regressor(out_dir / pipeline_files::kWeights, r.weights);
    res.outputs.push_back(out_dir / pipeline_files::kWeights);
    return r;
  });

  res.tracks = run_stage("track", timings, [&] {
    TrackingModels models;
    Scene track_scene = scene;
    if (cfg.position_source == PositionSource::scene && scene.positions.empty()) {
      throw ValidationError("track.position_source=scene but the scene has no positions");
    }
    if (cfg.position_source == PositionSource::regressor || cfg.position_source == PositionSource::none) {
      track_scene.positions.clear();
    }
    if (want_regressor) models.regressor = res.training.weights;
    if (!cfg.encoder_path.empty()) models.encoder = read_encoder(cfg.encoder_path);
    auto t = run_sequence(track_scene, cfg.tracker, models);
    for (const auto& p : write_tracks(out_dir / pipeline_files::kTracks, t)) res.outputs.push_back(p);
    return t;
  });

  res.evaluation = run_stage("eval", timings, [&] {
    auto e = evaluate_tracks(scene, res.tracks, cfg.eval_iou);
    emit(pipeline_files::kReport, format_report(e.per_sequence, e.total));
    return e;
  });

  emit(pipeline_files::kConfig, format_config(cfg));

  nlohmann::ordered_json manifest;
  std::ostringstream hash;
  hash << std::hex << config_hash(cfg);
  manifest["config_hash"] = hash.str();
  manifest["versions"] = {{"pseudotrack", version_string()},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                        std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                        std::to_string(EIGEN_MINOR_VERSION)},
                          {"compiler", __VERSION__}};
  manifest["scene"] = scene_dir.string();
  manifest["timings_ms"] = nlohmann::ordered_json::object();
  for (const auto& stage : {"load", "label", "train", "track", "eval"}) {
    manifest["timings_ms"][stage] = timings[stage];
  }
  manifest["summary"] = {{"labels", res.labeling.labels.size()},
                         {"labeled_tracks", res.labeling.diagnostics.labeled_tracks},
                         {"final_train_loss", res.training.loss_curve.empty() ? 0.0 : res.training.loss_curve.back()},
                         {"mota", res.evaluation.total.mota},
                         {"idf1", res.evaluation.total.idf1}};
  nlohmann::ordered_json outputs = nlohmann::ordered_json::array();
  for (const auto& p : res.outputs) outputs.push_back(p.filename().string());
  manifest["outputs"] = outputs;
  write_text_file(out_dir / pipeline_files::kManifest, manifest.dump(2) + "\n");
  res.outputs.push_back(out_dir / pipeline_files::kManifest);
  return res;
}

}  // namespace pseudotrack
