#include "pseudotrack/errors.hpp"
#include "pseudotrack/io.hpp"
#include "pseudotrack/labeling.hpp"
#include "pseudotrack/metrics.hpp"
#include "pseudotrack/pipeline.hpp"
#include "pseudotrack/reconstruction.hpp"
#include "pseudotrack/scene.hpp"
#include "pseudotrack/synthetic.hpp"
#include "pseudotrack/tracker.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <set>

namespace fs = std::filesystem;
using namespace pseudotrack;

namespace {

enum Exit { kOk = 0, kValidation = 1, kRuntime = 2 };

PipelineConfig base_config(const std::string& path, const std::vector<std::string>& sets) {
  PipelineConfig cfg = path.empty() ? PipelineConfig{} : load_config(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudo-3D-label multi-object tracking toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  std::string config_path;
  std::vector<std::string> sets;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value configuration file");
    sub->add_option("--set", sets, "override a configuration key (key=value)");
  };

  // synth
  SynthConfig synth;
  std::string synth_out;
  bool synth_crossing = false;
  CrossingSpec crossing;
  auto* s_synth = app.add_subcommand("synth", "write a seeded synthetic scene");
  s_synth->add_option("--out", synth_out, "output scene directory")->required();
  s_synth->add_option("--seed", synth.seed);
  s_synth->add_option("--static", synth.num_static);
  s_synth->add_option("--dynamic", synth.num_dynamic);
  s_synth->add_option("--keypoints", synth.keypoints_per_object);
  s_synth->add_option("--background", synth.background_points);
  s_synth->add_option("--frames", synth.num_frames);
  s_synth->add_option("--frame-rate", synth.frame_rate);
  s_synth->add_option("--speed", synth.camera_speed, "camera speed, m/s");
  s_synth->add_option("--heading", synth.camera_heading, "camera heading, radians");
  s_synth->add_option("--pixel-noise", synth.pixel_noise);
  s_synth->add_option("--embedding-dim", synth.embedding_dim);
  s_synth->add_option("--separation", synth.embedding_separation, "inter-identity embedding separation in [0, 1]");
  s_synth->add_option("--embedding-noise", synth.embedding_noise);
  s_synth->add_option("--score", synth.detection_score);
  s_synth->add_flag("--crossing", synth_crossing, "add two identical objects crossing in depth");
  s_synth->add_option("--depth-gap", crossing.depth_gap);
  s_synth->add_option("--near-depth", crossing.near_depth);
  bool no_positions = false;
  s_synth->add_flag("--no-positions", no_positions, "omit positions.csv");

  // label
  std::string scene_dir, out_path;
  double delta = 0.5;
  int kappa = 30;
  auto* s_label = app.add_subcommand("label", "generate pseudo 3D labels");
  s_label->add_option("--scene", scene_dir)->required();
  s_label->add_option("--delta", delta, "single-linkage distance, meters")->capture_default_str();
  s_label->add_option("--kappa", kappa, "minimum cluster size")->capture_default_str();
  s_label->add_option("--out", out_path)->required();
  add_config(s_label);

  // reconstruct
  auto* s_rec = app.add_subcommand("reconstruct", "triangulate and refine keypoint tracks");
  s_rec->add_option("--scene", scene_dir)->required();
  s_rec->add_option("--out", out_path)->required();
  add_config(s_rec);

  // train
  std::string labels_path;
  auto* s_train = app.add_subcommand("train", "fit the box-to-position regressor on pseudo labels");
  s_train->add_option("--scene", scene_dir)->required();
  s_train->add_option("--labels", labels_path)->required();
  s_train->add_option("--out", out_path)->required();
  std::optional<int> epochs, hidden;
  std::optional<double> lr;
  s_train->add_option("--epochs", epochs);
  s_train->add_option("--lr", lr);
  s_train->add_option("--hidden", hidden);
  add_config(s_train);

  // track
  double alpha = 0.4, det_thresh = 0.5, app_thresh = 0.6;
  int max_age = 30;
  std::string weights_path, encoder_path, mode = "auto";
  auto* s_track = app.add_subcommand("track", "run the online tracker");
  s_track->add_option("--scene", scene_dir)->required();
  s_track->add_option("--alpha", alpha)->capture_default_str();
  s_track->add_option("--det-thresh", det_thresh)->capture_default_str();
  s_track->add_option("--app-thresh", app_thresh)->capture_default_str();
  s_track->add_option("--max-age", max_age)->capture_default_str();
  s_track->add_option("--weights", weights_path, "regressor weights for detection positions");
  s_track->add_option("--encoder", encoder_path, "3D encoder weights");
  s_track->add_option("--mode", mode, "3D similarity: auto, learned or geometric")->capture_default_str();
  s_track->add_option("--out", out_path)->required();
  add_config(s_track);

  // eval
  std::string gt_path, hyp_path;
  double iou_thr = 0.5;
  auto* s_eval = app.add_subcommand("eval", "CLEAR MOT and IDF1 against ground truth");
  s_eval->add_option("--gt", gt_path)->required();
  s_eval->add_option("--hyp", hyp_path)->required();
  s_eval->add_option("--iou", iou_thr)->capture_default_str();
  s_eval->add_option("--out", out_path)->required();

  // pipeline
  auto* s_pipe = app.add_subcommand("pipeline", "label -> train -> track -> eval");
  s_pipe->add_option("--scene", scene_dir)->required();
  s_pipe->add_option("--out", out_path, "output directory")->required();
  add_config(s_pipe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (*s_synth) {
      if (synth_crossing) synth.crossing = crossing;
      synth.emit_positions = !no_positions;
      const auto result = generate_synthetic_scene(synth);
      write_scene(result.scene, synth_out);
      std::cout << "wrote " << synth_out << " (" << result.scene.num_frames() << " frames, "
                << result.scene.detections.size() << " detections, " << result.scene.tracks.size()
                << " keypoint tracks)\n";
      if (synth.crossing) {
        const auto check = crossing_self_check(result, synth);
        std::cout << "crossing check: max IoU " << check.max_iou << ", min separation "
                  << check.min_separation << " m, " << (check.passed ? "ok" : "FAILED") << "\n";
        if (!check.passed) return kRuntime;
      }
    } else if (*s_label) {
      PipelineConfig cfg = base_config(config_path, sets);
      if (s_label->count("--delta")) cfg.labeling.cluster.delta = delta;
      if (s_label->count("--kappa")) cfg.labeling.cluster.kappa = kappa;
      const Scene scene = load_scene(scene_dir);
      const auto r = generate_pseudo_labels(scene, cfg.labeling);
      write_text_file(out_path, format_labels(r.labels));
      const auto& d = r.diagnostics;
      std::cout << r.labels.size() << " labels, " << d.labeled_tracks << "/" << d.total_tracks
                << " identities labeled, " << d.clusters << " clusters (" << d.unassigned_clusters
                << " unassigned), ego speed " << d.ego_speed << " m/s\n";
    } else if (*s_rec) {
      const PipelineConfig cfg = base_config(config_path, sets);
      const Scene scene = load_scene(scene_dir);
      const auto r = reconstruct(scene.tracks, scene.calib, cfg.labeling.reconstruction);
      write_text_file(out_path, format_points(r.points));
      std::cout << r.points.size() << " points, " << r.degenerate_tracks << " degenerate, "
                << r.dropped_tracks << " dropped, cost " << r.initial_cost << " -> " << r.final_cost << "\n";
    } else if (*s_train) {
      PipelineConfig cfg = base_config(config_path, sets);
      if (epochs) cfg.train.epochs = *epochs;
      if (lr) cfg.train.learning_rate = *lr;
      if (hidden) cfg.train.hidden = *hidden;
      const Scene scene = load_scene(scene_dir);
      const auto samples = training_samples(scene, read_labels(labels_path));
      if (samples.empty()) throw EmptyInput("no labels match a ground-truth box");
      const auto r = train_regressor(samples, cfg.train);
      write_regressor(out_path, r.weights);
      std::cout << samples.size() << " samples, loss " << r.loss_curve.front() << " -> "
                << r.loss_curve.back() << "\n";
    } else if (*s_track) {
      PipelineConfig cfg = base_config(config_path, sets);
      if (s_track->count("--alpha")) cfg.tracker.alpha = alpha;
      if (s_track->count("--det-thresh")) cfg.tracker.detection_threshold = det_thresh;
      if (s_track->count("--app-thresh")) cfg.tracker.appearance_threshold = app_thresh;
      if (s_track->count("--max-age")) cfg.tracker.max_age = max_age;
      if (s_track->count("--mode")) set_config_value(cfg, "track.three_d_mode", mode);
      const Scene scene = load_scene(scene_dir);
      TrackingModels models;
      if (!weights_path.empty()) models.regressor = read_regressor(weights_path);
      if (!encoder_path.empty()) models.encoder = read_encoder(encoder_path);
      const auto tracks = run_sequence(scene, cfg.tracker, models);
      const auto paths = write_tracks(out_path, tracks);
      std::size_t rows = 0;
      for (const auto& [cam, r] : tracks) rows += r.size();
      std::cout << rows << " rows over " << tracks.size() << " camera(s)\n";
    } else if (*s_eval) {
      const auto gt = read_boxes(gt_path);
      std::set<CameraId> cams;
      for (const auto& b : gt) cams.insert(b.camera_id);
      std::vector<std::pair<std::string, EvalReport>> rows;
      std::vector<EvalReport> reports;
      for (const auto& cam : cams) {
        BoxSequence g;
        for (const auto& b : gt)
          if (b.camera_id == cam) g.add(b);
        const fs::path hp = cams.size() == 1 ? fs::path(hyp_path) : camera_track_path(hyp_path, cam);
        BoxSequence h;
        for (const auto& b : read_boxes_any(hp, cam))
          if (b.camera_id == cam) h.add(b);
        rows.emplace_back(cam, evaluate(g, h, iou_thr));
        reports.push_back(rows.back().second);
      }
      const EvalReport total = aggregate(reports);
      write_text_file(out_path, format_report(rows, total));
      std::cout << "MOTA " << total.mota << "  IDF1 " << total.idf1 << "  FP " << total.fp << "  FN "
                << total.fn << "  IDSW " << total.idsw << "\n";
    } else if (*s_pipe) {
      const PipelineConfig cfg = base_config(config_path, sets);
      const auto r = run_pipeline(scene_dir, cfg, out_path);
      std::cout << r.labeling.labels.size() << " labels; MOTA " << r.evaluation.total.mota << "  IDF1 "
                << r.evaluation.total.idf1 << "  IDSW " << r.evaluation.total.idsw << "\n";
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_validation() ? kValidation : kRuntime;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}
