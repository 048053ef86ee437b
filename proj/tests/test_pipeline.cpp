#include <doctest.h>

#include "pseudotrack/errors.hpp"
#include "pseudotrack/io.hpp"
#include "pseudotrack/pipeline.hpp"
#include "pseudotrack/synthetic.hpp"
#include "support/fuzz.hpp"

#include <random>

using namespace pseudotrack;
namespace fs = std::filesystem;

namespace {

void write_minimal(const fs::path& dir) {
  write_text_file(dir / scene_files::kIntrinsics, "cam0 500 500 320 240 640 480\n");
  write_text_file(dir / scene_files::kPoses,
                  "0 cam0 0 0 0 0 0 0 1\n"
                  "1 cam0 0.2 0 0 0 0 0 1\n");
  write_text_file(dir / scene_files::kDetections, "0,-1,10,20,30,40,0.9,1,cam0\n");
}

PipelineConfig fast_config() {
  PipelineConfig cfg;
  cfg.train.epochs = 200;
  return cfg;
}

std::map<std::string, std::string> read_outputs(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    out[e.path().filename().string()] = fuzz::slurp(e.path());
  }
  return out;
}

}  // namespace

TEST_CASE("load_scene examples") {
  fuzz::TempDir dir("load_examples");
  write_minimal(dir.path());
  const Scene s = load_scene(dir.path());
  CHECK(s.num_frames() == 2);
  CHECK(s.detections.size() == 1);
  CHECK_FALSE(s.detections[0].object_id.has_value());
  CHECK(s.frame_rate == 10.0);

  write_text_file(dir / scene_files::kPoses,
                  "0 cam0 0 0 0 0 0 0 1\n"
                  "# comment\n"
                  "1 cam0 0.2 0 0 0 0 1\n");
  try {
    load_scene(dir.path());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(e.file().find("poses.txt") != std::string::npos);
  }

  write_minimal(dir.path());
  write_text_file(dir / scene_files::kDetections, "0,-1,10,20,30,40,0.9,1,cam9\n");
  CHECK_THROWS_AS(load_scene(dir.path()), DanglingReference);

  write_minimal(dir.path());
  write_text_file(dir / scene_files::kPoses, "0 cam1 0 0 0 0 0 0 1\n");
  CHECK_THROWS_AS(load_scene(dir.path()), DanglingReference);

  write_minimal(dir.path());
  write_text_file(dir / scene_files::kEmbeddings, "0,cam0,1,0.5,0.5\n");
  CHECK_THROWS_AS(load_scene(dir.path()), DanglingReference);

  write_minimal(dir.path());
  write_text_file(dir / scene_files::kEmbeddings, "0,cam0,0,0.5,0.5\n");
  CHECK(load_scene(dir.path()).embeddings.size() == 1);

  write_minimal(dir.path());
  fs::remove(dir / scene_files::kEmbeddings);
  fs::remove(dir / scene_files::kDetections);
  CHECK_THROWS_AS(load_scene(dir.path()), MissingFile);
  CHECK_THROWS_AS(load_scene(dir / "absent"), MissingFile);

  write_minimal(dir.path());
  write_text_file(dir / scene_files::kPoses, "0 cam0 0 0 0 0 0 0 1\n2 cam0 0 0 0 0 0 0 1\n");
  CHECK_THROWS_AS(load_scene(dir.path()), ValidationError);

  write_minimal(dir.path());
  write_text_file(dir / scene_files::kPoses, "0 cam0 0 0 0 0 0 0 2\n");
  CHECK_THROWS_AS(load_scene(dir.path()), ParseError);
}

TEST_CASE("scene files round-trip on fuzzed scenes") {
  fuzz::TempDir dir("fuzz_scene");
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    std::mt19937_64 rng(seed);
    const Scene s = fuzz::random_scene(rng);
    const fs::path a = dir / ("a" + std::to_string(seed % 4));
    const fs::path b = dir / ("b" + std::to_string(seed % 4));
    REQUIRE(fuzz::scene_round_trip(s, a, b) == "");
  }
}

TEST_CASE("artifact files round-trip on fuzzed contents") {
  fuzz::TempDir dir("fuzz_artifacts");
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    std::mt19937_64 rng(seed);
    REQUIRE(fuzz::artifact_round_trip(rng, dir.path()) == "");
  }
}

TEST_CASE("synthetic scenes are deterministic and valid") {
  SynthConfig cfg;
  cfg.seed = 11;
  cfg.pixel_noise = 0.4;
  cfg.num_dynamic = 1;
  const auto a = generate_synthetic_scene(cfg);
  const auto b = generate_synthetic_scene(cfg);
  CHECK(a.scene == b.scene);
  CHECK_NOTHROW(a.scene.validate());
  cfg.seed = 12;
  CHECK_FALSE(generate_synthetic_scene(cfg).scene == a.scene);

  fuzz::TempDir d1("synth_a"), d2("synth_b");
  write_scene(a.scene, d1.path());
  write_scene(b.scene, d2.path());
  CHECK(read_outputs(d1.path()) == read_outputs(d2.path()));
}

TEST_CASE("noiseless synthetic keypoints reproject exactly") {
  SynthConfig cfg;
  cfg.num_static = 1;
  cfg.seed = 4;
  const auto synth = generate_synthetic_scene(cfg);
  const auto& obj = synth.truth.objects.at(0);
  std::size_t checked = 0;
  for (const auto& t : synth.scene.tracks) {
    const auto k = static_cast<std::size_t>(
        std::find(obj.track_ids.begin(), obj.track_ids.end(), t.track_id) - obj.track_ids.begin());
    REQUIRE(k < obj.offsets.size());
    const Vec3 world = obj.initial_center + obj.offsets[k];
    for (const auto& o : t.observations) {
      const auto& pose = synth.scene.calib.pose(o.frame_index, o.camera_id);
      const auto px = project(world, pose, synth.scene.calib.intrinsics(o.camera_id)).pixel;
      CHECK(px.x() == o.u);
      CHECK(px.y() == o.v);
      ++checked;
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("crossing scenario self-check") {
  SynthConfig cfg;
  cfg.seed = 1;
  cfg.num_static = 0;
  cfg.crossing = CrossingSpec{};
  cfg.embedding_separation = 0.0;
  cfg.camera_speed = 0.0;
  cfg.num_frames = 20;
  const auto synth = generate_synthetic_scene(cfg);
  const auto check = crossing_self_check(synth, cfg);
  CHECK(check.present);
  CHECK(check.max_iou > 0.0);
  CHECK(check.min_separation >= cfg.crossing->depth_gap);
  CHECK(check.passed);

  cfg.crossing.reset();
  cfg.num_static = 1;
  CHECK_FALSE(crossing_self_check(generate_synthetic_scene(cfg), cfg).present);
}

TEST_CASE("synth config validation") {
  SynthConfig cfg;
  cfg.num_static = -1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = SynthConfig{};
  cfg.num_frames = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("pipeline config text") {
  PipelineConfig cfg;
  const auto keys = config_keys();
  CHECK(std::is_sorted(keys.begin(), keys.end()));
  CHECK(std::find(keys.begin(), keys.end(), "track.alpha") != keys.end());

  set_config_value(cfg, "track.alpha", "0.25");
  set_config_value(cfg, "cluster.kappa", "12");
  set_config_value(cfg, "track.three_d_mode", "geometric");
  CHECK(cfg.tracker.alpha == 0.25);
  CHECK(cfg.labeling.cluster.kappa == 12);

  fuzz::TempDir dir("config");
  write_text_file(dir / "c.txt", format_config(cfg));
  const auto back = load_config(dir / "c.txt");
  CHECK(format_config(back) == format_config(cfg));
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(config_hash(back) != config_hash(PipelineConfig{}));

  CHECK_THROWS_AS(set_config_value(cfg, "track.nonsense", "1"), ValidationError);
  CHECK_THROWS_AS(set_config_value(cfg, "track.alpha", "abc"), ValidationError);
  // Range checks belong to the owning config.
  PipelineConfig wide;
  set_config_value(wide, "track.alpha", "2");
  CHECK_THROWS_AS(wide.tracker.validate(), ValidationError);
  CHECK_THROWS_AS(set_config_value(cfg, "track.three_d_mode", "magic"), ValidationError);

  write_text_file(dir / "bad.txt", "track.alpha = 0.3\n\ntrain.epochs = ten\n");
  try {
    load_config(dir / "bad.txt");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("pipeline on a static synthetic scene") {
  SynthConfig sc;
  sc.seed = 3;
  const auto synth = generate_synthetic_scene(sc);
  fuzz::TempDir scene("pipe_scene"), out("pipe_out");
  write_scene(synth.scene, scene.path());

  const auto res = run_pipeline(scene.path(), fast_config(), out.path());
  CHECK(res.labeling.diagnostics.labeled_tracks == 3);
  CHECK(res.evaluation.total.mota == 1.0);
  CHECK(res.evaluation.total.idf1 == 1.0);
  for (const char* name : {pipeline_files::kLabels, pipeline_files::kPoints, pipeline_files::kWeights,
                           pipeline_files::kTracks, pipeline_files::kReport, pipeline_files::kManifest,
                           pipeline_files::kConfig}) {
    CHECK(fs::is_regular_file(out / name));
  }
  for (const char* stage : {"load", "label", "train", "track", "eval"}) CHECK(res.timings_ms.count(stage) == 1);

  const auto manifest = fuzz::slurp(out / pipeline_files::kManifest);
  std::ostringstream hash;
  hash << std::hex << config_hash(fast_config());
  CHECK(manifest.find(hash.str()) != std::string::npos);
  CHECK(manifest.find("timings_ms") != std::string::npos);

  const auto labels = read_labels(out / pipeline_files::kLabels);
  CHECK(labels.size() == res.labeling.labels.size());
  CHECK(read_regressor(out / pipeline_files::kWeights).hidden() == fast_config().train.hidden);
}

TEST_CASE("pipeline reruns are byte-identical") {
  SynthConfig sc;
  sc.seed = 9;
  sc.pixel_noise = 0.3;
  const auto synth = generate_synthetic_scene(sc);
  fuzz::TempDir scene("rerun_scene"), a("rerun_a"), b("rerun_b");
  write_scene(synth.scene, scene.path());
  run_pipeline(scene.path(), fast_config(), a.path());
  run_pipeline(scene.path(), fast_config(), b.path());
  auto fa = read_outputs(a.path()), fb = read_outputs(b.path());
  // The manifest carries wall-clock timings.
  fa.erase(pipeline_files::kManifest);
  fb.erase(pipeline_files::kManifest);
  CHECK(fa.size() == 6);
  CHECK(fa == fb);
}

TEST_CASE("pipeline halts at the label stage on a stationary camera") {
  SynthConfig sc;
  sc.camera_speed = 0.0;
  const auto synth = generate_synthetic_scene(sc);
  fuzz::TempDir scene("halt_scene"), out("halt_out");
  write_scene(synth.scene, scene.path());
  try {
    run_pipeline(scene.path(), fast_config(), out.path());
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "label");
    CHECK_FALSE(e.is_validation());
    CHECK_THROWS_AS(std::rethrow_exception(e.cause()), GateRejected);
  }
  CHECK_FALSE(fs::exists(out / pipeline_files::kTracks));
}

TEST_CASE("pipeline load stage reports missing scenes") {
  fuzz::TempDir out("missing_out");
  try {
    run_pipeline(out / "nowhere", fast_config(), out.path());
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "load");
    CHECK(e.is_validation());
    CHECK_THROWS_AS(std::rethrow_exception(e.cause()), MissingFile);
  }
}

TEST_CASE("evaluate_tracks over several cameras") {
  SynthConfig sc;
  sc.seed = 3;
  auto synth = generate_synthetic_scene(sc);
  SequenceTracks tracks;
  for (const auto& b : synth.scene.gt_boxes) {
    TrackRow r;
    r.frame_index = b.frame_index;
    r.track_id = *b.object_id + 100;
    r.box = b;
    r.score = 1.0;
    tracks[b.camera_id].push_back(r);
  }
  const auto e = evaluate_tracks(synth.scene, tracks, 0.5);
  REQUIRE(e.per_sequence.size() == 1);
  CHECK(e.total.mota == 1.0);
  CHECK(e.total.idf1 == 1.0);
  CHECK(gt_sequence(synth.scene, "cam0").num_boxes() == synth.scene.gt_boxes.size());
  CHECK(track_rows_to_sequence(tracks["cam0"], "cam0").num_boxes() == synth.scene.gt_boxes.size());
}
