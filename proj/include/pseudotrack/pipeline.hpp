#pragma once

#include "pseudotrack/errors.hpp"
#include "pseudotrack/labeling.hpp"
#include "pseudotrack/learning.hpp"
#include "pseudotrack/metrics.hpp"
#include "pseudotrack/scene.hpp"
#include "pseudotrack/tracker.hpp"

#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pseudotrack {

enum class PositionSource { automatic, scene, regressor, none };

struct PipelineConfig {
  LabelingConfig labeling;
  TrainConfig train;
  TrackerConfig tracker;
  PositionSource position_source = PositionSource::automatic;
  std::string encoder_path;  // empty: no learned 3D encoder
  double eval_iou = 0.5;
};

// Flat key=value text. Unknown keys and malformed values throw
// ValidationError (ParseError when reading a file).
void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value);
PipelineConfig load_config(const std::filesystem::path& path);
// Every key with its current value, sorted by key; load_config accepts it.
std::string format_config(const PipelineConfig& cfg);
std::vector<std::string> config_keys();
// FNV-1a 64 over format_config.
std::uint64_t config_hash(const PipelineConfig& cfg);

// An error raised inside one pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, std::exception_ptr cause, const std::string& what, bool validation)
      : Error(stage + " stage: " + what), stage_(std::move(stage)), cause_(cause), validation_(validation) {}

  const std::string& stage() const { return stage_; }
  std::exception_ptr cause() const { return cause_; }
  bool is_validation() const { return validation_; }

 private:
  std::string stage_;
  std::exception_ptr cause_;
  bool validation_;
};

// Training pairs: each pseudo label with the ground-truth box of the same
// identity, frame and camera.
std::vector<TrainingSample> training_samples(const Scene& scene, const std::vector<PseudoLabel>& labels);

// Track rows of one camera as boxes identified by track id.
BoxSequence track_rows_to_sequence(const std::vector<TrackRow>& rows, const CameraId& camera);
BoxSequence gt_sequence(const Scene& scene, const CameraId& camera);

// One report per camera with ground truth, plus the aggregate.
struct SequenceEvaluation {
  std::vector<std::pair<std::string, EvalReport>> per_sequence;
  EvalReport total;
};
SequenceEvaluation evaluate_tracks(const Scene& scene, const SequenceTracks& tracks, double iou_threshold);

struct PipelineResult {
  LabelingResult labeling;
  TrainResult training;
  SequenceTracks tracks;
  SequenceEvaluation evaluation;
  std::map<std::string, double> timings_ms;
  std::vector<std::filesystem::path> outputs;
};

namespace pipeline_files {
inline constexpr const char* kLabels = "labels.csv";
inline constexpr const char* kPoints = "points.txt";
inline constexpr const char* kWeights = "weights.txt";
inline constexpr const char* kTracks = "tracks.csv";
inline constexpr const char* kReport = "report.csv";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kConfig = "config.txt";
}  // namespace pipeline_files

// label -> train -> track -> eval on a scene directory, writing every
// artifact plus manifest.json into out_dir. Stage failures throw StageError.
PipelineResult run_pipeline(const std::filesystem::path& scene_dir, const PipelineConfig& cfg,
                            const std::filesystem::path& out_dir);

std::string version_string();

}  // namespace pseudotrack
