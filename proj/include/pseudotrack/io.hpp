#pragma once

#include "pseudotrack/association.hpp"
#include "pseudotrack/geometry.hpp"
#include "pseudotrack/labeling.hpp"
#include "pseudotrack/learning.hpp"
#include "pseudotrack/metrics.hpp"
#include "pseudotrack/reconstruction.hpp"
#include "pseudotrack/tracker.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace pseudotrack {

// Shortest text that parses back to the same double.
std::string format_double(double v);

// Lines of a text file with their 1-based numbers; blank lines and lines
// starting with '#' are dropped.
struct TextLine {
  std::size_t number = 0;
  std::string text;
};
std::vector<TextLine> read_lines(const std::filesystem::path& path);

// Field splitting. Comma files split on ',', space files on runs of
// whitespace. Surrounding whitespace is trimmed.
std::vector<std::string_view> split_csv(std::string_view line);
std::vector<std::string_view> split_ws(std::string_view line);

// Throw ParseError(file, line).
double parse_double(std::string_view s, const std::string& file, std::size_t line);
int parse_int(std::string_view s, const std::string& file, std::size_t line);

void write_text_file(const std::filesystem::path& path, const std::string& contents);

// Matrices: a "rows cols" header line, then one row per line. Several may
// follow each other in one stream.
void write_matrix(std::ostream& os, const Eigen::MatrixXd& m);
std::vector<Eigen::MatrixXd> read_matrices(const std::filesystem::path& path);

void write_regressor(const std::filesystem::path& path, const RegressorWeights& w);
RegressorWeights read_regressor(const std::filesystem::path& path);
void write_encoder(const std::filesystem::path& path, const EncoderWeights& w);
EncoderWeights read_encoder(const std::filesystem::path& path);

// track_id,frame,camera_id,x_cam,y_cam,z_cam,X_world,Y_world,Z_world,support
std::string format_labels(const std::vector<PseudoLabel>& labels);
std::vector<PseudoLabel> read_labels(const std::filesystem::path& path);

// track_id X Y Z n_observations mean_reproj_error_px
std::string format_points(const std::vector<ReconstructedPoint>& points);

// frame,track_id,bb_left,bb_top,bb_width,bb_height,score,x_cam,y_cam,z_cam
std::string format_track_rows(const std::vector<TrackRow>& rows);
// Writes `path` for a single camera, else <stem>_<camera><ext> per camera.
std::vector<std::filesystem::path> write_tracks(const std::filesystem::path& path,
                                                const SequenceTracks& tracks);
std::filesystem::path camera_track_path(const std::filesystem::path& path, const CameraId& camera);

// frame,id,bb_left,bb_top,bb_width,bb_height,score,class,camera_id
std::string format_boxes(const std::vector<BBox2D>& boxes);
std::vector<BBox2D> read_boxes(const std::filesystem::path& path);
// Boxes from either the 9-column detection format or the 10-column track
// format (which carries no camera; `camera` is used instead).
std::vector<BBox2D> read_boxes_any(const std::filesystem::path& path, const CameraId& camera = {});

// One row per named sequence, then an "all" row.
std::string format_report(const std::vector<std::pair<std::string, EvalReport>>& rows,
                          const EvalReport& total);

}  // namespace pseudotrack
