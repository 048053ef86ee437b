#include "pseudotrack/io.hpp"

#include "pseudotrack/errors.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace pseudotrack {

namespace fs = std::filesystem;

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<TextLine> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open " + path.string());
  std::vector<TextLine> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.push_back(TextLine{n, std::string(t)});
  }
  return out;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    out.push_back(line.substr(start, i - start));
  }
  return out;
}

double parse_double(std::string_view s, const std::string& file, std::size_t line) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != last) {
    throw ParseError(file, line, "expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

int parse_int(std::string_view s, const std::string& file, std::size_t line) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw ParseError(file, line, "expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

void write_text_file(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << contents;
  if (!out) throw Error("write failed: " + path.string());
}

void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  os << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) os << ' ';
      os << format_double(m(r, c));
    }
    os << '\n';
  }
}

std::vector<Eigen::MatrixXd> read_matrices(const fs::path& path) {
  const auto lines = read_lines(path);
  const std::string file = path.string();
  std::vector<Eigen::MatrixXd> out;
  std::size_t i = 0;
  while (i < lines.size()) {
    const auto head = split_ws(lines[i].text);
    if (head.size() != 2) throw ParseError(file, lines[i].number, "expected 'rows cols' header");
    const int rows = parse_int(head[0], file, lines[i].number);
    const int cols = parse_int(head[1], file, lines[i].number);
    if (rows < 0 || cols < 0) throw ParseError(file, lines[i].number, "negative matrix shape");
    ++i;
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r, ++i) {
      if (i >= lines.size()) throw ParseError(file, lines.back().number, "matrix truncated");
      const auto f = split_ws(lines[i].text);
      if (static_cast<int>(f.size()) != cols) {
        throw ParseError(file, lines[i].number,
                         "expected " + std::to_string(cols) + " values, got " +
                             std::to_string(f.size()));
      }
      for (int c = 0; c < cols; ++c) m(r, c) = parse_double(f[static_cast<std::size_t>(c)], file, lines[i].number);
    }
    out.push_back(std::move(m));
  }
  return out;
}

void write_regressor(const fs::path& path, const RegressorWeights& w) {
  w.validate();
  std::ostringstream os;
  write_matrix(os, w.w1);
  write_matrix(os, w.b1);
  write_matrix(os, w.w2);
  write_matrix(os, w.b2);
  write_text_file(path, os.str());
}

RegressorWeights read_regressor(const fs::path& path) {
  const auto m = read_matrices(path);
  if (m.size() != 4) throw ShapeMismatch(path.string() + ": expected 4 matrices (w1 b1 w2 b2)");
  for (std::size_t k : {std::size_t{1}, std::size_t{3}}) {
    if (m[k].cols() != 1) throw ShapeMismatch(path.string() + ": biases must be column vectors");
  }
  RegressorWeights w{m[0], m[1].col(0), m[2], m[3].col(0)};
  w.validate();
  return w;
}

void write_encoder(const fs::path& path, const EncoderWeights& w) {
  w.validate();
  std::ostringstream os;
  write_matrix(os, w.weight);
  write_matrix(os, w.bias);
  write_text_file(path, os.str());
}

EncoderWeights read_encoder(const fs::path& path) {
  const auto m = read_matrices(path);
  if (m.size() != 2 || m[1].cols() != 1) {
    throw ShapeMismatch(path.string() + ": expected weight and bias matrices");
  }
  EncoderWeights w{m[0], m[1].col(0), EncoderWeights::Provenance::loaded};
  w.validate();
  return w;
}

std::string format_labels(const std::vector<PseudoLabel>& labels) {
  std::ostringstream os;
  for (const auto& l : labels) {
    os << l.track_id << ',' << l.frame_index << ',' << l.camera_id;
    for (int k = 0; k < 3; ++k) os << ',' << format_double(l.position_camera[k]);
    for (int k = 0; k < 3; ++k) os << ',' << format_double(l.position_world[k]);
    os << ',' << l.support << '\n';
  }
  return os.str();
}

std::vector<PseudoLabel> read_labels(const fs::path& path) {
  const std::string file = path.string();
  std::vector<PseudoLabel> out;
  for (const auto& line : read_lines(path)) {
    const auto f = split_csv(line.text);
    if (f.size() != 10) throw ParseError(file, line.number, "expected 10 label fields");
    PseudoLabel l;
    l.track_id = parse_int(f[0], file, line.number);
    l.frame_index = parse_int(f[1], file, line.number);
    l.camera_id = std::string(f[2]);
    for (int k = 0; k < 3; ++k) {
      l.position_camera[k] = parse_double(f[3 + static_cast<std::size_t>(k)], file, line.number);
      l.position_world[k] = parse_double(f[6 + static_cast<std::size_t>(k)], file, line.number);
    }
    const int support = parse_int(f[9], file, line.number);
    if (support < 0) throw ParseError(file, line.number, "negative support");
    l.support = static_cast<std::size_t>(support);
    out.push_back(std::move(l));
  }
  return out;
}

std::string format_points(const std::vector<ReconstructedPoint>& points) {
  std::ostringstream os;
  for (const auto& p : points) {
    os << p.point.track_id;
    for (int k = 0; k < 3; ++k) os << ' ' << format_double(p.point.position[k]);
    os << ' ' << p.num_observations << ' ' << format_double(p.mean_reproj_error_px) << '\n';
  }
  return os.str();
}

std::string format_track_rows(const std::vector<TrackRow>& rows) {
  std::ostringstream os;
  for (const auto& r : rows) {
    os << r.frame_index << ',' << r.track_id << ',' << format_double(r.box.left) << ','
       << format_double(r.box.top) << ',' << format_double(r.box.width_px) << ','
       << format_double(r.box.height_px) << ',' << format_double(r.score);
    for (int k = 0; k < 3; ++k) os << ',' << format_double(r.position_camera[k]);
    os << '\n';
  }
  return os.str();
}

fs::path camera_track_path(const fs::path& path, const CameraId& camera) {
  fs::path out = path;
  out.replace_filename(path.stem().string() + "_" + camera + path.extension().string());
  return out;
}

std::vector<fs::path> write_tracks(const fs::path& path, const SequenceTracks& tracks) {
  std::vector<fs::path> written;
  if (tracks.size() <= 1) {
    write_text_file(path, tracks.empty() ? std::string{} : format_track_rows(tracks.begin()->second));
    written.push_back(path);
    return written;
  }
  for (const auto& [cam, rows] : tracks) {
    const auto p = camera_track_path(path, cam);
    write_text_file(p, format_track_rows(rows));
    written.push_back(p);
  }
  return written;
}

std::string format_boxes(const std::vector<BBox2D>& boxes) {
  std::ostringstream os;
  for (const auto& b : boxes) {
    os << b.frame_index << ',' << (b.object_id ? *b.object_id : -1) << ','
       << format_double(b.left) << ',' << format_double(b.top) << ','
       << format_double(b.width_px) << ',' << format_double(b.height_px) << ','
       << format_double(b.score) << ',' << b.class_id << ',' << b.camera_id << '\n';
  }
  return os.str();
}

namespace {

BBox2D parse_box_fields(const std::vector<std::string_view>& f, bool track_format,
                        const CameraId& camera, const std::string& file, std::size_t line) {
  BBox2D b;
  b.frame_index = parse_int(f[0], file, line);
  const int id = parse_int(f[1], file, line);
  if (id >= 0) b.object_id = id;
  b.left = parse_double(f[2], file, line);
  b.top = parse_double(f[3], file, line);
  b.width_px = parse_double(f[4], file, line);
  b.height_px = parse_double(f[5], file, line);
  b.score = parse_double(f[6], file, line);
  if (track_format) {
    b.camera_id = camera;
  } else {
    b.class_id = parse_int(f[7], file, line);
    b.camera_id = std::string(f[8]);
    if (b.camera_id.empty()) throw ParseError(file, line, "empty camera_id");
  }
  if (b.frame_index < 0) throw ParseError(file, line, "negative frame index");
  try {
    b.validate();
  } catch (const ValidationError& e) {
    throw ParseError(file, line, e.what());
  }
  return b;
}

}  // namespace

std::vector<BBox2D> read_boxes(const fs::path& path) {
  const std::string file = path.string();
  std::vector<BBox2D> out;
  for (const auto& line : read_lines(path)) {
    const auto f = split_csv(line.text);
    if (f.size() != 9) {
      throw ParseError(file, line.number,
                       "expected 9 box fields, got " + std::to_string(f.size()));
    }
    out.push_back(parse_box_fields(f, false, {}, file, line.number));
  }
  return out;
}

std::vector<BBox2D> read_boxes_any(const fs::path& path, const CameraId& camera) {
  const std::string file = path.string();
  std::vector<BBox2D> out;
  for (const auto& line : read_lines(path)) {
    const auto f = split_csv(line.text);
    if (f.size() != 9 && f.size() != 10) {
      throw ParseError(file, line.number,
                       "expected 9 or 10 box fields, got " + std::to_string(f.size()));
    }
    out.push_back(parse_box_fields(f, f.size() == 10, camera, file, line.number));
  }
  return out;
}

std::string format_report(const std::vector<std::pair<std::string, EvalReport>>& rows,
                          const EvalReport& total) {
  std::ostringstream os;
  os << "sequence,MOTA,IDF1,IDP,IDR,FP,FN,IDSW,MT,ML,num_gt\n";
  auto emit = [&](const std::string& name, const EvalReport& r) {
    os << name << ',' << format_double(r.mota) << ',' << format_double(r.idf1) << ','
       << format_double(r.idp) << ',' << format_double(r.idr) << ',' << r.fp << ',' << r.fn
       << ',' << r.idsw << ',' << r.mt << ',' << r.ml << ',' << r.num_gt << '\n';
  };
  for (const auto& [name, r] : rows) emit(name, r);
  emit("all", total);
  return os.str();
}

}  // namespace pseudotrack
