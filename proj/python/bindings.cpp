#include "pseudotrack/assignment.hpp"
#include "pseudotrack/errors.hpp"
#include "pseudotrack/geometry.hpp"
#include "pseudotrack/metrics.hpp"
#include "pseudotrack/pipeline.hpp"
#include "pseudotrack/reconstruction.hpp"
#include "pseudotrack/scene.hpp"
#include "pseudotrack/synthetic.hpp"
#include "pseudotrack/tracker.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace pseudotrack;

namespace {

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["mota"] = r.mota;
  d["idf1"] = r.idf1;
  d["idp"] = r.idp;
  d["idr"] = r.idr;
  d["fp"] = r.fp;
  d["fn"] = r.fn;
  d["idsw"] = r.idsw;
  d["mt"] = r.mt;
  d["ml"] = r.ml;
  d["num_gt"] = r.num_gt;
  return d;
}

// Rows of (frame, id, left, top, width, height).
BoxSequence rows_to_sequence(const Eigen::MatrixXd& rows) {
  if (rows.size() != 0 && rows.cols() != 6) throw ShapeMismatch("box rows need 6 columns");
  BoxSequence s;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    BBox2D b;
    b.frame_index = static_cast<int>(rows(i, 0));
    b.object_id = static_cast<int>(rows(i, 1));
    b.left = rows(i, 2);
    b.top = rows(i, 3);
    b.width_px = rows(i, 4);
    b.height_px = rows(i, 5);
    b.validate();
    s.add(b);
  }
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Pseudo-label 3D multi-object tracking";
  m.attr("__version__") = version_string();

  auto error = py::register_exception<Error>(m, "Error");
  auto validation = py::register_exception<ValidationError>(m, "ValidationError", error);
  py::register_exception<ParseError>(m, "ParseError", validation);
  py::register_exception<ShapeMismatch>(m, "ShapeMismatch", validation);
  py::register_exception<MissingFile>(m, "MissingFile", validation);
  py::register_exception<DanglingReference>(m, "DanglingReference", validation);
  py::register_exception<DuplicateID>(m, "DuplicateID", validation);
  py::register_exception<InputNotSorted>(m, "InputNotSorted", validation);
  py::register_exception<CheiralityViolation>(m, "CheiralityViolation", error);
  py::register_exception<DegenerateGeometry>(m, "DegenerateGeometry", error);
  py::register_exception<InsufficientObservations>(m, "InsufficientObservations", error);
  py::register_exception<EmptyInput>(m, "EmptyInput", error);
  py::register_exception<EmptyAfterFilter>(m, "EmptyAfterFilter", error);
  py::register_exception<GateRejected>(m, "GateRejected", error);
  py::register_exception<UnassignedCluster>(m, "UnassignedCluster", error);
  py::register_exception<ZeroVector>(m, "ZeroVector", error);
  py::register_exception<SingularInnovation>(m, "SingularInnovation", error);
  py::register_exception<StageError>(m, "StageError", error);

  py::class_<PinholeIntrinsics>(m, "PinholeIntrinsics")
      .def(py::init([](std::string id, double fx, double fy, double cx, double cy, int w, int h) {
             PinholeIntrinsics k{std::move(id), fx, fy, cx, cy, w, h};
             k.validate();
             return k;
           }),
           py::arg("camera_id"), py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"),
           py::arg("width"), py::arg("height"))
      .def_readonly("camera_id", &PinholeIntrinsics::camera_id)
      .def_readonly("fx", &PinholeIntrinsics::fx)
      .def_readonly("fy", &PinholeIntrinsics::fy)
      .def_readonly("cx", &PinholeIntrinsics::cx)
      .def_readonly("cy", &PinholeIntrinsics::cy)
      .def_readonly("width", &PinholeIntrinsics::width)
      .def_readonly("height", &PinholeIntrinsics::height)
      .def("matrix", &PinholeIntrinsics::matrix);

  py::class_<Pose>(m, "Pose")
      .def(py::init([](const Eigen::Vector4d& wxyz, const Vec3& t, int frame, const CameraId& cam) {
             return Pose(Eigen::Quaterniond(wxyz[0], wxyz[1], wxyz[2], wxyz[3]), t, frame, cam);
           }),
           py::arg("quaternion_wxyz"), py::arg("translation"), py::arg("frame_index") = 0,
           py::arg("camera_id") = "")
      .def_static("identity", &Pose::identity, py::arg("frame_index") = 0, py::arg("camera_id") = "")
      .def_property_readonly("quaternion_wxyz",
                             [](const Pose& p) {
                               const auto& q = p.rotation();
                               return Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
                             })
      .def_property_readonly("translation", &Pose::translation)
      .def_property_readonly("frame_index", &Pose::frame_index)
      .def_property_readonly("camera_id", &Pose::camera_id)
      .def("rotation_matrix", &Pose::rotation_matrix)
      .def("world_to_camera", &Pose::world_to_camera)
      .def("camera_to_world", &Pose::camera_to_world)
      .def("inverse", &Pose::inverse)
      .def("compose", &Pose::compose);

  m.def(
      "project",
      [](const Vec3& p, const Pose& pose, const PinholeIntrinsics& k) {
        const auto pr = project(p, pose, k);
        return py::make_tuple(pr.pixel, pr.depth);
      },
      py::arg("point"), py::arg("pose"), py::arg("intrinsics"),
      "Pixel and depth of a world point; raises CheiralityViolation behind the camera.");

  m.def(
      "triangulate",
      [](const std::vector<Pose>& poses, const std::vector<PinholeIntrinsics>& cams,
         const Eigen::MatrixX2d& pixels, bool refine) {
        if (poses.size() != cams.size() || static_cast<Eigen::Index>(poses.size()) != pixels.rows())
          throw ShapeMismatch("poses, intrinsics and pixels must have one entry per view");
        Calibration calib;
        KeypointTrack track{0, {}};
        for (std::size_t i = 0; i < poses.size(); ++i) {
          const CameraId id = "v" + std::to_string(i);
          calib.add_camera(PinholeIntrinsics{id, cams[i].fx, cams[i].fy, cams[i].cx, cams[i].cy,
                                             cams[i].width, cams[i].height});
          calib.add_pose(Pose(poses[i].rotation(), poses[i].translation(), 0, id));
          const auto r = static_cast<Eigen::Index>(i);
          track.observations.push_back({0, id, pixels(r, 0), pixels(r, 1)});
        }
        // One view per camera id at frame 0; scene poses carry their own ids.
        const Vec3 init = triangulate_dlt(track, calib);
        if (!refine) return init;
        return refine_points_lm({init}, {track}, calib, LMConfig{}).points.front().position;
      },
      py::arg("poses"), py::arg("intrinsics"), py::arg("pixels"), py::arg("refine") = true,
      "DLT triangulation of one point, optionally refined by Levenberg-Marquardt.");

  m.def(
      "solve_assignment",
      [](const Eigen::MatrixXd& sim, double gate) {
        const auto r = solve_assignment(sim, gate);
        return py::make_tuple(r.matches, r.unmatched_rows, r.unmatched_cols);
      },
      py::arg("similarity"), py::arg("gate") = -std::numeric_limits<double>::infinity(),
      "Maximum-similarity one-to-one assignment: (matches, unmatched_rows, unmatched_cols).");
  m.def("sinkhorn", &sinkhorn_soft_assignment, py::arg("similarity"), py::arg("temperature"),
        py::arg("iterations"), py::arg("dustbin_score") = 0.0,
        "Soft assignment with a dustbin row and column; returns the augmented matrix.");
  m.def("iou", [](const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
    BBox2D x, y;
    x.left = a[0], x.top = a[1], x.width_px = a[2], x.height_px = a[3];
    y.left = b[0], y.top = b[1], y.width_px = b[2], y.height_px = b[3];
    return iou(x, y);
  }, py::arg("a"), py::arg("b"), "IoU of two (left, top, width, height) boxes.");

  m.def(
      "evaluate",
      [](const Eigen::MatrixXd& gt, const Eigen::MatrixXd& hyp, double thr) {
        return report_dict(evaluate(rows_to_sequence(gt), rows_to_sequence(hyp), thr));
      },
      py::arg("gt"), py::arg("hyp"), py::arg("iou_threshold") = 0.5,
      "CLEAR MOT and identity scores from (frame, id, left, top, width, height) rows.");
  m.def(
      "depth_metrics",
      [](const Eigen::VectorXd& pred, const Eigen::VectorXd& truth, double max_depth) {
        if (pred.size() != truth.size()) throw ShapeMismatch("depth arrays differ in length");
        std::vector<DepthPair> pairs;
        for (Eigen::Index i = 0; i < pred.size(); ++i) pairs.push_back({pred[i], truth[i]});
        const auto r = depth_metrics(pairs, max_depth);
        py::dict d;
        d["count"] = r.count;
        d["abs_rel"] = r.abs_rel;
        d["sq_rel"] = r.sq_rel;
        d["rmse"] = r.rmse;
        d["rmse_log"] = r.rmse_log;
        d["delta1"] = r.delta1;
        d["delta2"] = r.delta2;
        d["delta3"] = r.delta3;
        return d;
      },
      py::arg("predicted"), py::arg("ground_truth"), py::arg("max_depth") = 75.0);

  m.def(
      "synthesize",
      [](const std::filesystem::path& out, std::uint64_t seed, int num_static, int num_dynamic,
         int num_frames, double pixel_noise, bool crossing) {
        SynthConfig cfg;
        cfg.seed = seed;
        cfg.num_static = num_static;
        cfg.num_dynamic = num_dynamic;
        cfg.num_frames = num_frames;
        cfg.pixel_noise = pixel_noise;
        if (crossing) cfg.crossing = CrossingSpec{};
        const auto s = generate_synthetic_scene(cfg);
        write_scene(s.scene, out);
        return s.scene.num_frames();
      },
      py::arg("out_dir"), py::arg("seed") = 0, py::arg("num_static") = 3, py::arg("num_dynamic") = 0,
      py::arg("num_frames") = 10, py::arg("pixel_noise") = 0.0, py::arg("crossing") = false,
      "Writes a synthetic scene directory; returns its frame count.");

  m.def(
      "run_pipeline",
      [](const std::filesystem::path& scene, const std::filesystem::path& out,
         const std::map<std::string, std::string>& overrides) {
        PipelineConfig cfg;
        for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
        PipelineResult r;
        {
          py::gil_scoped_release release;
          r = run_pipeline(scene, cfg, out);
        }
        py::dict d = report_dict(r.evaluation.total);
        std::vector<std::string> outputs;
        for (const auto& p : r.outputs) outputs.push_back(p.string());
        d["outputs"] = outputs;
        d["labels"] = r.labeling.labels.size();
        return d;
      },
      py::arg("scene_dir"), py::arg("out_dir"), py::arg("config") = std::map<std::string, std::string>{},
      "Label, train, track and evaluate a scene directory; `config` holds key=value overrides.");
  m.def("config_keys", &config_keys);
}
