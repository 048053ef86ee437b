#include "pseudotrack/association.hpp"

#include "pseudotrack/errors.hpp"
#include "pseudotrack/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pseudotrack {

void EncoderWeights::validate() const {
  if (weight.cols() != 3 || bias.size() != weight.rows()) {
    throw ShapeMismatch("encoder weights must be D x 3 with a D-vector bias (got " +
                        std::to_string(weight.rows()) + "x" + std::to_string(weight.cols()) +
                        ", bias " + std::to_string(bias.size()) + ")");
  }
}

EncoderWeights EncoderWeights::identity(Eigen::Index dim) {
  if (dim < 3) throw ShapeMismatch("identity encoder needs dimension >= 3");
  EncoderWeights w;
  w.weight = Eigen::MatrixXd::Zero(dim, 3);
  w.weight.topRows<3>().setIdentity();
  w.bias = Eigen::VectorXd::Zero(dim);
  w.provenance = Provenance::identity_test;
  return w;
}

FeatureVector encode_3d(const Vec3& position, const EncoderWeights& weights) {
  weights.validate();
  if (!position.allFinite()) throw ValidationError("encode_3d: non-finite position");
  return FeatureVector{weights.weight * position + weights.bias, FeatureKind::three_d};
}

FeatureVector fuse(const FeatureVector& appearance, const FeatureVector& three_d) {
  if (appearance.dim() != three_d.dim()) {
    throw ShapeMismatch("fuse: appearance dim " + std::to_string(appearance.dim()) +
                        " != 3D dim " + std::to_string(three_d.dim()));
  }
  const double na = appearance.values.norm();
  const double nt = three_d.values.norm();
  if (!(na > 0.0) || !(nt > 0.0)) throw ZeroVector("fuse: zero-norm input feature");
  const Eigen::Index d = appearance.dim();
  Eigen::VectorXd out(2 * d);
  out.head(d) = appearance.values / na;
  out.tail(d) = three_d.values / nt;
  out.normalize();
  return FeatureVector{std::move(out), FeatureKind::fused};
}

double cosine(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  const double denom = a.norm() * b.norm();
  if (!(denom > 0.0)) return 0.0;
  return a.dot(b) / denom;
}

Eigen::VectorXd AffineLayer::apply(const Eigen::VectorXd& x) const {
  if (identity) return x;
  if (weight.cols() != x.size() || bias.size() != weight.rows()) {
    throw ShapeMismatch("GNN layer shape does not match feature dimension");
  }
  return weight * x + bias;
}

GNNConfig GNNConfig::identity(int num_layers) {
  GNNConfig cfg;
  cfg.layers.assign(static_cast<std::size_t>(std::max(0, num_layers)), AffineLayer{});
  return cfg;
}

std::vector<FeatureVector> gnn_aggregate(std::span<const FeatureVector> current,
                                         std::span<const FeatureVector> previous,
                                         const GNNConfig& cfg) {
  std::vector<Eigen::VectorXd> cur, prev;
  const Eigen::Index dim = current.empty() ? 0 : current.front().dim();
  for (const auto& f : current) {
    if (f.dim() != dim) throw ShapeMismatch("gnn_aggregate: inconsistent feature dimension");
    cur.push_back(f.values);
  }
  for (const auto& g : previous) {
    if (g.dim() != dim && !current.empty()) {
      throw ShapeMismatch("gnn_aggregate: previous-frame dimension differs");
    }
    prev.push_back(g.values);
  }

  for (const auto& layer : cfg.layers) {
    std::vector<Eigen::VectorXd> next(cur.size());
    for (std::size_t j = 0; j < cur.size(); ++j) {
      Eigen::VectorXd message = Eigen::VectorXd::Zero(cur[j].size());
      for (const auto& g : prev) message += cosine(cur[j], g) * g;
      const double mnorm = message.norm();
      if (mnorm < 1e-12) {
        next[j] = layer.apply(cur[j]);
      } else {
        next[j] = layer.apply(cur[j] + cur[j].norm() * message / mnorm);
      }
    }
    for (auto& g : prev) g = layer.apply(g);
    cur = std::move(next);
  }

  std::vector<FeatureVector> out;
  out.reserve(cur.size());
  for (auto& f : cur) out.push_back(FeatureVector{std::move(f), FeatureKind::fused});
  return out;
}

void SimilarityConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  if (!(kernel_scale > 0.0)) throw ValidationError("kernel scale tau must be positive");
}

SimilarityBreakdown similarity_breakdown(std::span<const AssociationInput> detections,
                                         std::span<const AssociationInput> tracks,
                                         const SimilarityConfig& cfg) {
  cfg.validate();
  const auto rows = static_cast<Eigen::Index>(detections.size());
  const auto cols = static_cast<Eigen::Index>(tracks.size());
  SimilarityBreakdown out{Eigen::MatrixXd::Zero(rows, cols), Eigen::MatrixXd::Zero(rows, cols),
                          Eigen::MatrixXd::Zero(rows, cols)};
  if (rows == 0 || cols == 0) return out;

  const Eigen::Index full = detections.front().fused.dim();
  for (const auto* side : {&detections, &tracks}) {
    for (const auto& in : *side) {
      if (in.fused.dim() != full || full % 2 != 0) {
        throw ShapeMismatch("similarity_matrix: fused features must share an even dimension");
      }
    }
  }
  const Eigen::Index half = full / 2;

  parallel_for(static_cast<std::size_t>(rows), [&](std::size_t r) {
    const auto& det = detections[r];
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& trk = tracks[c];
      const double app = cosine(det.fused.values.head(half), trk.fused.values.head(half));
      double three_d = app;
      if (cfg.three_d_mode == ThreeDMode::learned_cosine) {
        const auto dt = det.fused.values.tail(half);
        const auto tt = trk.fused.values.tail(half);
        if (dt.squaredNorm() > 0.0 && tt.squaredNorm() > 0.0) three_d = cosine(dt, tt);
      } else if (det.position && trk.position) {
        three_d = std::exp(-(*det.position - *trk.position).norm() / cfg.kernel_scale);
      }
      const auto i = static_cast<Eigen::Index>(r);
      out.appearance(i, c) = app;
      out.three_d(i, c) = three_d;
      out.combined(i, c) = (1.0 - cfg.alpha) * app + cfg.alpha * three_d;
    }
  });
  return out;
}

Eigen::MatrixXd similarity_matrix(std::span<const AssociationInput> detections,
                                  std::span<const AssociationInput> tracks,
                                  const SimilarityConfig& cfg) {
  return similarity_breakdown(detections, tracks, cfg).combined;
}

}  // namespace pseudotrack
