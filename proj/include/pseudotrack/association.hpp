#pragma once

#include "pseudotrack/assignment.hpp"
#include "pseudotrack/geometry.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <vector>

namespace pseudotrack {

enum class FeatureKind { appearance, three_d, fused };

struct FeatureVector {
  Eigen::VectorXd values;
  FeatureKind kind = FeatureKind::appearance;

  Eigen::Index dim() const { return values.size(); }
};

inline constexpr int kDefaultFeatureDim = 512;

// 3D position (camera frame) -> feature through one fully-connected layer.
struct EncoderWeights {
  enum class Provenance { loaded, trained, identity_test };

  Eigen::MatrixXd weight;  // D x 3
  Eigen::VectorXd bias;    // D
  Provenance provenance = Provenance::loaded;

  Eigen::Index dim() const { return weight.rows(); }
  void validate() const;  // ShapeMismatch
  // Identity rows on top, zero padding below; zero bias.
  static EncoderWeights identity(Eigen::Index dim);
};

FeatureVector encode_3d(const Vec3& position, const EncoderWeights& weights);

// L2-normalize both halves, concatenate (appearance first), normalize again.
// Throws ShapeMismatch on differing dimensions and ZeroVector on zero input.
FeatureVector fuse(const FeatureVector& appearance, const FeatureVector& three_d);

// Returns 0 when either vector is zero.
double cosine(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

struct AffineLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  bool identity = true;

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
};

// One affine layer per GNN layer; no layers means no aggregation.
struct GNNConfig {
  std::vector<AffineLayer> layers;

  int num_layers() const { return static_cast<int>(layers.size()); }
  static GNNConfig identity(int num_layers);
};

// Cross-frame aggregation. Per layer, each current feature f receives
// m = sum_j' cos(f, g_j') g_j' over the previous-frame features g and becomes
// MLP(f + |f| m / |m|); the message term is skipped when |m| < 1e-12. The
// previous-frame features advance through the same layer without a message.
std::vector<FeatureVector> gnn_aggregate(std::span<const FeatureVector> current,
                                         std::span<const FeatureVector> previous,
                                         const GNNConfig& cfg);

enum class ThreeDMode { learned_cosine, geometric_kernel };

struct SimilarityConfig {
  double alpha = 0.4;
  double appearance_threshold = 0.6;
  ThreeDMode three_d_mode = ThreeDMode::learned_cosine;
  double kernel_scale = 5.0;  // tau, meters

  void validate() const;
};

// One side of an association: a fused feature and, for the geometric
// kernel, a position in a frame shared by both sides.
struct AssociationInput {
  FeatureVector fused;
  std::optional<Vec3> position;
};

struct SimilarityBreakdown {
  Eigen::MatrixXd appearance;  // cosine of appearance halves
  Eigen::MatrixXd three_d;
  Eigen::MatrixXd combined;    // (1 - alpha) * appearance + alpha * three_d
};

// Rows are detections, columns tracks. A pair without 3D information (a zero
// 3D half in learned mode, a missing position in geometric mode) scores its
// 3D term as its appearance term.
SimilarityBreakdown similarity_breakdown(std::span<const AssociationInput> detections,
                                         std::span<const AssociationInput> tracks,
                                         const SimilarityConfig& cfg);

Eigen::MatrixXd similarity_matrix(std::span<const AssociationInput> detections,
                                  std::span<const AssociationInput> tracks,
                                  const SimilarityConfig& cfg);

}  // namespace pseudotrack
