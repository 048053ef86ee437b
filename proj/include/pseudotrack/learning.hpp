#pragma once

#include "pseudotrack/geometry.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace pseudotrack {

// A scalar loss and its gradient per input group, in argument order.
struct LossValue {
  double value = 0.0;
  std::vector<Eigen::VectorXd> gradients;
};

// L = |o - o*|_1 / exp(s) + s with s = log(sigma^2).
// gradients: {d/d pred (3), d/d target (3), d/d log_var (1)}.
LossValue l3d_loss(const Vec3& pred, const Vec3& target, double log_var);

// max(0, |a - p| - |a - n| + margin); zero subgradient on the flat side.
// gradients: {d/d anchor, d/d positive, d/d negative}.
LossValue triplet_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                       const Eigen::VectorXd& negative, double margin);

inline constexpr double kBceClamp = 1e-7;

// Mean binary cross-entropy; p is clamped to [1e-7, 1 - 1e-7].
// gradients: {d/d p, row-major flattened}; zero where the clamp is active.
LossValue bce_association_loss(const Eigen::MatrixXd& soft_assignment,
                               const Eigen::MatrixXd& gt_assignment);

inline constexpr int kDescriptorDim = 6;
using Descriptor = Eigen::Matrix<double, kDescriptorDim, 1>;

// (u/W, v/H, w/W, h/H, w/h, bottom/H) of a box in its image.
Descriptor detection_descriptor(const BBox2D& box, const PinholeIntrinsics& intrinsics);

// 6 -> hidden (tanh) -> 4: camera-frame position and log-variance.
struct RegressorWeights {
  Eigen::MatrixXd w1;  // hidden x 6
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // 4 x hidden
  Eigen::VectorXd b2;

  int hidden() const { return static_cast<int>(w1.rows()); }
  void validate() const;  // ShapeMismatch
  static RegressorWeights zeros(int hidden);
  // Uniform in +-1/sqrt(fan_in), biases zero.
  static RegressorWeights random(int hidden, std::uint64_t seed);

  // Flatten in (w1, b1, w2, b2) order with column-major matrices.
  Eigen::VectorXd flatten() const;
  static RegressorWeights unflatten(const Eigen::VectorXd& params, int hidden);
};

struct RegressorOutput {
  Vec3 position;
  double log_var = 0.0;
};

RegressorOutput regressor_forward(const Descriptor& desc, const RegressorWeights& w);

// l3d_loss of the regressor output and its gradient w.r.t. every weight.
struct RegressorLoss {
  double value = 0.0;
  RegressorWeights gradient;
};
RegressorLoss regressor_loss(const Descriptor& desc, const Vec3& target,
                             const RegressorWeights& w);

struct TrainingSample {
  Descriptor descriptor;
  Vec3 target;
};

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 2000;
  std::uint64_t seed = 0;
  int hidden = 32;
};

struct TrainResult {
  RegressorWeights weights;
  std::vector<double> loss_curve;  // mean loss at the start of each epoch, plus the final loss
};

double mean_regressor_loss(const std::vector<TrainingSample>& data, const RegressorWeights& w);

// Full-batch gradient descent on the mean l3d_loss.
TrainResult train_regressor(const std::vector<TrainingSample>& data, const TrainConfig& cfg);

}  // namespace pseudotrack
