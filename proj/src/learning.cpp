#include "pseudotrack/learning.hpp"

#include "pseudotrack/errors.hpp"
#include "pseudotrack/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pseudotrack {

namespace {
double sign(double x) { return (x > 0.0) - (x < 0.0); }
}  // namespace

LossValue l3d_loss(const Vec3& pred, const Vec3& target, double log_var) {
  const Vec3 diff = pred - target;
  const double l1 = diff.lpNorm<1>();
  const double inv_var = std::exp(-log_var);
  LossValue out;
  out.value = l1 * inv_var + log_var;
  Eigen::VectorXd g_pred = diff.unaryExpr([](double x) { return sign(x); }) * inv_var;
  Eigen::VectorXd g_target = -g_pred;
  Eigen::VectorXd g_var(1);
  g_var(0) = -l1 * inv_var + 1.0;
  out.gradients = {std::move(g_pred), std::move(g_target), std::move(g_var)};
  return out;
}

LossValue triplet_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                       const Eigen::VectorXd& negative, double margin) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size()) {
    throw ShapeMismatch("triplet_loss: inputs must share a dimension");
  }
  const Eigen::VectorXd ap = anchor - positive;
  const Eigen::VectorXd an = anchor - negative;
  const double d_ap = ap.norm();
  const double d_an = an.norm();
  const double arg = d_ap - d_an + margin;

  LossValue out;
  const Eigen::Index d = anchor.size();
  Eigen::VectorXd ga = Eigen::VectorXd::Zero(d), gp = Eigen::VectorXd::Zero(d),
                  gn = Eigen::VectorXd::Zero(d);
  if (arg > 0.0) {
    out.value = arg;
    if (d_ap > 0.0) {
      ga += ap / d_ap;
      gp -= ap / d_ap;
    }
    if (d_an > 0.0) {
      ga -= an / d_an;
      gn += an / d_an;
    }
  }
  out.gradients = {std::move(ga), std::move(gp), std::move(gn)};
  return out;
}

LossValue bce_association_loss(const Eigen::MatrixXd& soft, const Eigen::MatrixXd& gt) {
  if (soft.rows() != gt.rows() || soft.cols() != gt.cols()) {
    throw ShapeMismatch("bce_association_loss: shape mismatch");
  }
  const double count = static_cast<double>(soft.size());
  LossValue out;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(soft.size());
  if (soft.size() == 0) {
    out.gradients = {grad};
    return out;
  }
  double sum = 0.0;
  for (Eigen::Index r = 0; r < soft.rows(); ++r) {
    for (Eigen::Index c = 0; c < soft.cols(); ++c) {
      const double raw = soft(r, c);
      const double p = std::clamp(raw, kBceClamp, 1.0 - kBceClamp);
      const double y = gt(r, c);
      sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
      if (raw > kBceClamp && raw < 1.0 - kBceClamp) {
        grad(r * soft.cols() + c) = (-y / p + (1.0 - y) / (1.0 - p)) / count;
      }
    }
  }
  out.value = sum / count;
  out.gradients = {std::move(grad)};
  return out;
}

Descriptor detection_descriptor(const BBox2D& box, const PinholeIntrinsics& k) {
  const double w = static_cast<double>(k.width);
  const double h = static_cast<double>(k.height);
  const Vec2 c = box.center();
  Descriptor d;
  d << c.x() / w, c.y() / h, box.width_px / w, box.height_px / h, box.width_px / box.height_px,
      box.bottom() / h;
  return d;
}

void RegressorWeights::validate() const {
  const auto hid = w1.rows();
  if (w1.cols() != kDescriptorDim || b1.size() != hid || w2.rows() != 4 || w2.cols() != hid ||
      b2.size() != 4) {
    throw ShapeMismatch("regressor weights have inconsistent shapes");
  }
}

RegressorWeights RegressorWeights::zeros(int hidden) {
  return {Eigen::MatrixXd::Zero(hidden, kDescriptorDim), Eigen::VectorXd::Zero(hidden),
          Eigen::MatrixXd::Zero(4, hidden), Eigen::VectorXd::Zero(4)};
}

RegressorWeights RegressorWeights::random(int hidden, std::uint64_t seed) {
  if (hidden < 1) throw ValidationError("regressor hidden width must be >= 1");
  std::mt19937_64 rng(seed);
  auto w = zeros(hidden);
  std::uniform_real_distribution<double> u1(-1.0 / std::sqrt(double(kDescriptorDim)),
                                            1.0 / std::sqrt(double(kDescriptorDim)));
  for (Eigen::Index j = 0; j < w.w1.cols(); ++j)
    for (Eigen::Index i = 0; i < w.w1.rows(); ++i) w.w1(i, j) = u1(rng);
  std::uniform_real_distribution<double> u2(-1.0 / std::sqrt(double(hidden)),
                                            1.0 / std::sqrt(double(hidden)));
  for (Eigen::Index j = 0; j < w.w2.cols(); ++j)
    for (Eigen::Index i = 0; i < w.w2.rows(); ++i) w.w2(i, j) = u2(rng);
  return w;
}

Eigen::VectorXd RegressorWeights::flatten() const {
  Eigen::VectorXd out(w1.size() + b1.size() + w2.size() + b2.size());
  Eigen::Index o = 0;
  out.segment(o, w1.size()) = Eigen::Map<const Eigen::VectorXd>(w1.data(), w1.size());
  o += w1.size();
  out.segment(o, b1.size()) = b1;
  o += b1.size();
  out.segment(o, w2.size()) = Eigen::Map<const Eigen::VectorXd>(w2.data(), w2.size());
  o += w2.size();
  out.segment(o, b2.size()) = b2;
  return out;
}

RegressorWeights RegressorWeights::unflatten(const Eigen::VectorXd& p, int hidden) {
  auto w = zeros(hidden);
  if (p.size() != w.flatten().size()) throw ShapeMismatch("regressor parameter count mismatch");
  Eigen::Index o = 0;
  w.w1 = Eigen::Map<const Eigen::MatrixXd>(p.data() + o, hidden, kDescriptorDim);
  o += w.w1.size();
  w.b1 = p.segment(o, hidden);
  o += hidden;
  w.w2 = Eigen::Map<const Eigen::MatrixXd>(p.data() + o, 4, hidden);
  o += w.w2.size();
  w.b2 = p.segment(o, 4);
  return w;
}

RegressorOutput regressor_forward(const Descriptor& desc, const RegressorWeights& w) {
  w.validate();
  if (!desc.allFinite()) throw ValidationError("regressor_forward: non-finite descriptor");
  const Eigen::VectorXd hidden = (w.w1 * desc + w.b1).array().tanh().matrix();
  const Eigen::VectorXd y = w.w2 * hidden + w.b2;
  return {y.head<3>(), y(3)};
}

RegressorLoss regressor_loss(const Descriptor& desc, const Vec3& target,
                             const RegressorWeights& w) {
  w.validate();
  const Eigen::VectorXd hidden = (w.w1 * desc + w.b1).array().tanh().matrix();
  const Eigen::VectorXd y = w.w2 * hidden + w.b2;
  const LossValue l = l3d_loss(y.head<3>(), target, y(3));

  Eigen::VectorXd dy(4);
  dy.head<3>() = l.gradients[0];
  dy(3) = l.gradients[2](0);
  RegressorLoss out{l.value, RegressorWeights::zeros(w.hidden())};
  out.gradient.w2 = dy * hidden.transpose();
  out.gradient.b2 = dy;
  const Eigen::VectorXd dz = (w.w2.transpose() * dy).array() * (1.0 - hidden.array().square());
  out.gradient.w1 = dz * desc.transpose();
  out.gradient.b1 = dz;
  return out;
}

double mean_regressor_loss(const std::vector<TrainingSample>& data, const RegressorWeights& w) {
  double sum = 0.0;
  for (const auto& s : data) {
    const auto out = regressor_forward(s.descriptor, w);
    sum += l3d_loss(out.position, s.target, out.log_var).value;
  }
  return data.empty() ? 0.0 : sum / static_cast<double>(data.size());
}

TrainResult train_regressor(const std::vector<TrainingSample>& data, const TrainConfig& cfg) {
  if (data.empty()) throw ValidationError("train_regressor: empty dataset");
  if (cfg.epochs < 0) throw ValidationError("train_regressor: epochs must be >= 0");
  TrainResult result{RegressorWeights::random(cfg.hidden, cfg.seed), {}};
  auto& w = result.weights;
  const double inv_n = 1.0 / static_cast<double>(data.size());

  std::vector<RegressorLoss> per_sample(data.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    parallel_for(data.size(), [&](std::size_t i) {
      per_sample[i] = regressor_loss(data[i].descriptor, data[i].target, w);
    });
    // Fixed summation order keeps the result independent of the thread count.
    double loss = 0.0;
    RegressorWeights grad = RegressorWeights::zeros(cfg.hidden);
    for (const auto& s : per_sample) {
      loss += s.value;
      grad.w1 += s.gradient.w1;
      grad.b1 += s.gradient.b1;
      grad.w2 += s.gradient.w2;
      grad.b2 += s.gradient.b2;
    }
    result.loss_curve.push_back(loss * inv_n);
    const double step = cfg.learning_rate * inv_n;
    w.w1 -= step * grad.w1;
    w.b1 -= step * grad.b1;
    w.w2 -= step * grad.w2;
    w.b2 -= step * grad.b2;
  }
  result.loss_curve.push_back(mean_regressor_loss(data, w));
  return result;
}

}  // namespace pseudotrack
