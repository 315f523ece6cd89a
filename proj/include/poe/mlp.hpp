#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "poe/errors.hpp"
#include "poe/keypoints.hpp"

namespace poe {

enum class Activation { relu, leaky_relu };

inline std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "leaky_relu"; }

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu") return Activation::leaky_relu;
  throw ParameterError("unknown activation '" + std::string(s) + "'");
}

inline constexpr double kLeakySlope = 0.01;

struct DenseLayer {
  Eigen::MatrixXd weights;  ///< out x in
  Eigen::VectorXd bias;     ///< out

  int inputs() const noexcept { return static_cast<int>(weights.cols()); }
  int outputs() const noexcept { return static_cast<int>(weights.rows()); }
};

/// Fully connected network; the activation follows every layer except the last.
/// Batches are column-major: one sample per column.
struct Mlp {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::relu;

  struct Tape {
    std::vector<Eigen::MatrixXd> inputs;       ///< input of each layer
    std::vector<Eigen::MatrixXd> preactivations;
  };

  /// He-initialised network with the given layer widths (input first).
  static Mlp random(const std::vector<int>& widths, Activation act, std::mt19937_64& rng) {
    if (widths.size() < 2) throw ParameterError("network needs at least an input and an output width");
    for (int w : widths) {
      if (w < 1) throw ParameterError("layer widths must be >= 1");
    }
    Mlp net;
    net.activation = act;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      DenseLayer l;
      const double s = std::sqrt(2.0 / widths[i]);
      l.weights = Eigen::MatrixXd::NullaryExpr(widths[i + 1], widths[i], [&] { return s * normal(rng); });
      l.bias = Eigen::VectorXd::Zero(widths[i + 1]);
      net.layers.push_back(std::move(l));
    }
    return net;
  }

  int input_dim() const { return layers.front().inputs(); }
  int output_dim() const { return layers.back().outputs(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    Tape t;
    return forward(x, t, false);
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape& tape, bool record = true) const {
    if (layers.empty()) throw StateError("network has no layers");
    if (x.rows() != input_dim()) {
      throw DimensionError("input has " + std::to_string(x.rows()) + " features, network expects " +
                           std::to_string(input_dim()));
    }
    Eigen::MatrixXd a = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      Eigen::MatrixXd z = layers[i].weights * a;
      z.colwise() += layers[i].bias;
      if (record) {
        tape.inputs.push_back(std::move(a));
        tape.preactivations.push_back(z);
      }
      a = (i + 1 < layers.size()) ? activate(z) : std::move(z);
    }
    return a;
  }

  /// Parameter gradients of sum-over-batch loss given dL/d(output).
  std::vector<DenseLayer> backward(const Tape& tape, const Eigen::MatrixXd& grad_out) const {
    std::vector<DenseLayer> g(layers.size());
    Eigen::MatrixXd delta = grad_out;
    for (std::size_t i = layers.size(); i-- > 0;) {
      if (i + 1 < layers.size()) delta = delta.cwiseProduct(activation_slope(tape.preactivations[i]));
      g[i].weights = delta * tape.inputs[i].transpose();
      g[i].bias = delta.rowwise().sum();
      if (i > 0) delta = layers[i].weights.transpose() * delta;
    }
    return g;
  }

  bool finite() const {
    for (const auto& l : layers) {
      if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }

 private:
  Eigen::MatrixXd activate(const Eigen::MatrixXd& z) const {
    const double neg = activation == Activation::relu ? 0.0 : kLeakySlope;
    return z.unaryExpr([neg](double v) { return v > 0.0 ? v : neg * v; });
  }

  Eigen::MatrixXd activation_slope(const Eigen::MatrixXd& z) const {
    const double neg = activation == Activation::relu ? 0.0 : kLeakySlope;
    return z.unaryExpr([neg](double v) { return v > 0.0 ? 1.0 : neg; });
  }
};

/// Adaptive moment estimation over all layers of one network.
class Adam {
 public:
  explicit Adam(const Mlp& net, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& l : net.layers) {
      m_.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()), Eigen::VectorXd::Zero(l.bias.size())});
    }
    v_ = m_;
  }

  void set_learning_rate(double lr) noexcept { lr_ = lr; }
  double learning_rate() const noexcept { return lr_; }

  void step(Mlp& net, const std::vector<DenseLayer>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      update(net.layers[i].weights, grads[i].weights, m_[i].weights, v_[i].weights, c1, c2);
      update(net.layers[i].bias, grads[i].bias, m_[i].bias, v_[i].bias, c1, c2);
    }
  }

 private:
  template <typename P>
  void update(P& p, const P& g, P& m, P& v, double c1, double c2) const {
    m = b1_ * m + (1.0 - b1_) * g;
    v = b2_ * v + (1.0 - b2_) * g.cwiseProduct(g);
    p.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }

  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<DenseLayer> m_, v_;
};

// ---------------------------------------------------------------------------
// Key-point regressor

inline constexpr int kKeyPointOutputs = 3 * kNumKeyPoints;

/// Two-layer regressor from a feature vector to the 21 key-point
/// displacement coordinates (x0 y0 z0 x1 ...).
struct MlpParams {
  Eigen::MatrixXd w1;  ///< hidden x D
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  ///< 21 x hidden
  Eigen::VectorXd b2;
  Activation activation = Activation::relu;

  static MlpParams zeros(int input_dim, int hidden) {
    return {Eigen::MatrixXd::Zero(hidden, input_dim), Eigen::VectorXd::Zero(hidden),
            Eigen::MatrixXd::Zero(kKeyPointOutputs, hidden), Eigen::VectorXd::Zero(kKeyPointOutputs),
            Activation::relu};
  }

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden() const { return static_cast<int>(w1.rows()); }

  void validate() const {
    if (w1.rows() != b1.size() || w2.cols() != w1.rows() || w2.rows() != b2.size()) {
      throw DimensionError("inconsistent MLP layer shapes");
    }
    if (w2.rows() != kKeyPointOutputs) throw DimensionError("MLP output width must be 21");
    if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite()) {
      throw ParameterError("MLP parameters must be finite");
    }
  }

  Mlp network() const { return Mlp{{{w1, b1}, {w2, b2}}, activation}; }

  static MlpParams from_network(const Mlp& net) {
    if (net.layers.size() != 2) throw DimensionError("key-point MLP has exactly two layers");
    MlpParams p{net.layers[0].weights, net.layers[0].bias, net.layers[1].weights, net.layers[1].bias,
                net.activation};
    p.validate();
    return p;
  }
};

inline KeyPointMatrix reshape_keypoints(const Eigen::VectorXd& v) {
  KeyPointMatrix m;
  for (int i = 0; i < kNumKeyPoints; ++i) m.row(i) = v.segment<3>(3 * i).transpose();
  return m;
}

inline Eigen::VectorXd flatten_keypoints(const KeyPointMatrix& m) {
  Eigen::VectorXd v(kKeyPointOutputs);
  for (int i = 0; i < kNumKeyPoints; ++i) v.segment<3>(3 * i) = m.row(i).transpose();
  return v;
}

/// y = W2 act(W1 x + b1) + b2, as 7x3 displacements in mm.
inline KeyPointMatrix mlp_forward(const MlpParams& params, const Eigen::VectorXd& features) {
  if (features.size() != params.input_dim()) {
    throw DimensionError("feature vector has dimension " + std::to_string(features.size()) + ", model expects " +
                         std::to_string(params.input_dim()));
  }
  Eigen::VectorXd h = params.w1 * features + params.b1;
  const double neg = params.activation == Activation::relu ? 0.0 : kLeakySlope;
  h = h.unaryExpr([neg](double v) { return v > 0.0 ? v : neg * v; });
  return reshape_keypoints(params.w2 * h + params.b2);
}

/// Per-feature standardisation, or one scale shared by all features (keeps
/// the relative signal-to-noise of the features).
enum class InputScaling { per_feature, global };

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 300;
  int batch_size = 32;
  std::uint64_t seed = 0;
  int hidden = 256;
  double validation_fraction = 0.1;
  /// Stop after this many epochs without a validation improvement (0: never).
  int patience = 60;
  /// Cosine annealing of the learning rate down to this fraction by the last epoch.
  double final_lr_fraction = 0.05;
  /// Decoupled weight decay applied to layer weights each step.
  double weight_decay = 1.0;
  Activation activation = Activation::relu;
  InputScaling input_scaling = InputScaling::global;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be > 0");
    if (epochs < 1) throw ParameterError("epochs must be >= 1");
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
    if (hidden < 1) throw ParameterError("hidden width must be >= 1");
    if (!(validation_fraction >= 0.0 && validation_fraction <= 0.5)) {
      throw ParameterError("validation_fraction must be in [0, 0.5]");
    }
    if (patience < 0) throw ParameterError("patience must be >= 0");
    if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) throw ParameterError("final_lr_fraction must be in (0, 1]");
    if (!(weight_decay >= 0.0)) throw ParameterError("weight_decay must be >= 0");
  }
};

struct TrainResult {
  MlpParams params;
  std::vector<double> train_loss;       ///< per epoch, mean squared error in mm^2
  std::vector<double> validation_loss;  ///< empty without a validation split
  int best_epoch = 0;
};

/// Cosine schedule from `base` down to `base * final_fraction` at the last epoch.
inline double cosine_rate(double base, double final_fraction, int epoch, int epochs) {
  if (epochs <= 1) return base;
  const double t = static_cast<double>(epoch) / (epochs - 1);
  return base * (final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * t)));
}

namespace detail {

/// Split shuffled row indices into (train, validation).
inline std::pair<std::vector<int>, std::vector<int>> split_rows(int n, double fraction, std::mt19937_64& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  int nv = static_cast<int>(std::lround(fraction * n));
  nv = std::min(nv, n - 1);
  std::vector<int> val(idx.begin(), idx.begin() + nv);
  std::vector<int> train(idx.begin() + nv, idx.end());
  return {train, val};
}

inline Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m, const std::vector<int>& cols, std::size_t from,
                                      std::size_t to) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(to - from));
  for (std::size_t i = from; i < to; ++i) out.col(static_cast<Eigen::Index>(i - from)) = m.col(cols[i]);
  return out;
}

}  // namespace detail

/// Mini-batch Adam on mean squared displacement error. Inputs are
/// standardised per feature and targets by a single scale during training;
/// both transforms are folded back into the returned parameters.
///
/// features: N x D, targets: N x 21.
inline TrainResult mlp_train(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                             const TrainConfig& config) {
  config.validate();
  const auto n = static_cast<int>(features.rows());
  if (n == 0) throw TrainingError("training set is empty");
  if (n < 2) throw TrainingError("training needs at least 2 samples");
  if (targets.rows() != n) throw DimensionError("features and targets differ in sample count");
  if (targets.cols() != kKeyPointOutputs) throw DimensionError("targets must have 21 columns");
  if (!features.allFinite() || !targets.allFinite()) throw TrainingError("training data contains non-finite values");

  const Eigen::RowVectorXd mu = features.colwise().mean();
  Eigen::RowVectorXd sd = ((features.rowwise() - mu).array().square().colwise().sum() / n).sqrt();
  if (config.input_scaling == InputScaling::global) {
    sd.setConstant(std::sqrt(sd.squaredNorm() / static_cast<double>(sd.size())));
  }
  for (Eigen::Index j = 0; j < sd.size(); ++j) {
    if (!(sd(j) > 1e-12)) sd(j) = 1.0;
  }
  const Eigen::RowVectorXd ty = targets.colwise().mean();
  double tscale = std::sqrt((targets.rowwise() - ty).array().square().mean());
  if (!(tscale > 1e-12)) tscale = 1.0;

  const Eigen::MatrixXd x = ((features.rowwise() - mu).array().rowwise() / sd.array()).matrix().transpose();
  const Eigen::MatrixXd y = ((targets.rowwise() - ty) / tscale).transpose();

  std::mt19937_64 rng(config.seed);
  auto [train_idx, val_idx] = detail::split_rows(n, config.validation_fraction, rng);
  Mlp net = Mlp::random({static_cast<int>(features.cols()), config.hidden, kKeyPointOutputs}, config.activation, rng);
  Adam opt(net, config.learning_rate);

  const Eigen::MatrixXd xv = detail::gather_columns(x, val_idx, 0, val_idx.size());
  const Eigen::MatrixXd yv = detail::gather_columns(y, val_idx, 0, val_idx.size());
  const double to_mm2 = tscale * tscale;

  TrainResult result;
  Mlp best = net;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    opt.set_learning_rate(cosine_rate(config.learning_rate, config.final_lr_fraction, epoch, config.epochs));
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double sse = 0.0;
    for (std::size_t from = 0; from < train_idx.size(); from += bs) {
      const std::size_t to = std::min(from + bs, train_idx.size());
      const Eigen::MatrixXd xb = detail::gather_columns(x, train_idx, from, to);
      const Eigen::MatrixXd yb = detail::gather_columns(y, train_idx, from, to);
      Mlp::Tape tape;
      const Eigen::MatrixXd err = net.forward(xb, tape) - yb;
      sse += err.squaredNorm();
      const double norm = 2.0 / static_cast<double>(err.size());
      opt.step(net, net.backward(tape, norm * err));
      if (config.weight_decay > 0.0) {
        for (auto& l : net.layers) l.weights *= 1.0 - opt.learning_rate() * config.weight_decay;
      }
    }
    const double train_mse = sse / (static_cast<double>(train_idx.size()) * kKeyPointOutputs) * to_mm2;
    if (!std::isfinite(train_mse) || !net.finite()) {
      throw TrainingError("loss became non-finite at epoch " + std::to_string(epoch));
    }
    result.train_loss.push_back(train_mse);
    double monitored = train_mse;
    if (!val_idx.empty()) {
      monitored = (net.forward(xv) - yv).squaredNorm() / static_cast<double>(yv.size()) * to_mm2;
      result.validation_loss.push_back(monitored);
    }
    if (monitored < best_loss) {
      best_loss = monitored;
      best = net;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }

  // Fold the input and target transforms into the two layers.
  DenseLayer& l1 = best.layers[0];
  l1.weights = l1.weights.array().rowwise() / sd.array();
  l1.bias -= l1.weights * mu.transpose();
  DenseLayer& l2 = best.layers[1];
  l2.weights *= tscale;
  l2.bias = l2.bias * tscale + ty.transpose();
  result.params = MlpParams::from_network(best);
  return result;
}

}  // namespace poe
