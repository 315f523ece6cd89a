#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "poe/mlp.hpp"
#include "poe/mesh.hpp"

namespace poe {

/// Encoder-decoder regressor from a feature vector straight to a point cloud.
struct DeepSoroConfig {
  int width = 512;
  int latent = 64;
  int points = 512;
  double learning_rate = 1e-3;
  int epochs = 60;
  int batch_size = 16;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  int patience = 15;

  void validate() const {
    if (width < 1 || latent < 1 || points < 1) throw ParameterError("network sizes must be >= 1");
    if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be > 0");
    if (epochs < 1 || batch_size < 1) throw ParameterError("epochs and batch_size must be >= 1");
    if (!(validation_fraction >= 0.0 && validation_fraction <= 0.5)) {
      throw ParameterError("validation_fraction must be in [0, 0.5]");
    }
    if (patience < 0) throw ParameterError("patience must be >= 0");
  }
};

struct DeepSoroParams {
  Mlp net;  ///< D -> width -> width -> latent -> width -> width -> 3 * points
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_scale;
  Vec3 center = Vec3::Zero();  ///< output points = center + scale * raw
  double scale = 1.0;

  int points() const { return net.output_dim() / 3; }
  int input_dim() const { return net.input_dim(); }
};

inline Positions raw_to_points(const DeepSoroParams& p, const Eigen::VectorXd& raw) {
  Positions pts(raw.size() / 3, 3);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) pts.row(i) = (p.center + p.scale * raw.segment<3>(3 * i)).transpose();
  return pts;
}

inline Positions deepsoro_predict(const DeepSoroParams& params, const Eigen::VectorXd& features) {
  if (features.size() != params.input_dim()) {
    throw DimensionError("feature vector has dimension " + std::to_string(features.size()) + ", model expects " +
                         std::to_string(params.input_dim()));
  }
  const Eigen::VectorXd x = (features - params.input_mean).cwiseQuotient(params.input_scale);
  return raw_to_points(params, params.net.forward(x).col(0));
}

/// `count` points drawn uniformly by area from the surface of `mesh`.
inline Positions sample_surface(const TriMesh& mesh, int count, std::mt19937_64& rng) {
  std::vector<double> area(static_cast<std::size_t>(mesh.num_faces()));
  for (int f = 0; f < mesh.num_faces(); ++f) area[f] = mesh.face_area(f);
  std::discrete_distribution<int> pick(area.begin(), area.end());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Positions out(count, 3);
  for (int i = 0; i < count; ++i) {
    const int f = pick(rng);
    double a = u(rng), b = u(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const Vec3 p0 = mesh.vertex(mesh.faces()(f, 0));
    const Vec3 p1 = mesh.vertex(mesh.faces()(f, 1));
    const Vec3 p2 = mesh.vertex(mesh.faces()(f, 2));
    out.row(i) = (p0 + a * (p1 - p0) + b * (p2 - p0)).transpose();
  }
  return out;
}

/// Mean over target points of the squared distance to the nearest predicted
/// point, and its gradient with respect to the predicted points.
inline double chamfer_sq_loss(const Positions& target, const Positions& pred, Positions* grad) {
  if (grad) grad->setZero(pred.rows(), 3);
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(target.rows());
  for (Eigen::Index g = 0; g < target.rows(); ++g) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < pred.rows(); ++j) {
      const double d = (pred.row(j) - target.row(g)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    loss += best_d * inv;
    if (grad) grad->row(best) += 2.0 * inv * (pred.row(best) - target.row(g));
  }
  return loss;
}

struct DeepSoroTrainResult {
  DeepSoroParams params;
  std::vector<double> train_loss;       ///< mean squared nearest distance, mm^2
  std::vector<double> validation_loss;
  int best_epoch = 0;
};

/// features: N x D; clouds: ground-truth partial clouds; templ: initial
/// output cloud (points x 3), typically sampled from the rest surface.
inline DeepSoroTrainResult deepsoro_train(const Eigen::MatrixXd& features, const std::vector<Positions>& clouds,
                                          const Positions& templ, const DeepSoroConfig& config) {
  config.validate();
  const auto n = static_cast<int>(features.rows());
  if (n == 0) throw TrainingError("training set is empty");
  if (n < 2) throw TrainingError("training needs at least 2 samples");
  if (clouds.size() != static_cast<std::size_t>(n)) throw DimensionError("features and clouds differ in sample count");
  if (templ.rows() != config.points) throw DimensionError("template must have `points` rows");
  if (!features.allFinite()) throw TrainingError("training features contain non-finite values");
  for (const auto& c : clouds) {
    if (c.rows() == 0) throw TrainingError("empty ground-truth cloud");
  }

  DeepSoroParams p;
  p.input_mean = features.colwise().mean().transpose();
  p.input_scale = ((features.rowwise() - p.input_mean.transpose()).array().square().colwise().sum() / n).sqrt();
  for (Eigen::Index j = 0; j < p.input_scale.size(); ++j) {
    if (!(p.input_scale(j) > 1e-12)) p.input_scale(j) = 1.0;
  }
  Vec3 sum = Vec3::Zero();
  double count = 0.0;
  for (const auto& c : clouds) {
    sum += c.colwise().sum().transpose();
    count += static_cast<double>(c.rows());
  }
  p.center = sum / count;
  double var = 0.0;
  for (const auto& c : clouds) var += (c.rowwise() - p.center.transpose()).squaredNorm();
  p.scale = std::sqrt(var / (3.0 * count));
  if (!(p.scale > 1e-12)) p.scale = 1.0;

  std::mt19937_64 rng(config.seed);
  auto [train_idx, val_idx] = detail::split_rows(n, config.validation_fraction, rng);
  const int w = config.width;
  p.net = Mlp::random({static_cast<int>(features.cols()), w, w, config.latent, w, w, 3 * config.points},
                      Activation::leaky_relu, rng);
  // Start from the template shape: small output weights, bias = template.
  DenseLayer& out = p.net.layers.back();
  out.weights *= 0.1;
  for (int i = 0; i < config.points; ++i) {
    out.bias.segment<3>(3 * i) = (templ.row(i).transpose() - p.center) / p.scale;
  }

  const Eigen::MatrixXd x =
      ((features.rowwise() - p.input_mean.transpose()).array().rowwise() / p.input_scale.transpose().array())
          .matrix()
          .transpose();
  Adam opt(p.net, config.learning_rate);

  auto evaluate = [&](const std::vector<int>& rows) {
    const Eigen::MatrixXd yv = p.net.forward(detail::gather_columns(x, rows, 0, rows.size()));
    double l = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      l += chamfer_sq_loss(clouds[rows[i]], raw_to_points(p, yv.col(static_cast<Eigen::Index>(i))), nullptr);
    }
    return l / static_cast<double>(rows.size());
  };

  DeepSoroTrainResult result;
  Mlp best = p.net;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double total = 0.0;
    for (std::size_t from = 0; from < train_idx.size(); from += bs) {
      const std::size_t to = std::min(from + bs, train_idx.size());
      Mlp::Tape tape;
      const Eigen::MatrixXd y = p.net.forward(detail::gather_columns(x, train_idx, from, to), tape);
      Eigen::MatrixXd dy(y.rows(), y.cols());
      const double inv_b = 1.0 / static_cast<double>(to - from);
      for (std::size_t i = from; i < to; ++i) {
        const auto c = static_cast<Eigen::Index>(i - from);
        Positions g;
        total += chamfer_sq_loss(clouds[train_idx[i]], raw_to_points(p, y.col(c)), &g);
        for (Eigen::Index k = 0; k < g.rows(); ++k) dy.col(c).segment<3>(3 * k) = inv_b * p.scale * g.row(k).transpose();
      }
      opt.step(p.net, p.net.backward(tape, dy));
    }
    const double train_l = total / static_cast<double>(train_idx.size());
    if (!std::isfinite(train_l) || !p.net.finite()) {
      throw TrainingError("loss became non-finite at epoch " + std::to_string(epoch));
    }
    result.train_loss.push_back(train_l);
    double monitored = train_l;
    if (!val_idx.empty()) {
      monitored = evaluate(val_idx);
      result.validation_loss.push_back(monitored);
    }
    if (monitored < best_loss) {
      best_loss = monitored;
      best = p.net;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  p.net = std::move(best);
  result.params = std::move(p);
  return result;
}

}  // namespace poe
