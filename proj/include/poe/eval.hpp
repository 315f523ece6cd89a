#pragma once

#include <chrono>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "poe/chamfer.hpp"
#include "poe/dataset.hpp"
#include "poe/deepsoro.hpp"
#include "poe/knn.hpp"
#include "poe/mlp.hpp"

namespace poe {

enum class Method { poe_m, poe_knn, position_knn, deepsoro, oracle, oracle_arap };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::poe_m: return "poe-m";
    case Method::poe_knn: return "poe-knn";
    case Method::position_knn: return "position-knn";
    case Method::deepsoro: return "deepsoro";
    case Method::oracle: return "oracle";
    case Method::oracle_arap: return "oracle-arap";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::poe_m, Method::poe_knn, Method::position_knn, Method::deepsoro, Method::oracle,
                   Method::oracle_arap}) {
    if (s == to_string(m)) return m;
  }
  throw ParameterError("unknown method '" + std::string(s) + "'");
}

struct EvalRow {
  int sample_id = 0;
  double ucd_mm = 0.0;
};

/// Wall-clock milliseconds per stage, summed over samples.
struct StageTimes {
  double predict_ms = 0.0;
  double solve_ms = 0.0;
  double metric_ms = 0.0;
};

struct EvalReport {
  std::string method;
  std::vector<EvalRow> rows;
  double avg_mm = 0.0;
  double max_mm = 0.0;
  StageTimes timing;

  std::size_t n() const noexcept { return rows.size(); }

  void finalize() {
    if (rows.empty()) throw InputError("report has no rows");
    double sum = 0.0;
    max_mm = 0.0;
    for (const auto& r : rows) {
      sum += r.ucd_mm;
      max_mm = std::max(max_mm, r.ucd_mm);
    }
    avg_mm = sum / static_cast<double>(rows.size());
  }

  /// Names of violated report invariants; empty when consistent.
  std::vector<std::string> invariant_violations() const {
    std::vector<std::string> bad;
    double sum = 0.0;
    for (const auto& r : rows) {
      if (!std::isfinite(r.ucd_mm) || r.ucd_mm < 0.0) bad.push_back("sample " + std::to_string(r.sample_id) + " has invalid d_UCD");
      if (r.ucd_mm > max_mm) bad.push_back("sample " + std::to_string(r.sample_id) + " exceeds max");
      sum += r.ucd_mm;
    }
    if (rows.empty()) bad.push_back("no rows");
    if (!(max_mm >= avg_mm && avg_mm >= 0.0)) bad.push_back("max >= avg >= 0 violated");
    if (!rows.empty() && std::abs(sum / static_cast<double>(rows.size()) - avg_mm) > 1e-12 * std::max(1.0, avg_mm)) {
      bad.push_back("avg is not the mean of the rows");
    }
    return bad;
  }
};

inline void write_report_csv(std::ostream& out, const std::vector<EvalReport>& reports) {
  out << "sample_id,method,ucd_mm\n";
  out << std::setprecision(17);
  for (const auto& rep : reports) {
    for (const auto& r : rep.rows) out << r.sample_id << ',' << rep.method << ',' << r.ucd_mm << '\n';
  }
}

inline nlohmann::json report_summary(const EvalReport& r) {
  return {{"avg_mm", r.avg_mm}, {"max_mm", r.max_mm}, {"n", r.n()}};
}

/// Artifacts the learned methods need; absent members mean "not trained".
struct ModelBundle {
  std::optional<MlpParams> mlp;
  std::optional<DeepSoroParams> deepsoro;
  std::optional<std::vector<int>> knn_samples;  ///< dataset record indices held by the index
};

inline SolverConfig default_solver_config() { return SolverConfig{}; }

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Training helpers over a dataset

inline Eigen::MatrixXd feature_matrix(const Dataset& d, const std::vector<int>& idx) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(idx.size()), d.feature_dim());
  for (std::size_t i = 0; i < idx.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = d.records[idx[i]].features.transpose();
  return x;
}

inline Eigen::MatrixXd displacement_matrix(const Dataset& d, const std::vector<int>& idx) {
  const KeyPointMatrix rest = d.rest_keypoints();
  Eigen::MatrixXd y(static_cast<Eigen::Index>(idx.size()), kKeyPointOutputs);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    y.row(static_cast<Eigen::Index>(i)) = flatten_keypoints(d.records[idx[i]].keypoints - rest).transpose();
  }
  return y;
}

inline TrainResult train_keypoint_mlp(const Dataset& d, const TrainConfig& config) {
  const auto idx = d.split(false);
  return mlp_train(feature_matrix(d, idx), displacement_matrix(d, idx), config);
}

inline DeepSoroTrainResult train_deepsoro(const Dataset& d, const DeepSoroConfig& config) {
  const auto idx = d.split(false);
  std::vector<Positions> clouds;
  for (int i : idx) clouds.push_back(d.records[i].partial);
  std::mt19937_64 rng(mix_seed(config.seed, 0x7e3f1a7eULL));
  const Positions templ = sample_surface(d.rest, config.points, rng);
  return deepsoro_train(feature_matrix(d, idx), clouds, templ, config);
}

/// 1-NN index over the training split; the stored prediction is the record index.
inline NeighborIndex<int> build_neighbor_index(const Dataset& d, const std::vector<int>& samples, bool use_servo) {
  NeighborIndex<int> index;
  for (int i : samples) {
    const auto& r = d.records.at(static_cast<std::size_t>(i));
    index.add(use_servo ? Eigen::VectorXd(r.servo) : r.features, i);
  }
  return index;
}

/// Predicted absolute key points: rest key points plus regressed displacements.
inline KeyPointSet predict_keypoints(const MlpParams& mlp, const Eigen::VectorXd& features,
                                     const KeyPointLayout& layout, const KeyPointMatrix& rest_keypoints) {
  return {layout, rest_keypoints + mlp_forward(mlp, features)};
}

/// Root mean squared Euclidean key-point error (mm) over `idx`.
inline double keypoint_rmse(const Dataset& d, const MlpParams& mlp, const std::vector<int>& idx) {
  if (idx.empty()) throw InputError("no samples to score");
  const KeyPointMatrix rest = d.rest_keypoints();
  double sse = 0.0;
  for (int i : idx) {
    const auto& r = d.records[i];
    sse += (rest + mlp_forward(mlp, r.features) - r.keypoints).squaredNorm();
  }
  return std::sqrt(sse / (static_cast<double>(idx.size()) * kNumKeyPoints));
}

// ---------------------------------------------------------------------------
// Pipeline and evaluation

/// Features -> key points -> smoothed ARAP fit of the rest mesh.
struct PipelineResult {
  TriMesh mesh;
  KeyPointSet keypoints;
  SolveReport report;
  double predict_ms = 0.0;
  double solve_ms = 0.0;
};

inline PipelineResult run_pipeline(const Eigen::VectorXd& features, const MlpParams& mlp, const ArapSolver& solver,
                                   const KeyPointLayout& layout, const std::vector<int>& mount,
                                   const SolverConfig& config) {
  const KeyPointMatrix rest_kp = KeyPointSet::from_mesh(layout, solver.rest().vertices()).positions;
  auto t0 = detail::Clock::now();
  KeyPointSet kp = predict_keypoints(mlp, features, layout, rest_kp);
  const double predict_ms = detail::ms_since(t0);
  t0 = detail::Clock::now();
  SolveResult s = solver.solve(reconstruction_handles(kp, solver.rest(), mount), config);
  const double solve_ms = detail::ms_since(t0);
  return {std::move(s.mesh), std::move(kp), std::move(s.report), predict_ms, solve_ms};
}

/// d_UCD(ground-truth partial cloud, predicted cloud) for every test sample.
inline EvalReport evaluate_method(Method method, const Dataset& d, const ModelBundle& models,
                                  const SolverConfig& solver_config = {}) {
  const auto test = d.split(true);
  if (test.empty()) throw InputError("dataset has no test samples");
  EvalReport rep;
  rep.method = std::string(to_string(method));

  const bool needs_solver = method == Method::poe_m || method == Method::oracle_arap;
  std::optional<ArapSolver> solver;
  if (needs_solver) solver.emplace(d.rest, solver_config.scheme);
  const auto mount = d.config.geometry.mount_vertices();
  std::optional<NeighborIndex<int>> index;
  if (method == Method::poe_knn || method == Method::position_knn) {
    if (!models.knn_samples) throw StateError("no neighbour index provided for " + rep.method);
    index = build_neighbor_index(d, *models.knn_samples, method == Method::position_knn);
  }
  if (method == Method::poe_m && !models.mlp) throw StateError("no key-point model provided for poe-m");
  if (method == Method::deepsoro && !models.deepsoro) throw StateError("no DeepSoRo model provided");

  for (int i : test) {
    const auto& r = d.records[i];
    Positions predicted;
    switch (method) {
      case Method::poe_m: {
        PipelineResult p = run_pipeline(r.features, *models.mlp, *solver, d.layout, mount, solver_config);
        rep.timing.predict_ms += p.predict_ms;
        rep.timing.solve_ms += p.solve_ms;
        predicted = p.mesh.vertices();
        break;
      }
      case Method::oracle_arap: {
        const auto t0 = detail::Clock::now();
        const KeyPointSet kp{d.layout, r.keypoints};
        predicted = solver->solve(reconstruction_handles(kp, d.rest, mount), solver_config).mesh.vertices();
        rep.timing.solve_ms += detail::ms_since(t0);
        break;
      }
      case Method::poe_knn:
      case Method::position_knn: {
        const auto t0 = detail::Clock::now();
        const int hit = knn_predict(*index, method == Method::position_knn ? Eigen::VectorXd(r.servo) : r.features);
        predicted = d.records[hit].partial;
        rep.timing.predict_ms += detail::ms_since(t0);
        break;
      }
      case Method::deepsoro: {
        const auto t0 = detail::Clock::now();
        predicted = deepsoro_predict(*models.deepsoro, r.features);
        rep.timing.predict_ms += detail::ms_since(t0);
        break;
      }
      case Method::oracle:
        predicted = d.meshes[i].vertices();
        break;
    }
    const auto t0 = detail::Clock::now();
    rep.rows.push_back({r.id, ucd(r.partial, predicted)});
    rep.timing.metric_ms += detail::ms_since(t0);
  }
  rep.finalize();
  return rep;
}

// ---------------------------------------------------------------------------
// Lambda sensitivity

struct LambdaRow {
  double lambda = 0.0;
  double max_mm = 0.0;  ///< largest oracle-vertex to reconstruction distance
  double avg_mm = 0.0;  ///< d_UCD(oracle vertices, reconstruction)
  int iterations = 0;
  bool converged = false;
};

struct BendScenario {
  double bend_deg = 60.0;
  double plane_angle = 0.0;
  PoeGeometry geometry;
  bool clamp_mount = true;
};

/// Geometry used for the lambda study: the 110 mm cone at 40 x 32 resolution.
inline PoeGeometry lambda_study_geometry() {
  PoeGeometry g;
  g.axial_segments = 40;
  g.radial_segments = 32;
  return g;
}

/// Reconstruct a constant-curvature bend from its 7 oracle key points (plus
/// the clamped mount) for each lambda, scored against the oracle mesh.
inline std::vector<LambdaRow> lambda_sweep(const std::vector<double>& lambdas, const BendScenario& scenario,
                                           SolverConfig base = {},
                                           const IterationObserver& observer = {}) {
  const TriMesh rest = scenario.geometry.rest_mesh();
  const KeyPointLayout layout = default_layout(scenario.geometry);
  const double len = axial_length(rest);
  const auto state = BendState::from_angle(scenario.bend_deg * std::numbers::pi / 180.0, scenario.plane_angle, len);
  const auto [oracle, kp] = deform_pcc(rest, state, layout);
  const HandleSet handles = scenario.clamp_mount
                                ? reconstruction_handles(kp, rest, scenario.geometry.mount_vertices())
                                : kp.handles();
  const ArapSolver solver(rest, base.scheme);
  std::vector<LambdaRow> rows;
  for (double lambda : lambdas) {
    SolverConfig cfg = base;
    cfg.lambda = lambda;
    const SolveResult res = solver.solve(handles, cfg, observer);
    const ChamferStats st = chamfer_stats(oracle.vertices(), res.mesh.vertices());
    rows.push_back({lambda, st.max, st.avg, res.report.iterations, res.report.converged});
  }
  return rows;
}

}  // namespace poe
