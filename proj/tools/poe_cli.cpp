// poe_cli: dataset generation, training, reconstruction and evaluation.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "poe/poe.hpp"

namespace fs = std::filesystem;
using namespace poe;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); }

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::ofstream open_out(const fs::path& p) {
  ensure_parent(p);
  std::ofstream out(p);
  if (!out) throw ParameterError("cannot write " + p.string());
  return out;
}

/// "index x y z" per line; '#' starts a comment.
HandleSet read_handles(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw StateError("missing handle file " + path.string());
  std::vector<Handle> h;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream s(line);
    Handle x;
    if (!(s >> x.vertex)) continue;
    if (!(s >> x.target.x() >> x.target.y() >> x.target.z())) throw ParseError("expected 'index x y z'", lineno);
    std::string rest;
    if (s >> rest) throw ParseError("trailing tokens after handle", lineno);
    h.push_back(x);
  }
  return HandleSet(std::move(h));
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw ParameterError("bad number '" + tok + "'");
    } catch (const std::logic_error&) {
      throw ParameterError("bad number '" + tok + "'");
    }
  }
  if (out.empty()) throw ParameterError("empty list");
  return out;
}

/// "bend_deg" or "bend_deg:plane_deg".
BendScenario parse_scenario(const std::string& s, int axial, int radial, bool clamp) {
  BendScenario sc;
  const auto colon = s.find(':');
  const auto v = parse_list(s.substr(0, colon));
  if (v.size() != 1) throw ParameterError("scenario is 'bend_deg[:plane_deg]'");
  sc.bend_deg = v[0];
  if (colon != std::string::npos) sc.plane_angle = parse_list(s.substr(colon + 1)).at(0) * std::numbers::pi / 180.0;
  sc.geometry.axial_segments = axial;
  sc.geometry.radial_segments = radial;
  sc.clamp_mount = clamp;
  return sc;
}

fs::path summary_path(const fs::path& report) {
  fs::path p = report;
  p.replace_extension(".json");
  if (p == report) p += ".summary.json";
  return p;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  int n = 1200;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  double noise = -1.0;
  fs::path out;
};

int cmd_gen(const GenArgs& a) {
  DatasetConfig cfg;
  cfg.test_fraction = a.test_fraction;
  if (a.noise >= 0.0) cfg.acoustic.noise_sigma = a.noise;
  const auto t0 = Clock::now();
  const Dataset d = sample_dataset(a.n, a.seed, cfg);
  save_dataset(d, a.out);
  std::cout << "wrote " << d.records.size() << " samples (" << d.split(false).size() << " train, "
            << d.split(true).size() << " test) to " << a.out.string() << " in " << std::fixed << std::setprecision(1)
            << ms_since(t0) / 1000.0 << " s\n";
  return 0;
}

struct TrainArgs {
  std::string method;
  fs::path data, out;
  std::uint64_t seed = 0;
  int epochs = 0;
};

int cmd_train(const TrainArgs& a) {
  const Method m = parse_method(a.method);
  const Dataset d = load_dataset(a.data);
  ensure_parent(a.out);
  const auto t0 = Clock::now();
  switch (m) {
    case Method::poe_m: {
      TrainConfig cfg;
      cfg.seed = a.seed;
      if (a.epochs > 0) cfg.epochs = a.epochs;
      const TrainResult r = train_keypoint_mlp(d, cfg);
      save_mlp(r.params, a.out);
      std::cout << "key-point MLP: best epoch " << r.best_epoch << ", train RMSE "
                << keypoint_rmse(d, r.params, d.split(false)) << " mm, test RMSE "
                << keypoint_rmse(d, r.params, d.split(true)) << " mm\n";
      break;
    }
    case Method::deepsoro: {
      DeepSoroConfig cfg;
      cfg.seed = a.seed;
      if (a.epochs > 0) cfg.epochs = a.epochs;
      const DeepSoroTrainResult r = train_deepsoro(d, cfg);
      save_deepsoro(r.params, a.out);
      std::cout << "DeepSoRo: best epoch " << r.best_epoch << ", final train loss " << r.train_loss.back()
                << " mm^2\n";
      break;
    }
    case Method::poe_knn:
    case Method::position_knn: {
      std::vector<int> ids;
      for (int i : d.split(false)) ids.push_back(d.records[i].id);
      save_neighbor_reference(std::string(to_string(m)), ids, a.out);
      std::cout << to_string(m) << ": indexed " << ids.size() << " training samples\n";
      break;
    }
    default:
      throw ParameterError(std::string(to_string(m)) + " has nothing to train");
  }
  std::cout << "wrote " << a.out.string() << " in " << std::fixed << std::setprecision(1) << ms_since(t0) / 1000.0
            << " s\n";
  return 0;
}

struct SolveArgs {
  fs::path mesh, handles, out;
  double lambda = 5e-4;
  int max_iters = 100;
  double tol = 1e-6;
};

int cmd_solve(const SolveArgs& a) {
  const TriMesh rest = load_mesh(a.mesh);
  const HandleSet handles = read_handles(a.handles);
  SolverConfig cfg;
  cfg.lambda = a.lambda;
  cfg.max_iterations = a.max_iters;
  cfg.rel_energy_tol = a.tol;
  const auto t0 = Clock::now();
  const SolveResult r = solve(rest, handles, build_cell_structure(rest), cfg);
  const double ms = ms_since(t0);
  ensure_parent(a.out);
  save_mesh(r.mesh, a.out);
  std::cout << (r.report.converged ? "converged" : "not converged") << " after " << r.report.iterations
            << " iterations, energy " << r.report.energies.back() << ", " << std::fixed << std::setprecision(1) << ms
            << " ms\n";
  return 0;
}

struct EvalArgs {
  std::string method;
  fs::path data, model, report;
  bool strict = false;
};

int cmd_eval(const EvalArgs& a) {
  const Method m = parse_method(a.method);
  const Dataset d = load_dataset(a.data);
  ModelBundle models;
  const bool needs_model = m == Method::poe_m || m == Method::deepsoro || m == Method::poe_knn ||
                           m == Method::position_knn;
  if (needs_model) {
    if (a.model.empty()) throw StateError("--model is required for " + a.method);
    if (m == Method::poe_m) models.mlp = load_mlp(a.model);
    if (m == Method::deepsoro) models.deepsoro = load_deepsoro(a.model);
    if (m == Method::poe_knn || m == Method::position_knn) {
      // Stored ids are record ids; map them to record indices.
      std::vector<int> idx;
      for (int id : load_neighbor_reference(a.method, a.model)) {
        const auto it = std::find_if(d.records.begin(), d.records.end(), [id](const auto& r) { return r.id == id; });
        if (it == d.records.end()) throw ParseError("model references sample " + std::to_string(id) + " not in dataset");
        idx.push_back(static_cast<int>(it - d.records.begin()));
      }
      models.knn_samples = idx;
    }
  }
  const EvalReport r = evaluate_method(m, d, models);

  auto csv = open_out(a.report);
  write_report_csv(csv, {r});
  nlohmann::json j = report_summary(r);
  j["method"] = r.method;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) rows.push_back({{"sample_id", row.sample_id}, {"ucd_mm", row.ucd_mm}});
  j["samples"] = rows;
  open_out(summary_path(a.report)) << j.dump(2) << '\n';

  const double n = static_cast<double>(r.n());
  std::cout << r.method << ": n=" << r.n() << " avg " << std::setprecision(4) << r.avg_mm << " mm, max " << r.max_mm
            << " mm\n";
  std::cout << "time per sample: predict " << r.timing.predict_ms / n << " ms, solve " << r.timing.solve_ms / n
            << " ms, metric " << r.timing.metric_ms / n << " ms\n";
  if (a.strict) {
    const auto bad = r.invariant_violations();
    for (const auto& b : bad) std::cerr << "invariant violated: " << b << '\n';
    if (!bad.empty()) return 3;
  }
  return 0;
}

struct SweepArgs {
  std::string lambdas = "0,1e-4,5e-4,1e-3,2e-3,5e-3";
  std::string scenario = "60";
  fs::path report;
  int axial = 40, radial = 32;
  bool free_base = false;
};

int cmd_sweep(const SweepArgs& a) {
  const BendScenario sc = parse_scenario(a.scenario, a.axial, a.radial, !a.free_base);
  const auto rows = lambda_sweep(parse_list(a.lambdas), sc);
  auto out = open_out(a.report);
  out << "lambda,max_mm,avg_mm,iterations,converged\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.lambda << ',' << r.max_mm << ',' << r.avg_mm << ',' << r.iterations << ',' << r.converged << '\n';
  }
  std::cout << std::setw(10) << "lambda" << std::setw(12) << "max_mm" << std::setw(12) << "avg_mm" << std::setw(7)
            << "iters\n";
  for (const auto& r : rows) {
    std::cout << std::setw(10) << r.lambda << std::fixed << std::setprecision(4) << std::setw(12) << r.max_mm
              << std::setw(12) << r.avg_mm << std::setw(6) << r.iterations << std::defaultfloat << '\n';
  }
  return 0;
}

struct BenchArgs {
  int frames = 100;
  std::uint64_t seed = 0;
  fs::path model;
};

struct Timing {
  std::vector<double> ms;
  void print(const std::string& name) {
    std::sort(ms.begin(), ms.end());
    double sum = 0.0;
    for (double v : ms) sum += v;
    const std::size_t p95 = std::min(ms.size() - 1, static_cast<std::size_t>(0.95 * static_cast<double>(ms.size())));
    std::cout << std::left << std::setw(10) << name << std::right << std::fixed << std::setprecision(3)
              << " mean " << std::setw(9) << sum / static_cast<double>(ms.size()) << " ms   p95 " << std::setw(9)
              << ms[p95] << " ms\n";
  }
};

int cmd_bench(const BenchArgs& a) {
  if (a.frames < 2) throw ParameterError("--frames must be >= 2");
  const Dataset d = sample_dataset(a.frames, a.seed);
  const ArapSolver solver(d.rest);
  const auto mount = d.config.geometry.mount_vertices();
  const KeyPointMatrix rest_kp = d.rest_keypoints();

  std::optional<MlpParams> mlp;
  if (!a.model.empty()) mlp = load_mlp(a.model);
  // Without a trained model the network is timed with random weights and the
  // solve runs on the true key points.
  MlpParams timing_net = MlpParams::zeros(d.feature_dim(), 256);
  if (!mlp) {
    std::mt19937_64 rng(a.seed);
    timing_net = MlpParams::from_network(Mlp::random({d.feature_dim(), 256, kKeyPointOutputs}, Activation::relu, rng));
  }

  // Raw audio for the feature stage: tones plus noise on every channel.
  std::mt19937_64 rng(mix_seed(a.seed, 0xa0d10ULL));
  std::normal_distribution<double> noise(0.0, 0.01);
  auto make_clip = [&](std::size_t n) {
    std::array<std::vector<double>, kNumMicrophones> ch;
    for (int c = 0; c < kNumMicrophones; ++c) {
      ch[c].resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        ch[c][i] = 0.3 * std::sin(2 * std::numbers::pi * (500.0 + 300.0 * c) * static_cast<double>(i) / 16000.0) +
                   noise(rng);
      }
    }
    return AudioClip(ch, 16000.0);
  };
  const BackgroundProfile bg = capture_background(make_clip(16000), {});
  const AudioClip clip = make_clip(4000);

  Timing features, network, fit, total;
  double iters = 0.0;
  for (const auto& r : d.records) {
    const auto t0 = Clock::now();
    const FeatureVector f = extract_features(clip, bg, {});
    features.ms.push_back(ms_since(t0));
    auto t1 = Clock::now();
    KeyPointSet kp = predict_keypoints(mlp ? *mlp : timing_net, mlp ? r.features : Eigen::VectorXd(f), d.layout, rest_kp);
    network.ms.push_back(ms_since(t1));
    if (!mlp) kp.positions = r.keypoints;
    t1 = Clock::now();
    const SolveResult s = solver.solve(reconstruction_handles(kp, d.rest, mount), {});
    fit.ms.push_back(ms_since(t1));
    iters += s.report.iterations;
    total.ms.push_back(ms_since(t0));
  }
  std::cout << a.frames << " frames, " << d.rest.num_vertices() << "-vertex mesh, mean "
            << iters / static_cast<double>(a.frames) << " solver iterations\n";
  features.print("features");
  network.print("mlp");
  fit.print("solve");
  total.print("frame");
  return 0;
}

struct FeatureArgs {
  fs::path clip, background, out;
};

int cmd_features(const FeatureArgs& a) {
  const BackgroundProfile bg = capture_background(read_wav(a.background), {});
  const FeatureVector f = extract_features(read_wav(a.clip), bg, {});
  open_out(a.out) << nlohmann::json(std::vector<double>(f.data(), f.data() + f.size())).dump() << '\n';
  std::cout << "wrote " << f.size() << " features to " << a.out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acoustic proprioception pipeline: synthetic data, training, ARAP reconstruction, evaluation"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "generate a synthetic dataset");
  g->add_option("--n", gen.n, "number of samples")->required()->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "random seed")->required();
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--test-fraction", gen.test_fraction, "fraction of samples in the test split")->capture_default_str();
  g->add_option("--noise", gen.noise, "feature noise sigma (default: model default)");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train one method on the training split");
  t->add_option("--method", train.method, "poe-m | deepsoro | poe-knn | position-knn")->required();
  t->add_option("--data", train.data, "dataset directory")->required();
  t->add_option("--out", train.out, "model file")->required();
  t->add_option("--seed", train.seed, "random seed")->required();
  t->add_option("--epochs", train.epochs, "override the epoch budget");

  SolveArgs sol;
  auto* s = app.add_subcommand("solve", "fit a rest mesh to handle targets");
  s->add_option("--mesh", sol.mesh, "rest mesh (.obj or .off)")->required();
  s->add_option("--handles", sol.handles, "handle file, one 'index x y z' per line")->required();
  s->add_option("--lambda", sol.lambda, "rotation smoothing weight")->capture_default_str();
  s->add_option("--max-iters", sol.max_iters, "iteration cap")->capture_default_str();
  s->add_option("--tol", sol.tol, "relative energy decrease for convergence")->capture_default_str();
  s->add_option("--out", sol.out, "output mesh")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score a method on the test split");
  e->add_option("--method", ev.method, "poe-m | poe-knn | position-knn | deepsoro | oracle | oracle-arap")->required();
  e->add_option("--data", ev.data, "dataset directory")->required();
  e->add_option("--model", ev.model, "model file from `train`");
  e->add_option("--report", ev.report, "CSV report; a JSON summary is written next to it")->required();
  e->add_flag("--strict", ev.strict, "exit nonzero if a report invariant fails");

  SweepArgs sw;
  auto* l = app.add_subcommand("sweep-lambda", "reconstruct an analytic bend for several lambdas");
  l->add_option("--lambdas", sw.lambdas, "comma-separated lambda values")->capture_default_str();
  l->add_option("--scenario", sw.scenario, "bend_deg[:plane_deg]")->capture_default_str();
  l->add_option("--report", sw.report, "CSV output")->required();
  l->add_option("--axial", sw.axial, "axial mesh segments")->capture_default_str();
  l->add_option("--radial", sw.radial, "radial mesh segments")->capture_default_str();
  l->add_flag("--free-base", sw.free_base, "do not clamp the base ring");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "time the per-frame pipeline");
  b->add_option("--frames", bench.frames, "number of frames")->capture_default_str();
  b->add_option("--seed", bench.seed, "random seed")->required();
  b->add_option("--model", bench.model, "key-point model (optional)");

  FeatureArgs feat;
  auto* f = app.add_subcommand("features", "extract a feature vector from 6-channel WAV files");
  f->add_option("--clip", feat.clip, "clip to featurise")->required();
  f->add_option("--background", feat.background, "background recording, at least 1 s")->required();
  f->add_option("--out", feat.out, "JSON output")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*g) return cmd_gen(gen);
    if (*t) return cmd_train(train);
    if (*s) return cmd_solve(sol);
    if (*e) return cmd_eval(ev);
    if (*l) return cmd_sweep(sw);
    if (*b) return cmd_bench(bench);
    if (*f) return cmd_features(feat);
  } catch (const StateError& x) {
    std::cerr << "error: " << x.what() << '\n';
    return 4;
  } catch (const std::exception& x) {
    std::cerr << "error: " << x.what() << '\n';
    return 2;
  }
  return 0;
}
