#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "poe/acoustic_model.hpp"
#include "poe/mesh_io.hpp"

namespace poe {

inline constexpr int kDatasetFormatVersion = 1;

struct DatasetConfig {
  PoeGeometry geometry;
  AcousticModelConfig acoustic;
  ContactShape contact_shape;
  double max_bend = std::numbers::pi / 2;  ///< rad, bend angles drawn uniformly in [0, max_bend]
  double contact_fraction = 0.3;
  double contact_depth_min = 0.5;  ///< mm
  double contact_depth_max = 3.0;  ///< mm
  double contact_axial_min = 0.2;  ///< fraction of length
  double contact_axial_max = 0.9;
  double test_fraction = 0.2;
  Vec3 view_direction{0.0, -1.0, 0.0};
  int partial_stride = 1;

  void validate() const {
    acoustic.validate();
    if (!(max_bend > 0.0 && max_bend < std::numbers::pi)) throw ParameterError("max_bend must be in (0, pi)");
    if (!(contact_fraction >= 0.0 && contact_fraction <= 1.0)) throw ParameterError("contact_fraction must be in [0, 1]");
    if (!(contact_depth_min >= 0.0 && contact_depth_max >= contact_depth_min)) {
      throw ParameterError("contact depth range is invalid");
    }
    if (!(contact_axial_min >= 0.0 && contact_axial_max <= 1.0 && contact_axial_min <= contact_axial_max)) {
      throw ParameterError("contact axial range is invalid");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ParameterError("test_fraction must be in (0, 1)");
    if (partial_stride < 1) throw ParameterError("partial_stride must be >= 1");
  }
};

/// One synthetic observation: state, sensor readings and ground truth.
struct SampleRecord {
  int id = 0;
  bool test = false;
  BendState state;
  Eigen::Vector2d servo = Eigen::Vector2d::Zero();
  FeatureVector features;
  KeyPointMatrix keypoints = KeyPointMatrix::Zero();
  std::string mesh_path;  ///< relative to the dataset directory
  Positions partial;      ///< visible vertices of the deformed mesh, mm
};

struct Dataset {
  DatasetConfig config;
  std::uint64_t seed = 0;
  TriMesh rest;
  KeyPointLayout layout;
  std::vector<SampleRecord> records;
  std::vector<TriMesh> meshes;  ///< ground-truth deformed mesh per record

  KeyPointMatrix rest_keypoints() const { return KeyPointSet::from_mesh(layout, rest.vertices()).positions; }

  std::vector<int> split(bool test) const {
    std::vector<int> idx;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].test == test) idx.push_back(static_cast<int>(i));
    }
    return idx;
  }

  int feature_dim() const { return records.empty() ? 0 : static_cast<int>(records.front().features.size()); }
};

inline std::string mesh_file_name(int id) {
  std::ostringstream s;
  s << "meshes/" << std::setw(6) << std::setfill('0') << id << ".obj";
  return s.str();
}

/// The round(n * test_fraction) ids with the smallest seeded hash form the test split.
inline std::vector<bool> test_partition(int n, std::uint64_t seed, double test_fraction) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids[i] = i;
  const std::uint64_t salt = splitmix64(seed ^ 0x5eedULL);
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
    return mix_seed(salt, static_cast<std::uint64_t>(a)) < mix_seed(salt, static_cast<std::uint64_t>(b));
  });
  const auto nt = static_cast<int>(std::lround(n * test_fraction));
  std::vector<bool> test(static_cast<std::size_t>(n), false);
  for (int k = 0; k < nt; ++k) test[ids[k]] = true;
  return test;
}

/// Draw one admissible state from the sample's own stream.
template <typename Rng>
BendState sample_state(const DatasetConfig& cfg, double length, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BendState s;
  s.curvature = cfg.max_bend * u(rng) / length;
  s.plane_angle = 2.0 * std::numbers::pi * u(rng);
  if (u(rng) < cfg.contact_fraction) {
    ContactPerturbation c;
    c.axial_position = length * (cfg.contact_axial_min + (cfg.contact_axial_max - cfg.contact_axial_min) * u(rng));
    c.direction = 2.0 * std::numbers::pi * u(rng);
    c.depth = cfg.contact_depth_min + (cfg.contact_depth_max - cfg.contact_depth_min) * u(rng);
    s.contact = c;
  }
  return s;
}

/// Generate `n` records. Sample i depends only on (seed, i).
inline Dataset sample_dataset(int n, std::uint64_t seed, const DatasetConfig& config = {}) {
  if (n < 2) throw ParameterError("dataset needs n >= 2");
  config.validate();
  Dataset d;
  d.config = config;
  d.seed = seed;
  d.rest = config.geometry.rest_mesh();
  d.layout = default_layout(config.geometry);
  const double length = axial_length(d.rest);
  const std::vector<bool> test = test_partition(n, seed, config.test_fraction);
  d.records.reserve(static_cast<std::size_t>(n));
  d.meshes.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    SampleRecord r;
    r.id = i;
    r.test = test[i];
    r.state = sample_state(config, length, rng);
    auto [mesh, kp] = synthesize_shape(d.rest, r.state, d.layout, config.contact_shape);
    r.features = forward_acoustic(r.state, config.acoustic, rng);
    r.servo = servo_proxy(r.state, config.acoustic, rng);
    r.keypoints = kp.positions;
    r.mesh_path = mesh_file_name(i);
    r.partial = partial_view(mesh, config.view_direction, config.partial_stride);
    d.records.push_back(std::move(r));
    d.meshes.push_back(std::move(mesh));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Serialization: manifest.json, rest.obj, samples.jsonl, meshes/<id>.obj

namespace detail {

inline nlohmann::json points_json(const Positions& p) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < p.rows(); ++i) a.push_back({p(i, 0), p(i, 1), p(i, 2)});
  return a;
}

inline Positions json_points(const nlohmann::json& a) {
  Positions p(static_cast<Eigen::Index>(a.size()), 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != 3) throw ParseError("point needs 3 coordinates");
    for (int c = 0; c < 3; ++c) p(static_cast<Eigen::Index>(i), c) = a[i][c].get<double>();
  }
  return p;
}

inline nlohmann::json state_json(const BendState& s) {
  nlohmann::json j = {{"curvature", s.curvature}, {"plane_angle", s.plane_angle}, {"contact", nullptr}};
  if (s.contact) {
    j["contact"] = {{"axial_position", s.contact->axial_position},
                    {"direction", s.contact->direction},
                    {"depth", s.contact->depth}};
  }
  return j;
}

inline BendState json_state(const nlohmann::json& j) {
  BendState s;
  s.curvature = j.at("curvature").get<double>();
  s.plane_angle = j.at("plane_angle").get<double>();
  if (!j.at("contact").is_null()) {
    const auto& c = j.at("contact");
    s.contact = ContactPerturbation{c.at("axial_position").get<double>(), c.at("direction").get<double>(),
                                    c.at("depth").get<double>()};
  }
  return s;
}

inline nlohmann::json config_json(const DatasetConfig& c) {
  const auto& g = c.geometry;
  const auto& a = c.acoustic;
  return {
      {"geometry",
       {{"length", g.length},
        {"base_radius", g.base_radius},
        {"tip_radius", g.tip_radius},
        {"axial_segments", g.axial_segments},
        {"radial_segments", g.radial_segments},
        {"lower_ring", g.lower_ring},
        {"upper_ring", g.upper_ring}}},
      {"acoustic",
       {{"segment_length", a.spectrum.segment_length},
        {"hop", a.spectrum.hop},
        {"tukey_alpha", a.spectrum.tukey_alpha},
        {"length", a.length},
        {"max_bend", a.max_bend},
        {"kernel_width", a.kernel_width},
        {"contact_gain", a.contact_gain},
        {"contact_depth_ref", a.contact_depth_ref},
        {"contact_axial_width", a.contact_axial_width},
        {"contact_angular_focus", a.contact_angular_focus},
        {"mic_distance", a.mic_distance},
        {"gain_decay", a.gain_decay},
        {"noise_sigma", a.noise_sigma},
        {"servo_hysteresis", a.servo_hysteresis},
        {"servo_noise", a.servo_noise}}},
      {"contact_shape",
       {{"axial_half_width", c.contact_shape.axial_half_width},
        {"angular_half_width", c.contact_shape.angular_half_width}}},
      {"max_bend", c.max_bend},
      {"contact_fraction", c.contact_fraction},
      {"contact_depth", {c.contact_depth_min, c.contact_depth_max}},
      {"contact_axial", {c.contact_axial_min, c.contact_axial_max}},
      {"test_fraction", c.test_fraction},
      {"view_direction", {c.view_direction.x(), c.view_direction.y(), c.view_direction.z()}},
      {"partial_stride", c.partial_stride},
  };
}

inline DatasetConfig json_config(const nlohmann::json& j) {
  DatasetConfig c;
  const auto& g = j.at("geometry");
  c.geometry.length = g.at("length");
  c.geometry.base_radius = g.at("base_radius");
  c.geometry.tip_radius = g.at("tip_radius");
  c.geometry.axial_segments = g.at("axial_segments");
  c.geometry.radial_segments = g.at("radial_segments");
  c.geometry.lower_ring = g.at("lower_ring");
  c.geometry.upper_ring = g.at("upper_ring");
  const auto& a = j.at("acoustic");
  c.acoustic.spectrum.segment_length = a.at("segment_length");
  c.acoustic.spectrum.hop = a.at("hop");
  c.acoustic.spectrum.tukey_alpha = a.at("tukey_alpha");
  c.acoustic.length = a.at("length");
  c.acoustic.max_bend = a.at("max_bend");
  c.acoustic.kernel_width = a.at("kernel_width");
  c.acoustic.contact_gain = a.at("contact_gain");
  c.acoustic.contact_depth_ref = a.at("contact_depth_ref");
  c.acoustic.contact_axial_width = a.at("contact_axial_width");
  c.acoustic.contact_angular_focus = a.at("contact_angular_focus");
  c.acoustic.mic_distance = a.at("mic_distance").get<std::array<double, kNumMicrophones>>();
  c.acoustic.gain_decay = a.at("gain_decay");
  c.acoustic.noise_sigma = a.at("noise_sigma");
  c.acoustic.servo_hysteresis = a.at("servo_hysteresis");
  c.acoustic.servo_noise = a.at("servo_noise");
  c.contact_shape.axial_half_width = j.at("contact_shape").at("axial_half_width");
  c.contact_shape.angular_half_width = j.at("contact_shape").at("angular_half_width");
  c.max_bend = j.at("max_bend");
  c.contact_fraction = j.at("contact_fraction");
  c.contact_depth_min = j.at("contact_depth").at(0);
  c.contact_depth_max = j.at("contact_depth").at(1);
  c.contact_axial_min = j.at("contact_axial").at(0);
  c.contact_axial_max = j.at("contact_axial").at(1);
  c.test_fraction = j.at("test_fraction");
  const auto v = j.at("view_direction").get<std::vector<double>>();
  if (v.size() != 3) throw ParseError("view_direction needs 3 values");
  c.view_direction = Vec3(v[0], v[1], v[2]);
  c.partial_stride = j.at("partial_stride");
  return c;
}

inline nlohmann::json record_json(const SampleRecord& r) {
  nlohmann::json kp = nlohmann::json::array();
  for (int i = 0; i < kNumKeyPoints; ++i) kp.push_back({r.keypoints(i, 0), r.keypoints(i, 1), r.keypoints(i, 2)});
  return {{"id", r.id},
          {"split", r.test ? "test" : "train"},
          {"state", state_json(r.state)},
          {"servo", {r.servo.x(), r.servo.y()}},
          {"features", std::vector<double>(r.features.data(), r.features.data() + r.features.size())},
          {"keypoints", kp},
          {"mesh", r.mesh_path},
          {"partial", points_json(r.partial)}};
}

inline SampleRecord json_record(const nlohmann::json& j) {
  SampleRecord r;
  r.id = j.at("id");
  const std::string split = j.at("split");
  if (split != "train" && split != "test") throw ParseError("split must be 'train' or 'test'");
  r.test = split == "test";
  r.state = json_state(j.at("state"));
  const auto servo = j.at("servo").get<std::vector<double>>();
  if (servo.size() != 2) throw ParseError("servo needs 2 values");
  r.servo = Eigen::Vector2d(servo[0], servo[1]);
  const auto f = j.at("features").get<std::vector<double>>();
  r.features = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
  const Positions kp = json_points(j.at("keypoints"));
  if (kp.rows() != kNumKeyPoints) throw ParseError("record needs 7 key points");
  r.keypoints = kp;
  r.mesh_path = j.at("mesh");
  r.partial = json_points(j.at("partial"));
  if (r.partial.rows() == 0) throw ParseError("record has an empty partial cloud");
  return r;
}

}  // namespace detail

inline void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "meshes");
  nlohmann::json manifest = {{"format", "poe-dataset"},
                             {"version", kDatasetFormatVersion},
                             {"seed", d.seed},
                             {"n", d.records.size()},
                             {"feature_dim", d.feature_dim()},
                             {"keypoint_labels", d.layout.labels},
                             {"keypoint_vertices", d.layout.vertices},
                             {"rest_mesh", "rest.obj"},
                             {"samples", "samples.jsonl"},
                             {"config", detail::config_json(d.config)}};
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw ParameterError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
  }
  save_mesh(d.rest, dir / "rest.obj");
  std::ofstream out(dir / "samples.jsonl");
  if (!out) throw ParameterError("cannot write " + (dir / "samples.jsonl").string());
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    out << detail::record_json(d.records[i]).dump() << '\n';
    save_mesh(d.meshes[i], dir / d.records[i].mesh_path);
  }
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw StateError("missing dataset manifest in " + dir.string());
  Dataset d;
  try {
    const auto m = nlohmann::json::parse(mf);
    if (m.value("format", "") != "poe-dataset" || m.value("version", 0) != kDatasetFormatVersion) {
      throw ParseError(dir.string() + ": unsupported dataset format");
    }
    d.seed = m.at("seed").get<std::uint64_t>();
    d.config = detail::json_config(m.at("config"));
    d.layout.labels = m.at("keypoint_labels").get<std::array<std::string, kNumKeyPoints>>();
    d.layout.vertices = m.at("keypoint_vertices").get<std::array<int, kNumKeyPoints>>();
    d.rest = load_mesh(dir / m.at("rest_mesh").get<std::string>());
    d.layout.validate(d.rest.num_vertices());
    std::ifstream in(dir / m.at("samples").get<std::string>());
    if (!in) throw StateError("missing samples file in " + dir.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        d.records.push_back(detail::json_record(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("samples.jsonl: ") + e.what(), lineno);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(dir.string() + "/manifest.json: " + e.what());
  }
  for (const auto& r : d.records) {
    TriMesh mesh = load_mesh(dir / r.mesh_path);
    if (mesh.num_vertices() != d.rest.num_vertices()) throw ParseError(r.mesh_path + ": vertex count differs from rest");
    d.meshes.push_back(std::move(mesh));
  }
  return d;
}

}  // namespace poe
