#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "poe/deepsoro.hpp"
#include "poe/mlp.hpp"

namespace poe {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", v}};
}

inline Eigen::MatrixXd json_matrix(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& v = j.at("values");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(v.size()) != rows * cols) {
    throw ParseError("matrix value count does not match its shape");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[k++].get<double>();
  }
  return m;
}

inline nlohmann::json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd json_vector(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline nlohmann::json network_json(const Mlp& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers) layers.push_back({{"weights", matrix_json(l.weights)}, {"bias", vector_json(l.bias)}});
  return layers;
}

inline Mlp json_network(const nlohmann::json& layers, Activation act) {
  Mlp net;
  net.activation = act;
  for (const auto& l : layers) {
    DenseLayer d{json_matrix(l.at("weights")), json_vector(l.at("bias"))};
    if (d.bias.size() != d.weights.rows()) throw ParseError("bias length does not match layer output width");
    if (!net.layers.empty() && net.layers.back().outputs() != d.inputs()) {
      throw ParseError("consecutive layer shapes do not chain");
    }
    net.layers.push_back(std::move(d));
  }
  if (net.layers.empty()) throw ParseError("model has no layers");
  return net;
}

inline nlohmann::json header(const std::string& kind) {
  return {{"format", "poe-model"}, {"version", kModelFormatVersion}, {"kind", kind}};
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParameterError("cannot write " + path.string());
  out << j.dump() << '\n';
}

}  // namespace detail

/// Parse a model document and check its format tag and version.
inline nlohmann::json read_model_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StateError("missing model file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "poe-model") throw ParseError(path.string() + ": not a model file");
  if (j.value("version", 0) != kModelFormatVersion) {
    throw ParseError(path.string() + ": unsupported model version " + std::to_string(j.value("version", 0)));
  }
  return j;
}

inline std::string model_kind(const std::filesystem::path& path) {
  return read_model_document(path).at("kind").get<std::string>();
}

inline void save_mlp(const MlpParams& params, const std::filesystem::path& path) {
  params.validate();
  nlohmann::json j = detail::header("keypoint-mlp");
  j["activation"] = std::string(to_string(params.activation));
  j["layers"] = detail::network_json(params.network());
  detail::write_json(j, path);
}

inline MlpParams load_mlp(const std::filesystem::path& path) {
  const auto j = read_model_document(path);
  if (j.at("kind") != "keypoint-mlp") throw ParseError(path.string() + ": not a key-point MLP model");
  try {
    return MlpParams::from_network(
        detail::json_network(j.at("layers"), parse_activation(j.at("activation").get<std::string>())));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void save_deepsoro(const DeepSoroParams& p, const std::filesystem::path& path) {
  nlohmann::json j = detail::header("deepsoro");
  j["activation"] = std::string(to_string(p.net.activation));
  j["input_mean"] = detail::vector_json(p.input_mean);
  j["input_scale"] = detail::vector_json(p.input_scale);
  j["center"] = {p.center.x(), p.center.y(), p.center.z()};
  j["scale"] = p.scale;
  j["layers"] = detail::network_json(p.net);
  detail::write_json(j, path);
}

inline DeepSoroParams load_deepsoro(const std::filesystem::path& path) {
  const auto j = read_model_document(path);
  if (j.at("kind") != "deepsoro") throw ParseError(path.string() + ": not a DeepSoRo model");
  try {
    DeepSoroParams p;
    p.net = detail::json_network(j.at("layers"), parse_activation(j.at("activation").get<std::string>()));
    p.input_mean = detail::json_vector(j.at("input_mean"));
    p.input_scale = detail::json_vector(j.at("input_scale"));
    const auto c = j.at("center").get<std::vector<double>>();
    if (c.size() != 3) throw ParseError(path.string() + ": center needs 3 values");
    p.center = Vec3(c[0], c[1], c[2]);
    p.scale = j.at("scale").get<double>();
    if (p.input_mean.size() != p.input_dim() || p.input_scale.size() != p.input_dim() || p.net.output_dim() % 3 != 0) {
      throw ParseError(path.string() + ": inconsistent DeepSoRo shapes");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

/// A neighbour index is stored as the ids of the dataset samples it holds.
inline void save_neighbor_reference(const std::string& kind, const std::vector<int>& sample_ids,
                                    const std::filesystem::path& path) {
  nlohmann::json j = detail::header(kind);
  j["sample_ids"] = sample_ids;
  detail::write_json(j, path);
}

inline std::vector<int> load_neighbor_reference(const std::string& kind, const std::filesystem::path& path) {
  const auto j = read_model_document(path);
  if (j.at("kind") != kind) throw ParseError(path.string() + ": expected a " + kind + " model");
  return j.at("sample_ids").get<std::vector<int>>();
}

}  // namespace poe
