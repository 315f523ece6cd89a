#pragma once

#include <array>
#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "poe/arap.hpp"

namespace poe {

inline constexpr int kNumKeyPoints = 7;

using KeyPointMatrix = Eigen::Matrix<double, kNumKeyPoints, 3>;

/// Parameters of the rest cone and of the marker layout on it.
struct PoeGeometry {
  double length = 110.0;
  double base_radius = 15.0;
  double tip_radius = 4.0;
  int axial_segments = 20;
  int radial_segments = 16;
  /// Axial positions of the two lateral marker rings, as fractions of length.
  double lower_ring = 0.45;
  double upper_ring = 0.75;

  TriMesh rest_mesh() const {
    return generate_cone_mesh(length, base_radius, tip_radius, axial_segments, radial_segments);
  }

  /// Vertices held by the finger mount: the base ring and base-cap centre.
  std::vector<int> mount_vertices() const {
    std::vector<int> v;
    for (int i = 0; i < radial_segments; ++i) v.push_back(i);
    v.push_back(axial_segments * radial_segments);
    return v;
  }
};

/// The fixed marker -> rest-mesh-vertex correspondence.
struct KeyPointLayout {
  std::array<std::string, kNumKeyPoints> labels;
  std::array<int, kNumKeyPoints> vertices{};

  void validate(int num_vertices) const {
    std::set<std::string> l(labels.begin(), labels.end());
    std::set<int> v(vertices.begin(), vertices.end());
    if (l.size() != kNumKeyPoints) throw ParameterError("key-point labels must be distinct");
    if (v.size() != kNumKeyPoints) throw ParameterError("key-point vertices must be distinct");
    for (int i : vertices) {
      if (i < 0 || i >= num_vertices) throw ParameterError("key-point vertex " + std::to_string(i) + " out of range");
    }
  }
};

/// Tip-cap centre plus two rings of three markers; the upper ring is turned
/// by 60 degrees against the lower one.
inline KeyPointLayout default_layout(const PoeGeometry& g) {
  const int rings = g.axial_segments;
  const int per_ring = g.radial_segments;
  auto ring_of = [&](double frac) {
    return std::clamp(static_cast<int>(std::lround(frac * (rings - 1))), 1, rings - 2);
  };
  const int lower = ring_of(g.lower_ring);
  const int upper = ring_of(g.upper_ring);
  KeyPointLayout k;
  k.labels = {"tip", "lower_0", "lower_1", "lower_2", "upper_0", "upper_1", "upper_2"};
  k.vertices[0] = rings * per_ring + 1;
  for (int j = 0; j < 3; ++j) {
    k.vertices[1 + j] = lower * per_ring + static_cast<int>(std::lround(j * per_ring / 3.0)) % per_ring;
    k.vertices[4 + j] = upper * per_ring + static_cast<int>(std::lround((j + 0.5) * per_ring / 3.0)) % per_ring;
  }
  return k;
}

/// Seven labelled marker positions tied to rest-mesh vertices.
struct KeyPointSet {
  KeyPointLayout layout;
  KeyPointMatrix positions = KeyPointMatrix::Zero();

  static KeyPointSet from_mesh(const KeyPointLayout& layout, const Positions& vertices) {
    KeyPointSet k{layout, KeyPointMatrix::Zero()};
    for (int i = 0; i < kNumKeyPoints; ++i) k.positions.row(i) = vertices.row(layout.vertices[i]);
    return k;
  }

  HandleSet handles() const {
    std::vector<Handle> h;
    for (int i = 0; i < kNumKeyPoints; ++i) h.push_back({layout.vertices[i], positions.row(i).transpose()});
    return HandleSet(std::move(h));
  }
};

/// Key-point handles plus the mount vertices pinned at their rest positions.
inline HandleSet reconstruction_handles(const KeyPointSet& kp, const TriMesh& rest, const std::vector<int>& mount) {
  std::vector<Handle> h = kp.handles().handles();
  for (int v : mount) h.push_back({v, rest.vertex(v)});
  return HandleSet(std::move(h));
}

}  // namespace poe
