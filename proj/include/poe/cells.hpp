#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "poe/mesh.hpp"

namespace poe {

enum class WeightScheme { cotangent, uniform };

inline std::string_view to_string(WeightScheme s) { return s == WeightScheme::cotangent ? "cotangent" : "uniform"; }

inline WeightScheme parse_weight_scheme(std::string_view s) {
  if (s == "cotangent") return WeightScheme::cotangent;
  if (s == "uniform") return WeightScheme::uniform;
  throw ParameterError("unknown weight scheme '" + std::string(s) + "'");
}

/// One ARAP cell per vertex: the vertex's one-ring of spoke edges.
///
/// `neighbors[k]` is sorted and doubles as N(k), the cells sharing an edge
/// with cell k. `weights[k][n]` is the (clamped) weight of edge
/// (k, neighbors[k][n]); edge weights are symmetric so the same value serves
/// as the rotation-coupling weight w_kl.
struct CellStructure {
  WeightScheme scheme = WeightScheme::cotangent;
  std::vector<std::vector<int>> neighbors;
  std::vector<std::vector<double>> weights;
  std::vector<double> cell_area;  ///< sum of incident face areas (mm^2)
  double area_scale = 0.0;        ///< total surface area of the rest mesh (mm^2)

  int num_cells() const noexcept { return static_cast<int>(neighbors.size()); }

  /// Weight of edge (k, l); 0 when the vertices are not adjacent.
  double weight(int k, int l) const {
    const auto& nb = neighbors[k];
    const auto it = std::lower_bound(nb.begin(), nb.end(), l);
    if (it == nb.end() || *it != l) return 0.0;
    return weights[k][static_cast<std::size_t>(it - nb.begin())];
  }
};

/// Raw (unclamped) cotangent weight of every edge: half the sum of the
/// cotangents of the angles opposite the edge.
inline std::map<std::pair<int, int>, double> raw_cotangent_weights(const TriMesh& mesh) {
  std::map<std::pair<int, int>, double> w;
  for (int f = 0; f < mesh.num_faces(); ++f) {
    for (int c = 0; c < 3; ++c) {
      const int i = mesh.faces()(f, c);
      const int j = mesh.faces()(f, (c + 1) % 3);
      const int o = mesh.faces()(f, (c + 2) % 3);
      const Vec3 u = mesh.vertex(i) - mesh.vertex(o);
      const Vec3 v = mesh.vertex(j) - mesh.vertex(o);
      const double cot = u.dot(v) / u.cross(v).norm();
      w[{std::min(i, j), std::max(i, j)}] += 0.5 * cot;
    }
  }
  return w;
}

inline CellStructure build_cell_structure(const TriMesh& mesh, WeightScheme scheme = WeightScheme::cotangent) {
  const int n = mesh.num_vertices();
  CellStructure cs;
  cs.scheme = scheme;
  cs.neighbors.assign(n, {});
  cs.weights.assign(n, {});
  cs.cell_area.assign(n, 0.0);

  std::map<std::pair<int, int>, double> edge_w;
  if (scheme == WeightScheme::cotangent) {
    edge_w = raw_cotangent_weights(mesh);
    for (auto& [e, w] : edge_w) w = std::max(w, 0.0);
  } else {
    for (const auto& e : mesh.edges()) edge_w[e] = 1.0;
  }

  for (const auto& [e, w] : edge_w) {
    cs.neighbors[e.first].push_back(e.second);
    cs.neighbors[e.second].push_back(e.first);
  }
  for (int k = 0; k < n; ++k) {
    auto& nb = cs.neighbors[k];
    std::sort(nb.begin(), nb.end());
    cs.weights[k].reserve(nb.size());
    for (int l : nb) cs.weights[k].push_back(edge_w.at({std::min(k, l), std::max(k, l)}));
  }

  // A_hat is the rest surface area: the data term and the rotation-coupling
  // term then both scale with area, independent of mesh resolution.
  double total = 0.0;
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const double a = mesh.face_area(f);
    total += a;
    for (int c = 0; c < 3; ++c) cs.cell_area[mesh.faces()(f, c)] += a;
  }
  cs.area_scale = total;
  return cs;
}

}  // namespace poe
