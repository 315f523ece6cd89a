#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "poe/errors.hpp"

namespace poe {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
/// N x 3 array of positions in mm, one point per row.
using Positions = Eigen::MatrixX3d;
using Faces = Eigen::MatrixX3i;

inline constexpr double kMinFaceArea = 1e-12;

/// Indexed triangle surface mesh. Construction checks the manifold
/// invariants; a constructed mesh is immutable.
class TriMesh {
 public:
  TriMesh() = default;

  TriMesh(Positions vertices, Faces faces) : vertices_(std::move(vertices)), faces_(std::move(faces)) {
    check_topology();
    check_geometry();
  }

  const Positions& vertices() const noexcept { return vertices_; }
  const Faces& faces() const noexcept { return faces_; }
  int num_vertices() const noexcept { return static_cast<int>(vertices_.rows()); }
  int num_faces() const noexcept { return static_cast<int>(faces_.rows()); }

  Vec3 vertex(int i) const { return vertices_.row(i).transpose(); }

  /// Same connectivity, new positions.
  TriMesh with_positions(Positions positions) const {
    if (positions.rows() != vertices_.rows()) {
      throw DimensionError("with_positions: expected " + std::to_string(vertices_.rows()) +
                           " rows, got " + std::to_string(positions.rows()));
    }
    TriMesh out;
    out.vertices_ = std::move(positions);
    out.faces_ = faces_;
    out.check_geometry();
    return out;
  }

  double face_area(int f) const {
    const Vec3 a = vertex(faces_(f, 0));
    const Vec3 b = vertex(faces_(f, 1));
    const Vec3 c = vertex(faces_(f, 2));
    return 0.5 * (b - a).cross(c - a).norm();
  }

  /// Unique undirected edges as (min, max) pairs, sorted.
  std::vector<std::pair<int, int>> edges() const {
    std::set<std::pair<int, int>> unique;
    for (int f = 0; f < num_faces(); ++f) {
      for (int c = 0; c < 3; ++c) {
        const int a = faces_(f, c);
        const int b = faces_(f, (c + 1) % 3);
        unique.emplace(std::min(a, b), std::max(a, b));
      }
    }
    return {unique.begin(), unique.end()};
  }

 private:
  void check_topology() const {
    const int n = num_vertices();
    std::set<std::array<int, 3>> seen_faces;
    std::map<std::pair<int, int>, int> edge_use;
    for (int f = 0; f < num_faces(); ++f) {
      std::array<int, 3> tri{faces_(f, 0), faces_(f, 1), faces_(f, 2)};
      for (int idx : tri) {
        if (idx < 0 || idx >= n) {
          throw TopologyError("face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                              " outside [0, " + std::to_string(n) + ")");
        }
      }
      if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
        throw TopologyError("face " + std::to_string(f) + " repeats a vertex index");
      }
      // Canonical cyclic rotation: smallest index first.
      const auto min_it = std::min_element(tri.begin(), tri.end());
      std::rotate(tri.begin(), min_it, tri.end());
      if (!seen_faces.insert(tri).second) {
        throw TopologyError("face " + std::to_string(f) + " duplicates an earlier face");
      }
      for (int c = 0; c < 3; ++c) {
        const int a = tri[c];
        const int b = tri[(c + 1) % 3];
        if (++edge_use[{std::min(a, b), std::max(a, b)}] > 2) {
          throw TopologyError("edge (" + std::to_string(std::min(a, b)) + ", " + std::to_string(std::max(a, b)) +
                              ") is shared by more than two faces");
        }
      }
    }
  }

  void check_geometry() const {
    if (!vertices_.allFinite()) throw ParameterError("mesh has non-finite vertex coordinates");
    for (int f = 0; f < num_faces(); ++f) {
      if (face_area(f) < kMinFaceArea) {
        throw TopologyError("face " + std::to_string(f) + " is degenerate (area below 1e-12 mm^2)");
      }
    }
  }

  Positions vertices_;
  Faces faces_;
};

/// Watertight capped truncated cone with its axis on +z, base ring at z = 0.
///
/// Vertex layout: ring j (0 = base) vertex i is `j * radial_segments + i`,
/// followed by the base cap centre and then the tip cap centre.
inline TriMesh generate_cone_mesh(double length, double base_radius, double tip_radius, int axial_segments,
                                  int radial_segments) {
  if (!(length > 0.0) || !(tip_radius > 0.0) || !(base_radius >= tip_radius)) {
    throw ParameterError("cone needs length > 0 and base_radius >= tip_radius > 0");
  }
  if (axial_segments < 2 || radial_segments < 3) {
    throw ParameterError("cone needs axial_segments >= 2 and radial_segments >= 3");
  }
  const int rings = axial_segments;
  const int per_ring = radial_segments;
  Positions v(rings * per_ring + 2, 3);
  for (int j = 0; j < rings; ++j) {
    const double t = static_cast<double>(j) / (rings - 1);
    const double z = length * t;
    const double r = base_radius + (tip_radius - base_radius) * t;
    for (int i = 0; i < per_ring; ++i) {
      const double a = 2.0 * std::numbers::pi * i / per_ring;
      v.row(j * per_ring + i) << r * std::cos(a), r * std::sin(a), z;
    }
  }
  const int base_center = rings * per_ring;
  const int tip_center = base_center + 1;
  v.row(base_center) << 0.0, 0.0, 0.0;
  v.row(tip_center) << 0.0, 0.0, length;

  Faces f(2 * per_ring * rings, 3);
  int k = 0;
  auto idx = [per_ring](int ring, int i) { return ring * per_ring + (i % per_ring); };
  for (int j = 0; j + 1 < rings; ++j) {
    for (int i = 0; i < per_ring; ++i) {
      const int v00 = idx(j, i), v01 = idx(j, i + 1), v10 = idx(j + 1, i), v11 = idx(j + 1, i + 1);
      f.row(k++) << v00, v01, v11;
      f.row(k++) << v00, v11, v10;
    }
  }
  for (int i = 0; i < per_ring; ++i) {
    f.row(k++) << base_center, idx(0, i + 1), idx(0, i);
    f.row(k++) << tip_center, idx(rings - 1, i), idx(rings - 1, i + 1);
  }
  return TriMesh(std::move(v), std::move(f));
}

/// Signed volume enclosed by a closed, outward-oriented mesh (mm^3).
inline double signed_volume(const TriMesh& mesh) {
  double vol = 0.0;
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const Vec3 a = mesh.vertex(mesh.faces()(f, 0));
    const Vec3 b = mesh.vertex(mesh.faces()(f, 1));
    const Vec3 c = mesh.vertex(mesh.faces()(f, 2));
    vol += a.dot(b.cross(c));
  }
  return vol / 6.0;
}

/// Area-weighted vertex normals, unit length (zero for isolated vertices).
inline Positions vertex_normals(const TriMesh& mesh) {
  Positions n = Positions::Zero(mesh.num_vertices(), 3);
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const Vec3 a = mesh.vertex(mesh.faces()(f, 0));
    const Vec3 b = mesh.vertex(mesh.faces()(f, 1));
    const Vec3 c = mesh.vertex(mesh.faces()(f, 2));
    const Vec3 fn = (b - a).cross(c - a);
    for (int k = 0; k < 3; ++k) n.row(mesh.faces()(f, k)) += fn.transpose();
  }
  for (int i = 0; i < n.rows(); ++i) {
    const double len = n.row(i).norm();
    if (len > 0.0) n.row(i) /= len;
  }
  return n;
}

}  // namespace poe
