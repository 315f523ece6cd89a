#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "poe/keypoints.hpp"

namespace poe {

/// Inward push applied to the straight finger before bending.
struct ContactPerturbation {
  double axial_position = 0.0;  ///< mm along the rest axis
  double direction = 0.0;       ///< rad, azimuth of the pushed side
  double depth = 0.0;           ///< mm, peak inward displacement
};

/// Constant-curvature bend plus an optional contact.
struct BendState {
  double curvature = 0.0;    ///< 1/mm
  double plane_angle = 0.0;  ///< rad in [0, 2 pi)
  std::optional<ContactPerturbation> contact;

  static BendState from_angle(double bend_angle, double plane_angle, double length) {
    return {bend_angle / length, plane_angle, std::nullopt};
  }

  void validate(double length) const {
    if (!(curvature >= 0.0) || !std::isfinite(curvature)) throw ParameterError("curvature must be finite and >= 0");
    if (!(curvature * length < std::numbers::pi)) throw ParameterError("over-bend: curvature * length must be < pi");
    if (!std::isfinite(plane_angle)) throw ParameterError("plane angle must be finite");
    if (contact && !(contact->depth >= 0.0)) throw ParameterError("contact depth must be >= 0");
  }
};

/// Axial extent of a rest mesh lying on +z from z = 0.
inline double axial_length(const TriMesh& rest) { return rest.vertices().col(2).maxCoeff(); }

/// Maps rest-frame points by transporting each z = s cross-section rigidly
/// along a circular centreline of curvature kappa in the plane at angle phi.
class ConstantCurvatureMap {
 public:
  ConstantCurvatureMap(double curvature, double plane_angle)
      : kappa_(curvature), dir_(std::cos(plane_angle), std::sin(plane_angle), 0.0) {}

  Vec3 centerline(double s) const {
    if (kappa_ == 0.0) return {0.0, 0.0, s};
    const double t = kappa_ * s;
    const double half = std::sin(0.5 * t);
    return (2.0 * half * half / kappa_) * dir_ + Vec3(0.0, 0.0, std::sin(t) / kappa_);
  }

  Vec3 apply(const Vec3& p) const {
    if (kappa_ == 0.0) return p;
    const Vec3 axis = Vec3::UnitZ().cross(dir_);
    const Eigen::AngleAxisd frame(kappa_ * p.z(), axis);
    return centerline(p.z()) + frame * Vec3(p.x(), p.y(), 0.0);
  }

 private:
  double kappa_;
  Vec3 dir_;
};

/// Bend a straight rest mesh (axis +z) by the state's constant curvature.
/// The contact part of the state is ignored here; see apply_contact.
inline std::pair<TriMesh, KeyPointSet> deform_pcc(const TriMesh& rest, const BendState& state,
                                                   const KeyPointLayout& layout) {
  const double len = axial_length(rest);
  state.validate(len);
  layout.validate(rest.num_vertices());
  if (state.curvature == 0.0) return {rest, KeyPointSet::from_mesh(layout, rest.vertices())};
  const ConstantCurvatureMap map(state.curvature, state.plane_angle);
  Positions out(rest.num_vertices(), 3);
  for (int i = 0; i < rest.num_vertices(); ++i) out.row(i) = map.apply(rest.vertex(i)).transpose();
  TriMesh bent = rest.with_positions(std::move(out));
  KeyPointSet k = KeyPointSet::from_mesh(layout, bent.vertices());
  return {std::move(bent), std::move(k)};
}

struct ContactShape {
  double axial_half_width = 15.0;                   ///< mm
  double angular_half_width = std::numbers::pi / 3;  ///< rad
};

/// Smooth inward bump on a straight rest-frame mesh. Lateral vertices within
/// the axial and angular windows move towards the axis by
/// depth * cos^2 profile in both window coordinates.
inline TriMesh apply_contact(const TriMesh& mesh, const ContactPerturbation& c, const ContactShape& shape = {}) {
  if (!(c.depth >= 0.0) || !std::isfinite(c.depth)) throw ParameterError("contact depth must be finite and >= 0");
  if (!std::isfinite(c.axial_position) || !std::isfinite(c.direction)) {
    throw ParameterError("contact position and direction must be finite");
  }
  if (c.depth == 0.0) return mesh;
  const Positions& v = mesh.vertices();
  // Local radius: largest radial offset among vertices nearest in height.
  double best_dz = std::numeric_limits<double>::infinity();
  double local_r = 0.0;
  for (int i = 0; i < mesh.num_vertices(); ++i) {
    const double dz = std::abs(v(i, 2) - c.axial_position);
    const double r = std::hypot(v(i, 0), v(i, 1));
    if (dz < best_dz - 1e-9) {
      best_dz = dz;
      local_r = r;
    } else if (dz <= best_dz + 1e-9) {
      local_r = std::max(local_r, r);
    }
  }
  if (c.depth >= local_r) throw ParameterError("contact depth exceeds the local radius");

  Positions out = v;
  for (int i = 0; i < mesh.num_vertices(); ++i) {
    const double r = std::hypot(v(i, 0), v(i, 1));
    if (r <= 1e-9) continue;
    const double dz = v(i, 2) - c.axial_position;
    if (std::abs(dz) >= shape.axial_half_width) continue;
    const double da = std::remainder(std::atan2(v(i, 1), v(i, 0)) - c.direction, 2.0 * std::numbers::pi);
    if (std::abs(da) >= shape.angular_half_width) continue;
    const double pz = std::cos(0.5 * std::numbers::pi * dz / shape.axial_half_width);
    const double pa = std::cos(0.5 * std::numbers::pi * da / shape.angular_half_width);
    const double push = c.depth * pz * pz * pa * pa;
    out(i, 0) -= push * v(i, 0) / r;
    out(i, 1) -= push * v(i, 1) / r;
  }
  return mesh.with_positions(std::move(out));
}

/// Contact (if any) followed by the constant-curvature bend.
inline std::pair<TriMesh, KeyPointSet> synthesize_shape(const TriMesh& rest, const BendState& state,
                                                         const KeyPointLayout& layout,
                                                         const ContactShape& shape = {}) {
  if (state.contact) return deform_pcc(apply_contact(rest, *state.contact, shape), state, layout);
  return deform_pcc(rest, state, layout);
}

/// Vertices facing a camera that looks along `view_direction`
/// (outward normal . direction < 0), keeping every `stride`-th one.
inline Positions partial_view(const TriMesh& mesh, const Vec3& view_direction, int stride = 1) {
  const double len = view_direction.norm();
  if (!(len > 1e-12) || !std::isfinite(len)) throw ParameterError("view direction must be a finite non-zero vector");
  if (stride < 1) throw ParameterError("stride must be >= 1");
  const Vec3 d = view_direction / len;
  const Positions n = vertex_normals(mesh);
  std::vector<int> keep;
  int seen = 0;
  for (int i = 0; i < mesh.num_vertices(); ++i) {
    if (n.row(i).dot(d.transpose()) < 0.0) {
      if (seen++ % stride == 0) keep.push_back(i);
    }
  }
  if (keep.empty()) throw InputError("no vertex faces the view direction");
  Positions out(static_cast<Eigen::Index>(keep.size()), 3);
  for (std::size_t k = 0; k < keep.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = mesh.vertices().row(keep[k]);
  return out;
}

}  // namespace poe
