#pragma once

#include <optional>

#include <Eigen/SVD>

#include "poe/mesh.hpp"

namespace poe {

/// Rotation R in SO(3) maximising tr(R^T M), i.e. the rotational polar
/// factor of M. When U V^T would be a reflection, the singular vector of the
/// smallest singular value is negated. Returns nullopt for a zero matrix,
/// where every rotation is optimal.
inline std::optional<Mat3> fit_rotation(const Mat3& m) {
  if (!(m.cwiseAbs().maxCoeff() > 0.0)) return std::nullopt;
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  Positions apply(const Positions& p) const {
    Positions out = p * rotation.transpose();
    out.rowwise() += translation.transpose();
    return out;
  }
};

/// Least-squares rigid transform taking `src` rows onto `dst` rows (Kabsch).
inline RigidTransform fit_rigid_transform(const Positions& src, const Positions& dst) {
  if (src.rows() != dst.rows() || src.rows() == 0) {
    throw DimensionError("fit_rigid_transform: point sets must be non-empty and of equal size");
  }
  const Eigen::RowVector3d cs = src.colwise().mean();
  const Eigen::RowVector3d cd = dst.colwise().mean();
  const Mat3 cov = (dst.rowwise() - cd).transpose() * (src.rowwise() - cs);
  RigidTransform t;
  t.rotation = fit_rotation(cov).value_or(Mat3::Identity());
  t.translation = cd.transpose() - t.rotation * cs.transpose();
  return t;
}

}  // namespace poe
