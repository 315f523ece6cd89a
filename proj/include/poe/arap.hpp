#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "poe/cells.hpp"
#include "poe/rotation.hpp"

namespace poe {

/// One rotation per cell.
using RotationField = std::vector<Mat3>;

struct Handle {
  int vertex = 0;
  Vec3 target = Vec3::Zero();
};

/// Hard positional constraints: distinct vertex indices with target positions.
class HandleSet {
 public:
  HandleSet() = default;
  explicit HandleSet(std::vector<Handle> handles) : handles_(std::move(handles)) {
    std::vector<int> idx = indices();
    if (std::adjacent_find(idx.begin(), idx.end()) != idx.end()) {
      throw ParameterError("handle set contains a repeated vertex index");
    }
  }

  const std::vector<Handle>& handles() const noexcept { return handles_; }
  std::size_t size() const noexcept { return handles_.size(); }

  /// Sorted vertex indices.
  std::vector<int> indices() const {
    std::vector<int> idx;
    idx.reserve(handles_.size());
    for (const auto& h : handles_) idx.push_back(h.vertex);
    std::sort(idx.begin(), idx.end());
    return idx;
  }

  void validate(int num_vertices) const {
    if (handles_.empty()) throw ParameterError("at least one handle is required");
    if (static_cast<int>(handles_.size()) >= num_vertices) {
      throw ParameterError("handles must constrain strictly fewer vertices than the mesh has");
    }
    for (const auto& h : handles_) {
      if (h.vertex < 0 || h.vertex >= num_vertices) {
        throw ParameterError("handle vertex " + std::to_string(h.vertex) + " out of range");
      }
      if (!h.target.allFinite()) throw ParameterError("handle target is not finite");
    }
  }

 private:
  std::vector<Handle> handles_;
};

struct SolverConfig {
  double lambda = 5e-4;
  int max_iterations = 100;
  double rel_energy_tol = 1e-6;
  WeightScheme scheme = WeightScheme::cotangent;

  void validate() const {
    if (!(lambda >= 0.0)) throw ParameterError("lambda must be >= 0");
    if (max_iterations < 1) throw ParameterError("max_iterations must be >= 1");
    if (!(rel_energy_tol > 0.0)) throw ParameterError("rel_energy_tol must be > 0");
  }
};

/// `energies[0]` is the energy of the initial state; entry i > 0 is the
/// energy after iteration i.
struct SolveReport {
  int iterations = 0;
  std::vector<double> energies;
  bool converged = false;
};

namespace detail {

inline void check_sizes(const TriMesh& rest, const Positions& deformed, const RotationField* rotations,
                        const CellStructure& cells) {
  const auto n = static_cast<std::size_t>(rest.num_vertices());
  if (static_cast<std::size_t>(deformed.rows()) != n) {
    throw DimensionError("deformed positions have " + std::to_string(deformed.rows()) + " rows, rest mesh has " +
                         std::to_string(n) + " vertices");
  }
  if (static_cast<std::size_t>(cells.num_cells()) != n) {
    throw DimensionError("cell structure does not match the rest mesh");
  }
  if (rotations && rotations->size() != n) {
    throw DimensionError("rotation field has " + std::to_string(rotations->size()) + " entries, expected " +
                         std::to_string(n));
  }
}

inline Vec3 row(const Positions& p, int i) { return p.row(i).transpose(); }

}  // namespace detail

/// Sum over cells of c_ij * |e'_ij - R_k e_ij|^2 (mm^2).
inline double arap_energy(const TriMesh& rest, const Positions& deformed, const RotationField& rotations,
                          const CellStructure& cells) {
  detail::check_sizes(rest, deformed, &rotations, cells);
  const Positions& p = rest.vertices();
  double e = 0.0;
  for (int k = 0; k < cells.num_cells(); ++k) {
    const auto& nb = cells.neighbors[k];
    for (std::size_t n = 0; n < nb.size(); ++n) {
      const int j = nb[n];
      const Vec3 r = (detail::row(deformed, k) - detail::row(deformed, j)) -
                     rotations[k] * (detail::row(p, k) - detail::row(p, j));
      e += cells.weights[k][n] * r.squaredNorm();
    }
  }
  return e;
}

/// lambda * A_hat * sum_k sum_{l in N(k)} w_kl |R_k - R_l|_F^2.
inline double smoothing_energy(const RotationField& rotations, const CellStructure& cells, double lambda) {
  if (rotations.size() != static_cast<std::size_t>(cells.num_cells())) {
    throw DimensionError("rotation field does not match the cell structure");
  }
  double s = 0.0;
  for (int k = 0; k < cells.num_cells(); ++k) {
    const auto& nb = cells.neighbors[k];
    for (std::size_t n = 0; n < nb.size(); ++n) {
      s += cells.weights[k][n] * (rotations[k] - rotations[nb[n]]).squaredNorm();
    }
  }
  return lambda * cells.area_scale * s;
}

inline double smoothed_energy(const TriMesh& rest, const Positions& deformed, const RotationField& rotations,
                              const CellStructure& cells, double lambda) {
  if (!(lambda >= 0.0)) throw ParameterError("lambda must be >= 0");
  return arap_energy(rest, deformed, rotations, cells) + smoothing_energy(rotations, cells, lambda);
}

/// Gradient of arap_energy with respect to the deformed positions.
inline Positions arap_gradient(const TriMesh& rest, const Positions& deformed, const RotationField& rotations,
                               const CellStructure& cells) {
  detail::check_sizes(rest, deformed, &rotations, cells);
  const Positions& p = rest.vertices();
  Positions g = Positions::Zero(deformed.rows(), 3);
  for (int k = 0; k < cells.num_cells(); ++k) {
    const auto& nb = cells.neighbors[k];
    for (std::size_t n = 0; n < nb.size(); ++n) {
      const int j = nb[n];
      const Vec3 r = (detail::row(deformed, k) - detail::row(deformed, j)) -
                     rotations[k] * (detail::row(p, k) - detail::row(p, j));
      const Eigen::RowVector3d d = 2.0 * cells.weights[k][n] * r.transpose();
      g.row(k) += d;
      g.row(j) -= d;
    }
  }
  return g;
}

/// Per-cell rotation update with positions fixed.
///
/// Cells are visited in index order and each one is set to the exact
/// minimiser of the smoothed energy given the current rotations of its
/// neighbours (already-updated ones included), so the energy never increases.
/// A zero covariance keeps the incoming rotation.
inline RotationField local_step(const TriMesh& rest, const Positions& deformed, const CellStructure& cells,
                                double lambda, const RotationField& rotations_in) {
  detail::check_sizes(rest, deformed, &rotations_in, cells);
  if (!(lambda >= 0.0)) throw ParameterError("lambda must be >= 0");
  const Positions& p = rest.vertices();
  const double coupling = 2.0 * lambda * cells.area_scale;
  RotationField out = rotations_in;
  for (int k = 0; k < cells.num_cells(); ++k) {
    const auto& nb = cells.neighbors[k];
    Mat3 m = Mat3::Zero();
    for (std::size_t n = 0; n < nb.size(); ++n) {
      const int j = nb[n];
      m += cells.weights[k][n] * (detail::row(deformed, k) - detail::row(deformed, j)) *
           (detail::row(p, k) - detail::row(p, j)).transpose();
    }
    if (coupling > 0.0) {
      for (std::size_t n = 0; n < nb.size(); ++n) m += coupling * cells.weights[k][n] * out[nb[n]];
    }
    if (auto r = fit_rotation(m)) out[k] = *r;
  }
  return out;
}

/// Factored free-vertex Laplacian for one (rest mesh, handle index set)
/// pair. Immutable after construction.
class GlobalSystem {
 public:
  GlobalSystem(const CellStructure& cells, std::vector<int> handle_vertices)
      : handle_vertices_(std::move(handle_vertices)) {
    std::sort(handle_vertices_.begin(), handle_vertices_.end());
    const int n = cells.num_cells();
    free_index_.assign(n, -1);
    std::vector<bool> is_handle(n, false);
    for (int h : handle_vertices_) {
      if (h < 0 || h >= n) throw ParameterError("handle vertex " + std::to_string(h) + " out of range");
      is_handle[h] = true;
    }
    for (int v = 0; v < n; ++v) {
      if (!is_handle[v]) {
        free_index_[v] = static_cast<int>(free_vertices_.size());
        free_vertices_.push_back(v);
      }
    }

    std::vector<Eigen::Triplet<double>> trips;
    for (int v : free_vertices_) {
      const int r = free_index_[v];
      double diag = 0.0;
      const auto& nb = cells.neighbors[v];
      for (std::size_t k = 0; k < nb.size(); ++k) {
        const double w = cells.weights[v][k];
        diag += w;
        if (free_index_[nb[k]] >= 0 && w != 0.0) trips.emplace_back(r, free_index_[nb[k]], -w);
      }
      if (!(diag > 0.0)) {
        throw SolverError("free vertex " + std::to_string(v) + " has no positive-weight edges; system is singular");
      }
      trips.emplace_back(r, r, diag);
    }
    const auto nf = static_cast<Eigen::Index>(free_vertices_.size());
    Eigen::SparseMatrix<double> lap(nf, nf);
    lap.setFromTriplets(trips.begin(), trips.end());
    ldlt_.compute(lap);
    if (ldlt_.info() != Eigen::Success || !(ldlt_.vectorD().minCoeff() > 0.0)) {
      throw SolverError("free-vertex Laplacian is not positive definite (a free region has no handle)");
    }
  }

  const std::vector<int>& handle_vertices() const noexcept { return handle_vertices_; }

  /// Positions minimising the ARAP data term for fixed rotations.
  Positions solve(const TriMesh& rest, const CellStructure& cells, const RotationField& rotations,
                  const HandleSet& handles) const {
    if (handles.indices() != handle_vertices_) {
      throw ParameterError("handle index set does not match the factored system");
    }
    const int n = rest.num_vertices();
    if (cells.num_cells() != n || static_cast<int>(rotations.size()) != n ||
        static_cast<int>(free_index_.size()) != n) {
      throw DimensionError("global step inputs disagree in vertex count");
    }
    Positions out(n, 3);
    for (const auto& h : handles.handles()) out.row(h.vertex) = h.target.transpose();

    const Positions& p = rest.vertices();
    const auto nf = static_cast<Eigen::Index>(free_vertices_.size());
    Eigen::MatrixX3d rhs = Eigen::MatrixX3d::Zero(nf, 3);
    for (int v : free_vertices_) {
      const int r = free_index_[v];
      const auto& nb = cells.neighbors[v];
      Vec3 b = Vec3::Zero();
      for (std::size_t k = 0; k < nb.size(); ++k) {
        const int j = nb[k];
        const double w = cells.weights[v][k];
        b += 0.5 * w * (rotations[v] + rotations[j]) * (detail::row(p, v) - detail::row(p, j));
        if (free_index_[j] < 0) b += w * detail::row(out, j);
      }
      rhs.row(r) = b.transpose();
    }
    const Eigen::MatrixX3d x = ldlt_.solve(rhs);
    if (ldlt_.info() != Eigen::Success || !x.allFinite()) throw SolverError("global step back-substitution failed");
    for (int v : free_vertices_) out.row(v) = x.row(free_index_[v]);
    return out;
  }

 private:
  std::vector<int> handle_vertices_;
  std::vector<int> free_index_;
  std::vector<int> free_vertices_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

/// One-shot global step (factors the system on every call).
inline Positions global_step(const TriMesh& rest, const RotationField& rotations, const HandleSet& handles,
                             const CellStructure& cells) {
  handles.validate(rest.num_vertices());
  GlobalSystem sys(cells, handles.indices());
  return sys.solve(rest, cells, rotations, handles);
}

struct SolveResult {
  TriMesh mesh;
  SolveReport report;
  RotationField rotations;
};

/// Called after every iteration with (iteration, rotations, positions).
using IterationObserver = std::function<void(int, const RotationField&, const Positions&)>;

namespace detail {

/// Sum of weighted squared rest edge lengths; the energy scale of the mesh.
inline double rest_energy_scale(const TriMesh& rest, const CellStructure& cells) {
  double s = 0.0;
  for (int k = 0; k < cells.num_cells(); ++k) {
    for (std::size_t n = 0; n < cells.neighbors[k].size(); ++n) {
      s += cells.weights[k][n] * (rest.vertex(k) - rest.vertex(cells.neighbors[k][n])).squaredNorm();
    }
  }
  return s;
}

inline SolveResult run_local_global(const TriMesh& rest, const HandleSet& handles, const CellStructure& cells,
                                    const SolverConfig& config, const GlobalSystem& system,
                                    const IterationObserver& observer) {
  // Start from the best rigid placement of the rest mesh onto the handle
  // targets, handles snapped. This keeps the iteration equivariant under
  // rigid motions of the targets.
  const int nh = static_cast<int>(handles.size());
  Positions src(nh, 3), dst(nh, 3);
  for (int i = 0; i < nh; ++i) {
    src.row(i) = rest.vertices().row(handles.handles()[i].vertex);
    dst.row(i) = handles.handles()[i].target.transpose();
  }
  const RigidTransform init = fit_rigid_transform(src, dst);
  Positions x = init.apply(rest.vertices());
  for (const auto& h : handles.handles()) x.row(h.vertex) = h.target.transpose();
  RotationField rot(rest.num_vertices(), init.rotation);

  const double floor = 1e-20 * rest_energy_scale(rest, cells);
  SolveReport report;
  report.energies.push_back(smoothed_energy(rest, x, rot, cells, config.lambda));
  for (int it = 1; it <= config.max_iterations; ++it) {
    rot = local_step(rest, x, cells, config.lambda, rot);
    x = system.solve(rest, cells, rot, handles);
    const double prev = report.energies.back();
    const double e = smoothed_energy(rest, x, rot, cells, config.lambda);
    report.energies.push_back(e);
    report.iterations = it;
    if (observer) observer(it, rot, x);
    if (prev <= floor || (prev - e) < config.rel_energy_tol * prev) {
      report.converged = true;
      break;
    }
  }
  return {rest.with_positions(std::move(x)), std::move(report), std::move(rot)};
}

}  // namespace detail

/// Minimise the smoothed ARAP energy subject to hard handle constraints by
/// alternating local (rotation) and global (position) steps.
inline SolveResult solve(const TriMesh& rest, const HandleSet& handles, const CellStructure& cells,
                         const SolverConfig& config, const IterationObserver& observer = {}) {
  config.validate();
  handles.validate(rest.num_vertices());
  if (cells.num_cells() != rest.num_vertices()) throw DimensionError("cell structure does not match the rest mesh");
  const GlobalSystem system(cells, handles.indices());
  return detail::run_local_global(rest, handles, cells, config, system, observer);
}

/// Rest mesh + cell structure with a cache of factored global systems keyed
/// by handle index set, so repeated frames with the same key-point vertices
/// only pay for back-substitution.
class ArapSolver {
 public:
  ArapSolver(TriMesh rest, WeightScheme scheme = WeightScheme::cotangent)
      : rest_(std::move(rest)), cells_(build_cell_structure(rest_, scheme)) {}

  ArapSolver(TriMesh rest, CellStructure cells) : rest_(std::move(rest)), cells_(std::move(cells)) {
    if (cells_.num_cells() != rest_.num_vertices()) throw DimensionError("cell structure does not match the rest mesh");
  }

  const TriMesh& rest() const noexcept { return rest_; }
  const CellStructure& cells() const noexcept { return cells_; }

  SolveResult solve(const HandleSet& handles, const SolverConfig& config, const IterationObserver& observer = {}) const {
    config.validate();
    handles.validate(rest_.num_vertices());
    return detail::run_local_global(rest_, handles, cells_, config, *system_for(handles.indices()), observer);
  }

  std::size_t cached_systems() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
  }

 private:
  std::shared_ptr<const GlobalSystem> system_for(const std::vector<int>& idx) const {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(idx);
    if (it == cache_.end()) it = cache_.emplace(idx, std::make_shared<const GlobalSystem>(cells_, idx)).first;
    return it->second;
  }

  TriMesh rest_;
  CellStructure cells_;
  mutable std::mutex mutex_;
  mutable std::map<std::vector<int>, std::shared_ptr<const GlobalSystem>> cache_;
};

}  // namespace poe
