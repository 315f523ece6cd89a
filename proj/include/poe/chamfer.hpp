#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "poe/mesh.hpp"

namespace poe {

/// Uniform-grid nearest-neighbour index over a fixed point set. Queries are
/// exact: the search expands cell shells until no unvisited cell can hold a
/// closer point.
class PointGrid {
 public:
  explicit PointGrid(const Positions& points) : points_(points) {
    if (points_.rows() == 0) throw InputError("point grid needs at least one point");
    lo_ = points_.colwise().minCoeff().transpose();
    const Vec3 hi = points_.colwise().maxCoeff().transpose();
    const Vec3 ext = hi - lo_;
    const double n = static_cast<double>(points_.rows());
    const double span = ext.maxCoeff();
    // Aim for about two points per cell over the non-flat axes.
    double vol = 1.0;
    int dims = 0;
    for (int a = 0; a < 3; ++a) {
      if (ext[a] > 1e-6 * span) {
        vol *= ext[a];
        ++dims;
      }
    }
    cell_ = dims == 0 ? 1.0 : std::pow(vol * 2.0 / n, 1.0 / dims);
    if (!(cell_ > 0.0) || !std::isfinite(cell_)) cell_ = 1.0;
    for (;;) {
      double total = 1.0;
      for (int a = 0; a < 3; ++a) {
        dims_[a] = static_cast<int>(std::floor(ext[a] / cell_)) + 1;
        total *= dims_[a];
      }
      if (total <= 4.0 * n + 64.0) break;
      cell_ *= 1.5;
    }
    starts_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2] + 1, 0);
    std::vector<int> cell_of(points_.rows());
    for (Eigen::Index i = 0; i < points_.rows(); ++i) {
      cell_of[i] = flat(clamp_cell(points_.row(i).transpose()));
      ++starts_[cell_of[i] + 1];
    }
    for (std::size_t c = 1; c < starts_.size(); ++c) starts_[c] += starts_[c - 1];
    order_.resize(points_.rows());
    std::vector<int> fill(starts_.begin(), starts_.end() - 1);
    for (Eigen::Index i = 0; i < points_.rows(); ++i) order_[fill[cell_of[i]]++] = static_cast<int>(i);
  }

  /// Euclidean distance from q to its nearest stored point.
  double nearest_distance(const Vec3& q) const {
    std::array<long, 3> qc{};
    long first = 0;
    long last = 0;
    for (int a = 0; a < 3; ++a) {
      const double rel = std::clamp((q[a] - lo_[a]) / cell_, -1e9, 1e9);
      qc[a] = static_cast<long>(std::floor(rel));
      const long below = -qc[a];
      const long above = qc[a] - (dims_[a] - 1);
      first = std::max({first, below, above});
      last = std::max({last, std::abs(qc[a]), std::abs(qc[a] - (dims_[a] - 1))});
    }
    double best = std::numeric_limits<double>::infinity();
    for (long ring = first; ring <= last; ++ring) {
      visit_shell(qc, ring, q, best);
      // Unvisited cells are at least `ring` whole cells away.
      if (best <= static_cast<double>(ring) * cell_) break;
    }
    return best;
  }

 private:
  std::array<int, 3> clamp_cell(const Vec3& p) const {
    std::array<int, 3> c{};
    for (int a = 0; a < 3; ++a) {
      c[a] = std::clamp(static_cast<int>(std::floor((p[a] - lo_[a]) / cell_)), 0, dims_[a] - 1);
    }
    return c;
  }

  int flat(const std::array<int, 3>& c) const { return (c[2] * dims_[1] + c[1]) * dims_[0] + c[0]; }

  void visit_cell(int c, const Vec3& q, double& best) const {
    for (int k = starts_[c]; k < starts_[c + 1]; ++k) {
      const int i = order_[k];
      const double d = std::sqrt((points_(i, 0) - q[0]) * (points_(i, 0) - q[0]) +
                                 (points_(i, 1) - q[1]) * (points_(i, 1) - q[1]) +
                                 (points_(i, 2) - q[2]) * (points_(i, 2) - q[2]));
      best = std::min(best, d);
    }
  }

  /// Visit grid cells at Chebyshev distance exactly r from cell qc.
  void visit_shell(const std::array<long, 3>& qc, long r, const Vec3& q, double& best) const {
    std::array<long, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(qc[a] - r, 0L);
      hi[a] = std::min(qc[a] + r, static_cast<long>(dims_[a]) - 1);
      if (lo[a] > hi[a]) return;
    }
    for (long z = lo[2]; z <= hi[2]; ++z) {
      for (long y = lo[1]; y <= hi[1]; ++y) {
        const bool on_face = std::abs(z - qc[2]) == r || std::abs(y - qc[1]) == r;
        if (on_face) {
          for (long x = lo[0]; x <= hi[0]; ++x) {
            visit_cell(flat({static_cast<int>(x), static_cast<int>(y), static_cast<int>(z)}), q, best);
          }
        } else {
          for (long x : {qc[0] - r, qc[0] + r}) {
            if (x < lo[0] || x > hi[0] || (r == 0 && x != qc[0])) continue;
            visit_cell(flat({static_cast<int>(x), static_cast<int>(y), static_cast<int>(z)}), q, best);
            if (r == 0) break;
          }
        }
      }
    }
  }

  Positions points_;
  Vec3 lo_;
  double cell_ = 1.0;
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<int> starts_;
  std::vector<int> order_;
};

/// Distance from every point of `s` to its nearest point of `t`.
inline std::vector<double> nearest_distances(const Positions& s, const Positions& t) {
  if (s.rows() == 0 || t.rows() == 0) throw InputError("chamfer distance needs non-empty point sets");
  std::vector<double> out(static_cast<std::size_t>(s.rows()));
  const PointGrid grid(t);
  for (Eigen::Index i = 0; i < s.rows(); ++i) out[i] = grid.nearest_distance(s.row(i).transpose());
  return out;
}

/// Unidirectional Chamfer distance: mean over s of the distance to the
/// nearest point of t (mm).
inline double ucd(const Positions& s, const Positions& t) {
  const auto d = nearest_distances(s, t);
  double sum = 0.0;
  for (double v : d) sum += v;
  return sum / static_cast<double>(d.size());
}

/// Mean and maximum of the per-point nearest distances from s to t.
struct ChamferStats {
  double avg = 0.0;
  double max = 0.0;
};

inline ChamferStats chamfer_stats(const Positions& s, const Positions& t) {
  const auto d = nearest_distances(s, t);
  ChamferStats st;
  for (double v : d) {
    st.avg += v;
    st.max = std::max(st.max, v);
  }
  st.avg /= static_cast<double>(d.size());
  return st;
}

}  // namespace poe
