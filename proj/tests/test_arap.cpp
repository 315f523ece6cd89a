#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace poe;

namespace {

Positions rotated(const Positions& p, const Mat3& q, const Vec3& t = Vec3::Zero()) {
  return ((p * q.transpose()).rowwise() + t.transpose()).eval();
}

// Cotangent weights from face angles via acos, independent of the library.
std::map<std::pair<int, int>, double> acos_weights(const TriMesh& m) {
  std::map<std::pair<int, int>, double> w;
  for (int f = 0; f < m.num_faces(); ++f) {
    for (int c = 0; c < 3; ++c) {
      const int i = m.faces()(f, c), j = m.faces()(f, (c + 1) % 3), o = m.faces()(f, (c + 2) % 3);
      const Vec3 a = (m.vertex(i) - m.vertex(o)).normalized();
      const Vec3 b = (m.vertex(j) - m.vertex(o)).normalized();
      w[{std::min(i, j), std::max(i, j)}] += 0.5 / std::tan(std::acos(std::clamp(a.dot(b), -1.0, 1.0)));
    }
  }
  for (auto& [e, x] : w) x = std::max(x, 0.0);
  return w;
}

RotationField random_rotations(int n, std::mt19937_64& rng) {
  RotationField r;
  for (int i = 0; i < n; ++i) r.push_back(test::random_rotation(rng));
  return r;
}

HandleSet rest_handles(const TriMesh& m, const std::vector<int>& idx) {
  std::vector<Handle> h;
  for (int i : idx) h.push_back({i, m.vertex(i)});
  return HandleSet(h);
}

}  // namespace

TEST(FitRotation, SymmetricPositiveGivesIdentity) {
  Mat3 s;
  s << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
  EXPECT_LE((*fit_rotation(s) - Mat3::Identity()).norm(), 1e-12);
}

TEST(FitRotation, RotatedSymmetricGivesThatRotation) {
  std::mt19937_64 rng(3);
  Mat3 s;
  s << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
  for (int i = 0; i < 20; ++i) {
    const Mat3 q = test::random_rotation(rng);
    EXPECT_LE((*fit_rotation(q * s) - q).norm(), 1e-10);
  }
}

TEST(FitRotation, ReflectionGuardPicksBestProperRotation) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Mat3 m = Mat3::NullaryExpr([&] { return n(rng); });
    if (m.determinant() > 0) m.col(0) *= -1.0;  // force a reflection
    const Mat3 r = *fit_rotation(m);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    EXPECT_LE((r.transpose() * r - Mat3::Identity()).norm(), 1e-12);
    // Oracle: every single-column sign correction of U V^T, best trace wins.
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    double best = -1e300;
    for (int c = 0; c < 3; ++c) {
      Mat3 u = svd.matrixU();
      u.col(c) *= -1.0;
      const Mat3 cand = u * svd.matrixV().transpose();
      if (cand.determinant() > 0) best = std::max(best, (cand.transpose() * m).trace());
    }
    EXPECT_NEAR((r.transpose() * m).trace(), best, 1e-10);
    // No random rotation does better.
    for (int k = 0; k < 200; ++k) {
      EXPECT_LE((test::random_rotation(rng).transpose() * m).trace(), best + 1e-10);
    }
  }
}

TEST(FitRotation, ZeroMatrixHasNoRotation) { EXPECT_FALSE(fit_rotation(Mat3::Zero()).has_value()); }

TEST(ArapEnergy, ZeroAtRestAndUnderRigidMotion) {
  std::mt19937_64 rng(1);
  const TriMesh m = test::small_cone(11, 18);
  const CellStructure cs = build_cell_structure(m);
  EXPECT_EQ(arap_energy(m, m.vertices(), RotationField(m.num_vertices(), Mat3::Identity()), cs), 0.0);
  const Mat3 q = test::random_rotation(rng);
  const double e = arap_energy(m, rotated(m.vertices(), q, Vec3(3, -2, 7)), RotationField(m.num_vertices(), q), cs);
  EXPECT_LE(e, 1e-18 * detail::rest_energy_scale(m, cs));
}

TEST(ArapEnergy, MatchesDirectDoubleLoop) {
  std::mt19937_64 rng(2);
  const TriMesh m = test::small_cone(11, 18);
  ASSERT_EQ(m.num_vertices(), 200);
  const CellStructure cs = build_cell_structure(m);
  const auto w = acos_weights(m);
  std::normal_distribution<double> n(0.0, 1.0);
  const Positions x = m.vertices() + Positions::NullaryExpr(m.num_vertices(), 3, [&] { return n(rng); });
  const RotationField r = random_rotations(m.num_vertices(), rng);
  double oracle = 0.0;
  for (int k = 0; k < m.num_vertices(); ++k) {
    for (int j = 0; j < m.num_vertices(); ++j) {
      const auto it = w.find({std::min(k, j), std::max(k, j)});
      if (j == k || it == w.end()) continue;
      const Vec3 d = (x.row(k) - x.row(j)).transpose() - r[k] * (m.vertex(k) - m.vertex(j));
      oracle += it->second * d.squaredNorm();
    }
  }
  const double e = arap_energy(m, x, r, cs);
  EXPECT_NEAR(e, oracle, 1e-12 * oracle);
}

TEST(ArapEnergy, SizeMismatchIsDimensionError) {
  const TriMesh m = test::small_cone(4, 5);
  const CellStructure cs = build_cell_structure(m);
  EXPECT_THROW(arap_energy(m, Positions::Zero(3, 3), RotationField(m.num_vertices(), Mat3::Identity()), cs),
               DimensionError);
  EXPECT_THROW(arap_energy(m, m.vertices(), RotationField(2, Mat3::Identity()), cs), DimensionError);
}

TEST(SmoothedEnergy, LambdaZeroEqualsArapBitwise) {
  std::mt19937_64 rng(4);
  const TriMesh m = test::small_cone(6, 8);
  const CellStructure cs = build_cell_structure(m);
  const RotationField r = random_rotations(m.num_vertices(), rng);
  const Positions x = m.vertices() * 1.1;
  EXPECT_EQ(smoothed_energy(m, x, r, cs, 0.0), arap_energy(m, x, r, cs));
}

TEST(SmoothedEnergy, IdenticalRotationsHaveNoSmoothingTerm) {
  std::mt19937_64 rng(6);
  const TriMesh m = test::small_cone(6, 8);
  const CellStructure cs = build_cell_structure(m);
  EXPECT_EQ(smoothing_energy(RotationField(m.num_vertices(), test::random_rotation(rng)), cs, 0.3), 0.0);
}

TEST(SmoothedEnergy, TwoCellsByHand) {
  CellStructure cs;
  cs.neighbors = {{1}, {0}};
  cs.weights = {{0.7}, {0.7}};
  cs.area_scale = 2.0;
  const Mat3 half_turn = Eigen::Vector3d(-1, -1, 1).asDiagonal();
  // |I - diag(-1,-1,1)|_F^2 = 8; both ordered pairs counted: 0.1 * 2 * (0.7*8 + 0.7*8) = 2.24.
  EXPECT_NEAR(smoothing_energy({Mat3::Identity(), half_turn}, cs, 0.1), 2.24, 1e-12);
}

TEST(LocalStep, RestGivesIdentity) {
  const TriMesh m = test::small_cone(8, 10);
  const CellStructure cs = build_cell_structure(m);
  std::mt19937_64 rng(7);
  const auto r = local_step(m, m.vertices(), cs, 0.0, random_rotations(m.num_vertices(), rng));
  for (const auto& x : r) EXPECT_LE((x - Mat3::Identity()).norm(), 1e-10);
}

TEST(LocalStep, RotatedRestGivesThatRotation) {
  std::mt19937_64 rng(8);
  const TriMesh m = test::small_cone(8, 10);
  const CellStructure cs = build_cell_structure(m);
  const Mat3 q = test::random_rotation(rng);
  for (double lambda : {0.0, 5e-4}) {
    const auto r = local_step(m, rotated(m.vertices(), q), cs, lambda, RotationField(m.num_vertices(), q));
    for (const auto& x : r) EXPECT_LE((x - q).norm(), 1e-10);
  }
}

TEST(LocalStep, NeverIncreasesSmoothedEnergy) {
  std::mt19937_64 rng(9);
  const TriMesh m = test::small_cone(8, 10);
  const CellStructure cs = build_cell_structure(m);
  std::normal_distribution<double> n(0.0, 2.0);
  for (double lambda : {0.0, 5e-4, 1e-2}) {
    const Positions x = m.vertices() + Positions::NullaryExpr(m.num_vertices(), 3, [&] { return n(rng); });
    const RotationField r0 = random_rotations(m.num_vertices(), rng);
    const RotationField r1 = local_step(m, x, cs, lambda, r0);
    EXPECT_LE(smoothed_energy(m, x, r1, cs, lambda), smoothed_energy(m, x, r0, cs, lambda));
  }
}

TEST(GlobalStep, ConstraintSaturatedReturnsRest) {
  const TriMesh m = test::small_cone(6, 8);
  const CellStructure cs = build_cell_structure(m);
  std::vector<int> idx;
  for (int i = 1; i < m.num_vertices(); ++i) idx.push_back(i);
  const Positions x = global_step(m, RotationField(m.num_vertices(), Mat3::Identity()), rest_handles(m, idx), cs);
  EXPECT_LE((x - m.vertices()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(GlobalStep, RigidMotionIsReproduced) {
  std::mt19937_64 rng(10);
  const TriMesh m = test::small_cone(8, 10);
  const CellStructure cs = build_cell_structure(m);
  const Mat3 q = test::random_rotation(rng);
  const Positions target = rotated(m.vertices(), q, Vec3(5, 1, -3));
  const HandleSet h({{0, target.row(0).transpose()}, {m.num_vertices() - 1, target.row(m.num_vertices() - 1).transpose()}});
  const Positions x = global_step(m, RotationField(m.num_vertices(), q), h, cs);
  EXPECT_LE((x - target).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(GlobalStep, OutputIsStationaryByFiniteDifferences) {
  std::mt19937_64 rng(12);
  const TriMesh m = test::small_cone(6, 8);
  ASSERT_EQ(m.num_vertices(), 50);
  const CellStructure cs = build_cell_structure(m);
  const RotationField r = random_rotations(m.num_vertices(), rng);
  const HandleSet h = rest_handles(m, {0, 13, 27, 49});
  const Positions x = global_step(m, r, h, cs);
  const auto idx = h.indices();
  const Positions g0 = arap_gradient(m, m.vertices(), r, cs);
  const double step = 1e-4;
  double worst = 0.0;
  for (int v = 0; v < m.num_vertices(); ++v) {
    if (std::binary_search(idx.begin(), idx.end(), v)) continue;
    for (int c = 0; c < 3; ++c) {
      Positions xp = x, xm = x;
      xp(v, c) += step;
      xm(v, c) -= step;
      const double fd = (arap_energy(m, xp, r, cs) - arap_energy(m, xm, r, cs)) / (2 * step);
      worst = std::max(worst, std::abs(fd));
    }
  }
  EXPECT_LE(worst, 1e-5 * g0.norm());
}

TEST(GlobalStep, AnalyticGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  const TriMesh m = test::small_cone(6, 8);
  const CellStructure cs = build_cell_structure(m);
  std::normal_distribution<double> n(0.0, 1.0);
  const Positions x = m.vertices() + Positions::NullaryExpr(m.num_vertices(), 3, [&] { return n(rng); });
  const RotationField r = random_rotations(m.num_vertices(), rng);
  const Positions g = arap_gradient(m, x, r, cs);
  Positions fd(m.num_vertices(), 3);
  for (int v = 0; v < m.num_vertices(); ++v) {
    for (int c = 0; c < 3; ++c) {
      Positions xp = x, xm = x;
      xp(v, c) += 1e-4;
      xm(v, c) -= 1e-4;
      fd(v, c) = (arap_energy(m, xp, r, cs) - arap_energy(m, xm, r, cs)) / 2e-4;
    }
  }
  EXPECT_LE((fd - g).norm(), 1e-5 * g.norm());
}

TEST(GlobalStep, IsolatedFreeVertexNamesTheVertex) {
  const TriMesh m = test::small_cone(6, 8);
  CellStructure cs = build_cell_structure(m);
  const int v = 17;
  for (std::size_t n = 0; n < cs.neighbors[v].size(); ++n) {
    const int l = cs.neighbors[v][n];
    cs.weights[v][n] = 0.0;
    const auto it = std::lower_bound(cs.neighbors[l].begin(), cs.neighbors[l].end(), v);
    cs.weights[l][static_cast<std::size_t>(it - cs.neighbors[l].begin())] = 0.0;
  }
  try {
    global_step(m, RotationField(m.num_vertices(), Mat3::Identity()), rest_handles(m, {0}), cs);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
  }
}

TEST(HandleSet, Validation) {
  EXPECT_THROW(HandleSet({{1, Vec3::Zero()}, {1, Vec3::Ones()}}), ParameterError);
  const TriMesh m = test::small_cone(2, 3);
  EXPECT_THROW(HandleSet().validate(m.num_vertices()), ParameterError);
  EXPECT_THROW(HandleSet({{8, Vec3::Zero()}}).validate(m.num_vertices()), ParameterError);
  EXPECT_THROW(HandleSet({{0, Vec3(NAN, 0, 0)}}).validate(m.num_vertices()), ParameterError);
  std::vector<Handle> all;
  for (int i = 0; i < m.num_vertices(); ++i) all.push_back({i, m.vertex(i)});
  EXPECT_THROW(HandleSet(all).validate(m.num_vertices()), ParameterError);
}

TEST(SolverConfig, Validation) {
  EXPECT_THROW((SolverConfig{-1.0, 10, 1e-6}).validate(), ParameterError);
  EXPECT_THROW((SolverConfig{0.0, 0, 1e-6}).validate(), ParameterError);
  EXPECT_THROW((SolverConfig{0.0, 10, 0.0}).validate(), ParameterError);
  EXPECT_NO_THROW(SolverConfig{}.validate());
  EXPECT_EQ(SolverConfig{}.lambda, 5e-4);
}

TEST(Solve, TraceIsMonotoneAndReportConsistent) {
  const PoeGeometry g;
  const TriMesh rest = g.rest_mesh();
  const auto layout = default_layout(g);
  const auto [bent, kp] = deform_pcc(rest, BendState::from_angle(1.0, 0.4, 110.0), layout);
  const HandleSet h = reconstruction_handles(kp, rest, g.mount_vertices());
  const CellStructure cs = build_cell_structure(rest);
  for (double lambda : {0.0, 5e-4}) {
    SolverConfig cfg;
    cfg.lambda = lambda;
    const SolveResult res = solve(rest, h, cs, cfg);
    const auto& e = res.report.energies;
    ASSERT_EQ(e.size(), static_cast<std::size_t>(res.report.iterations) + 1);
    for (std::size_t i = 1; i < e.size(); ++i) EXPECT_LE(e[i], e[i - 1] + 1e-9 * e[0]);
    if (res.report.converged) {
      EXPECT_LT(e[e.size() - 2] - e.back(), cfg.rel_energy_tol * e[e.size() - 2]);
    }
    EXPECT_EQ(res.mesh.faces(), rest.faces());
    for (const auto& hh : h.handles()) EXPECT_EQ(res.mesh.vertex(hh.vertex), hh.target);
    for (const auto& r : res.rotations) {
      EXPECT_LE((r.transpose() * r - Mat3::Identity()).norm(), 1e-9);
      EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
    }
  }
}

TEST(Solve, HandlesAtRestReturnRest) {
  const PoeGeometry g;
  const TriMesh rest = g.rest_mesh();
  const auto kp = KeyPointSet::from_mesh(default_layout(g), rest.vertices());
  const SolveResult res = solve(rest, reconstruction_handles(kp, rest, g.mount_vertices()), build_cell_structure(rest), {});
  EXPECT_LE((res.mesh.vertices() - rest.vertices()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_TRUE(res.report.converged);
}

TEST(Solve, RigidlyEquivariant) {
  std::mt19937_64 rng(14);
  const PoeGeometry g;
  const TriMesh rest = g.rest_mesh();
  const auto [bent, kp] = deform_pcc(rest, BendState::from_angle(0.8, 1.2, 110.0), default_layout(g));
  const HandleSet h = reconstruction_handles(kp, rest, g.mount_vertices());
  const ArapSolver solver(rest);
  const Positions base = solver.solve(h, {}).mesh.vertices();
  for (int i = 0; i < 3; ++i) {
    const Mat3 q = test::random_rotation(rng);
    const Vec3 t = test::random_cloud(rng, 1, -50, 50).row(0).transpose();
    std::vector<Handle> moved;
    for (const auto& hh : h.handles()) moved.push_back({hh.vertex, q * hh.target + t});
    const Positions out = solver.solve(HandleSet(moved), {}).mesh.vertices();
    EXPECT_LE((out - rotated(base, q, t)).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(ArapSolver, CachesOneSystemPerHandleSetAndMatchesFreeSolve) {
  const PoeGeometry g;
  const TriMesh rest = g.rest_mesh();
  const auto layout = default_layout(g);
  const ArapSolver solver(rest);
  const auto [b1, k1] = deform_pcc(rest, BendState::from_angle(0.5, 0.0, 110.0), layout);
  const auto [b2, k2] = deform_pcc(rest, BendState::from_angle(0.9, 2.0, 110.0), layout);
  const auto h1 = reconstruction_handles(k1, rest, g.mount_vertices());
  const auto h2 = reconstruction_handles(k2, rest, g.mount_vertices());
  const auto r1 = solver.solve(h1, {});
  solver.solve(h2, {});
  EXPECT_EQ(solver.cached_systems(), 1u);
  const auto free_solve = solve(rest, h1, solver.cells(), {});
  EXPECT_EQ(r1.mesh.vertices(), free_solve.mesh.vertices());
  solver.solve(k1.handles(), {});
  EXPECT_EQ(solver.cached_systems(), 2u);
}
