#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace poe;

namespace {

// Six equilateral triangles around vertex 0.
TriMesh hexagon_patch() {
  Positions v(7, 3);
  v.row(0) << 0, 0, 0;
  for (int i = 0; i < 6; ++i) {
    const double a = i * M_PI / 3.0;
    v.row(1 + i) << std::cos(a), std::sin(a), 0.0;
  }
  Faces f(6, 3);
  for (int i = 0; i < 6; ++i) f.row(i) << 0, 1 + i, 1 + (i + 1) % 6;
  return TriMesh(v, f);
}

int brute_force_edge_count(const TriMesh& m) {
  std::set<std::pair<int, int>> e;
  for (int f = 0; f < m.num_faces(); ++f) {
    for (int c = 0; c < 3; ++c) {
      const int a = m.faces()(f, c), b = m.faces()(f, (c + 1) % 3);
      e.insert({std::min(a, b), std::max(a, b)});
    }
  }
  return static_cast<int>(e.size());
}

}  // namespace

TEST(ConeMesh, DefaultFingerHas322Vertices) {
  const TriMesh m = generate_cone_mesh(110.0, 15.0, 4.0, 20, 16);
  EXPECT_EQ(m.num_vertices(), 322);
  EXPECT_EQ(m.num_faces(), 2 * 20 * 16);
  EXPECT_DOUBLE_EQ(m.vertices().col(2).minCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(m.vertices().col(2).maxCoeff(), 110.0);
}

TEST(ConeMesh, MinimalResolutionIsCappedPrism) {
  const TriMesh m = generate_cone_mesh(1.0, 0.5, 0.5, 2, 3);
  EXPECT_EQ(m.num_vertices(), 8);
  EXPECT_EQ(m.num_faces(), 12);
}

TEST(ConeMesh, EulerCharacteristicIsTwo) {
  for (auto [a, r] : {std::pair{2, 3}, {5, 7}, {20, 16}, {40, 32}}) {
    const TriMesh m = test::small_cone(a, r);
    EXPECT_EQ(m.num_vertices() - brute_force_edge_count(m) + m.num_faces(), 2) << a << "x" << r;
    EXPECT_EQ(static_cast<int>(m.edges().size()), brute_force_edge_count(m));
  }
}

TEST(ConeMesh, OutwardOrientationGivesPositiveVolume) {
  const TriMesh m = test::small_cone(20, 16);
  EXPECT_GT(signed_volume(m), 0.0);
  // Frustum volume pi h (R^2 + R r + r^2) / 3 bounds the inscribed polygonal solid.
  EXPECT_LT(signed_volume(m), M_PI * 110.0 * (225.0 + 60.0 + 16.0) / 3.0);
}

TEST(ConeMesh, RandomValidParametersPassInvariants) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double len = 1.0 + 200.0 * u(rng);
    const double tip = 0.5 + 10.0 * u(rng);
    const double base = tip + 20.0 * u(rng);
    const int axial = 2 + static_cast<int>(20 * u(rng));
    const int radial = 3 + static_cast<int>(20 * u(rng));
    EXPECT_NO_THROW({
      const TriMesh m = generate_cone_mesh(len, base, tip, axial, radial);
      EXPECT_EQ(m.num_vertices(), axial * radial + 2);
    });
  }
}

TEST(ConeMesh, InvalidDimensionsThrowParameterError) {
  EXPECT_THROW(generate_cone_mesh(0.0, 1.0, 1.0, 2, 3), ParameterError);
  EXPECT_THROW(generate_cone_mesh(1.0, 1.0, 2.0, 2, 3), ParameterError);
  EXPECT_THROW(generate_cone_mesh(1.0, 1.0, 0.0, 2, 3), ParameterError);
  EXPECT_THROW(generate_cone_mesh(1.0, 1.0, 1.0, 1, 3), ParameterError);
  EXPECT_THROW(generate_cone_mesh(1.0, 1.0, 1.0, 2, 2), ParameterError);
}

TEST(TriMeshInvariants, RejectsBadTopology) {
  Positions v(4, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  Faces out_of_range(1, 3);
  out_of_range << 0, 1, 4;
  EXPECT_THROW(TriMesh(v, out_of_range), TopologyError);
  Faces repeated(1, 3);
  repeated << 0, 1, 1;
  EXPECT_THROW(TriMesh(v, repeated), TopologyError);
  Faces duplicate(2, 3);
  duplicate << 0, 1, 2, 1, 2, 0;
  EXPECT_THROW(TriMesh(v, duplicate), TopologyError);
}

TEST(TriMeshInvariants, RejectsEdgeSharedByThreeFaces) {
  Positions v(5, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, -1, 0.5;
  Faces f(3, 3);
  f << 0, 1, 2, 1, 0, 3, 0, 1, 4;
  EXPECT_THROW(TriMesh(v, f), TopologyError);
}

TEST(TriMeshInvariants, RejectsDegenerateFace) {
  Positions v(3, 3);
  v << 0, 0, 0, 1, 0, 0, 2, 0, 0;
  Faces f(1, 3);
  f << 0, 1, 2;
  EXPECT_THROW(TriMesh(v, f), std::exception);
}

TEST(CellStructure, EquilateralInteriorEdgeWeightIsInverseRootThree) {
  const CellStructure cs = build_cell_structure(hexagon_patch(), WeightScheme::cotangent);
  for (int i = 1; i <= 6; ++i) EXPECT_NEAR(cs.weight(0, i), 1.0 / std::sqrt(3.0), 1e-12);
  // Boundary edges see a single 60 degree angle.
  EXPECT_NEAR(cs.weight(1, 2), 0.5 / std::sqrt(3.0), 1e-12);
}

TEST(CellStructure, RightAngleContributesNothing) {
  Positions v(3, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  Faces f(1, 3);
  f << 0, 1, 2;
  const auto raw = raw_cotangent_weights(TriMesh(v, f));
  EXPECT_NEAR(raw.at({1, 2}), 0.0, 1e-15);
  EXPECT_NEAR(raw.at({0, 1}), 0.5, 1e-12);  // opposite 45 degrees
}

TEST(CellStructure, UniformWeightsAreOne) {
  const CellStructure cs = build_cell_structure(test::small_cone(6, 8), WeightScheme::uniform);
  for (const auto& w : cs.weights) {
    for (double x : w) EXPECT_EQ(x, 1.0);
  }
}

TEST(CellStructure, NeighbourRelationIsSymmetricAndWeightsClamped) {
  const TriMesh m = test::small_cone(20, 16);
  const CellStructure cs = build_cell_structure(m);
  const auto raw = raw_cotangent_weights(m);
  ASSERT_EQ(cs.num_cells(), m.num_vertices());
  for (int k = 0; k < cs.num_cells(); ++k) {
    for (int l : cs.neighbors[k]) {
      EXPECT_TRUE(std::binary_search(cs.neighbors[l].begin(), cs.neighbors[l].end(), k));
      EXPECT_EQ(cs.weight(k, l), cs.weight(l, k));
      const double w = cs.weight(k, l);
      EXPECT_TRUE(std::isfinite(w));
      EXPECT_GE(w, 0.0);
      EXPECT_EQ(w, std::max(raw.at({std::min(k, l), std::max(k, l)}), 0.0));
    }
  }
  EXPECT_GT(cs.area_scale, 0.0);
}

TEST(CellStructure, DelaunayPatchNeedsNoClamping) {
  for (const auto& [e, w] : raw_cotangent_weights(hexagon_patch())) EXPECT_GE(w, 0.0);
}

TEST(CellStructure, ParsesSchemeNames) {
  EXPECT_EQ(parse_weight_scheme("cotangent"), WeightScheme::cotangent);
  EXPECT_EQ(parse_weight_scheme("uniform"), WeightScheme::uniform);
  EXPECT_THROW(parse_weight_scheme("harmonic"), ParameterError);
}

TEST(MeshIo, RoundTripBothFormats) {
  const TriMesh m = test::small_cone(20, 16);
  const auto dir = test::scratch_dir("mesh_io");
  for (const char* name : {"cone.obj", "cone.off"}) {
    save_mesh(m, dir / name);
    const TriMesh back = load_mesh(dir / name);
    EXPECT_EQ(back.faces(), m.faces()) << name;
    EXPECT_LE((back.vertices() - m.vertices()).cwiseAbs().maxCoeff(), 1e-6) << name;
  }
}

TEST(MeshIo, ObjZeroIndexIsParseErrorWithLine) {
  std::istringstream in("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n");
  try {
    read_obj(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4);
  }
}

TEST(MeshIo, ObjAcceptsSlashFormsAndIgnoresOtherDirectives) {
  std::istringstream in("# c\nvn 0 0 1\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2//1 3\n");
  const TriMesh m = read_obj(in);
  EXPECT_EQ(m.num_vertices(), 3);
  EXPECT_EQ(m.faces()(0, 2), 2);
}

TEST(MeshIo, OffCountMismatchIsParseError) {
  std::istringstream too_few("OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
  EXPECT_THROW(read_off(too_few), ParseError);
  std::istringstream too_many("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n3 0 2 1\n");
  EXPECT_THROW(read_off(too_many), ParseError);
}

TEST(MeshIo, NonManifoldContentIsTopologyError) {
  std::istringstream in("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nv 0 -1 0.5\nf 1 2 3\nf 2 1 4\nf 1 2 5\n");
  EXPECT_THROW(read_obj(in), TopologyError);
}

TEST(MeshIo, UnknownExtensionRejected) {
  const auto dir = test::scratch_dir("mesh_ext");
  EXPECT_THROW(save_mesh(test::small_cone(2, 3), dir / "m.stl"), ParameterError);
  std::ofstream(dir / "m.stl") << "solid\n";
  EXPECT_THROW(load_mesh(dir / "m.stl"), ParseError);
}
