#include <fstream>
#include <iterator>
#include <set>

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace poe;

namespace {

const AcousticModelConfig kAcoustic;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

BendState with_contact(BendState s, double axial, double dir, double depth) {
  s.contact = ContactPerturbation{axial, dir, depth};
  return s;
}

}  // namespace

TEST(AcousticModel, RestStateGivesZeroFeatures) {
  const FeatureVector f = acoustic_response(BendState{}, kAcoustic);
  EXPECT_EQ(f.size(), 774);
  EXPECT_EQ(f.cwiseAbs().maxCoeff(), 0.0);
}

TEST(AcousticModel, NoiseFreeForwardIsDeterministic) {
  AcousticModelConfig cfg = kAcoustic;
  cfg.noise_sigma = 0.0;
  const BendState s = BendState::from_angle(0.8, 2.0, 110.0);
  std::mt19937_64 a(1), b(2);
  EXPECT_EQ(forward_acoustic(s, cfg, a), forward_acoustic(s, cfg, b));
  std::mt19937_64 c(3), d(3);
  EXPECT_EQ(forward_acoustic(s, kAcoustic, c), forward_acoustic(s, kAcoustic, d));
}

TEST(AcousticModel, SmallCurvatureChangeIsVisible) {
  const BendState s{0.008, 1.0, std::nullopt};
  const BendState t{0.010, 1.0, std::nullopt};
  const double diff = (acoustic_response(s, kAcoustic) - acoustic_response(t, kAcoustic)).norm();
  EXPECT_GT(diff, 10.0 * kAcoustic.noise_sigma);
}

TEST(AcousticModel, FarMicrophonesRespondLess) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int f = kAcoustic.bins();
  double near = 0.0, far = 0.0;
  for (int i = 0; i < 50; ++i) {
    const FeatureVector v =
        acoustic_response(BendState::from_angle(1.5 * u(rng), 6.28 * u(rng), 110.0), kAcoustic);
    near += v.segment(0, f).norm();
    far += v.segment(5 * f, f).norm();
  }
  EXPECT_LT(far, near);
  for (int c = 1; c < kNumMicrophones; ++c) EXPECT_LT(kAcoustic.gain(c), kAcoustic.gain(c - 1));
}

TEST(AcousticModel, ContactOnlyMovesTheUpperBand) {
  const BendState s = BendState::from_angle(0.7, 0.3, 110.0);
  const FeatureVector a = acoustic_response(s, kAcoustic);
  const FeatureVector b = acoustic_response(with_contact(s, 60.0, 1.0, 2.0), kAcoustic);
  const int f = kAcoustic.bins(), nb = kAcoustic.bend_bins();
  double upper = 0.0;
  for (int c = 0; c < kNumMicrophones; ++c) {
    EXPECT_EQ(a.segment(c * f, nb), b.segment(c * f, nb));
    upper += (a - b).segment(c * f + nb, f - nb).norm();
  }
  EXPECT_GT(upper, 0.0);
}

TEST(ServoProxy, BlindToContact) {
  const BendState s = BendState::from_angle(0.9, 2.5, 110.0);
  std::mt19937_64 a(5), b(5);
  EXPECT_EQ(servo_proxy(s, kAcoustic, a), servo_proxy(with_contact(s, 40.0, 0.0, 3.0), kAcoustic, b));
}

TEST(ServoProxy, CloseToBendVector) {
  std::mt19937_64 rng(6);
  const BendState s = BendState::from_angle(1.0, 0.5, 110.0);
  const Eigen::Vector2d v = servo_proxy(s, kAcoustic, rng);
  const Eigen::Vector2d ideal = s.curvature * Eigen::Vector2d(std::cos(0.5), std::sin(0.5));
  EXPECT_LE((v - ideal).norm() * 110.0, 0.5 * kAcoustic.servo_hysteresis + 6 * kAcoustic.servo_noise);
}

TEST(MixSeed, DistinctIdsGiveDistinctStreams) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(mix_seed(7, i));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_NE(mix_seed(7, 0), mix_seed(8, 0));
}

TEST(Dataset, SplitSizesFollowTestFraction) {
  const Dataset d = sample_dataset(1000, 3);
  EXPECT_EQ(d.split(true).size(), 200u);
  EXPECT_EQ(d.split(false).size(), 800u);
  const auto p = test_partition(1200, 7, 1.0 / 6.0);
  EXPECT_EQ(std::count(p.begin(), p.end(), true), 200);
}

TEST(Dataset, SameSeedSameRecords) {
  const Dataset a = sample_dataset(30, 11);
  const Dataset b = sample_dataset(30, 11);
  const Dataset c = sample_dataset(30, 12);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].features, b.records[i].features);
    EXPECT_EQ(a.records[i].keypoints, b.records[i].keypoints);
    EXPECT_EQ(a.records[i].test, b.records[i].test);
  }
  EXPECT_NE(a.records[0].features, c.records[0].features);
}

TEST(Dataset, SampleDependsOnlyOnSeedAndId) {
  const Dataset a = sample_dataset(20, 5);
  const Dataset b = sample_dataset(70, 5);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(a.records[i].features, b.records[i].features);
    EXPECT_EQ(a.records[i].servo, b.records[i].servo);
    EXPECT_EQ(a.meshes[i].vertices(), b.meshes[i].vertices());
  }
}

TEST(Dataset, RecordInvariants) {
  const Dataset d = sample_dataset(200, 9);
  int contacts = 0;
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& r = d.records[i];
    EXPECT_EQ(r.id, static_cast<int>(i));
    EXPECT_EQ(r.features.size(), 774);
    EXPECT_GE(r.state.curvature, 0.0);
    EXPECT_LE(r.state.curvature * 110.0, d.config.max_bend + 1e-12);
    for (int k = 0; k < kNumKeyPoints; ++k) EXPECT_EQ(r.keypoints.row(k), d.meshes[i].vertices().row(d.layout.vertices[k]));
    ASSERT_GT(r.partial.rows(), 0);
    EXPECT_LT(r.partial.rows(), d.meshes[i].num_vertices());
    EXPECT_EQ(ucd(r.partial, d.meshes[i].vertices()), 0.0);
    if (r.state.contact) {
      ++contacts;
      EXPECT_GE(r.state.contact->depth, 0.5);
      EXPECT_LE(r.state.contact->depth, 3.0);
    }
  }
  EXPECT_GT(contacts, 30);
  EXPECT_LT(contacts, 90);
}

TEST(Dataset, SaveLoadRoundTripAndByteIdentical) {
  const Dataset d = sample_dataset(25, 21);
  const auto a = test::scratch_dir("ds_a");
  const auto b = test::scratch_dir("ds_b");
  save_dataset(d, a);
  save_dataset(sample_dataset(25, 21), b);
  for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
  }
  const Dataset back = load_dataset(a);
  ASSERT_EQ(back.records.size(), d.records.size());
  EXPECT_EQ(back.seed, 21u);
  EXPECT_EQ(back.layout.vertices, d.layout.vertices);
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    EXPECT_EQ(back.records[i].features, d.records[i].features);
    EXPECT_EQ(back.records[i].partial, d.records[i].partial);
    EXPECT_EQ(back.records[i].test, d.records[i].test);
    EXPECT_LE((back.meshes[i].vertices() - d.meshes[i].vertices()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Dataset, MissingManifestIsStateError) {
  EXPECT_THROW(load_dataset(test::scratch_dir("ds_missing")), StateError);
  EXPECT_THROW(sample_dataset(1, 0), ParameterError);
}
