#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "farconf/dataset_io.hpp"
#include "farconf/error.hpp"
#include "farconf/params_io.hpp"
#include "farconf/rng.hpp"
#include "farconf/synth.hpp"

using namespace farconf;
namespace fs = std::filesystem;

TEST(Mahalanobis, HandExamples) {
  const auto classes = two_gaussians();
  const double a[] = {13, 0};
  auto r = mahalanobis_to_nearest(a, classes);
  EXPECT_DOUBLE_EQ(r.distance, 3.0);
  EXPECT_EQ(r.class_index, 1u);
  const double b[] = {10, 0};
  EXPECT_DOUBLE_EQ(mahalanobis_to_nearest(b, classes).distance, 0.0);
  const double c[] = {0, 0};
  r = mahalanobis_to_nearest(c, classes);
  EXPECT_DOUBLE_EQ(r.distance, 10.0);
  EXPECT_EQ(r.class_index, 0u);
}

TEST(Mahalanobis, IdentityCovarianceIsEuclidean) {
  const auto classes = two_gaussians();
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const double p[] = {rng.uniform(-60, 60), rng.uniform(-60, 60)};
    const double d0 = std::hypot(p[0] + 10, p[1]);
    const double d1 = std::hypot(p[0] - 10, p[1]);
    EXPECT_NEAR(mahalanobis_to_nearest(p, classes).distance, std::min(d0, d1), 1e-12);
  }
}

TEST(Mahalanobis, AnisotropicCovariance) {
  GaussianClass c{{0, 0}, {4, 0, 0, 1}, 0};
  const double p[] = {2, 0};
  EXPECT_NEAR(mahalanobis_to_nearest(p, std::span(&c, 1)).distance, 1.0, 1e-14);
}

TEST(Mahalanobis, NonSpdCovarianceRejected) {
  GaussianClass c{{0, 0}, {1, 2, 2, 1}, 0};
  const double p[] = {1, 1};
  EXPECT_THROW(mahalanobis_to_nearest(p, std::span(&c, 1)), ConfigError);
}

TEST(InDistribution, EmpiricalMeans) {
  const auto classes = two_gaussians();
  const Dataset ds = sample_in_distribution(classes, 10000, 123);
  ASSERT_EQ(ds.size(), 20000u);
  double sum[2][2] = {};
  for (const auto& s : ds.samples) {
    ASSERT_TRUE(s.label == 0 || s.label == 1);
    sum[s.label][0] += s.point[0];
    sum[s.label][1] += s.point[1];
  }
  EXPECT_NEAR(sum[0][0] / 10000, -10.0, 0.05);
  EXPECT_NEAR(sum[0][1] / 10000, 0.0, 0.05);
  EXPECT_NEAR(sum[1][0] / 10000, 10.0, 0.05);
  EXPECT_NEAR(sum[1][1] / 10000, 0.0, 0.05);
  EXPECT_EQ(ds.provenance, Provenance::in_dist);
}

TEST(InDistribution, UnitVariance) {
  const std::vector<GaussianClass> one{GaussianClass::isotropic({0, 0}, 0)};
  const Dataset ds = sample_in_distribution(one, 20000, 4);
  double ss = 0.0;
  for (const auto& s : ds.samples) ss += s.point[0] * s.point[0] + s.point[1] * s.point[1];
  EXPECT_NEAR(ss / 40000.0, 1.0, 0.03);
}

TEST(InDistribution, DeterministicAndSingleSample) {
  const auto classes = two_gaussians();
  EXPECT_EQ(sample_in_distribution(classes, 50, 9).points(), sample_in_distribution(classes, 50, 9).points());
  EXPECT_NE(sample_in_distribution(classes, 50, 9).points(), sample_in_distribution(classes, 50, 10).points());
  const std::vector<GaussianClass> one{GaussianClass::isotropic({1, 1}, 0)};
  const Dataset ds = sample_in_distribution(one, 1, 0);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.samples[0].label, 0);
  EXPECT_THROW(sample_in_distribution(classes, 0, 0), ContractError);
}

TEST(BoundaryOod, InsideBandAndOutsideThreshold) {
  const auto classes = two_gaussians();
  const Dataset ds = sample_boundary_ood(classes, 5000, {3.0, 5.0}, 31);
  ASSERT_EQ(ds.size(), 5000u);
  for (const auto& s : ds.samples) {
    EXPECT_TRUE(s.is_ood());
    const double d = mahalanobis_to_nearest(s.point, classes).distance;
    EXPECT_GE(d, 3.0);
    EXPECT_LE(d, 5.0 + 1e-12);
  }
  EXPECT_EQ(ds.provenance, Provenance::boundary_ood);
}

TEST(BoundaryOod, CloseMeansNeedRejection) {
  // means 4 apart: part of each annulus falls within 3 of the other mean
  const std::vector<GaussianClass> classes{GaussianClass::isotropic({-2, 0}, 0),
                                           GaussianClass::isotropic({2, 0}, 1)};
  const Dataset ds = sample_boundary_ood(classes, 2000, {3.0, 4.0}, 2);
  for (const auto& s : ds.samples) EXPECT_GE(mahalanobis_to_nearest(s.point, classes).distance, 3.0);
}

TEST(BoundaryOod, AngularHistogramHasNoEmptyBin) {
  const auto classes = two_gaussians();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Dataset ds = sample_boundary_ood(classes, 3600, {3.0, 5.0}, seed);
    std::vector<std::vector<int>> bins(2, std::vector<int>(36, 0));
    for (const auto& s : ds.samples) {
      const auto k = mahalanobis_to_nearest(s.point, classes).class_index;
      const double th = std::atan2(s.point[1] - classes[k].mean[1], s.point[0] - classes[k].mean[0]) + std::numbers::pi;
      const auto b = std::min<std::size_t>(35, static_cast<std::size_t>(th / (2 * std::numbers::pi) * 36));
      ++bins[k][b];
    }
    for (const auto& per_class : bins) {
      for (int c : per_class) EXPECT_GT(c, 0) << "seed " << seed;
    }
  }
}

TEST(BoundaryOod, BandPrecondition) {
  const auto classes = two_gaussians();
  EXPECT_THROW(sample_boundary_ood(classes, 10, {2.0, 5.0}, 0), ContractError);
  EXPECT_THROW(sample_boundary_ood(classes, 10, {5.0, 5.0}, 0), ContractError);
  EXPECT_EQ(sample_boundary_ood(classes, 10, {3, 5}, 8).points(), sample_boundary_ood(classes, 10, {3, 5}, 8).points());
}

TEST(BoxOod, InsideBoxAndOutsideThreshold) {
  const auto classes = two_gaussians();
  const Box2 box;
  const Dataset ds = sample_box_ood(box, classes, 10000, 99);
  std::size_t far = 0;
  for (const auto& s : ds.samples) {
    EXPECT_TRUE(box.contains(s.point[0], s.point[1]));
    EXPECT_GE(mahalanobis_to_nearest(s.point, classes).distance, 3.0);
    if (std::abs(s.point[0]) > 25) ++far;
  }
  // area(|x0| > 25) / (box area - two disks of radius 3)
  const double expected = 5000.0 / (10000.0 - 2 * 9 * std::numbers::pi);
  EXPECT_NEAR(static_cast<double>(far) / 10000.0, expected, 0.02);
  EXPECT_EQ(ds.provenance, Provenance::box_ood);
}

TEST(BoxOod, Errors) {
  const auto classes = two_gaussians();
  Box2 small{{-5, 5}, {-5, 5}};
  EXPECT_THROW(sample_box_ood(small, classes, 10, 0), ConfigError);
  // contains both means but is almost entirely inside the exclusion disks
  Box2 tight{{-10.5, 10.5}, {-0.5, 0.5}};
  const std::vector<GaussianClass> near{GaussianClass::isotropic({-1, 0}, 0), GaussianClass::isotropic({1, 0}, 1)};
  Box2 tiny{{-1.5, 1.5}, {-0.5, 0.5}};
  EXPECT_THROW(sample_box_ood(tiny, near, 10, 0), ConfigError);
  EXPECT_NO_THROW(sample_box_ood(tight, classes, 10, 0));
}

TEST(DatasetCsv, RoundTrip) {
  const auto classes = two_gaussians();
  Dataset ds = sample_in_distribution(classes, 20, 1);
  const Dataset ood = sample_box_ood(Box2{}, classes, 20, 2);
  ds.samples.insert(ds.samples.end(), ood.samples.begin(), ood.samples.end());
  const std::string csv = dataset_to_csv(ds);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "x0,x1,label");
  EXPECT_NE(csv.find(",OOD\n"), std::string::npos);
  const Dataset back = dataset_from_csv(csv);
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.samples[i].point, ds.samples[i].point);
    EXPECT_EQ(back.samples[i].label, ds.samples[i].label);
  }
}

TEST(DatasetCsv, Malformed) {
  EXPECT_THROW(dataset_from_csv(""), ParseError);
  EXPECT_THROW(dataset_from_csv("x0,x1\n1,2\n"), ParseError);
  EXPECT_THROW(dataset_from_csv("x0,x1,label\n1,abc,0\n"), ParseError);
  EXPECT_THROW(dataset_from_csv("x0,x1,label\n1,2\n"), ParseError);
  EXPECT_THROW(dataset_from_csv("x0,x1,label\n1,2,dog\n"), ParseError);
  try {
    dataset_from_csv("x0,x1,label\n1,2,0\n3,x,1\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.byte_offset(), 18u);
  }
}

TEST(DatasetCsv, SidecarCarriesProvenanceAndSeed) {
  const auto dir = fs::temp_directory_path() / "farconf_synth_sidecar";
  fs::remove_all(dir);
  const Dataset ds = sample_boundary_ood(two_gaussians(), 30, {3, 5}, 77);
  write_dataset(dir / "b.csv", ds, {{"n", 30}});
  EXPECT_TRUE(fs::exists(dir / "b.meta.json"));
  EXPECT_EQ(sidecar_path(dir / "b.csv"), dir / "b.meta.json");
  const Dataset back = read_dataset(dir / "b.csv");
  EXPECT_EQ(back.provenance, Provenance::boundary_ood);
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.points(), ds.points());
  const auto meta = nlohmann::json::parse(read_file(dir / "b.meta.json"));
  EXPECT_EQ(meta["config"]["n"], 30);
}

TEST(Rng, StreamsAreIndependentAndReproducible) {
  Rng a = Rng::stream(1, "x"), b = Rng::stream(1, "x"), c = Rng::stream(1, "y");
  const auto va = a.next_u64();
  EXPECT_EQ(va, b.next_u64());
  EXPECT_NE(va, c.next_u64());
  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.below(7), 7u);
  }
}

TEST(Rng, SplitMixReferenceValues) {
  // first outputs of SplitMix64 seeded with 0
  Rng r(0);
  EXPECT_EQ(r.next_u64(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(r.next_u64(), 0x6e789e6aa1b965f4ULL);
}
