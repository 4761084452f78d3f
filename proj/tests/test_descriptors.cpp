#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "hierloc/descriptors.hpp"
#include "hierloc/synth.hpp"
#include "test_helpers.hpp"

using namespace hierloc;
using test::TempDir;

TEST_SUITE_BEGIN("descriptors");

namespace {

std::vector<Eigen::Vector3d> circle_points(int n, double radius, double z) {
  std::vector<Eigen::Vector3d> pts;
  for (int k = 0; k < n; ++k) {
    const double theta = 2.0 * M_PI * k / n;
    pts.emplace_back(radius * std::cos(theta), radius * std::sin(theta), z);
  }
  return pts;
}

}  // namespace

TEST_CASE("single point: zero covariance block, density term only, unit norm") {
  const std::vector<Eigen::Vector3d> one = {{0.3, 0.4, 0.5}};
  const Eigen::VectorXd f = local_descriptor(one, 2.0);
  REQUIRE(f.size() == kLocalFeatureLength);
  CHECK(f.segment<6>(0).cwiseAbs().maxCoeff() == 0.0);  // shape + normal
  CHECK(f(6) == 0.0);                                   // z stats all zero
  CHECK(f(7) == 0.0);
  CHECK(f(8) == 0.0);
  CHECK(f.segment<8>(10).cwiseAbs().maxCoeff() == 0.0);  // histogram empty
  CHECK(f(9) == doctest::Approx(1.0).epsilon(1e-12));    // the 1/edge^3 term, normalised
  CHECK(f.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("empty input is an error") {
  CHECK_THROWS_AS(local_descriptor(std::vector<Eigen::Vector3d>{}, 1.0), DataError);
}

TEST_CASE("planar circle: planarity maximal, linearity zero") {
  // 100 evenly spaced points on a circle in z=0 have covariance
  // diag(r^2/2, r^2/2, 0): two equal in-plane eigenvalues, zero normal one.
  const auto pts = circle_points(100, 1.0, 0.0);
  const Eigen::VectorXd f = local_descriptor(pts, 4.0);
  const double linearity = f(0), planarity = f(1), sphericity = f(2);
  CHECK(std::abs(linearity) < 1e-6);
  CHECK(planarity > linearity);
  CHECK(planarity > sphericity);
  CHECK(std::abs(sphericity) < 1e-9);
  // The plane normal is +-z; canonicalised to +z.
  CHECK(f.segment<3>(3).normalized().z() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("half-turn about z shifts the histogram by four bins, shape invariant") {
  Rng rng(77);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 60; ++i)
    pts.emplace_back(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(0.0, 0.5));

  std::vector<Eigen::Vector3d> rotated;
  for (const auto& p : pts) rotated.emplace_back(-p.x(), -p.y(), p.z());

  const Eigen::VectorXd a = local_descriptor(pts, 2.0);
  const Eigen::VectorXd b = local_descriptor(rotated, 2.0);

  for (const int i : {0, 1, 2, 6, 7, 8, 9})
    CHECK(std::abs(a(i) - b(i)) < 1e-9);
  for (int k = 0; k < 8; ++k)
    CHECK(std::abs(a(10 + k) - b(10 + (k + 4) % 8)) < 1e-9);
}

TEST_CASE("shape and z statistics are invariant under any z rotation") {
  Rng rng(78);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 40; ++i)
    pts.emplace_back(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(0.0, 1.5));
  const Eigen::VectorXd a = local_descriptor(pts, 2.0);

  for (const double deg : {30.0, 77.0, 191.0}) {
    const Eigen::Matrix3d r = rotation_about_z(deg * M_PI / 180.0);
    std::vector<Eigen::Vector3d> rotated;
    for (const auto& p : pts) rotated.push_back(r * p);
    const Eigen::VectorXd b = local_descriptor(rotated, 2.0);
    for (const int i : {0, 1, 2, 6, 7, 8, 9})
      CHECK(std::abs(a(i) - b(i)) < 1e-9);
  }
}

TEST_CASE("descriptor is permutation invariant") {
  Rng rng(79);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 50; ++i)
    pts.emplace_back(rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0));
  const Eigen::VectorXd a = local_descriptor(pts, 1.0);

  std::vector<Eigen::Vector3d> shuffled = pts;
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);
  const Eigen::VectorXd b = local_descriptor(shuffled, 1.0);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("extract_pyramid on a single-point cloud") {
  PointCloud cloud;
  cloud.points = {{1.0, 2.0, 3.0}};
  const OctreePyramid pyr = build_pyramid(cloud, 4, 3);
  DescriptorConfig cfg;
  const FeaturePyramid feats = extract_pyramid(cloud, pyr, cfg);
  REQUIRE(feats.num_levels() == 3);
  for (const auto& lvl : feats.levels) {
    CHECK(lvl.size() == 1);
    CHECK(lvl.descriptors.row(0).norm() == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(feats.global.size() == 96);
  CHECK(feats.global.norm() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("extraction is deterministic: identical clouds give identical features") {
  const PointCloud cloud = test::random_cloud(31, 1200, 15.0);
  const OctreePyramid pyr = build_pyramid(cloud, 5, 3);
  DescriptorConfig cfg;
  const FeaturePyramid a = extract_pyramid(cloud, pyr, cfg);
  const FeaturePyramid b = extract_pyramid(cloud, pyr, cfg);
  CHECK((a.global - b.global).cwiseAbs().maxCoeff() == 0.0);
  for (int s = 1; s <= 3; ++s)
    CHECK((a.level(s).descriptors - b.level(s).descriptors).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.global.dot(b.global) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("every extracted descriptor is unit norm and |F_s| matches the level") {
  const SceneConfig scene{.seed = 17, .extent = 25.0, .tree_count = 15};
  const PointCloud cloud = synth_scene(scene);
  const OctreePyramid pyr = build_pyramid(cloud, 5, 3);
  const FeaturePyramid feats = extract_pyramid(cloud, pyr, DescriptorConfig{});
  for (int s = 1; s <= 3; ++s) {
    REQUIRE(feats.level(s).size() == pyr.level(s).size());
    for (Eigen::Index i = 0; i < feats.level(s).descriptors.rows(); ++i)
      CHECK(feats.level(s).descriptors.row(i).norm() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("translation invariance after rebuilding at the translated bounds") {
  const PointCloud cloud = test::random_cloud(41, 800, 12.0);
  PointCloud moved = cloud;
  const Eigen::Vector3d t(4.0, -8.0, 16.0);
  for (auto& p : moved.points) p += t;

  DescriptorConfig cfg;
  const OctreePyramid pyr_a = build_pyramid(cloud, 5, 3);
  const OctreePyramid pyr_b = build_pyramid(moved, 5, 3);
  const FeaturePyramid a = extract_pyramid(cloud, pyr_a, cfg);
  const FeaturePyramid b = extract_pyramid(moved, pyr_b, cfg);
  for (int s = 1; s <= 3; ++s) {
    REQUIRE(a.level(s).size() == b.level(s).size());
    CHECK((a.level(s).descriptors - b.level(s).descriptors).cwiseAbs().maxCoeff() < 1e-9);
  }
  CHECK((a.global - b.global).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("global similarity of a scene and its 30-degree z-rotation") {
  // Soft robustness target; measured, not guaranteed. The z-rotation
  // re-grids the octree, so this exercises the whole pooling chain.
  SceneConfig scene{.seed = 17, .extent = 25.0, .tree_count = 15};
  const PointCloud cloud = synth_scene(scene);
  RigidTransform rot;
  rot.rotation = rotation_about_z(30.0 * M_PI / 180.0);
  const PointCloud rotated = apply_transform(cloud, rot);

  DescriptorConfig cfg;
  const FeaturePyramid a = extract_pyramid(cloud, build_pyramid(cloud, 5, 3), cfg);
  const FeaturePyramid b = extract_pyramid(rotated, build_pyramid(rotated, 5, 3), cfg);
  const double cosine = a.global.dot(b.global);
  MESSAGE("30-degree z-rotation global cosine: ", cosine);
  WARN_GE(cosine, 0.9);
  CHECK(cosine > 0.6);
}

TEST_CASE("aggregate_global of identical descriptors is their concatenation") {
  FeaturePyramid feats;
  Rng rng(5);
  Eigen::VectorXd u(16);
  for (int i = 0; i < 16; ++i) u(i) = rng.normal();
  u.normalize();
  for (int s = 0; s < 2; ++s) {
    FeatureLevel lvl;
    lvl.centroids.resize(5, Eigen::Vector3d::Zero());
    lvl.descriptors = u.transpose().replicate(5, 1);
    feats.levels.push_back(lvl);
  }
  const Eigen::VectorXd g = aggregate_global(feats, 3.0);
  REQUIRE(g.size() == 32);
  for (int s = 0; s < 2; ++s)
    CHECK((g.segment(16 * s, 16) - u / std::sqrt(2.0)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("exponent 1 cancels opposite descriptors to a zero block") {
  FeaturePyramid feats;
  Eigen::VectorXd u(8);
  u << 1, 0, 0, 0, 0, 0, 0, 0;
  FeatureLevel cancel;
  cancel.centroids.resize(2, Eigen::Vector3d::Zero());
  cancel.descriptors.resize(2, 8);
  cancel.descriptors.row(0) = u.transpose();
  cancel.descriptors.row(1) = -u.transpose();
  FeatureLevel keep;
  keep.centroids.resize(1, Eigen::Vector3d::Zero());
  keep.descriptors = u.transpose();
  feats.levels = {cancel, keep};

  const Eigen::VectorXd g = aggregate_global(feats, 1.0);
  CHECK(g.head(8).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.tail(8).norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("generalised mean matches an independent reimplementation") {
  Rng rng(19);
  FeaturePyramid feats;
  for (int s = 0; s < 3; ++s) {
    FeatureLevel lvl;
    const int k = 7 + s * 3, d = 12;
    lvl.centroids.resize(static_cast<std::size_t>(k), Eigen::Vector3d::Zero());
    lvl.descriptors.resize(k, d);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < d; ++j) lvl.descriptors(i, j) = rng.normal();
    feats.levels.push_back(lvl);
  }

  const double p = 3.0;
  const Eigen::VectorXd got = aggregate_global(feats, p);

  // Straightforward reimplementation: per level and component, the signed
  // p-mean, concatenated and normalised.
  std::vector<double> expected;
  for (const auto& lvl : feats.levels)
    for (int j = 0; j < lvl.dim(); ++j) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < lvl.descriptors.rows(); ++i) {
        const double x = lvl.descriptors(i, j);
        acc += std::copysign(std::pow(std::abs(x), p), x);
      }
      acc /= static_cast<double>(lvl.descriptors.rows());
      expected.push_back(std::copysign(std::pow(std::abs(acc), 1.0 / p), acc));
    }
  double norm = 0.0;
  for (const double v : expected) norm += v * v;
  norm = std::sqrt(norm);

  REQUIRE(got.size() == static_cast<Eigen::Index>(expected.size()));
  for (Eigen::Index i = 0; i < got.size(); ++i)
    CHECK(std::abs(got(i) - expected[static_cast<std::size_t>(i)] / norm) < 1e-9);
}

TEST_CASE("mismatched cloud and pyramid is rejected") {
  const PointCloud cloud = test::random_cloud(1, 100);
  const OctreePyramid pyr = build_pyramid(cloud, 5, 3);
  const PointCloud other = test::random_cloud(2, 99);
  CHECK_THROWS_AS(extract_pyramid(other, pyr, DescriptorConfig{}), InvalidArgument);
}

TEST_CASE("bundle container round trip is bit exact") {
  const PointCloud cloud = test::random_cloud(51, 900, 14.0);
  PyramidBundle bundle;
  bundle.pyramid = build_pyramid(cloud, 5, 3);
  bundle.features = extract_pyramid(cloud, bundle.pyramid, DescriptorConfig{});

  TempDir dir("bundle");
  const auto file = dir.path() / "cloud.feat";
  save_bundle(bundle, file);
  const PyramidBundle loaded = load_bundle(file);

  CHECK(loaded.pyramid.depth_finest == bundle.pyramid.depth_finest);
  CHECK(loaded.pyramid.bounds.edge == bundle.pyramid.bounds.edge);
  CHECK(loaded.pyramid.bounds.min == bundle.pyramid.bounds.min);
  REQUIRE(loaded.features.num_levels() == bundle.features.num_levels());
  for (int s = 1; s <= 3; ++s) {
    CHECK(loaded.pyramid.level(s).keys == bundle.pyramid.level(s).keys);
    CHECK(loaded.pyramid.level(s).counts == bundle.pyramid.level(s).counts);
    CHECK((loaded.features.level(s).descriptors - bundle.features.level(s).descriptors)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    for (std::size_t i = 0; i < bundle.features.level(s).size(); ++i)
      CHECK(loaded.features.level(s).centroids[i] == bundle.features.level(s).centroids[i]);
  }
  CHECK((loaded.features.global - bundle.features.global).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("corrupt container magic is a parse error") {
  TempDir dir("magic");
  const auto file = dir.path() / "bad.feat";
  std::ofstream(file) << "not a container";
  CHECK_THROWS_AS(load_bundle(file), ParseError);
}

TEST_SUITE_END();
