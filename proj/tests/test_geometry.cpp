#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>

#include "mscan/geometry.hpp"
#include "mscan/rng.hpp"
#include "mscan/studyio.hpp"
#include "mscan/synth.hpp"

using namespace mscan;

namespace {

SliceGeometry random_geometry(Rng& rng) {
  SliceGeometry g;
  Eigen::Vector3d a(rng.normal(), rng.normal(), rng.normal());
  while (a.norm() < 1e-3) a = {rng.normal(), rng.normal(), rng.normal()};
  g.row_dir = a.normalized();
  Eigen::Vector3d b(rng.normal(), rng.normal(), rng.normal());
  b -= b.dot(g.row_dir) * g.row_dir;
  while (b.norm() < 1e-3) {
    b = {rng.normal(), rng.normal(), rng.normal()};
    b -= b.dot(g.row_dir) * g.row_dir;
  }
  g.col_dir = b.normalized();
  g.origin = {rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(-100, 100)};
  g.spacing_row = rng.uniform(0.2, 5.0);
  g.spacing_col = rng.uniform(0.2, 5.0);
  return g;
}

// Independent route: the standard 4x4 pixel-to-patient matrix applied to
// homogeneous (col, row, 0, 1).
Point3D homogeneous_oracle(const SliceGeometry& g, const Point2D& p) {
  Eigen::Matrix4d M = Eigen::Matrix4d::Identity();
  M.block<3, 1>(0, 0) = g.row_dir * g.spacing_col;
  M.block<3, 1>(0, 1) = g.col_dir * g.spacing_row;
  M.block<3, 1>(0, 2) = g.row_dir.cross(g.col_dir);
  M.block<3, 1>(0, 3) = g.origin;
  const Eigen::Vector4d v = M * Eigen::Vector4d(p.col, p.row, 0.0, 1.0);
  return {v.x(), v.y(), v.z()};
}

}  // namespace

TEST_CASE("project_to_3d identity orientation") {
  SliceGeometry g;  // row_dir=(1,0,0), col_dir=(0,1,0), origin 0, spacing 1
  const Point3D q = project_to_3d(g, {10, 20});
  CHECK(q.x == doctest::Approx(20.0));
  CHECK(q.y == doctest::Approx(10.0));
  CHECK(q.z == doctest::Approx(0.0));

  SliceGeometry g2 = g;
  g2.origin = {5, -3, 7};
  const Point3D o = project_to_3d(g2, {0, 0});
  CHECK(o.x == doctest::Approx(5.0));
  CHECK(o.y == doctest::Approx(-3.0));
  CHECK(o.z == doctest::Approx(7.0));
}

TEST_CASE("project_to_3d matches the homogeneous-matrix oracle on 1000 cases") {
  Rng rng(42);
  for (int i = 0; i < 1000; ++i) {
    const SliceGeometry g = random_geometry(rng);
    const Point2D p{rng.uniform(-50, 400), rng.uniform(-50, 400)};
    const Point3D a = project_to_3d(g, p);
    const Point3D b = homogeneous_oracle(g, p);
    CHECK(std::abs(a.x - b.x) < 1e-9);
    CHECK(std::abs(a.y - b.y) < 1e-9);
    CHECK(std::abs(a.z - b.z) < 1e-9);
  }
}

TEST_CASE("project_to_3d is affine in the pixel point") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const SliceGeometry g = random_geometry(rng);
    const Point2D p{rng.uniform(0, 100), rng.uniform(0, 100)};
    const Point2D q{rng.uniform(0, 100), rng.uniform(0, 100)};
    const double a = rng.uniform(-1.0, 2.0);
    const double b = 1.0 - a;
    const Point2D mix{a * p.row + b * q.row, a * p.col + b * q.col};
    const Point3D pm = project_to_3d(g, mix);
    const Point3D pp = project_to_3d(g, p);
    const Point3D pq = project_to_3d(g, q);
    CHECK(std::abs(pm.x - (a * pp.x + b * pq.x)) < 1e-9);
    CHECK(std::abs(pm.y - (a * pp.y + b * pq.y)) < 1e-9);
    CHECK(std::abs(pm.z - (a * pp.z + b * pq.z)) < 1e-9);
  }
}

TEST_CASE("slice_plane_z") {
  SUBCASE("axial-style geometry keeps origin z exactly") {
    SliceGeometry g;
    g.origin = {3, 4, 12.5};
    CHECK(slice_plane_z(g, 64, 64) == 12.5);
    g.origin = {0, 0, -4};
    CHECK(slice_plane_z(g, 31, 17) == -4.0);
  }
  SUBCASE("tilted geometry matches center projection") {
    Rng rng(9);
    for (int i = 0; i < 100; ++i) {
      const SliceGeometry g = random_geometry(rng);
      const int rows = static_cast<int>(rng.uniform_int(2, 300));
      const int cols = static_cast<int>(rng.uniform_int(2, 300));
      CHECK(slice_plane_z(g, rows, cols) ==
            doctest::Approx(project_to_3d(g, {rows / 2.0, cols / 2.0}).z));
    }
  }
}

namespace {

std::vector<AxialSlice> axial_stack(const std::vector<double>& zs) {
  std::vector<AxialSlice> out;
  for (double z : zs) {
    AxialSlice s;
    s.geom.origin = {0, 0, z};
    s.rows = s.cols = 16;
    out.push_back(s);
  }
  return out;
}

// Brute force: all index subsets ranked by (distance, index), then z-sorted.
std::vector<int> nearest_oracle(double level_z, const std::vector<double>& zs, int k) {
  std::vector<int> idx(zs.size());
  for (size_t i = 0; i < zs.size(); ++i) idx[i] = static_cast<int>(i);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    const double da = std::abs(zs[static_cast<size_t>(a)] - level_z);
    const double db = std::abs(zs[static_cast<size_t>(b)] - level_z);
    if (da != db) return da < db;
    return a < b;
  });
  idx.resize(static_cast<size_t>(k));
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (zs[static_cast<size_t>(a)] != zs[static_cast<size_t>(b)])
      return zs[static_cast<size_t>(a)] < zs[static_cast<size_t>(b)];
    return a < b;
  });
  return idx;
}

}  // namespace

TEST_CASE("nearest_axial_slices documented tie case") {
  const auto axial = axial_stack({0, 2, 4, 6, 8});
  // distances to 5.0: (5,3,1,1,3); tie between z=2 and z=8 breaks low index
  const auto got = nearest_axial_slices(5.0, axial, 3);
  CHECK(got == std::vector<int>{1, 2, 3});  // z in {2,4,6}, ascending
}

TEST_CASE("nearest_axial_slices forced and error cases") {
  CHECK(nearest_axial_slices(1.0, axial_stack({5, -1, 3}), 3) ==
        std::vector<int>{1, 2, 0});  // all three, ascending z
  CHECK_THROWS_AS(nearest_axial_slices(0.0, axial_stack({1, 2}), 3), Error);
}

TEST_CASE("nearest_axial_slices matches brute force on 1000 cases with ties") {
  Rng rng(11);
  for (int iter = 0; iter < 1000; ++iter) {
    const int n = static_cast<int>(rng.uniform_int(1, 40));
    std::vector<double> zs(static_cast<size_t>(n));
    // quantized z values force frequent exact ties
    for (auto& z : zs) z = 0.5 * rng.uniform_int(-20, 20);
    const int k = static_cast<int>(rng.uniform_int(1, n));
    const double level_z = 0.5 * rng.uniform_int(-20, 20);
    CHECK(nearest_axial_slices(level_z, axial_stack(zs), k) ==
          nearest_oracle(level_z, zs, k));
  }
}

TEST_CASE("nearest_axial_slices selection is stable under input shuffling") {
  Rng rng(13);
  for (int iter = 0; iter < 100; ++iter) {
    const int n = static_cast<int>(rng.uniform_int(3, 30));
    std::vector<double> zs(static_cast<size_t>(n));
    for (auto& z : zs) z = rng.uniform(-30, 30);  // distinct with prob 1
    const double level_z = rng.uniform(-30, 30);
    const auto base = nearest_axial_slices(level_z, axial_stack(zs), 3);
    std::vector<double> base_z;
    for (int i : base) base_z.push_back(zs[static_cast<size_t>(i)]);

    // shuffle and compare the selected z multiset/order
    std::vector<size_t> perm(zs.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1],
                perm[static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    std::vector<double> shuffled(zs.size());
    for (size_t i = 0; i < perm.size(); ++i) shuffled[i] = zs[perm[i]];
    const auto got = nearest_axial_slices(level_z, axial_stack(shuffled), 3);
    std::vector<double> got_z;
    for (int i : got) got_z.push_back(shuffled[static_cast<size_t>(i)]);
    CHECK(got_z == base_z);
  }
}

TEST_CASE("match_levels recovers the generator assignment and handles extremes") {
  const auto dir = std::filesystem::temp_directory_path() / "mscan_test_geom_match";
  std::filesystem::remove_all(dir);
  synth::SynthParams params;
  params.n_studies = 4;
  params.noise = 0.0;
  params.seed = 21;
  const auto ids = synth::generate(params, dir);

  for (const auto& id : ids) {
    const Study study = load_study(dir / id);
    const auto truth = synth::load_truth(dir, id);
    std::array<LevelPoint, kNumLevels> pts;
    for (int j = 0; j < kNumLevels; ++j)
      pts[j] = {truth.best_sagittal[j], truth.keypoints[j]};
    const auto table = match_levels(study, pts, 3);
    for (int j = 0; j < kNumLevels; ++j)
      for (int q = 0; q < 3; ++q) CHECK(table[j][q] == truth.axial_assignment[j][q]);
  }

  SUBCASE("three-slice study selects everything per level") {
    Study study = load_study(dir / ids[0]);
    study.manifest.axial_slices.resize(3);
    std::array<LevelPoint, kNumLevels> pts;
    const auto truth = synth::load_truth(dir, ids[0]);
    for (int j = 0; j < kNumLevels; ++j)
      pts[j] = {truth.best_sagittal[j], truth.keypoints[j]};
    const auto table = match_levels(study, pts, 3);
    for (int j = 0; j < kNumLevels; ++j) {
      std::vector<int> sorted = table[j];
      std::sort(sorted.begin(), sorted.end());
      CHECK(sorted == std::vector<int>{0, 1, 2});
    }
    // 5 levels x k=3 means 15 selections in total
    int total = 0;
    for (const auto& row : table) total += static_cast<int>(row.size());
    CHECK(total == 15);
  }
}
