#include "mscan/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "mscan/studyio.hpp"

namespace mscan {

bool SliceGeometry::valid(double tol) const {
  return std::abs(row_dir.norm() - 1.0) <= tol &&
         std::abs(col_dir.norm() - 1.0) <= tol &&
         std::abs(row_dir.dot(col_dir)) <= tol && spacing_row > 0.0 &&
         spacing_col > 0.0 && row_dir.allFinite() && col_dir.allFinite() &&
         origin.allFinite();
}

void validate_geometry(const SliceGeometry& geom) {
  if (!geom.valid())
    fail(ErrorCode::BadGeometry,
         "direction cosines must be unit-norm, orthogonal (1e-6) with positive spacings");
}

Point3D project_to_3d(const SliceGeometry& geom, const Point2D& p) {
  const Eigen::Vector3d v = geom.origin +
                            p.row * geom.spacing_row * geom.col_dir +
                            p.col * geom.spacing_col * geom.row_dir;
  return {v.x(), v.y(), v.z()};
}

double slice_plane_z(const SliceGeometry& geom, int rows, int cols) {
  return project_to_3d(geom, {rows / 2.0, cols / 2.0}).z;
}

std::vector<int> nearest_axial_slices(double level_z,
                                      const std::vector<AxialSlice>& axial,
                                      int k) {
  if (k < 1) fail(ErrorCode::NotEnoughSlices, "k must be >= 1");
  if (static_cast<int>(axial.size()) < k)
    fail(ErrorCode::NotEnoughSlices,
         "need " + std::to_string(k) + " axial slices, have " +
             std::to_string(axial.size()));

  struct Entry {
    double dist;
    double z;
    int index;
  };
  std::vector<Entry> entries;
  entries.reserve(axial.size());
  for (size_t i = 0; i < axial.size(); ++i) {
    const double z = slice_plane_z(axial[i].geom, axial[i].rows, axial[i].cols);
    entries.push_back({std::abs(z - level_z), z, static_cast<int>(i)});
  }
  // Selection by distance, ties toward the lower slice index.
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    return a.index < b.index;
  });
  entries.resize(k);
  // Output ordering: ascending center z, then index.
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.z != b.z) return a.z < b.z;
    return a.index < b.index;
  });

  std::vector<int> out(k);
  for (int i = 0; i < k; ++i) out[i] = entries[i].index;
  return out;
}

LevelMatchTable match_levels(const Study& study,
                             const std::array<LevelPoint, kNumLevels>& level_points,
                             int k) {
  const auto axial = study.axial_geometries();
  LevelMatchTable table;
  for (int j = 0; j < kNumLevels; ++j) {
    const auto& lp = level_points[j];
    if (lp.sagittal_index < 0 || lp.sagittal_index >= study.n_sagittal())
      fail(ErrorCode::BadShape, "sagittal index out of range for level " +
                                    std::string(kLevelNames[j]));
    const auto& geom =
        study.manifest.sagittal_slices[lp.sagittal_index].geometry;
    const Point3D p = project_to_3d(geom, lp.point);
    table[j] = nearest_axial_slices(p.z, axial, k);
  }
  return table;
}

}  // namespace mscan
