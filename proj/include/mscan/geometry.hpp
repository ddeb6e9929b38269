#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mscan/error.hpp"
#include "mscan/types.hpp"

namespace mscan {

// Patient-space slice placement, DICOM convention: row_dir is the direction of
// increasing column index, col_dir of increasing row index, origin the
// position of pixel (0,0) in mm.
struct SliceGeometry {
  Eigen::Vector3d row_dir = Eigen::Vector3d::UnitX();
  Eigen::Vector3d col_dir = Eigen::Vector3d::UnitY();
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  double spacing_row = 1.0;  // mm per row step
  double spacing_col = 1.0;  // mm per column step

  bool valid(double tol = 1e-6) const;
};

// Throws BadGeometry when direction cosines are not unit-norm/orthogonal
// within 1e-6 or spacings are not positive.
void validate_geometry(const SliceGeometry& geom);

// Pixel-to-patient affine: origin + row*spacing_row*col_dir + col*spacing_col*row_dir.
Point3D project_to_3d(const SliceGeometry& geom, const Point2D& p);

// Z-coordinate of the slice center, i.e. project_to_3d at (rows/2, cols/2).
double slice_plane_z(const SliceGeometry& geom, int rows, int cols);

struct AxialSlice {
  SliceGeometry geom;
  int rows = 0;
  int cols = 0;
};

// Indices of the k axial slices whose center z is closest to level_z.
// Ties break toward the lower slice index; the result is sorted by ascending
// center z (then index). Throws NotEnoughSlices when fewer than k slices.
std::vector<int> nearest_axial_slices(double level_z,
                                      const std::vector<AxialSlice>& axial,
                                      int k);

struct Study;  // studyio.hpp

// A 2D level point together with the sagittal slice it lives on.
struct LevelPoint {
  int sagittal_index = 0;
  Point2D point;
};

using LevelMatchTable = std::array<std::vector<int>, kNumLevels>;

// Projects each level point through its sagittal slice geometry and matches
// the k nearest axial slices by center-z distance.
LevelMatchTable match_levels(const Study& study,
                             const std::array<LevelPoint, kNumLevels>& level_points,
                             int k = kSlicesPerLevel);

}  // namespace mscan
