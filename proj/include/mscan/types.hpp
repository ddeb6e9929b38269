#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <Eigen/Core>

namespace mscan {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Raw pixel data is unsigned 16-bit, row-major.
using Image16 = Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Image = Mat<Scalar>;
using ImageF = Image<float>;

inline constexpr int kNumLevels = 5;
inline constexpr int kNumGrades = 3;
inline constexpr int kSlicesPerLevel = 3;

enum class Grade : int { NormalMild = 0, Moderate = 1, Severe = 2 };

// Intervertebral disc levels, superior to inferior; also the sequence axis.
inline constexpr std::array<const char*, kNumLevels> kLevelNames = {
    "L1/L2", "L2/L3", "L3/L4", "L4/L5", "L5/S1"};

struct Point2D {
  double row = 0.0;
  double col = 0.0;
};

struct Point3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

}  // namespace mscan
