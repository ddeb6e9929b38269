#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "mscan/studyio.hpp"
#include "mscan/types.hpp"

namespace mscan::synth {

// Schematic spine generator. Sagittal slices show a vertical canal band whose
// local width encodes severity plus five disc markers at known rows; axial
// slices show an elliptical canal whose minor axis is the nearest level's
// width. Geometry is constructed so the true level-to-axial-slice assignment
// is recoverable from the metadata alone, and every rendered quantity is
// written to a `truth` sidecar.
struct SynthParams {
  int n_studies = 50;
  int image_size = 64;  // square, both series; must divide by 16
  int n_sagittal_min = 10, n_sagittal_max = 20;
  int n_axial_min = 30, n_axial_max = 60;
  double width_min_mm = 3.0, width_max_mm = 13.0;
  // Severity thresholds; boundary widths map to the milder class.
  double threshold_normal_mm = 8.0;    // width >= 8 -> NormalMild
  double threshold_moderate_mm = 5.0;  // width >= 5 -> Moderate, below -> Severe
  double noise = 0.02;  // additive Gaussian sigma as a fraction of signal amplitude
  std::uint64_t seed = 0;
};

inline Grade grade_for_width(double width_mm, const SynthParams& p = {}) {
  if (width_mm >= p.threshold_normal_mm) return Grade::NormalMild;
  if (width_mm >= p.threshold_moderate_mm) return Grade::Moderate;
  return Grade::Severe;
}

struct StudyTruth {
  std::string study_id;
  std::array<double, kNumLevels> canal_width_mm{};
  std::array<int, kNumLevels> grades{};
  std::array<Point2D, kNumLevels> keypoints{};  // same on every sagittal slice
  std::array<int, kNumLevels> best_sagittal{};  // brightest disc marker slice
  std::array<std::array<int, kSlicesPerLevel>, kNumLevels> axial_assignment{};
  std::array<double, kNumLevels> level_z{};
  std::vector<Point2D> axial_canal_center;  // per axial slice, pixel coords
};

// Renders n_studies study directories under out_root; returns the study ids.
std::vector<std::string> generate(const SynthParams& params,
                                  const std::filesystem::path& out_root);

// Reads the `truth` sidecar of a generated study; throws UnknownStudy when
// the sidecar does not exist.
StudyTruth load_truth(const std::filesystem::path& root, const std::string& study_id);

}  // namespace mscan::synth
