#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mscan/error.hpp"
#include "mscan/geometry.hpp"
#include "mscan/types.hpp"

namespace mscan {

// One slice of a series: raw little-endian u16 pixels in a side file.
struct SliceRecord {
  int index = 0;
  int rows = 0;
  int cols = 0;
  std::string pixel_path;  // relative to the study directory
  SliceGeometry geometry;
  int bit_depth = 16;

  // Absolute path, resolved at load/validation time.
  std::filesystem::path resolved_path;
};

struct LevelGrades {
  std::map<std::string, Grade> grades;  // keys exactly kLevelNames

  Grade at(int level) const { return grades.at(kLevelNames[level]); }
};

struct StudyManifest {
  std::string study_id;
  std::string series_kind;  // free-form protocol tag, e.g. "T2/STIR"
  std::vector<SliceRecord> sagittal_slices;
  std::vector<SliceRecord> axial_slices;
  std::optional<LevelGrades> labels;
};

// A validated study: manifest plus the directory pixels resolve against.
// Immutable after load; safe to share across threads.
struct Study {
  StudyManifest manifest;
  std::filesystem::path dir;

  int n_sagittal() const { return static_cast<int>(manifest.sagittal_slices.size()); }
  int n_axial() const { return static_cast<int>(manifest.axial_slices.size()); }

  std::vector<AxialSlice> axial_geometries() const;
};

// Loads <study_dir>/manifest (or a direct manifest path), validating every
// invariant eagerly: pixel files exist and match rows*cols*2 bytes, direction
// cosines are unit-norm and orthogonal within 1e-6, slice indices strictly
// increase, labels (when present) cover exactly the five levels.
Study load_study(const std::filesystem::path& manifest_path);

// Row-major decode of one slice; pixel (r,c) at byte offset 2*(r*cols+c).
Image16 load_pixels(const SliceRecord& record);

// Writes manifest + pixel files under dir; inverse of load_study.
void save_study(const StudyManifest& manifest,
                const std::vector<Image16>& sagittal_pixels,
                const std::vector<Image16>& axial_pixels,
                const std::filesystem::path& dir);

void write_pixels(const Image16& image, const std::filesystem::path& path);

// All study directories under a dataset root (sorted by study id).
std::vector<std::filesystem::path> list_studies(const std::filesystem::path& root);

}  // namespace mscan
