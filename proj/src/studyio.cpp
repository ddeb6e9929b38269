#include "mscan/studyio.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

namespace mscan {

using json = nlohmann::ordered_json;

namespace {

Eigen::Vector3d vec3_from_json(const json& j, const std::string& key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3)
    fail(ErrorCode::BadManifest, "geometry field '" + key + "' must be a 3-vector");
  return Eigen::Vector3d(j[key][0].get<double>(), j[key][1].get<double>(),
                         j[key][2].get<double>());
}

SliceGeometry geometry_from_json(const json& j) {
  SliceGeometry g;
  g.row_dir = vec3_from_json(j, "row_dir");
  g.col_dir = vec3_from_json(j, "col_dir");
  g.origin = vec3_from_json(j, "origin");
  g.spacing_row = j.at("spacing_row").get<double>();
  g.spacing_col = j.at("spacing_col").get<double>();
  return g;
}

json geometry_to_json(const SliceGeometry& g) {
  json j;
  j["row_dir"] = {g.row_dir.x(), g.row_dir.y(), g.row_dir.z()};
  j["col_dir"] = {g.col_dir.x(), g.col_dir.y(), g.col_dir.z()};
  j["origin"] = {g.origin.x(), g.origin.y(), g.origin.z()};
  j["spacing_row"] = g.spacing_row;
  j["spacing_col"] = g.spacing_col;
  return j;
}

SliceRecord record_from_json(const json& j) {
  SliceRecord r;
  r.index = j.at("index").get<int>();
  r.rows = j.at("rows").get<int>();
  r.cols = j.at("cols").get<int>();
  r.pixel_path = j.at("pixel_path").get<std::string>();
  r.geometry = geometry_from_json(j.at("geometry"));
  r.bit_depth = j.value("bit_depth", 16);
  return r;
}

json record_to_json(const SliceRecord& r) {
  json j;
  j["index"] = r.index;
  j["rows"] = r.rows;
  j["cols"] = r.cols;
  j["pixel_path"] = r.pixel_path;
  j["geometry"] = geometry_to_json(r.geometry);
  j["bit_depth"] = r.bit_depth;
  return j;
}

void validate_series(std::vector<SliceRecord>& series, const std::string& name,
                     const std::filesystem::path& dir) {
  int prev_index = -1;
  for (auto& rec : series) {
    if (rec.rows <= 0 || rec.cols <= 0)
      fail(ErrorCode::BadManifest, name + " slice with non-positive dims");
    if (rec.bit_depth != 16)
      fail(ErrorCode::BadManifest, name + " slice with unsupported bit depth");
    if (rec.index <= prev_index)
      fail(ErrorCode::BadManifest,
           name + " slice indices must strictly increase (" +
               std::to_string(rec.index) + " after " + std::to_string(prev_index) + ")");
    prev_index = rec.index;

    rec.resolved_path = dir / rec.pixel_path;
    std::error_code ec;
    if (!std::filesystem::is_regular_file(rec.resolved_path, ec))
      fail(ErrorCode::MissingFile, rec.resolved_path.string());
    const auto size = std::filesystem::file_size(rec.resolved_path, ec);
    if (ec) fail(ErrorCode::IoError, rec.resolved_path.string());
    const std::uintmax_t expected =
        static_cast<std::uintmax_t>(rec.rows) * rec.cols * 2;
    if (size != expected)
      fail(ErrorCode::ShapeMismatch,
           rec.resolved_path.string() + ": declared " + std::to_string(rec.rows) +
               "x" + std::to_string(rec.cols) + " needs " + std::to_string(expected) +
               " bytes, file has " + std::to_string(size));
    validate_geometry(rec.geometry);
  }
}

}  // namespace

Study load_study(const std::filesystem::path& manifest_path) {
  std::filesystem::path path = manifest_path;
  if (std::filesystem::is_directory(path)) path /= "manifest";
  if (!std::filesystem::is_regular_file(path))
    fail(ErrorCode::MissingFile, path.string());

  std::ifstream in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::BadManifest, path.string() + ": " + e.what());
  }

  Study study;
  study.dir = path.parent_path();
  try {
    study.manifest.study_id = j.at("study_id").get<std::string>();
    study.manifest.series_kind = j.value("series_kind", "");
    for (const auto& rec : j.at("sagittal_slices"))
      study.manifest.sagittal_slices.push_back(record_from_json(rec));
    if (j.contains("axial_slices"))
      for (const auto& rec : j["axial_slices"])
        study.manifest.axial_slices.push_back(record_from_json(rec));
    if (j.contains("labels") && !j["labels"].is_null()) {
      LevelGrades lg;
      const auto& grades = j["labels"].at("grades");
      for (auto it = grades.begin(); it != grades.end(); ++it) {
        const int g = it.value().get<int>();
        if (g < 0 || g > 2)
          fail(ErrorCode::BadLabel, "grade out of range for " + it.key());
        lg.grades[it.key()] = static_cast<Grade>(g);
      }
      if (lg.grades.size() != kNumLevels)
        fail(ErrorCode::MissingLevel,
             "labels must cover exactly 5 levels, got " +
                 std::to_string(lg.grades.size()));
      for (const char* name : kLevelNames)
        if (!lg.grades.count(name))
          fail(ErrorCode::MissingLevel, std::string("missing level ") + name);
      study.manifest.labels = std::move(lg);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::BadManifest, path.string() + ": " + e.what());
  }

  if (study.manifest.sagittal_slices.empty())
    fail(ErrorCode::EmptySeries, "sagittal series is empty");

  validate_series(study.manifest.sagittal_slices, "sagittal", study.dir);
  validate_series(study.manifest.axial_slices, "axial", study.dir);
  return study;
}

Image16 load_pixels(const SliceRecord& record) {
  std::ifstream in(record.resolved_path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + record.resolved_path.string());
  Image16 img(record.rows, record.cols);
  in.read(reinterpret_cast<char*>(img.data()),
          static_cast<std::streamsize>(img.size()) * 2);
  if (in.gcount() != static_cast<std::streamsize>(img.size()) * 2)
    fail(ErrorCode::IoError, "short read on " + record.resolved_path.string());
  return img;
}

void write_pixels(const Image16& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(image.data()),
            static_cast<std::streamsize>(image.size()) * 2);
}

void save_study(const StudyManifest& manifest,
                const std::vector<Image16>& sagittal_pixels,
                const std::vector<Image16>& axial_pixels,
                const std::filesystem::path& dir) {
  if (sagittal_pixels.size() != manifest.sagittal_slices.size() ||
      axial_pixels.size() != manifest.axial_slices.size())
    fail(ErrorCode::ShapeMismatch, "pixel array count does not match manifest");

  std::filesystem::create_directories(dir);
  for (size_t i = 0; i < manifest.sagittal_slices.size(); ++i)
    write_pixels(sagittal_pixels[i], dir / manifest.sagittal_slices[i].pixel_path);
  for (size_t i = 0; i < manifest.axial_slices.size(); ++i)
    write_pixels(axial_pixels[i], dir / manifest.axial_slices[i].pixel_path);

  json j;
  j["study_id"] = manifest.study_id;
  if (!manifest.series_kind.empty()) j["series_kind"] = manifest.series_kind;
  j["sagittal_slices"] = json::array();
  for (const auto& rec : manifest.sagittal_slices)
    j["sagittal_slices"].push_back(record_to_json(rec));
  j["axial_slices"] = json::array();
  for (const auto& rec : manifest.axial_slices)
    j["axial_slices"].push_back(record_to_json(rec));
  if (manifest.labels) {
    json grades;
    for (const char* name : kLevelNames)
      grades[name] = static_cast<int>(manifest.labels->grades.at(name));
    j["labels"] = {{"grades", grades}};
  }

  std::ofstream out(dir / "manifest", std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write manifest under " + dir.string());
  out << j.dump(2) << "\n";
}

std::vector<AxialSlice> Study::axial_geometries() const {
  std::vector<AxialSlice> out;
  out.reserve(manifest.axial_slices.size());
  for (const auto& rec : manifest.axial_slices)
    out.push_back({rec.geometry, rec.rows, rec.cols});
  return out;
}

std::vector<std::filesystem::path> list_studies(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root))
    fail(ErrorCode::MissingFile, root.string() + " is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(root))
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "manifest"))
      out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace mscan
