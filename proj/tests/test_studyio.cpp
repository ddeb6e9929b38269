#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mscan/rng.hpp"
#include "mscan/studyio.hpp"
#include "mscan/synth.hpp"

using namespace mscan;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("mscan_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SliceRecord make_record(int index, int rows, int cols, const std::string& path) {
  SliceRecord rec;
  rec.index = index;
  rec.rows = rows;
  rec.cols = cols;
  rec.pixel_path = path;
  rec.geometry.row_dir = {1, 0, 0};
  rec.geometry.col_dir = {0, 1, 0};
  rec.geometry.origin = {0, 0, 0};
  return rec;
}

StudyManifest two_slice_manifest() {
  StudyManifest m;
  m.study_id = "s1";
  m.series_kind = "T2/STIR";
  m.sagittal_slices = {make_record(0, 4, 4, "sag_0.u16"),
                       make_record(1, 4, 4, "sag_1.u16")};
  return m;
}

}  // namespace

TEST_CASE("load_study accepts a minimal two-slice manifest") {
  const auto dir = temp_dir("studyio_min");
  const StudyManifest m = two_slice_manifest();
  std::vector<Image16> pixels(2, Image16::Zero(4, 4));
  save_study(m, pixels, {}, dir);

  const Study study = load_study(dir);
  CHECK(study.manifest.study_id == "s1");
  CHECK(study.n_sagittal() == 2);
  CHECK(study.n_axial() == 0);
  CHECK(study.manifest.series_kind == "T2/STIR");
  CHECK_FALSE(study.manifest.labels.has_value());
}

TEST_CASE("declared dims must match the pixel file size") {
  const auto dir = temp_dir("studyio_shape");
  StudyManifest m = two_slice_manifest();
  m.sagittal_slices.resize(1);
  std::vector<Image16> pixels(1, Image16::Zero(4, 4));
  save_study(m, pixels, {}, dir);
  // truncate to 30 bytes: 4*4*2 = 32 expected
  fs::resize_file(dir / "sag_0.u16", 30);
  CHECK_THROWS_AS(load_study(dir), Error);
  try {
    load_study(dir);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("missing pixel file and bad geometry raise typed errors") {
  const auto dir = temp_dir("studyio_err");
  StudyManifest m = two_slice_manifest();
  std::vector<Image16> pixels(2, Image16::Zero(4, 4));
  save_study(m, pixels, {}, dir);

  SUBCASE("missing file") {
    fs::remove(dir / "sag_1.u16");
    try {
      load_study(dir);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingFile);
    }
  }
  SUBCASE("non-unit direction cosines") {
    StudyManifest bad = m;
    bad.sagittal_slices[0].geometry.row_dir = {2, 0, 0};
    save_study(bad, pixels, {}, dir);
    try {
      load_study(dir);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadGeometry);
    }
  }
  SUBCASE("labels must cover exactly five levels") {
    StudyManifest bad = m;
    LevelGrades lg;
    lg.grades["L1/L2"] = Grade::NormalMild;
    bad.labels = lg;
    CHECK_THROWS_AS(save_study(bad, pixels, {}, dir), std::exception);
    // write a manifest with four levels by hand
    std::ofstream out(dir / "manifest", std::ios::trunc);
    out << R"({"study_id":"s1","sagittal_slices":[{"index":0,"rows":4,"cols":4,)"
        << R"("pixel_path":"sag_0.u16","geometry":{"row_dir":[1,0,0],"col_dir":[0,1,0],)"
        << R"("origin":[0,0,0],"spacing_row":1.0,"spacing_col":1.0},"bit_depth":16}],)"
        << R"("labels":{"grades":{"L1/L2":0,"L2/L3":1,"L3/L4":2,"L4/L5":0}}})";
    out.close();
    try {
      load_study(dir);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingLevel);
    }
  }
  SUBCASE("slice indices must strictly increase") {
    StudyManifest bad = m;
    bad.sagittal_slices[1].index = 0;
    save_study(bad, pixels, {}, dir);
    try {
      load_study(dir);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadManifest);
    }
  }
}

TEST_CASE("load_pixels decodes row-major little-endian u16") {
  const auto dir = temp_dir("studyio_pixels");
  std::ofstream out(dir / "px.u16", std::ios::binary);
  const unsigned char bytes[8] = {0x01, 0x00, 0x02, 0x00, 0x03, 0x00, 0x04, 0x00};
  out.write(reinterpret_cast<const char*>(bytes), 8);
  out.close();

  SliceRecord rec = make_record(0, 2, 2, "px.u16");
  rec.resolved_path = dir / "px.u16";
  const Image16 img = load_pixels(rec);
  CHECK(img(0, 0) == 1);
  CHECK(img(0, 1) == 2);
  CHECK(img(1, 0) == 3);
  CHECK(img(1, 1) == 4);
}

TEST_CASE("pixel write/read round-trips bit-exactly") {
  const auto dir = temp_dir("studyio_roundtrip");
  Rng rng(7);
  Image16 img(5, 9);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 9; ++c)
      img(r, c) = static_cast<std::uint16_t>(rng.uniform_int(0, 65535));
  write_pixels(img, dir / "px.u16");
  SliceRecord rec = make_record(0, 5, 9, "px.u16");
  rec.resolved_path = dir / "px.u16";
  CHECK(load_pixels(rec) == img);

  SUBCASE("all-zero file decodes to a zero image") {
    write_pixels(Image16::Zero(3, 3), dir / "z.u16");
    SliceRecord zrec = make_record(0, 3, 3, "z.u16");
    zrec.resolved_path = dir / "z.u16";
    CHECK(load_pixels(zrec).isZero());
  }
}

TEST_CASE("save(load(m)) round-trips a generated study field-for-field") {
  const auto dir = temp_dir("studyio_synth_rt");
  synth::SynthParams params;
  params.n_studies = 1;
  params.seed = 3;
  const auto ids = synth::generate(params, dir);
  REQUIRE(ids.size() == 1);

  const Study study = load_study(dir / ids[0]);
  const auto dir2 = temp_dir("studyio_synth_rt2");
  std::vector<Image16> sag, ax;
  for (const auto& rec : study.manifest.sagittal_slices) sag.push_back(load_pixels(rec));
  for (const auto& rec : study.manifest.axial_slices) ax.push_back(load_pixels(rec));
  save_study(study.manifest, sag, ax, dir2 / ids[0]);
  const Study again = load_study(dir2 / ids[0]);

  CHECK(again.manifest.study_id == study.manifest.study_id);
  CHECK(again.manifest.series_kind == study.manifest.series_kind);
  REQUIRE(again.n_sagittal() == study.n_sagittal());
  REQUIRE(again.n_axial() == study.n_axial());
  for (int i = 0; i < study.n_sagittal(); ++i) {
    const auto& a = study.manifest.sagittal_slices[static_cast<size_t>(i)];
    const auto& b = again.manifest.sagittal_slices[static_cast<size_t>(i)];
    CHECK(a.index == b.index);
    CHECK(a.rows == b.rows);
    CHECK(a.cols == b.cols);
    CHECK(a.pixel_path == b.pixel_path);
    CHECK(a.geometry.origin == b.geometry.origin);
    CHECK(a.geometry.row_dir == b.geometry.row_dir);
    CHECK(a.geometry.col_dir == b.geometry.col_dir);
    CHECK(a.geometry.spacing_row == b.geometry.spacing_row);
    CHECK(a.geometry.spacing_col == b.geometry.spacing_col);
  }
  REQUIRE(study.manifest.labels.has_value());
  REQUIRE(again.manifest.labels.has_value());
  CHECK(study.manifest.labels->grades == again.manifest.labels->grades);
}
