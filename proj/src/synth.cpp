#include "mscan/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mscan/geometry.hpp"
#include "mscan/rng.hpp"

namespace mscan::synth {

using json = nlohmann::ordered_json;

namespace {

constexpr double kAxialGapMm = 2.0;   // slice spacing along z
constexpr int kLevelStride = 6;       // level spacing = 6 axial gaps
constexpr double kAmpCanal = 2500.0;
constexpr double kAmpDisc = 2800.0;
constexpr double kAmpNode = 2200.0;
constexpr double kAmpBody = 800.0;
constexpr double kBackground = 300.0;

double sig_edge(double d, double softness) { return 1.0 / (1.0 + std::exp(d / softness)); }

std::uint16_t to_u16(double v) {
  return static_cast<std::uint16_t>(std::clamp(v + 0.5, 0.0, 65535.0));
}

std::string study_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "study_%04d", index);
  return buf;
}

struct StudyPlan {
  int n_sag = 0, n_ax = 0;
  double canal_col = 0;                        // sagittal canal column
  std::array<double, kNumLevels> width{};      // mm
  std::array<double, kNumLevels> row{};        // keypoint rows
  std::array<double, kNumLevels> z{};          // level z in mm
  std::array<int, kNumLevels> best_slice{};    // brightest marker slice
  double z_lo = 0, z_sag0 = 0;
  std::vector<double> axial_z;
  std::vector<Point2D> axial_center;           // canal center per axial slice
  double noise_sigma = 0;
};

StudyPlan plan_study(const SynthParams& p, Rng& rng) {
  StudyPlan plan;
  const double s = p.image_size / 64.0;
  plan.n_sag = static_cast<int>(rng.uniform_int(p.n_sagittal_min, p.n_sagittal_max));
  plan.n_ax = static_cast<int>(rng.uniform_int(p.n_axial_min, p.n_axial_max));
  plan.noise_sigma = p.noise * 3000.0;

  // Axial grid ascending in z with the level anchors sitting near slice
  // centers: level j lives kLevelStride slices above level j+1.
  const int span = 4 * kLevelStride;
  const int m_lo = static_cast<int>(rng.uniform_int(2, plan.n_ax - span - 3));
  plan.z_lo = rng.uniform(-40.0, 40.0);
  plan.axial_z.resize(plan.n_ax);
  for (int k = 0; k < plan.n_ax; ++k)
    plan.axial_z[k] = plan.z_lo + k * kAxialGapMm * s;

  const double row_offset = rng.uniform(-3.0, 3.0) * s;
  plan.z_sag0 = plan.z_lo + (m_lo + span) * kAxialGapMm * s + (8.0 + row_offset) * s;
  for (int j = 0; j < kNumLevels; ++j) {
    const double jitter = rng.uniform(-0.3, 0.3);
    plan.z[j] = plan.z_lo + (m_lo + (4 - j) * kLevelStride) * kAxialGapMm * s + jitter;
    plan.row[j] = plan.z_sag0 - plan.z[j];
    plan.width[j] = rng.uniform(p.width_min_mm, p.width_max_mm);
    const int mid = plan.n_sag / 2;
    plan.best_slice[j] = std::clamp(
        static_cast<int>(mid + rng.uniform_int(-2, 2)), 1, plan.n_sag - 2);
  }
  plan.canal_col = (32.0 + rng.uniform(-4.0, 4.0)) * s;

  const double base_r = (30.0 + rng.uniform(-3.0, 3.0)) * s;
  const double base_c = (32.0 + rng.uniform(-3.0, 3.0)) * s;
  plan.axial_center.resize(plan.n_ax);
  for (int k = 0; k < plan.n_ax; ++k)
    plan.axial_center[k] = {base_r + rng.uniform(-1.5, 1.5),
                            base_c + rng.uniform(-1.5, 1.5)};
  return plan;
}

// Linear interpolation of level widths along the row axis, clamped at ends.
double width_at_row(const StudyPlan& plan, double r) {
  if (r <= plan.row[0]) return plan.width[0];
  if (r >= plan.row[kNumLevels - 1]) return plan.width[kNumLevels - 1];
  for (int j = 0; j < kNumLevels - 1; ++j)
    if (r >= plan.row[j] && r <= plan.row[j + 1]) {
      const double t = (r - plan.row[j]) / (plan.row[j + 1] - plan.row[j]);
      return (1 - t) * plan.width[j] + t * plan.width[j + 1];
    }
  return plan.width[kNumLevels - 1];
}

Image16 render_sagittal(const SynthParams& p, const StudyPlan& plan, int slice,
                        Rng& rng) {
  const int n = p.image_size;
  Image16 img(n, n);
  for (int r = 0; r < n; ++r) {
    const double hw = width_at_row(plan, r) / 2.0;
    for (int c = 0; c < n; ++c) {
      double v = kBackground;
      v += kAmpCanal * sig_edge(std::abs(c - plan.canal_col) - hw, 0.5);
      for (int j = 0; j < kNumLevels; ++j) {
        const double vis =
            0.45 + 0.55 * std::exp(-0.125 * (slice - plan.best_slice[j]) *
                                   (slice - plan.best_slice[j]));
        const double dr = r - plan.row[j];
        const double row_prof = std::exp(-dr * dr / (2.0 * 1.5 * 1.5));
        // disc marker bar anterior to the canal
        const double bar_lo = plan.canal_col - 12.0, bar_hi = plan.canal_col - 4.0;
        const double bar =
            sig_edge(bar_lo - c, 0.7) * sig_edge(c - bar_hi, 0.7) * row_prof;
        v += kAmpDisc * vis * bar;
        // bright node at the keypoint itself
        const double dc = c - plan.canal_col;
        v += kAmpNode * vis * row_prof * std::exp(-dc * dc / (2.0 * 1.5 * 1.5));
      }
      if (plan.noise_sigma > 0) v += rng.normal(0.0, plan.noise_sigma);
      img(r, c) = to_u16(v);
    }
  }
  return img;
}

Image16 render_axial(const SynthParams& p, const StudyPlan& plan, int slice, Rng& rng) {
  const int n = p.image_size;
  const double s = p.image_size / 64.0;
  // width follows the nearest level in z
  int nearest = 0;
  for (int j = 1; j < kNumLevels; ++j)
    if (std::abs(plan.axial_z[slice] - plan.z[j]) <
        std::abs(plan.axial_z[slice] - plan.z[nearest]))
      nearest = j;
  const double rc = plan.width[nearest] / 2.0;  // horizontal (minor) radius, px
  const double rr = 5.0;                        // vertical radius, px
  const Point2D center = plan.axial_center[slice];

  Image16 img(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double v = kBackground;
      const double dbr = (r - (center.row + 12.0 * s)) / (10.0 * s);
      const double dbc = (c - center.col) / (16.0 * s);
      v += kAmpBody * sig_edge(std::sqrt(dbr * dbr + dbc * dbc) - 1.0, 0.1);
      const double dr = (r - center.row) / rr;
      const double dc = (c - center.col) / rc;
      // edge softness ~1px along the minor axis so the graded width stays crisp
      const double q = std::sqrt(dr * dr + dc * dc);
      v += kAmpCanal * sig_edge((q - 1.0) * std::min(rr, rc), 0.5);
      if (plan.noise_sigma > 0) v += rng.normal(0.0, plan.noise_sigma);
      img(r, c) = to_u16(v);
    }
  return img;
}

json truth_to_json(const StudyTruth& t) {
  json j;
  j["study_id"] = t.study_id;
  j["canal_width_mm"] = t.canal_width_mm;
  j["grades"] = t.grades;
  json kps = json::array();
  for (const auto& kp : t.keypoints) kps.push_back({kp.row, kp.col});
  j["keypoints"] = kps;
  j["best_sagittal"] = t.best_sagittal;
  j["axial_assignment"] = t.axial_assignment;
  j["level_z"] = t.level_z;
  json centers = json::array();
  for (const auto& c : t.axial_canal_center) centers.push_back({c.row, c.col});
  j["axial_canal_center"] = centers;
  return j;
}

}  // namespace

std::vector<std::string> generate(const SynthParams& params,
                                  const std::filesystem::path& out_root) {
  if (params.image_size % 16 != 0 || params.image_size < 32)
    fail(ErrorCode::BadConfig, "image_size must be >= 32 and divide by 16");
  if (params.n_axial_min < 4 * kLevelStride + 5)
    fail(ErrorCode::BadConfig, "n_axial_min too small to span five levels");
  if (params.threshold_normal_mm <= params.threshold_moderate_mm)
    fail(ErrorCode::BadConfig, "severity thresholds must strictly decrease");

  std::filesystem::create_directories(out_root);
  std::vector<std::string> ids;
  for (int idx = 0; idx < params.n_studies; ++idx) {
    Rng rng(Rng::mix(params.seed, static_cast<std::uint64_t>(idx)));
    const StudyPlan plan = plan_study(params, rng);
    const std::string id = study_name(idx);
    const double s = params.image_size / 64.0;

    StudyManifest manifest;
    manifest.study_id = id;
    manifest.series_kind = "T2/STIR";

    std::vector<Image16> sag_pixels, ax_pixels;
    for (int i = 0; i < plan.n_sag; ++i) {
      SliceRecord rec;
      rec.index = i;
      rec.rows = rec.cols = params.image_size;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "sag_%03d.u16", i);
      rec.pixel_path = buf;
      rec.geometry.row_dir = {0, 1, 0};
      rec.geometry.col_dir = {0, 0, -1};
      rec.geometry.origin = {-10.0 + i * 1.0, -32.0 * s, plan.z_sag0};
      rec.geometry.spacing_row = 1.0;
      rec.geometry.spacing_col = 1.0;
      manifest.sagittal_slices.push_back(rec);
      sag_pixels.push_back(render_sagittal(params, plan, i, rng));
    }
    for (int k = 0; k < plan.n_ax; ++k) {
      SliceRecord rec;
      rec.index = k;
      rec.rows = rec.cols = params.image_size;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "ax_%03d.u16", k);
      rec.pixel_path = buf;
      rec.geometry.row_dir = {1, 0, 0};
      rec.geometry.col_dir = {0, 1, 0};
      rec.geometry.origin = {-32.0 * s, -32.0 * s, plan.axial_z[k]};
      rec.geometry.spacing_row = 1.0;
      rec.geometry.spacing_col = 1.0;
      manifest.axial_slices.push_back(rec);
      ax_pixels.push_back(render_axial(params, plan, k, rng));
    }

    LevelGrades grades;
    StudyTruth truth;
    truth.study_id = id;
    std::vector<AxialSlice> axials;
    for (const auto& rec : manifest.axial_slices)
      axials.push_back({rec.geometry, rec.rows, rec.cols});
    for (int j = 0; j < kNumLevels; ++j) {
      truth.canal_width_mm[j] = plan.width[j];
      truth.grades[j] = static_cast<int>(grade_for_width(plan.width[j], params));
      grades.grades[kLevelNames[j]] = grade_for_width(plan.width[j], params);
      truth.keypoints[j] = {plan.row[j], plan.canal_col};
      truth.best_sagittal[j] = plan.best_slice[j];
      truth.level_z[j] = plan.z[j];
      const auto nearest = nearest_axial_slices(plan.z[j], axials, kSlicesPerLevel);
      for (int q = 0; q < kSlicesPerLevel; ++q) truth.axial_assignment[j][q] = nearest[q];
    }
    truth.axial_canal_center = plan.axial_center;
    manifest.labels = grades;

    const auto dir = out_root / id;
    save_study(manifest, sag_pixels, ax_pixels, dir);
    std::ofstream out(dir / "truth", std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write truth sidecar for " + id);
    out << truth_to_json(truth).dump(2) << "\n";
    ids.push_back(id);
  }
  return ids;
}

StudyTruth load_truth(const std::filesystem::path& root, const std::string& study_id) {
  const auto path = root / study_id / "truth";
  std::ifstream in(path);
  if (!in) fail(ErrorCode::UnknownStudy, study_id + " has no truth sidecar");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::IoError, path.string() + ": " + e.what());
  }
  StudyTruth t;
  t.study_id = j.at("study_id").get<std::string>();
  for (int i = 0; i < kNumLevels; ++i) {
    t.canal_width_mm[i] = j.at("canal_width_mm")[i].get<double>();
    t.grades[i] = j.at("grades")[i].get<int>();
    t.keypoints[i] = {j.at("keypoints")[i][0].get<double>(),
                      j.at("keypoints")[i][1].get<double>()};
    t.best_sagittal[i] = j.at("best_sagittal")[i].get<int>();
    t.level_z[i] = j.at("level_z")[i].get<double>();
    for (int q = 0; q < kSlicesPerLevel; ++q)
      t.axial_assignment[i][q] = j.at("axial_assignment")[i][q].get<int>();
  }
  for (const auto& c : j.at("axial_canal_center"))
    t.axial_canal_center.push_back({c[0].get<double>(), c[1].get<double>()});
  return t;
}

}  // namespace mscan::synth
