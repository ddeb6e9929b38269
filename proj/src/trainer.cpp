#include "mscan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mscan/rng.hpp"
#include "mscan/utils.hpp"

namespace mscan {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

std::string TrainConfig::to_json() const {
  json j;
  j["stage"] = stage;
  j["lr"] = lr;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["split_fraction"] = split_fraction;
  j["class_weights"] = class_weights;
  j["weight_decay"] = weight_decay;
  j["grad_clip"] = grad_clip;
  j["unet_slices_per_study"] = unet_slices_per_study;
  j["heatmap_sigma"] = heatmap_sigma;
  json p;
  p["k_nearest"] = pipeline.k_nearest;
  p["sag_crop"] = pipeline.sag_crop;
  p["ax_crop"] = pipeline.ax_crop;
  p["encoder_input"] = pipeline.encoder_input;
  p["scorer_input"] = pipeline.scorer_input;
  p["canal_input"] = pipeline.canal_input;
  p["clahe_sagittal"] = pipeline.clahe_sagittal;
  p["clahe_axial"] = pipeline.clahe_axial;
  p["clahe_clip_limit"] = pipeline.clahe.clip_limit;
  p["clahe_tiles"] = std::array<int, 2>{pipeline.clahe.tiles_y, pipeline.clahe.tiles_x};
  p["clahe_bins"] = pipeline.clahe.bins;
  j["pipeline"] = p;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig cfg;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::BadConfig, e.what());
  }
  cfg.stage = j.value("stage", cfg.stage);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.split_fraction = j.value("split_fraction", cfg.split_fraction);
  if (j.contains("class_weights"))
    for (int i = 0; i < kNumGrades; ++i) cfg.class_weights[i] = j["class_weights"][i];
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
  cfg.unet_slices_per_study = j.value("unet_slices_per_study", cfg.unet_slices_per_study);
  cfg.heatmap_sigma = j.value("heatmap_sigma", cfg.heatmap_sigma);
  if (j.contains("pipeline")) {
    const auto& p = j["pipeline"];
    cfg.pipeline.k_nearest = p.value("k_nearest", cfg.pipeline.k_nearest);
    cfg.pipeline.sag_crop = p.value("sag_crop", cfg.pipeline.sag_crop);
    cfg.pipeline.ax_crop = p.value("ax_crop", cfg.pipeline.ax_crop);
    cfg.pipeline.encoder_input = p.value("encoder_input", cfg.pipeline.encoder_input);
    cfg.pipeline.scorer_input = p.value("scorer_input", cfg.pipeline.scorer_input);
    cfg.pipeline.canal_input = p.value("canal_input", cfg.pipeline.canal_input);
    cfg.pipeline.clahe_sagittal = p.value("clahe_sagittal", cfg.pipeline.clahe_sagittal);
    cfg.pipeline.clahe_axial = p.value("clahe_axial", cfg.pipeline.clahe_axial);
    cfg.pipeline.clahe.clip_limit = p.value("clahe_clip_limit", cfg.pipeline.clahe.clip_limit);
    if (p.contains("clahe_tiles")) {
      cfg.pipeline.clahe.tiles_y = p["clahe_tiles"][0];
      cfg.pipeline.clahe.tiles_x = p["clahe_tiles"][1];
    }
    cfg.pipeline.clahe.bins = p.value("clahe_bins", cfg.pipeline.clahe.bins);
  }
  if (cfg.split_fraction <= 0.0 || cfg.split_fraction >= 1.0)
    fail(ErrorCode::BadConfig, "split_fraction must lie in (0,1)");
  if (cfg.lr <= 0.0) fail(ErrorCode::BadConfig, "lr must be positive");
  return cfg;
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json(text);
}

// ---------------------------------------------------------------------------
// split + auroc
// ---------------------------------------------------------------------------

std::pair<std::vector<std::string>, std::vector<std::string>> split_studies(
    std::vector<std::string> ids, double fraction, std::uint64_t seed) {
  if (ids.size() < 2) fail(ErrorCode::TooFewStudies, "need at least 2 studies");
  std::sort(ids.begin(), ids.end());
  Rng rng(Rng::mix(seed, 0x5eed));
  for (size_t i = ids.size(); i > 1; --i) {
    const size_t j =
        static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(ids[i - 1], ids[j]);
  }
  size_t n_train = static_cast<size_t>(
      std::floor(fraction * static_cast<double>(ids.size())));
  n_train = std::clamp<size_t>(n_train, 1, ids.size() - 1);
  std::vector<std::string> train(ids.begin(), ids.begin() + static_cast<long>(n_train));
  std::vector<std::string> test(ids.begin() + static_cast<long>(n_train), ids.end());
  return {std::move(train), std::move(test)};
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    fail(ErrorCode::BadShape, "score/label count mismatch");
  const size_t n = scores.size();
  size_t n_pos = 0;
  for (int l : labels) n_pos += (l != 0);
  const size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    fail(ErrorCode::SingleClass, "auroc needs both classes");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // average ranks over tied scores (1-based ranks)
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  for (size_t k = 0; k < n; ++k)
    if (labels[k] != 0) rank_sum_pos += rank[k];
  const double u = rank_sum_pos -
                   static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

MetricsReport metrics_from_scores(const std::vector<ScoreRow>& rows,
                                  const std::array<double, kNumGrades>& w) {
  MetricsReport rep;
  if (rows.empty()) return rep;

  size_t correct = 0, bin_correct = 0;
  double loss = 0.0;
  std::vector<double> bin_scores;
  std::vector<int> bin_labels;
  for (const auto& r : rows) {
    int pred = 0;
    for (int k = 1; k < kNumGrades; ++k)
      if (r.prob[k] > r.prob[pred]) pred = k;
    correct += (pred == r.grade);
    loss += w[static_cast<size_t>(r.grade)] *
            -std::log(std::max(r.prob[static_cast<size_t>(r.grade)], 1e-12));
    const double severe_score = r.prob[1] + r.prob[2];
    bin_scores.push_back(severe_score);
    bin_labels.push_back(r.grade > 0 ? 1 : 0);
    bin_correct += ((severe_score > 0.5) == (r.grade > 0));
  }
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(rows.size());
  rep.wce_loss = loss / static_cast<double>(rows.size());
  rep.binary_accuracy =
      static_cast<double>(bin_correct) / static_cast<double>(rows.size());

  bool bin_ok = false;
  for (size_t q = 1; q < bin_labels.size(); ++q)
    if (bin_labels[q] != bin_labels[0]) bin_ok = true;
  rep.binary_auroc = bin_ok ? auroc(bin_scores, bin_labels) : 0.0;

  // one-vs-rest per class, averaged over classes then levels; combos with a
  // single class present are skipped
  double auc_sum_all = 0.0;
  int auc_n_all = 0;
  for (int lvl = 0; lvl < kNumLevels; ++lvl) {
    size_t lvl_correct = 0, lvl_count = 0;
    double auc_sum = 0.0;
    int auc_n = 0;
    for (int cls = 0; cls < kNumGrades; ++cls) {
      std::vector<double> s;
      std::vector<int> l;
      for (const auto& r : rows) {
        if (r.level != lvl) continue;
        s.push_back(r.prob[static_cast<size_t>(cls)]);
        l.push_back(r.grade == cls ? 1 : 0);
      }
      bool both = false;
      for (size_t q = 1; q < l.size(); ++q)
        if (l[q] != l[0]) both = true;
      if (both) {
        auc_sum += auroc(s, l);
        ++auc_n;
      }
    }
    for (const auto& r : rows) {
      if (r.level != lvl) continue;
      ++lvl_count;
      int pred = 0;
      for (int k = 1; k < kNumGrades; ++k)
        if (r.prob[k] > r.prob[pred]) pred = k;
      lvl_correct += (pred == r.grade);
    }
    rep.per_level[lvl].accuracy =
        lvl_count ? static_cast<double>(lvl_correct) / static_cast<double>(lvl_count) : 0.0;
    rep.per_level[lvl].macro_auroc = auc_n ? auc_sum / auc_n : 0.0;
    auc_sum_all += rep.per_level[lvl].macro_auroc;
    auc_n_all += (auc_n > 0);
  }
  rep.macro_auroc = auc_n_all ? auc_sum_all / auc_n_all : 0.0;
  return rep;
}

EvalResult evaluate(const ModelBundle& bundle,
                    const std::vector<std::filesystem::path>& study_dirs,
                    const std::array<double, kNumGrades>& class_weights) {
  std::vector<std::filesystem::path> dirs = study_dirs;
  std::sort(dirs.begin(), dirs.end());

  struct Slot {
    std::vector<ScoreRow> rows;
    bool skipped = false;
    bool labeled = true;
    std::string error;
  };
  std::vector<Slot> slots(dirs.size());

  const int workers = std::max(1, get_threads());
  const size_t chunk = (dirs.size() + workers - 1) / std::max<size_t>(1, workers);
  std::vector<std::thread> pool;
  for (int wkr = 0; wkr < workers; ++wkr) {
    const size_t lo = wkr * chunk;
    const size_t hi = std::min(dirs.size(), lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi]() {
      ModelBundle local = bundle;  // layer caches are per-thread
      for (size_t i = lo; i < hi; ++i) {
        try {
          const Study study = load_study(dirs[i]);
          if (!study.manifest.labels) {
            slots[i].labeled = false;
            continue;
          }
          const Mat<float> probs = predict_probabilities(local, study);
          for (int j = 0; j < kNumLevels; ++j) {
            ScoreRow row;
            row.study_id = study.manifest.study_id;
            row.level = j;
            for (int k = 0; k < kNumGrades; ++k) row.prob[k] = probs(j, k);
            row.grade = static_cast<int>(study.manifest.labels->at(j));
            slots[i].rows.push_back(row);
          }
        } catch (const Error& e) {
          slots[i].skipped = true;
          slots[i].error = e.what();
        }
      }
    });
  }
  for (auto& t : pool) t.join();

  EvalResult result;
  for (size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].skipped) {
      std::cerr << "skipping " << dirs[i].filename().string() << ": "
                << slots[i].error << "\n";
      ++result.report.n_skipped;
      continue;
    }
    if (!slots[i].labeled) {
      ++result.report.n_skipped;
      continue;
    }
    result.rows.insert(result.rows.end(), slots[i].rows.begin(), slots[i].rows.end());
    ++result.report.n_studies;
  }
  const auto metrics = metrics_from_scores(result.rows, class_weights);
  const int n_studies = result.report.n_studies;
  const int n_skipped = result.report.n_skipped;
  result.report = metrics;
  result.report.n_studies = n_studies;
  result.report.n_skipped = n_skipped;
  return result;
}

// ---------------------------------------------------------------------------
// stage training
// ---------------------------------------------------------------------------

namespace {

std::vector<std::filesystem::path> train_split_dirs(
    const TrainConfig& cfg, const std::filesystem::path& data_root) {
  const auto dirs = list_studies(data_root);
  std::vector<std::string> ids;
  for (const auto& d : dirs) ids.push_back(d.filename().string());
  auto [train_ids, test_ids] = split_studies(ids, cfg.split_fraction, cfg.seed);
  std::sort(train_ids.begin(), train_ids.end());
  std::vector<std::filesystem::path> out;
  for (const auto& id : train_ids) out.push_back(data_root / id);
  return out;
}

FitConfig fit_config(const TrainConfig& cfg) {
  return {cfg.epochs, cfg.batch_size, cfg.lr, cfg.weight_decay, cfg.grad_clip};
}

// Deterministic spread of k slice indices over [0, n).
std::vector<int> spread_indices(int n, int k) {
  std::vector<int> out;
  for (int q = 0; q < k; ++q) {
    const int i = static_cast<int>((q + 0.5) * n / k);
    out.push_back(std::clamp(i, 0, n - 1));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void run_stage1(const TrainConfig& cfg, const std::filesystem::path& data_root,
                const std::filesystem::path& out_dir, ModelBundle& bundle) {
  const auto dirs = train_split_dirs(cfg, data_root);
  std::vector<Mat<float>> unet_images;
  std::vector<KeypointSet> unet_keypoints;
  std::vector<Mat<float>> canal_images;
  std::vector<std::pair<float, float>> canal_targets;
  std::vector<Mat<float>> scorer_images;
  std::vector<std::array<float, kNumLevels>> scorer_targets;

  for (const auto& dir : dirs) {
    const Study study = load_study(dir);
    const auto truth = synth::load_truth(data_root, study.manifest.study_id);

    for (int i : spread_indices(study.n_sagittal(), cfg.unet_slices_per_study)) {
      unet_images.push_back(
          normalize(load_pixels(study.manifest.sagittal_slices[static_cast<size_t>(i)])));
      unet_keypoints.push_back(truth.keypoints);
    }
    for (int i = 0; i < study.n_sagittal(); ++i) {
      const Image16 px =
          load_pixels(study.manifest.sagittal_slices[static_cast<size_t>(i)]);
      scorer_images.push_back(
          scorer_input<float>(px, cfg.pipeline.scorer_input, cfg.pipeline.scorer_input));
      std::array<float, kNumLevels> t{};
      for (int j = 0; j < kNumLevels; ++j) {
        const double d = i - truth.best_sagittal[j];
        t[j] = static_cast<float>(std::exp(-d * d / 8.0));
      }
      scorer_targets.push_back(t);
    }
    for (int j = 0; j < kNumLevels; ++j)
      for (int q = 0; q < kSlicesPerLevel; ++q) {
        const int k = truth.axial_assignment[j][q];
        const auto& rec = study.manifest.axial_slices[static_cast<size_t>(k)];
        canal_images.push_back(canal_input_image(load_pixels(rec), cfg.pipeline.canal_input));
        canal_targets.emplace_back(
            static_cast<float>(truth.axial_canal_center[static_cast<size_t>(k)].row / rec.rows),
            static_cast<float>(truth.axial_canal_center[static_cast<size_t>(k)].col / rec.cols));
      }
  }
  if (unet_images.empty()) fail(ErrorCode::EmptyDataset, "no stage-1 training data");

  Rng rng(Rng::mix(cfg.seed, 1));
  const auto log_unet = train_unet(bundle.unet, unet_images, unet_keypoints,
                                   fit_config(cfg), rng, cfg.heatmap_sigma);
  write_train_log(log_unet, out_dir / "stage1_unet_log.csv");

  Mat<float> targets(static_cast<Eigen::Index>(canal_targets.size()), 2);
  for (size_t i = 0; i < canal_targets.size(); ++i) {
    targets(static_cast<Eigen::Index>(i), 0) = canal_targets[i].first;
    targets(static_cast<Eigen::Index>(i), 1) = canal_targets[i].second;
  }
  Rng rng_c(Rng::mix(cfg.seed, 2));
  const auto log_canal =
      train_canal_center(bundle.canal, canal_images, targets, fit_config(cfg), rng_c);
  write_train_log(log_canal, out_dir / "stage1_canal_log.csv");

  Mat<float> st(static_cast<Eigen::Index>(scorer_targets.size()), kNumLevels);
  for (size_t i = 0; i < scorer_targets.size(); ++i)
    for (int j = 0; j < kNumLevels; ++j)
      st(static_cast<Eigen::Index>(i), j) = scorer_targets[i][j];
  Rng rng_s(Rng::mix(cfg.seed, 3));
  const auto log_scorer =
      train_scorer(bundle.scorer, scorer_images, st, fit_config(cfg), rng_s);
  write_train_log(log_scorer, out_dir / "stage1_scorer_log.csv");
}

void run_stage2(const TrainConfig& cfg, const std::filesystem::path& data_root,
                const std::filesystem::path& out_dir, ModelBundle& bundle) {
  const auto dirs = train_split_dirs(cfg, data_root);
  std::vector<Mat<float>> sag_crops, ax_crops;
  std::vector<int> sag_labels, ax_labels;
  for (const auto& dir : dirs) {
    const Study study = load_study(dir);
    const auto truth = synth::load_truth(data_root, study.manifest.study_id);
    for (int j = 0; j < kNumLevels; ++j) {
      // sagittal crops at the dataset coordinates on the marker slice
      const auto& rec = study.manifest
                            .sagittal_slices[static_cast<size_t>(truth.best_sagittal[j])];
      sag_crops.push_back(prepare_crop(load_pixels(rec), truth.keypoints[j],
                                       cfg.pipeline.sag_crop, cfg.pipeline.clahe_sagittal,
                                       cfg.pipeline.clahe, cfg.pipeline.encoder_input));
      sag_labels.push_back(truth.grades[j]);
      // axial crops at the regressed canal center
      for (int q = 0; q < kSlicesPerLevel; ++q) {
        const int k = truth.axial_assignment[j][q];
        const auto& arec = study.manifest.axial_slices[static_cast<size_t>(k)];
        const Image16 slice = load_pixels(arec);
        const Point2D center =
            predict_canal_center(bundle.canal, slice, cfg.pipeline.canal_input);
        ax_crops.push_back(prepare_crop(slice, center, cfg.pipeline.ax_crop,
                                        cfg.pipeline.clahe_axial, cfg.pipeline.clahe,
                                        cfg.pipeline.encoder_input));
        ax_labels.push_back(truth.grades[j]);
      }
    }
  }
  if (sag_crops.empty()) fail(ErrorCode::EmptyDataset, "no stage-2 training data");

  Vec<float> w(kNumGrades);
  for (int i = 0; i < kNumGrades; ++i) w(i) = static_cast<float>(cfg.class_weights[i]);
  Rng rng_s(Rng::mix(cfg.seed, 4));
  const auto log_s = pretrain_encoder(bundle.encoder_sagittal, sag_crops, sag_labels, w,
                                      fit_config(cfg), rng_s);
  write_train_log(log_s, out_dir / "stage2_sagittal_log.csv");
  Rng rng_a(Rng::mix(cfg.seed, 5));
  const auto log_a = pretrain_encoder(bundle.encoder_axial, ax_crops, ax_labels, w,
                                      fit_config(cfg), rng_a);
  write_train_log(log_a, out_dir / "stage2_axial_log.csv");
}

void run_stage3(const TrainConfig& cfg, const std::filesystem::path& data_root,
                const std::filesystem::path& out_dir, ModelBundle& bundle) {
  const auto dirs = train_split_dirs(cfg, data_root);

  std::vector<FeatureBundle<float>> features(dirs.size());
  std::vector<std::array<int, kNumLevels>> grades(dirs.size());
  std::vector<char> ok(dirs.size(), 0);

  const int workers = std::max(1, get_threads());
  const size_t chunk = (dirs.size() + workers - 1) / std::max<size_t>(1, workers);
  std::vector<std::thread> pool;
  for (int wkr = 0; wkr < workers; ++wkr) {
    const size_t lo = wkr * chunk;
    const size_t hi = std::min(dirs.size(), lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi]() {
      ModelBundle local = bundle;
      for (size_t i = lo; i < hi; ++i) {
        try {
          const Study study = load_study(dirs[i]);
          if (!study.manifest.labels) continue;
          features[i] = extract_features(local, study).bundle;
          for (int j = 0; j < kNumLevels; ++j)
            grades[i][j] = static_cast<int>(study.manifest.labels->at(j));
          ok[i] = 1;
        } catch (const Error&) {
          ok[i] = 0;
        }
      }
    });
  }
  for (auto& t : pool) t.join();

  std::vector<FeatureBundle<float>> kept_features;
  std::vector<std::array<int, kNumLevels>> kept_grades;
  for (size_t i = 0; i < dirs.size(); ++i)
    if (ok[i]) {
      kept_features.push_back(std::move(features[i]));
      kept_grades.push_back(grades[i]);
    }
  if (kept_features.empty()) fail(ErrorCode::EmptyDataset, "no stage-3 training data");

  // frozen encoders: only the fusion net's parameters enter the optimizer
  nn::ParamList<float> enc_params;
  bundle.encoder_sagittal.params(enc_params, "encoder_sagittal");
  bundle.encoder_axial.params(enc_params, "encoder_axial");
  const std::uint64_t enc_hash_before = nn::param_hash(enc_params);

  Vec<float> w(kNumGrades);
  for (int i = 0; i < kNumGrades; ++i) w(i) = static_cast<float>(cfg.class_weights[i]);
  Rng rng(Rng::mix(cfg.seed, 6));
  const auto log =
      train_mscan(bundle.mscan, kept_features, kept_grades, w, fit_config(cfg), rng);
  write_train_log(log, out_dir / "stage3_log.csv");

  if (nn::param_hash(enc_params) != enc_hash_before)
    fail(ErrorCode::BadShape, "frozen encoder parameters changed during stage 3");
}

}  // namespace

void run_stage(const TrainConfig& cfg, const std::filesystem::path& data_root,
               const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  ModelBundle bundle = ModelBundle::make(cfg.pipeline, cfg.seed);
  if (cfg.stage == 1) {
    run_stage1(cfg, data_root, out_dir, bundle);
  } else if (cfg.stage == 2) {
    load_bundle_stage(bundle, 1, out_dir);
    run_stage2(cfg, data_root, out_dir, bundle);
  } else if (cfg.stage == 3) {
    load_bundle_stage(bundle, 2, out_dir);
    run_stage3(cfg, data_root, out_dir, bundle);
  } else {
    fail(ErrorCode::BadConfig, "stage must be 1, 2 or 3");
  }
  save_bundle_stage(bundle, cfg.stage, out_dir, cfg.to_json());
}

// ---------------------------------------------------------------------------
// report/scores/log files (comma-delimited, fixed headers)
// ---------------------------------------------------------------------------

void write_report_csv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << "scope,metric,value\n";
  out << "overall,accuracy," << fmt_num(report.accuracy) << "\n";
  out << "overall,wce_loss," << fmt_num(report.wce_loss) << "\n";
  out << "overall,macro_auroc," << fmt_num(report.macro_auroc) << "\n";
  out << "overall,binary_auroc," << fmt_num(report.binary_auroc) << "\n";
  out << "overall,binary_accuracy," << fmt_num(report.binary_accuracy) << "\n";
  out << "overall,n_studies," << report.n_studies << "\n";
  out << "overall,n_skipped," << report.n_skipped << "\n";
  for (int j = 0; j < kNumLevels; ++j) {
    out << kLevelNames[j] << ",accuracy," << fmt_num(report.per_level[j].accuracy) << "\n";
    out << kLevelNames[j] << ",macro_auroc," << fmt_num(report.per_level[j].macro_auroc)
        << "\n";
  }
}

void write_scores_csv(const std::vector<ScoreRow>& rows,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << "study_id,level,p_normal_mild,p_moderate,p_severe,grade\n";
  for (const auto& r : rows)
    out << r.study_id << "," << kLevelNames[r.level] << "," << fmt_num(r.prob[0]) << ","
        << fmt_num(r.prob[1]) << "," << fmt_num(r.prob[2]) << "," << r.grade << "\n";
}

std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, path.string());
  std::vector<ScoreRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ScoreRow r;
    std::vector<std::string> parts;
    size_t pos = 0;
    while (pos <= line.size()) {
      const size_t comma = line.find(',', pos);
      if (comma == std::string::npos) {
        parts.push_back(line.substr(pos));
        break;
      }
      parts.push_back(line.substr(pos, comma - pos));
      pos = comma + 1;
    }
    if (parts.size() != 6) fail(ErrorCode::IoError, "bad scores row: " + line);
    r.study_id = parts[0];
    r.level = -1;
    for (int j = 0; j < kNumLevels; ++j)
      if (parts[1] == kLevelNames[j]) r.level = j;
    if (r.level < 0) fail(ErrorCode::IoError, "bad level name: " + parts[1]);
    for (int k = 0; k < kNumGrades; ++k) r.prob[k] = std::stod(parts[2 + k]);
    r.grade = std::stoi(parts[5]);
    rows.push_back(r);
  }
  return rows;
}

void write_train_log(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  if (log.accuracy.empty()) {
    out << "epoch,loss\n";
    for (size_t i = 0; i < log.loss.size(); ++i)
      out << i << "," << fmt_num(log.loss[i]) << "\n";
  } else {
    out << "epoch,loss,accuracy\n";
    for (size_t i = 0; i < log.loss.size(); ++i)
      out << i << "," << fmt_num(log.loss[i]) << "," << fmt_num(log.accuracy[i]) << "\n";
  }
}

}  // namespace mscan
