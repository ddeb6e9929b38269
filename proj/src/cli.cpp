#include "mscan/cli.hpp"

#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "mscan/plot.hpp"
#include "mscan/synth.hpp"
#include "mscan/trainer.hpp"
#include "mscan/utils.hpp"

namespace mscan {

namespace {

std::string level_file_tag(int level) {
  std::string s = kLevelNames[level];
  s.erase(std::remove(s.begin(), s.end(), '/'), s.end());
  return s;
}

std::vector<std::vector<std::string>> read_delimited(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
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
    rows.push_back(parts);
  }
  return rows;
}

bool is_number(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

Study load_study_by_id(const std::string& data_root, const std::string& study_id) {
  return load_study(std::filesystem::path(data_root) / study_id);
}

std::array<LevelPoint, kNumLevels> truth_level_points(
    const std::string& data_root, const synth::StudyTruth& truth) {
  std::array<LevelPoint, kNumLevels> pts;
  for (int j = 0; j < kNumLevels; ++j)
    pts[j] = {truth.best_sagittal[j], truth.keypoints[j]};
  return pts;
}

struct CommonTrainOpts {
  std::string config_path;
  std::string data_root;
  std::string out_dir;
  std::int64_t seed = -1;
  int epochs = -1;
  double lr = -1.0;
  int batch_size = -1;
  double split_fraction = -1.0;

  TrainConfig resolve(int stage = 0) const {
    TrainConfig cfg;
    if (!config_path.empty()) cfg = TrainConfig::from_file(config_path);
    if (stage > 0) cfg.stage = stage;
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (epochs >= 0) cfg.epochs = epochs;
    if (lr > 0) cfg.lr = lr;
    if (batch_size > 0) cfg.batch_size = batch_size;
    if (split_fraction > 0) cfg.split_fraction = split_fraction;
    return cfg;
  }
};

int cmd_synth(const std::string& out, int n, std::int64_t seed, int image_size,
              double noise) {
  synth::SynthParams params;
  params.n_studies = n;
  params.seed = static_cast<std::uint64_t>(seed);
  params.image_size = image_size;
  params.noise = noise;
  const auto ids = synth::generate(params, out);
  std::cout << "generated " << ids.size() << " studies under " << out << "\n";
  return 0;
}

int cmd_validate(const std::string& data_root, const std::string& study_id) {
  std::vector<std::filesystem::path> dirs;
  if (!study_id.empty())
    dirs.push_back(std::filesystem::path(data_root) / study_id);
  else
    dirs = list_studies(data_root);
  int failures = 0;
  for (const auto& dir : dirs) {
    try {
      const Study s = load_study(dir);
      std::cout << s.manifest.study_id << ",ok," << s.n_sagittal() << " sagittal,"
                << s.n_axial() << " axial\n";
    } catch (const Error& e) {
      std::cout << dir.filename().string() << ",error," << e.what() << "\n";
      ++failures;
    }
  }
  if (failures > 0) fail(ErrorCode::BadManifest, std::to_string(failures) + " studies failed validation");
  return 0;
}

int cmd_project(const std::string& data_root, const std::string& study_id,
                const std::string& series, const std::string& points_path) {
  const Study study = load_study_by_id(data_root, study_id);
  const auto& slices = series == "axial" ? study.manifest.axial_slices
                                         : study.manifest.sagittal_slices;
  if (slices.empty()) fail(ErrorCode::EmptySeries, series + " series is empty");
  std::cout << "slice,row,col,x,y,z\n";
  for (const auto& parts : read_delimited(points_path)) {
    if (parts.size() != 3 || !is_number(parts[0])) continue;  // header or junk
    const int idx = std::stoi(parts[0]);
    if (idx < 0 || idx >= static_cast<int>(slices.size()))
      fail(ErrorCode::BadShape, "slice index out of range: " + parts[0]);
    const Point2D p{std::stod(parts[1]), std::stod(parts[2])};
    const Point3D q = project_to_3d(slices[static_cast<size_t>(idx)].geometry, p);
    std::cout << idx << "," << fmt_num(p.row) << "," << fmt_num(p.col) << ","
              << fmt_num(q.x) << "," << fmt_num(q.y) << "," << fmt_num(q.z) << "\n";
  }
  return 0;
}

int cmd_match(const std::string& data_root, const std::string& study_id,
              const std::string& points_path, bool use_truth, int k) {
  const Study study = load_study_by_id(data_root, study_id);
  std::array<LevelPoint, kNumLevels> pts;
  if (use_truth) {
    pts = truth_level_points(data_root, synth::load_truth(data_root, study_id));
  } else {
    if (points_path.empty())
      fail(ErrorCode::BadConfig, "match needs --points or --truth");
    int filled = 0;
    for (const auto& parts : read_delimited(points_path)) {
      if (parts.size() != 4 || !is_number(parts[0])) continue;
      const int level = std::stoi(parts[0]);
      if (level < 0 || level >= kNumLevels)
        fail(ErrorCode::BadShape, "level out of range: " + parts[0]);
      pts[static_cast<size_t>(level)] = {std::stoi(parts[1]),
                                         {std::stod(parts[2]), std::stod(parts[3])}};
      ++filled;
    }
    if (filled != kNumLevels)
      fail(ErrorCode::BadShape, "need one point per level (5 rows)");
  }
  const auto table = match_levels(study, pts, k);
  std::cout << "level";
  for (int q = 0; q < k; ++q) std::cout << ",axial_" << q;
  std::cout << "\n";
  for (int j = 0; j < kNumLevels; ++j) {
    std::cout << kLevelNames[j];
    for (int q = 0; q < k; ++q) std::cout << "," << table[j][q];
    std::cout << "\n";
  }
  return 0;
}

int cmd_select(const std::string& data_root, const std::string& study_id,
               const std::string& ckpt_dir) {
  const Study study = load_study_by_id(data_root, study_id);
  TrainConfig cfg;
  ModelBundle bundle = ModelBundle::make(cfg.pipeline, cfg.seed);
  load_bundle_stage(bundle, 1, ckpt_dir);
  const LevelProbabilityMatrix P = score_slices(bundle.scorer, study);
  std::cout << "slice,p_l1l2,p_l2l3,p_l3l4,p_l4l5,p_l5s1\n";
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    std::cout << i;
    for (int j = 0; j < kNumLevels; ++j) std::cout << "," << fmt_num(P(i, j));
    std::cout << "\n";
  }
  const auto sel = select_slices(P);
  std::cout << "selected";
  for (int j = 0; j < kNumLevels; ++j) std::cout << "," << sel[j];
  std::cout << "\n";
  return 0;
}

int cmd_preprocess(const std::string& data_root, const std::string& study_id,
                   const std::string& out_dir, bool use_truth,
                   const std::string& ckpt_dir) {
  const Study study = load_study_by_id(data_root, study_id);
  TrainConfig cfg;
  std::filesystem::create_directories(out_dir);
  std::ofstream index(std::filesystem::path(out_dir) / "crops.csv", std::ios::trunc);
  index << "file,series,level,slice,center_row,center_col\n";

  auto emit = [&](const Image16& img, const std::string& name, const char* series,
                  int level, int slice, const Point2D& center) {
    write_pixels(img, std::filesystem::path(out_dir) / name);
    index << name << "," << series << "," << kLevelNames[level] << "," << slice << ","
          << fmt_num(center.row) << "," << fmt_num(center.col) << "\n";
  };

  if (use_truth) {
    const auto truth = synth::load_truth(data_root, study_id);
    for (int j = 0; j < kNumLevels; ++j) {
      const int si = truth.best_sagittal[j];
      const auto& rec = study.manifest.sagittal_slices[static_cast<size_t>(si)];
      CropSpec spec{truth.keypoints[j], cfg.pipeline.sag_crop, cfg.pipeline.sag_crop, 0};
      Image16 c = crop(load_pixels(rec), spec);
      if (cfg.pipeline.clahe_sagittal) c = clahe(c, cfg.pipeline.clahe);
      emit(c, "sag_" + level_file_tag(j) + ".u16", "sagittal", j, si, truth.keypoints[j]);
      for (int q = 0; q < kSlicesPerLevel; ++q) {
        const int k = truth.axial_assignment[j][q];
        const auto& arec = study.manifest.axial_slices[static_cast<size_t>(k)];
        const Point2D center = truth.axial_canal_center[static_cast<size_t>(k)];
        CropSpec aspec{center, cfg.pipeline.ax_crop, cfg.pipeline.ax_crop, 0};
        Image16 ac = crop(load_pixels(arec), aspec);
        if (cfg.pipeline.clahe_axial) ac = clahe(ac, cfg.pipeline.clahe);
        emit(ac, "ax_" + level_file_tag(j) + "_" + std::to_string(q) + ".u16", "axial",
             j, k, center);
      }
    }
  } else {
    if (ckpt_dir.empty()) fail(ErrorCode::BadConfig, "preprocess needs --truth or --ckpt");
    ModelBundle bundle = ModelBundle::make(cfg.pipeline, cfg.seed);
    load_bundle_stage(bundle, 2, ckpt_dir);
    const StudyFeatures feats = extract_features(bundle, study);
    for (int j = 0; j < kNumLevels; ++j) {
      const int si = feats.selected_sagittal[j];
      const auto& rec = study.manifest.sagittal_slices[static_cast<size_t>(si)];
      CropSpec spec{feats.keypoints[j], cfg.pipeline.sag_crop, cfg.pipeline.sag_crop, 0};
      Image16 c = crop(load_pixels(rec), spec);
      if (cfg.pipeline.clahe_sagittal) c = clahe(c, cfg.pipeline.clahe);
      emit(c, "sag_" + level_file_tag(j) + ".u16", "sagittal", j, si, feats.keypoints[j]);
      for (int q = 0; q < kSlicesPerLevel; ++q) {
        const int k = feats.matches[j][q];
        const auto& arec = study.manifest.axial_slices[static_cast<size_t>(k)];
        const Image16 slice = load_pixels(arec);
        const Point2D center =
            predict_canal_center(bundle.canal, slice, cfg.pipeline.canal_input);
        CropSpec aspec{center, cfg.pipeline.ax_crop, cfg.pipeline.ax_crop, 0};
        Image16 ac = crop(slice, aspec);
        if (cfg.pipeline.clahe_axial) ac = clahe(ac, cfg.pipeline.clahe);
        emit(ac, "ax_" + level_file_tag(j) + "_" + std::to_string(q) + ".u16", "axial",
             j, k, center);
      }
    }
  }
  std::cout << "crops written to " << out_dir << "\n";
  return 0;
}

int cmd_train(const CommonTrainOpts& opts, int stage) {
  const TrainConfig cfg = opts.resolve(stage);
  run_stage(cfg, opts.data_root, opts.out_dir);
  std::cout << "stage " << cfg.stage << " complete; checkpoints in " << opts.out_dir
            << "\n";
  return 0;
}

int cmd_eval(const CommonTrainOpts& opts, const std::string& ckpt_dir,
             const std::string& report_dir) {
  const TrainConfig cfg = opts.resolve();
  ModelBundle bundle = ModelBundle::make(cfg.pipeline, cfg.seed);
  load_bundle_stage(bundle, 3, ckpt_dir);

  const auto dirs = list_studies(opts.data_root);
  std::vector<std::string> ids;
  for (const auto& d : dirs) ids.push_back(d.filename().string());
  auto [train_ids, test_ids] = split_studies(ids, cfg.split_fraction, cfg.seed);
  std::sort(test_ids.begin(), test_ids.end());
  std::vector<std::filesystem::path> test_dirs;
  for (const auto& id : test_ids)
    test_dirs.push_back(std::filesystem::path(opts.data_root) / id);

  const EvalResult result = evaluate(bundle, test_dirs, cfg.class_weights);
  std::filesystem::create_directories(report_dir);
  write_report_csv(result.report, std::filesystem::path(report_dir) / "report.csv");
  write_scores_csv(result.rows, std::filesystem::path(report_dir) / "scores.csv");
  std::cout << "studies," << result.report.n_studies << "\n"
            << "accuracy," << fmt_num(result.report.accuracy) << "\n"
            << "wce_loss," << fmt_num(result.report.wce_loss) << "\n"
            << "macro_auroc," << fmt_num(result.report.macro_auroc) << "\n"
            << "binary_auroc," << fmt_num(result.report.binary_auroc) << "\n"
            << "binary_accuracy," << fmt_num(result.report.binary_accuracy) << "\n";
  return 0;
}

int cmd_predict(const std::string& data_root, const std::string& study_id,
                const std::string& ckpt_dir, std::int64_t seed) {
  const Study study = load_study_by_id(data_root, study_id);
  if (study.n_axial() == 0)
    fail(ErrorCode::EmptySeries, study_id + " has no axial slices");
  TrainConfig cfg;
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  ModelBundle bundle = ModelBundle::make(cfg.pipeline, cfg.seed);
  load_bundle_stage(bundle, 3, ckpt_dir);
  const Mat<float> probs = predict_probabilities(bundle, study);
  std::cout << "level,p_normal_mild,p_moderate,p_severe,grade\n";
  static const char* grade_names[] = {"normal_mild", "moderate", "severe"};
  for (int j = 0; j < kNumLevels; ++j) {
    int arg = 0;
    for (int k = 1; k < kNumGrades; ++k)
      if (probs(j, k) > probs(j, arg)) arg = k;
    std::cout << kLevelNames[j] << "," << fmt_num(probs(j, 0)) << ","
              << fmt_num(probs(j, 1)) << "," << fmt_num(probs(j, 2)) << ","
              << grade_names[arg] << "\n";
  }
  return 0;
}

int cmd_plot(const std::string& log_path, const std::string& scores_path,
             const std::string& out_dir) {
  if (log_path.empty() && scores_path.empty())
    fail(ErrorCode::BadConfig, "plot needs --log and/or --scores");
  std::filesystem::create_directories(out_dir);
  if (!log_path.empty()) {
    const auto out = std::filesystem::path(out_dir) /
                     (std::filesystem::path(log_path).stem().string() + ".png");
    plot_training_curves(log_path, out);
    std::cout << "wrote " << out.string() << "\n";
  }
  if (!scores_path.empty()) {
    const auto out = std::filesystem::path(out_dir) / "roc.png";
    plot_roc(scores_path, out);
    std::cout << "wrote " << out.string() << "\n";
  }
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"M-SCAN: three-stage lumbar spinal canal stenosis grading"};
  app.require_subcommand(1);
  int threads = std::min(4u, std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--threads", threads, "Worker thread count");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic studies");
  int synth_n = 50, synth_image = 64;
  std::int64_t synth_seed = 0;
  double synth_noise = 0.02;
  std::string synth_out;
  synth_cmd->add_option("--n", synth_n, "Number of studies")->capture_default_str();
  synth_cmd->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output dataset root")->required();
  synth_cmd->add_option("--image-size", synth_image, "Square slice size, divisible by 16")
      ->capture_default_str();
  synth_cmd->add_option("--noise", synth_noise, "Additive noise fraction")
      ->capture_default_str();

  // validate
  auto* validate_cmd = app.add_subcommand("validate", "Validate studies on disk");
  std::string v_data, v_study;
  validate_cmd->add_option("--data", v_data, "Dataset root")->required();
  validate_cmd->add_option("--study", v_study, "Single study id (default: all)");

  // project
  auto* project_cmd =
      app.add_subcommand("project", "Project 2D slice points to patient space");
  std::string p_data, p_study, p_series = "sagittal", p_points;
  project_cmd->add_option("--data", p_data, "Dataset root")->required();
  project_cmd->add_option("--study", p_study, "Study id")->required();
  project_cmd->add_option("--series", p_series, "sagittal or axial")
      ->check(CLI::IsMember({"sagittal", "axial"}))
      ->capture_default_str();
  project_cmd->add_option("--points", p_points, "CSV of slice_index,row,col")->required();

  // match
  auto* match_cmd =
      app.add_subcommand("match", "Match level points to nearest axial slices");
  std::string m_data, m_study, m_points;
  bool m_truth = false;
  int m_k = kSlicesPerLevel;
  match_cmd->add_option("--data", m_data, "Dataset root")->required();
  match_cmd->add_option("--study", m_study, "Study id")->required();
  match_cmd->add_option("--points", m_points, "CSV of level,slice_index,row,col");
  match_cmd->add_flag("--truth", m_truth, "Use the study's truth sidecar keypoints");
  match_cmd->add_option("--k", m_k, "Axial slices per level")->capture_default_str();

  // select
  auto* select_cmd =
      app.add_subcommand("select", "Score sagittal slices and pick one per level");
  std::string s_data, s_study, s_ckpt;
  select_cmd->add_option("--data", s_data, "Dataset root")->required();
  select_cmd->add_option("--study", s_study, "Study id")->required();
  select_cmd->add_option("--ckpt", s_ckpt, "Checkpoint directory (stage 1)")->required();

  // preprocess
  auto* prep_cmd = app.add_subcommand("preprocess", "Emit level crops for inspection");
  std::string pp_data, pp_study, pp_out, pp_ckpt;
  bool pp_truth = false;
  prep_cmd->add_option("--data", pp_data, "Dataset root")->required();
  prep_cmd->add_option("--study", pp_study, "Study id")->required();
  prep_cmd->add_option("--out", pp_out, "Output directory")->required();
  prep_cmd->add_flag("--truth", pp_truth, "Crop at truth-sidecar coordinates");
  prep_cmd->add_option("--ckpt", pp_ckpt, "Checkpoint directory (stages 1-2)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one pipeline stage");
  CommonTrainOpts t_opts;
  int t_stage = 0;
  train_cmd->add_option("--stage", t_stage, "Stage to train")
      ->check(CLI::IsMember({1, 2, 3}))
      ->required();
  train_cmd->add_option("--data", t_opts.data_root, "Dataset root")->required();
  train_cmd->add_option("--out", t_opts.out_dir, "Checkpoint/log directory")->required();
  train_cmd->add_option("--config", t_opts.config_path, "JSON config file");
  train_cmd->add_option("--seed", t_opts.seed, "Training seed");
  train_cmd->add_option("--epochs", t_opts.epochs, "Epochs for this stage");
  train_cmd->add_option("--lr", t_opts.lr, "Learning rate");
  train_cmd->add_option("--batch-size", t_opts.batch_size, "Batch size");
  train_cmd->add_option("--split-fraction", t_opts.split_fraction,
                        "Train fraction of the study split");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate the held-out split");
  CommonTrainOpts e_opts;
  std::string e_ckpt, e_report;
  eval_cmd->add_option("--data", e_opts.data_root, "Dataset root")->required();
  eval_cmd->add_option("--ckpt", e_ckpt, "Checkpoint directory (all stages)")->required();
  eval_cmd->add_option("--report", e_report, "Report output directory")->required();
  eval_cmd->add_option("--config", e_opts.config_path, "JSON config file");
  eval_cmd->add_option("--seed", e_opts.seed, "Split seed");
  eval_cmd->add_option("--split-fraction", e_opts.split_fraction,
                       "Train fraction of the study split");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Grade one study");
  std::string pr_data, pr_study, pr_ckpt;
  std::int64_t pr_seed = -1;
  predict_cmd->add_option("--data", pr_data, "Dataset root")->required();
  predict_cmd->add_option("--study", pr_study, "Study id")->required();
  predict_cmd->add_option("--ckpt", pr_ckpt, "Checkpoint directory (all stages)")
      ->required();
  predict_cmd->add_option("--seed", pr_seed, "Model construction seed");

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "Render curves from logs/reports");
  std::string pl_log, pl_scores, pl_out;
  plot_cmd->add_option("--log", pl_log, "Training log csv");
  plot_cmd->add_option("--scores", pl_scores, "Eval scores csv");
  plot_cmd->add_option("--out", pl_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  set_threads(threads);
  try {
    if (*synth_cmd) return cmd_synth(synth_out, synth_n, synth_seed, synth_image, synth_noise);
    if (*validate_cmd) return cmd_validate(v_data, v_study);
    if (*project_cmd) return cmd_project(p_data, p_study, p_series, p_points);
    if (*match_cmd) return cmd_match(m_data, m_study, m_points, m_truth, m_k);
    if (*select_cmd) return cmd_select(s_data, s_study, s_ckpt);
    if (*prep_cmd) return cmd_preprocess(pp_data, pp_study, pp_out, pp_truth, pp_ckpt);
    if (*train_cmd) return cmd_train(t_opts, t_stage);
    if (*eval_cmd) return cmd_eval(e_opts, e_ckpt, e_report);
    if (*predict_cmd) return cmd_predict(pr_data, pr_study, pr_ckpt, pr_seed);
    if (*plot_cmd) return cmd_plot(pl_log, pl_scores, pl_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::Data ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace mscan
