#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mscan/pipeline.hpp"

namespace mscan {

struct TrainConfig {
  int stage = 1;
  double lr = 1e-4;
  int epochs = 20;
  int batch_size = 8;
  std::uint64_t seed = 0;
  double split_fraction = 0.8;
  std::array<double, kNumGrades> class_weights{1.0, 2.0, 4.0};
  double weight_decay = 1e-2;
  double grad_clip = 1.0;
  int unet_slices_per_study = 3;  // sagittal slices sampled per study for stage 1
  double heatmap_sigma = 3.0;
  PipelineConfig pipeline;

  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  static TrainConfig from_file(const std::filesystem::path& path);
};

// Deterministic shuffled split at study granularity. Membership depends only
// on the sorted ids, the fraction and the seed.
std::pair<std::vector<std::string>, std::vector<std::string>> split_studies(
    std::vector<std::string> ids, double fraction, std::uint64_t seed);

// Probability a positive outranks a negative, ties counting one half
// (rank-sum form of the Mann-Whitney statistic). Throws SingleClass unless
// both classes are present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

struct LevelMetrics {
  double accuracy = 0.0;
  double macro_auroc = 0.0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double wce_loss = 0.0;
  double macro_auroc = 0.0;    // one-vs-rest, averaged over classes then levels
  double binary_auroc = 0.0;   // NormalMild vs {Moderate, Severe}
  double binary_accuracy = 0.0;
  std::array<LevelMetrics, kNumLevels> per_level{};
  int n_studies = 0;
  int n_skipped = 0;
};

// One evaluated (study, level) instance.
struct ScoreRow {
  std::string study_id;
  int level = 0;
  std::array<double, kNumGrades> prob{};
  int grade = 0;  // ground truth
};

MetricsReport metrics_from_scores(const std::vector<ScoreRow>& rows,
                                  const std::array<double, kNumGrades>& class_weights);

// Runs the full inference pipeline on every labeled study; studies that fail
// are skipped with a note on stderr and counted in n_skipped.
struct EvalResult {
  MetricsReport report;
  std::vector<ScoreRow> rows;
};
EvalResult evaluate(const ModelBundle& bundle,
                    const std::vector<std::filesystem::path>& study_dirs,
                    const std::array<double, kNumGrades>& class_weights);

// Trains one stage from the train split of data_root, writing checkpoints and
// per-epoch metrics logs under out_dir. Stages 2 and 3 require the earlier
// checkpoints in out_dir.
void run_stage(const TrainConfig& cfg, const std::filesystem::path& data_root,
               const std::filesystem::path& out_dir);

void write_report_csv(const MetricsReport& report, const std::filesystem::path& path);
void write_scores_csv(const std::vector<ScoreRow>& rows,
                      const std::filesystem::path& path);
std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path);
void write_train_log(const TrainLog& log, const std::filesystem::path& path);

}  // namespace mscan
