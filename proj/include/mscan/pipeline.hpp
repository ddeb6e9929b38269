#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "mscan/encoder.hpp"
#include "mscan/geometry.hpp"
#include "mscan/localization.hpp"
#include "mscan/multiview.hpp"
#include "mscan/preprocess.hpp"
#include "mscan/sliceselect.hpp"
#include "mscan/studyio.hpp"
#include "mscan/synth.hpp"

namespace mscan {

// Image-conditioning knobs shared by training and inference.
struct PipelineConfig {
  int k_nearest = kSlicesPerLevel;
  int sag_crop = 128;     // sagittal level crop, px (square)
  int ax_crop = 128;      // axial canal crop, px (square)
  int encoder_input = 32; // crops resized to this before the encoders
  int scorer_input = 32;  // whole sagittal slices downscaled for the scorer
  int canal_input = 32;   // whole axial slices downscaled for the regressor
  bool clahe_sagittal = true;
  bool clahe_axial = true;
  ClaheParams clahe;
};

// The trained models of all three stages, float precision.
struct ModelBundle {
  UNet<float> unet;
  CanalCenterNet<float> canal;
  SliceScorerNet<float> scorer;
  CropEncoder<float> encoder_sagittal;
  CropEncoder<float> encoder_axial;
  MscanNet<float> mscan;
  PipelineConfig pcfg;

  static ModelBundle make(const PipelineConfig& pcfg, std::uint64_t seed);
};

// Checkpoint file names per stage.
namespace ckpt {
inline constexpr const char* kUnet = "stage1_unet.ckpt";
inline constexpr const char* kCanal = "stage1_canal.ckpt";
inline constexpr const char* kScorer = "stage1_scorer.ckpt";
inline constexpr const char* kEncoderSagittal = "stage2_encoder_sagittal.ckpt";
inline constexpr const char* kEncoderAxial = "stage2_encoder_axial.ckpt";
inline constexpr const char* kMscan = "stage3_mscan.ckpt";
}  // namespace ckpt

// crop -> optional CLAHE -> normalize -> resize, as one float image ready for
// an encoder.
Mat<float> prepare_crop(const Image16& slice, const Point2D& center, int crop_px,
                        bool use_clahe, const ClaheParams& cp, int out_px);

// Whole-slice conditioning for the canal-center regressor.
Mat<float> canal_input_image(const Image16& slice, int out_px);

// Predicted canal center in original pixel coordinates.
Point2D predict_canal_center(CanalCenterNet<float>& net, const Image16& slice,
                             int in_px);

// Everything the fused classifier needs for one study, plus the intermediate
// selections for inspection.
struct StudyFeatures {
  FeatureBundle<float> bundle;                       // B = 1
  std::array<int, kNumLevels> selected_sagittal{};   // argmax slice per level
  KeypointSet keypoints{};                           // per level, on its slice
  LevelMatchTable matches{};                         // axial indices per level
  LevelProbabilityMatrix slice_probs;                // N x 5
};

// Runs the full predicted pipeline: score -> select -> keypoints -> crops ->
// frozen encoders -> feature bundle.
StudyFeatures extract_features(ModelBundle& bundle, const Study& study);

// Per-level class probabilities (5 x 3) for one study.
Mat<float> predict_probabilities(ModelBundle& bundle, const Study& study);

void save_bundle_stage(const ModelBundle& bundle, int stage,
                       const std::filesystem::path& dir, const std::string& config_echo);
// Loads the checkpoints of stages <= stage into the bundle; throws
// MissingPriorStage when a required file is absent.
void load_bundle_stage(ModelBundle& bundle, int stage,
                       const std::filesystem::path& dir);

}  // namespace mscan
