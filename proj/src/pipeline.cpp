#include "mscan/pipeline.hpp"

#include <atomic>

#include "mscan/nn/checkpoint.hpp"
#include "mscan/utils.hpp"

namespace mscan {

namespace {
std::atomic<int> g_threads{2};
}

void set_threads(int n) {
  n = std::max(1, n);
  g_threads.store(n);
  Eigen::setNbThreads(n);
}

int get_threads() { return g_threads.load(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int workers = std::min<std::size_t>(g_threads.load(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

ModelBundle ModelBundle::make(const PipelineConfig& pcfg, std::uint64_t seed) {
  Rng r_unet(Rng::mix(seed, 101));
  Rng r_canal(Rng::mix(seed, 102));
  Rng r_scorer(Rng::mix(seed, 103));
  Rng r_enc_s(Rng::mix(seed, 104));
  Rng r_enc_a(Rng::mix(seed, 105));
  Rng r_mscan(Rng::mix(seed, 106));
  return ModelBundle{UNet<float>(r_unet),
                     CanalCenterNet<float>(pcfg.canal_input, pcfg.canal_input, r_canal),
                     SliceScorerNet<float>(pcfg.scorer_input, pcfg.scorer_input, r_scorer),
                     CropEncoder<float>(pcfg.encoder_input, pcfg.encoder_input, r_enc_s),
                     CropEncoder<float>(pcfg.encoder_input, pcfg.encoder_input, r_enc_a),
                     MscanNet<float>(kEmbedDim, 4, r_mscan),
                     pcfg};
}

Mat<float> prepare_crop(const Image16& slice, const Point2D& center, int crop_px,
                        bool use_clahe, const ClaheParams& cp, int out_px) {
  CropSpec spec;
  spec.center = center;
  spec.height = spec.width = crop_px;
  Image16 c = crop(slice, spec);
  if (use_clahe) c = clahe(c, cp);
  ImageF f = normalize(c);
  if (out_px != crop_px) f = resize_bilinear(f, out_px, out_px);
  return f;
}

Mat<float> canal_input_image(const Image16& slice, int out_px) {
  return normalize(resize_bilinear(slice.cast<float>(), out_px, out_px));
}

Point2D predict_canal_center(CanalCenterNet<float>& net, const Image16& slice,
                             int in_px) {
  std::vector<Mat<float>> batch{canal_input_image(slice, in_px)};
  const Mat<float> pred = net.forward(nn::Tensor4<float>::from_images(batch), false);
  return {pred(0, 0) * static_cast<double>(slice.rows()),
          pred(0, 1) * static_cast<double>(slice.cols())};
}

StudyFeatures extract_features(ModelBundle& bundle, const Study& study) {
  const auto& pcfg = bundle.pcfg;
  if (study.n_axial() < pcfg.k_nearest)
    fail(ErrorCode::EmptySeries, study.manifest.study_id + ": axial series too small");

  StudyFeatures out;
  out.slice_probs = score_slices(bundle.scorer, study);
  out.selected_sagittal = select_slices(out.slice_probs);

  // Keypoints from the heatmap net on each selected slice (level j reads its
  // own channel on its own slice).
  std::array<LevelPoint, kNumLevels> level_points;
  std::vector<Image16> sag_cache(study.n_sagittal());
  std::vector<bool> loaded(study.n_sagittal(), false);
  auto sag_slice = [&](int i) -> const Image16& {
    if (!loaded[static_cast<size_t>(i)]) {
      sag_cache[static_cast<size_t>(i)] =
          load_pixels(study.manifest.sagittal_slices[static_cast<size_t>(i)]);
      loaded[static_cast<size_t>(i)] = true;
    }
    return sag_cache[static_cast<size_t>(i)];
  };
  for (int j = 0; j < kNumLevels; ++j) {
    const int si = out.selected_sagittal[j];
    std::vector<Mat<float>> in{normalize(sag_slice(si))};
    const auto hm = bundle.unet.forward(nn::Tensor4<float>::from_images(in), false);
    const KeypointSet kps = decode_keypoints(hm);
    out.keypoints[j] = kps[j];
    level_points[j] = {si, kps[j]};
  }
  out.matches = match_levels(study, level_points, pcfg.k_nearest);

  // Sagittal crops at the predicted keypoints on the selected slices.
  std::vector<Mat<float>> sag_crops;
  for (int j = 0; j < kNumLevels; ++j)
    sag_crops.push_back(prepare_crop(sag_slice(out.selected_sagittal[j]),
                                     out.keypoints[j], pcfg.sag_crop,
                                     pcfg.clahe_sagittal, pcfg.clahe,
                                     pcfg.encoder_input));
  const Mat<float> e_s = bundle.encoder_sagittal.encode(
      nn::Tensor4<float>::from_images(sag_crops), false);

  // Axial crops at the regressed canal centers, ascending z per level.
  std::vector<Mat<float>> ax_crops;
  for (int j = 0; j < kNumLevels; ++j)
    for (int q = 0; q < pcfg.k_nearest; ++q) {
      const auto& rec =
          study.manifest.axial_slices[static_cast<size_t>(out.matches[j][q])];
      const Image16 slice = load_pixels(rec);
      const Point2D center =
          predict_canal_center(bundle.canal, slice, pcfg.canal_input);
      ax_crops.push_back(prepare_crop(slice, center, pcfg.ax_crop, pcfg.clahe_axial,
                                      pcfg.clahe, pcfg.encoder_input));
    }
  const Mat<float> e_a =
      bundle.encoder_axial.encode(nn::Tensor4<float>::from_images(ax_crops), false);

  out.bundle.sagittal.assign(kNumLevels, Mat<float>(1, kEmbedDim));
  out.bundle.axial.resize(kNumLevels);
  for (int j = 0; j < kNumLevels; ++j) {
    out.bundle.sagittal[j] = e_s.row(j);
    for (int q = 0; q < kSlicesPerLevel; ++q)
      out.bundle.axial[j][q] = e_a.row(static_cast<Eigen::Index>(j) * kSlicesPerLevel + q);
  }
  return out;
}

Mat<float> predict_probabilities(ModelBundle& bundle, const Study& study) {
  StudyFeatures feats = extract_features(bundle, study);
  const nn::Seq<float> logits = bundle.mscan.forward(feats.bundle, false, nullptr);
  Mat<float> probs(kNumLevels, kNumGrades);
  for (int j = 0; j < kNumLevels; ++j) probs.row(j) = nn::softmax_rows(logits[j]).row(0);
  return probs;
}

namespace {

template <typename Model>
void save_model(Model& model, const std::filesystem::path& path,
                const std::string& config_echo) {
  nn::ParamList<float> params;
  model.params(params);
  nn::save_checkpoint(path, config_echo, params);
}

template <typename Model>
void load_model(Model& model, const std::filesystem::path& path, int needed_stage) {
  if (!std::filesystem::exists(path))
    fail(ErrorCode::MissingPriorStage,
         path.string() + " (run `mscan train --stage " +
             std::to_string(needed_stage) + "` first)");
  nn::ParamList<float> params;
  model.params(params);
  nn::load_checkpoint(path, params);
}

}  // namespace

void save_bundle_stage(const ModelBundle& bundle, int stage,
                       const std::filesystem::path& dir,
                       const std::string& config_echo) {
  auto& b = const_cast<ModelBundle&>(bundle);  // params() is non-const only
  std::filesystem::create_directories(dir);
  if (stage == 1) {
    save_model(b.unet, dir / ckpt::kUnet, config_echo);
    save_model(b.canal, dir / ckpt::kCanal, config_echo);
    save_model(b.scorer, dir / ckpt::kScorer, config_echo);
  } else if (stage == 2) {
    save_model(b.encoder_sagittal, dir / ckpt::kEncoderSagittal, config_echo);
    save_model(b.encoder_axial, dir / ckpt::kEncoderAxial, config_echo);
  } else if (stage == 3) {
    save_model(b.mscan, dir / ckpt::kMscan, config_echo);
  } else {
    fail(ErrorCode::BadConfig, "stage must be 1, 2 or 3");
  }
}

void load_bundle_stage(ModelBundle& bundle, int stage,
                       const std::filesystem::path& dir) {
  if (stage >= 1) {
    load_model(bundle.unet, dir / ckpt::kUnet, 1);
    load_model(bundle.canal, dir / ckpt::kCanal, 1);
    load_model(bundle.scorer, dir / ckpt::kScorer, 1);
  }
  if (stage >= 2) {
    load_model(bundle.encoder_sagittal, dir / ckpt::kEncoderSagittal, 2);
    load_model(bundle.encoder_axial, dir / ckpt::kEncoderAxial, 2);
  }
  if (stage >= 3) load_model(bundle.mscan, dir / ckpt::kMscan, 3);
}

}  // namespace mscan
