#pragma once

#include "signmotion/dataset.hpp"
#include "signmotion/denoiser.hpp"
#include "signmotion/diffusion.hpp"
#include "signmotion/text_encoding.hpp"
#include "signmotion/types.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace signmotion {

struct AdamOptimizer {
  Scalar beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<Mat> m, v;
  int step_count = 0;

  void attach(const std::vector<ParamRef>& params);
  void step(std::vector<ParamRef>& params, Scalar learning_rate);
};

struct TrainConfig {
  int epochs = 50;
  Scalar lr_start = 1e-3;
  Scalar lr_end = 1e-6;
  std::uint64_t seed = 7;
};

struct TrainLog {
  std::vector<Scalar> epoch_loss;  // mean per-sample loss per epoch
  Scalar initial_loss = 0;         // pre-training evaluation pass
  Scalar final_loss = 0;           // epoch_loss.back()
};

using TextEncoderFn = std::function<Vec(const std::string&)>;
using EpochCallback = std::function<void(int epoch, const TrainLog& log)>;

// One diffusion training run: per sample, a uniform step t and seeded noise,
// weight-normalized squared error, backprop, Adam with linearly decaying
// learning rate. When wordbag is given its embedding table trains end to end.
// on_epoch (when set) fires after every epoch for logging and checkpoints.
TrainLog train_denoiser(Denoiser& model, const std::vector<const MotionSample*>& train_set,
                        const TextEncoderFn& encode_text, const NoiseSchedule& schedule,
                        const ChannelStats& stats, const LossWeights& weights,
                        const TrainConfig& config, WordBagEncoder* wordbag = nullptr,
                        const EpochCallback& on_epoch = {});

// --- checkpoints -----------------------------------------------------------------

// Self-contained model checkpoint: every named parameter array plus the
// normalization statistics, with JSON metadata carrying the model config,
// schedule endpoints, skeleton and text encoder kind.
struct Checkpoint {
  ModelConfig model_config;
  KinematicTree tree;
  StateLayout layout;
  NoiseSchedule schedule;
  Scalar beta_start = 1e-4, beta_end = 0.02;
  ChannelStats stats;
  std::string text_encoder = "toy";  // toy | external | wordbag
  std::vector<std::string> wordbag_vocab;
  Scalar fps = 30.0;
  Index shape_dim = 8;

  std::unique_ptr<Denoiser> model;
  std::unique_ptr<WordBagEncoder> wordbag;

  Vec encode_text(const std::string& text,
                  const std::optional<ExternalEncoderConfig>& external = {}) const;
};

void save_checkpoint(const Denoiser& model, const KinematicTree& tree,
                     const NoiseSchedule& schedule, Scalar beta_start, Scalar beta_end,
                     const ChannelStats& stats, const std::string& text_encoder,
                     const WordBagEncoder* wordbag, Scalar fps, Index shape_dim,
                     const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace signmotion
