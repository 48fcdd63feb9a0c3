#pragma once

#include "signmotion/errors.hpp"
#include "signmotion/kinematics.hpp"
#include "signmotion/random.hpp"
#include "signmotion/types.hpp"

#include <cmath>
#include <vector>

namespace signmotion {

// Variance schedule: beta_t in (0,1), alpha = 1 - beta, alpha_bar the running
// product. 1-based step indices t in [1, T].
struct NoiseSchedule {
  Vec beta;
  Vec alpha;
  Vec alpha_bar;

  int steps() const { return static_cast<int>(beta.size()); }
  void validate() const;
};

NoiseSchedule make_schedule(int steps, Scalar beta_start, Scalar beta_end);

// Closed-form forward jump: sqrt(abar_t) p0 + sqrt(1 - abar_t) eps.
Mat q_sample(const Mat& p0, int t, const Mat& eps, const NoiseSchedule& schedule);

// Per-channel training-loss weights; hand-pose channels carry twice the
// body/expression weight.
struct LossWeights {
  Vec w;
};
LossWeights make_loss_weights(const StateLayout& layout);

// Per-channel standardization fitted over the training states.
struct ChannelStats {
  Vec mean;
  Vec scale;  // max(std, 1e-6)

  Mat normalize(const Mat& states) const;
  Mat denormalize(const Mat& states) const;
};
ChannelStats fit_channel_stats(const std::vector<Mat>& state_sequences);

// Weight-normalized squared error between eps and the denoiser prediction.
// A null frame_mask means every frame is valid; masked frames contribute
// nothing to numerator or denominator.
template <class EpsModel>
Scalar training_loss(EpsModel&& denoiser, const Mat& p0, const Vec& text_embedding,
                     int t, const Mat& eps, const LossWeights& weights,
                     const NoiseSchedule& schedule, const Vec* frame_mask = nullptr) {
  if (eps.rows() != p0.rows() || eps.cols() != p0.cols())
    throw DimensionError("training_loss: eps shape does not match p0");
  if (weights.w.size() != p0.cols())
    throw DimensionError("training_loss: weight vector width mismatch");
  const Mat noisy = q_sample(p0, t, eps, schedule);
  const Mat predicted = denoiser(noisy, t, text_embedding);
  if (predicted.rows() != p0.rows() || predicted.cols() != p0.cols())
    throw DimensionError("training_loss: prediction shape mismatch");
  if (!predicted.allFinite())
    throw TrainingInstabilityError("training_loss: non-finite prediction");
  const Mat sq = (predicted - eps).cwiseAbs2();
  Scalar num = 0, den = 0;
  for (Index f = 0; f < p0.rows(); ++f) {
    const Scalar mask = frame_mask ? (*frame_mask)(f) : 1.0;
    if (mask == 0.0) continue;
    num += mask * sq.row(f).dot(weights.w);
    den += mask * weights.w.sum();
  }
  if (den == 0) throw DegenerateInputError("training_loss: all frames masked");
  return num / den;
}

// Ancestral DDPM reverse loop from seeded Gaussian noise at t = T down to
// t = 1 in normalized state space; deterministic given the seed. Each step
// forms the implied clean state from the predicted noise, clamps it to the
// normalized data envelope (x0_clip, <= 0 disables) and applies the standard
// posterior mean with variance beta_t. Without clamping this is algebraically
// the familiar (x - beta/sqrt(1-abar) eps) / sqrt(alpha) update.
template <class EpsModel>
Mat sample_states(EpsModel&& denoiser, const Vec& text_embedding, Index frames,
                  Index state_dim, const NoiseSchedule& schedule, std::uint64_t seed,
                  Scalar x0_clip = 5.0) {
  if (frames < 1) throw DimensionError("sample: F >= 1 required");
  if (state_dim < 1) throw DimensionError("sample: D >= 1 required");
  const int steps = schedule.steps();
  if (steps < 1) throw DimensionError("sample: schedule has no steps");

  Rng rng(seed);
  Mat x = rng.gaussian(frames, state_dim);
  for (int t = steps; t >= 1; --t) {
    const Scalar beta_t = schedule.beta(t - 1);
    const Scalar alpha_t = schedule.alpha(t - 1);
    const Scalar abar_t = schedule.alpha_bar(t - 1);
    const Scalar abar_prev = t > 1 ? schedule.alpha_bar(t - 2) : 1.0;
    const Mat predicted = denoiser(x, t, text_embedding);
    if (predicted.rows() != frames || predicted.cols() != state_dim)
      throw DimensionError("sample: denoiser output shape mismatch");
    Mat x0 = (x - std::sqrt(1.0 - abar_t) * predicted) / std::sqrt(abar_t);
    if (x0_clip > 0) x0 = x0.cwiseMax(-x0_clip).cwiseMin(x0_clip);
    x = (std::sqrt(abar_prev) * beta_t * x0 +
         std::sqrt(alpha_t) * (1.0 - abar_prev) * x) /
        (1.0 - abar_t);
    if (t > 1) x += std::sqrt(beta_t) * rng.gaussian(frames, state_dim);
  }
  return x;
}

// De-normalizes and reshapes sampled states into a ParamSequence on the
// canonical shape (beta = 0).
template <class EpsModel>
ParamSequence sample(EpsModel&& denoiser, const Vec& text_embedding, Index frames,
                     const StateLayout& layout, const ChannelStats& stats,
                     const NoiseSchedule& schedule, std::uint64_t seed,
                     Scalar fps = 30.0, Index shape_dim = 8, Scalar x0_clip = 5.0) {
  const Mat states = sample_states(denoiser, text_embedding, frames, layout.dim(),
                                   schedule, seed, x0_clip);
  return ParamSequence::from_state(stats.denormalize(states), layout,
                                   Vec::Zero(shape_dim), fps);
}

}  // namespace signmotion
