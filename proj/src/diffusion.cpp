#include "signmotion/diffusion.hpp"

#include <cmath>

namespace signmotion {

void NoiseSchedule::validate() const {
  const int t_count = steps();
  if (t_count < 1) throw DimensionError("schedule: T >= 1 required");
  if (alpha.size() != t_count || alpha_bar.size() != t_count)
    throw DimensionError("schedule: derived array lengths differ");
  Scalar running = 1.0;
  for (int t = 0; t < t_count; ++t) {
    if (!(beta(t) > 0.0 && beta(t) < 1.0))
      throw DimensionError("schedule: beta outside (0, 1)");
    running *= 1.0 - beta(t);
    if (std::abs(alpha_bar(t) - running) > 1e-12)
      throw DimensionError("schedule: alpha_bar inconsistent with beta");
    if (t > 0 && alpha_bar(t) >= alpha_bar(t - 1))
      throw DimensionError("schedule: alpha_bar not strictly decreasing");
  }
}

NoiseSchedule make_schedule(int steps, Scalar beta_start, Scalar beta_end) {
  if (steps < 1) throw DimensionError("make_schedule: T >= 1 required");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw DimensionError("make_schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.beta.resize(steps);
  for (int t = 0; t < steps; ++t)
    s.beta(t) = steps == 1
                    ? beta_start
                    : beta_start + (beta_end - beta_start) * t / static_cast<Scalar>(steps - 1);
  s.alpha = 1.0 - s.beta.array();
  s.alpha_bar.resize(steps);
  Scalar running = 1.0;
  for (int t = 0; t < steps; ++t) {
    running *= s.alpha(t);
    s.alpha_bar(t) = running;
  }
  return s;
}

Mat q_sample(const Mat& p0, int t, const Mat& eps, const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.steps())
    throw DimensionError("q_sample: step " + std::to_string(t) + " out of range");
  if (eps.rows() != p0.rows() || eps.cols() != p0.cols())
    throw DimensionError("q_sample: eps shape does not match p0");
  const Scalar abar = schedule.alpha_bar(t - 1);
  return std::sqrt(abar) * p0 + std::sqrt(1.0 - abar) * eps;
}

LossWeights make_loss_weights(const StateLayout& layout) {
  LossWeights weights;
  weights.w = Vec::Ones(layout.dim());
  weights.w.segment(layout.body_dim(), layout.hand_dim()).setConstant(2.0);
  return weights;
}

Mat ChannelStats::normalize(const Mat& states) const {
  if (states.cols() != mean.size())
    throw DimensionError("stats: state width mismatch");
  Mat out = states.rowwise() - mean.transpose();
  out.array().rowwise() /= scale.transpose().array();
  return out;
}

Mat ChannelStats::denormalize(const Mat& states) const {
  if (states.cols() != mean.size())
    throw DimensionError("stats: state width mismatch");
  Mat out = states;
  out.array().rowwise() *= scale.transpose().array();
  out.rowwise() += mean.transpose();
  return out;
}

ChannelStats fit_channel_stats(const std::vector<Mat>& state_sequences) {
  if (state_sequences.empty())
    throw DegenerateInputError("stats: no sequences");
  const Index dim = state_sequences.front().cols();
  Vec sum = Vec::Zero(dim);
  Vec sum_sq = Vec::Zero(dim);
  Index rows = 0;
  for (const Mat& s : state_sequences) {
    if (s.cols() != dim) throw DimensionError("stats: inconsistent state widths");
    sum += s.colwise().sum().transpose();
    sum_sq += s.cwiseAbs2().colwise().sum().transpose();
    rows += s.rows();
  }
  ChannelStats stats;
  stats.mean = sum / static_cast<Scalar>(rows);
  const Vec var =
      (sum_sq / static_cast<Scalar>(rows) - stats.mean.cwiseAbs2()).cwiseMax(0.0);
  stats.scale = var.cwiseSqrt().cwiseMax(1e-6);
  return stats;
}

}  // namespace signmotion
