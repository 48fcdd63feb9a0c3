#include "signmotion/metrics.hpp"

#include "signmotion/errors.hpp"

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace signmotion {

Scalar mpjpe(const PointTrack& pred, const PointTrack& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw DimensionError("mpjpe: track lengths differ or are empty");
  Scalar sum = 0;
  Index count = 0;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    if (pred[f].rows() != truth[f].rows())
      throw DimensionError("mpjpe: joint counts differ at frame " + std::to_string(f));
    sum += (pred[f] - truth[f]).rowwise().norm().sum();
    count += pred[f].rows();
  }
  return sum / static_cast<Scalar>(count);
}

Scalar dtw(const Mat& seq_a, const Mat& seq_b) {
  if (seq_a.rows() == 0 || seq_b.rows() == 0)
    throw DegenerateInputError("dtw: empty sequence");
  if (seq_a.cols() != seq_b.cols())
    throw DimensionError("dtw: channel counts differ");
  const Index fa = seq_a.rows();
  const Index fb = seq_b.rows();
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  // Rolling two-row DP over the (fa+1) x (fb+1) grid.
  Vec prev = Vec::Constant(fb + 1, inf);
  Vec curr(fb + 1);
  prev(0) = 0;
  for (Index i = 1; i <= fa; ++i) {
    curr(0) = inf;
    for (Index j = 1; j <= fb; ++j) {
      const Scalar d = (seq_a.row(i - 1) - seq_b.row(j - 1)).norm();
      curr(j) = d + std::min({prev(j - 1), prev(j), curr(j - 1)});
    }
    std::swap(prev, curr);
  }
  return prev(fb);
}

GaussianFit fit_gaussian(const Mat& set) {
  if (set.rows() < 1) throw DegenerateInputError("fid: empty set");
  GaussianFit fit;
  fit.mean = set.colwise().mean();
  const Mat centered = set.rowwise() - fit.mean.transpose();
  const Scalar denom = set.rows() > 1 ? static_cast<Scalar>(set.rows() - 1) : 1.0;
  fit.cov = (centered.transpose() * centered) / denom;
  return fit;
}

namespace {

// Symmetric PSD square root, eigenvalues clamped at zero.
Mat psd_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  Vec lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

Scalar fid_from_stats(const GaussianFit& a, const GaussianFit& b) {
  if (a.mean.size() != b.mean.size())
    throw DimensionError("fid: dimension mismatch");
  const Index d = a.mean.size();
  const Mat reg = 1e-6 * Mat::Identity(d, d);
  const Mat ca = 0.5 * (a.cov + a.cov.transpose()) + reg;
  const Mat cb = 0.5 * (b.cov + b.cov.transpose()) + reg;
  const Mat sa = psd_sqrt(ca);
  // Tr((Ca Cb)^{1/2}) = Tr((Ca^{1/2} Cb Ca^{1/2})^{1/2}).
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * ((sa * cb * sa) + (sa * cb * sa).transpose()));
  const Scalar trace_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const Scalar value =
      (a.mean - b.mean).squaredNorm() + ca.trace() + cb.trace() - 2.0 * trace_sqrt;
  if (!std::isfinite(value)) throw DegenerateInputError("fid: non-finite statistics");
  return std::max(value, 0.0);
}

Scalar fid(const Mat& set_a, const Mat& set_b) {
  return fid_from_stats(fit_gaussian(set_a), fit_gaussian(set_b));
}

FrameStats frame_pose_stats(const std::vector<Mat>& sequences) {
  if (sequences.empty()) throw DegenerateInputError("frame_pose_stats: empty set");
  Index max_f = 0;
  for (const Mat& s : sequences) max_f = std::max(max_f, s.rows());
  if (max_f == 0) throw DegenerateInputError("frame_pose_stats: all sequences empty");

  FrameStats stats;
  stats.mean.resize(max_f);
  stats.stddev.resize(max_f);
  for (Index f = 0; f < max_f; ++f) {
    Scalar sum = 0, sum_sq = 0;
    Index n = 0;
    for (const Mat& s : sequences) {
      if (f >= s.rows()) continue;
      for (Index c = 0; c < s.cols(); ++c) {
        const Scalar v = std::abs(s(f, c));
        sum += v;
        sum_sq += v * v;
        ++n;
      }
    }
    const Scalar mean = sum / static_cast<Scalar>(n);
    stats.mean(f) = mean;
    stats.stddev(f) = std::sqrt(std::max(sum_sq / static_cast<Scalar>(n) - mean * mean, 0.0));
  }
  return stats;
}

nlohmann::json report_to_json(const EvalReport& report) {
  auto block = [](const EvalBlock& b) {
    return nlohmann::json{
        {"MPVPE", b.mpvpe}, {"MPJPE", b.mpjpe}, {"FID", b.fid}, {"DTW", b.dtw}};
  };
  return nlohmann::json{{"body", block(report.body)},
                        {"left_hand", block(report.left_hand)},
                        {"right_hand", block(report.right_hand)}};
}

}  // namespace signmotion
