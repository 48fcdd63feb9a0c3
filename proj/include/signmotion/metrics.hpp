#pragma once

#include "signmotion/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace signmotion {

// Mean over frames and joints of per-joint Euclidean distance.
Scalar mpjpe(const PointTrack& pred, const PointTrack& truth);
inline Scalar mpvpe(const PointTrack& pred, const PointTrack& truth) {
  return mpjpe(pred, truth);
}

// Classic dynamic-programming alignment cost with per-frame Euclidean
// distance and symmetric match/insert/delete steps, no window.
Scalar dtw(const Mat& seq_a, const Mat& seq_b);

struct GaussianFit {
  Vec mean;
  Mat cov;  // symmetric PSD up to regularization
};

// Sample mean and covariance (1/(N-1) when N > 1) of row vectors.
GaussianFit fit_gaussian(const Mat& set);

// || m_a - m_b ||^2 + Tr(C_a + C_b - 2 (C_a C_b)^{1/2}); the square root is
// taken through symmetric eigendecompositions with 1e-6 diagonal
// regularization on both covariances.
Scalar fid_from_stats(const GaussianFit& a, const GaussianFit& b);
Scalar fid(const Mat& set_a, const Mat& set_b);

// Per frame index, mean and standard deviation of |value| pooled over all
// sequences still alive at that frame and all channels.
struct FrameStats {
  Vec mean;
  Vec stddev;
};
FrameStats frame_pose_stats(const std::vector<Mat>& sequences);

// Table-shaped evaluation report: one metric block per joint/channel subset.
struct EvalBlock {
  Scalar mpvpe = 0, mpjpe = 0, fid = 0, dtw = 0;
};
struct EvalReport {
  EvalBlock body, left_hand, right_hand;
};
nlohmann::json report_to_json(const EvalReport& report);

}  // namespace signmotion
