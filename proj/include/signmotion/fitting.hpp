#pragma once

#include "signmotion/kinematics.hpp"
#include "signmotion/pose_prior.hpp"
#include "signmotion/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace signmotion {

// 2D joint detections with per-joint confidences in [0, 1].
struct Detections {
  std::vector<MatX2d> joints2d;  // F entries, J x 2 pixels
  Mat confidence;                // F x J

  Index frames() const { return confidence.rows(); }
  void validate(Index joint_count) const;
};

struct FitConfig {
  Scalar lambda_prior = 0.1;
  Scalar lambda_temp = 1.0;
  int max_iters = 200;
  Scalar step_size = 0.05;
  Scalar convergence_tol = 1e-5;
  std::vector<int> optimized_joints;
  // Scene placement of the root, shared by annotation and fitting.
  Vec3d root_translation = Vec3d::Zero();

  void validate() const;
};

// A PCA prior bound to the tree joints whose flattened positions it scores.
struct PriorSet {
  struct Entry {
    std::string name;
    PCAPrior prior;
    std::vector<int> joints;
  };
  std::vector<Entry> entries;
};

// Mean over frames and joints of confidence-weighted L1 pixel distance.
Scalar reprojection_loss(const Detections& detections, const PointTrack& joints3d,
                         const Camera& camera);

// Mean over adjacent frame pairs of flattened-array step norms
// ||X_f - X_{f-1}|| + ||J_f - J_{f-1}||; 0 with *single_frame set when F < 2.
Scalar temporal_loss(const PointTrack& vertices, const PointTrack& joints,
                     bool* single_frame = nullptr);

Scalar total_loss(Scalar rec, Scalar prior, Scalar temp, const FitConfig& config);

// Full fitting objective over the local axis-angle state (F x 3J, tree joint
// order). Exposes value and analytic gradient restricted to the rotation
// channels of config.optimized_joints so tests can check it against finite
// differences.
class FitObjective {
 public:
  FitObjective(const Detections& detections, const Camera& camera,
               const KinematicTree& tree, const PriorSet& priors,
               const VertexRegressor& regressor, const FitConfig& config);

  Scalar loss(const Mat& axis_angles) const;

  // Gradient has the shape of axis_angles; channels of joints outside
  // optimized_joints stay zero.
  Scalar loss_and_gradient(const Mat& axis_angles, Mat& gradient) const;

  struct Terms {
    Scalar reprojection = 0, prior = 0, temporal = 0, total = 0;
  };
  Terms terms(const Mat& axis_angles) const;

 private:
  const Detections& detections_;
  const Camera& camera_;
  const KinematicTree& tree_;
  const PriorSet& priors_;
  const VertexRegressor& regressor_;
  const FitConfig& config_;
  std::vector<std::vector<int>> descendants_;
};

struct FitResult {
  ParamSequence params;
  std::vector<Scalar> loss_trace;  // initial loss followed by accepted iterates
  int iterations = 0;
  bool converged = false;
};

// Adam steps with a halving backtracking safeguard on the rotation channels
// of config.optimized_joints; every other channel of init is returned
// bit-identical. The loss trace is non-increasing.
FitResult fit_sequence(const ParamSequence& init, const Detections& detections,
                       const Camera& camera, const KinematicTree& tree,
                       const PriorSet& priors, const VertexRegressor& regressor,
                       const FitConfig& config);

// Detections container: arrays joints2d (F x 2J) and confidence (F x J).
void save_detections(const Detections& detections, const std::filesystem::path& path);
Detections load_detections(const std::filesystem::path& path);

}  // namespace signmotion
