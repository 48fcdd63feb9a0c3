#pragma once

#include "signmotion/types.hpp"

#include <Eigen/SparseCore>
#include <nlohmann/json_fwd.hpp>

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace signmotion {

// Articulated skeleton. Joints are stored in topological order: parent[i] < i
// for every non-root joint, the single root carries kNoParent. hand_joints
// and arm_joints are the subsets used for loss weighting and for restricting
// the fitting optimization.
struct KinematicTree {
  static constexpr int kNoParent = -1;

  std::vector<int> parent;
  std::vector<std::string> names;
  MatX3d rest_offsets;  // bone offset from parent, meters; row per joint
  std::vector<int> hand_joints;
  std::vector<int> arm_joints;

  int joint_count() const { return static_cast<int>(parent.size()); }
  bool is_hand(int joint) const;

  // Non-hand joints in ascending order; these own the body-pose channels.
  std::vector<int> body_joints() const;

  // parent + children of each joint, ascending.
  std::vector<std::vector<int>> neighbor_sets() const;

  // Strict descendants of each joint, ascending.
  std::vector<std::vector<int>> descendant_sets() const;

  // Throws DimensionError on any violated structural invariant.
  void validate() const;
};

// Channel layout of the per-frame diffusion state [theta_b || theta_h || psi].
struct StateLayout {
  Index body_joint_count = 0;
  Index hand_joint_count = 0;
  Index expression_dim = 0;

  Index body_dim() const { return 3 * body_joint_count; }
  Index hand_dim() const { return 3 * hand_joint_count; }
  Index dim() const { return body_dim() + hand_dim() + expression_dim; }
};

StateLayout make_layout(const KinematicTree& tree, Index expression_dim);

// Per-frame concatenated pose and expression parameters plus static shape.
struct ParamSequence {
  Mat body_pose;   // F x (Jb*3) axis-angle radians
  Mat hand_pose;   // F x (Jh*3) axis-angle radians
  Mat expression;  // F x E coefficients
  Vec shape;       // S coefficients, constant over the sequence
  Scalar fps = 30.0;

  Index frames() const { return body_pose.rows(); }
  Index state_dim() const {
    return body_pose.cols() + hand_pose.cols() + expression.cols();
  }

  // F x D concatenation [theta_b || theta_h || psi].
  Mat state() const;
  static ParamSequence from_state(const Mat& state, const StateLayout& layout,
                                  const Vec& shape, Scalar fps);

  void validate() const;
};

// Pinhole camera, upper-triangular K with positive diagonal.
struct Camera {
  Mat3d intrinsics = Mat3d::Identity();

  static Camera from_focal(Scalar fx, Scalar fy, Scalar cx, Scalar cy);
  void validate() const;
};

// Maps joint positions to proxy surface points; rows are convex combinations.
struct VertexRegressor {
  Eigen::SparseMatrix<Scalar> weights;  // M x J

  Index vertex_count() const { return weights.rows(); }
  void validate() const;
};

// --- rotations -------------------------------------------------------------

// Rodrigues' formula with a series fallback near zero angle.
template <typename S>
Mat3<S> axis_angle_to_matrix(const Vec3<S>& v) {
  const S theta2 = v.squaredNorm();
  Mat3<S> k;
  k << S(0), -v.z(), v.y(), v.z(), S(0), -v.x(), -v.y(), v.x(), S(0);
  S a, b;
  if (theta2 < S(1e-16)) {
    a = S(1) - theta2 / S(6);
    b = S(0.5) - theta2 / S(24);
  } else {
    using std::cos;
    using std::sin;
    using std::sqrt;
    const S theta = sqrt(theta2);
    a = sin(theta) / theta;
    b = (S(1) - cos(theta)) / theta2;
  }
  return Mat3<S>::Identity() + a * k + b * (k * k);
}

// Partial derivatives of the rotation matrix w.r.t. the three axis-angle
// components (Gallego & Yezzi closed form; skew generators at the origin).
std::array<Mat3d, 3> axis_angle_jacobian(const Vec3d& v);

// --- operations -------------------------------------------------------------

// Global rotations and positions of one posed frame. local_axis_angles holds
// 3 channels per joint in tree order.
struct FkFrame {
  MatX3d positions;               // J x 3
  std::vector<Mat3d> rotations;   // global, per joint
};

FkFrame fk_frame(const KinematicTree& tree, const Vec& local_axis_angles,
                 const Vec3d& root_translation = Vec3d::Zero());

// F x (J*3) local axis-angle channels in tree joint order, assembled from the
// sequence's body/hand blocks.
Mat local_axis_angles(const KinematicTree& tree, const ParamSequence& seq);

PointTrack forward_kinematics(const KinematicTree& tree, const ParamSequence& seq,
                              const Vec3d& root_translation = Vec3d::Zero());

PointTrack proxy_vertices(const VertexRegressor& regressor, const PointTrack& joints);

// Pinhole projection with perspective divide; throws BehindCameraError on z <= 0.
MatX2d project(const Camera& camera, const MatX3d& points);

// --- defaults and persistence -----------------------------------------------

// Toy upper-body skeleton: 8 body joints (chest root, neck, shoulders,
// elbows, wrists) plus two 4-joint finger chains.
KinematicTree default_skeleton();

// Proxy points at each joint and at 1/4, 1/2, 3/4 along each bone.
VertexRegressor default_regressor(const KinematicTree& tree);

// JSON schema: {parents, offsets, names, hand_joints, arm_joints}.
KinematicTree load_skeleton(const std::filesystem::path& path);
void save_skeleton(const KinematicTree& tree, const std::filesystem::path& path);
nlohmann::json skeleton_to_json(const KinematicTree& tree);
KinematicTree skeleton_from_json(const nlohmann::json& j);

// JSON schema: {fx, fy, cx, cy}.
Camera load_camera(const std::filesystem::path& path);
void save_camera(const Camera& camera, const std::filesystem::path& path);

}  // namespace signmotion
