#include "signmotion/kinematics.hpp"

#include "signmotion/errors.hpp"

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace signmotion {

using nlohmann::json;

bool KinematicTree::is_hand(int joint) const {
  return std::binary_search(hand_joints.begin(), hand_joints.end(), joint);
}

std::vector<int> KinematicTree::body_joints() const {
  std::vector<int> body;
  for (int j = 0; j < joint_count(); ++j)
    if (!is_hand(j)) body.push_back(j);
  return body;
}

std::vector<std::vector<int>> KinematicTree::neighbor_sets() const {
  std::vector<std::vector<int>> sets(joint_count());
  for (int j = 0; j < joint_count(); ++j) {
    if (parent[j] != kNoParent) {
      sets[j].push_back(parent[j]);
      sets[parent[j]].push_back(j);
    }
  }
  for (auto& s : sets) std::sort(s.begin(), s.end());
  return sets;
}

std::vector<std::vector<int>> KinematicTree::descendant_sets() const {
  std::vector<std::vector<int>> sets(joint_count());
  // Descending scan: j's descendants are known once all i > j are processed.
  for (int j = joint_count() - 1; j >= 0; --j) {
    if (parent[j] == kNoParent) continue;
    sets[parent[j]].push_back(j);
    for (int d : sets[j]) sets[parent[j]].push_back(d);
  }
  for (auto& s : sets) std::sort(s.begin(), s.end());
  return sets;
}

void KinematicTree::validate() const {
  const int J = joint_count();
  if (J <= 0) throw DimensionError("tree: no joints");
  if (static_cast<int>(names.size()) != J || rest_offsets.rows() != J)
    throw DimensionError("tree: names/offsets length mismatch");
  int roots = 0;
  for (int j = 0; j < J; ++j) {
    if (parent[j] == kNoParent) {
      ++roots;
    } else if (parent[j] < 0 || parent[j] >= j) {
      throw DimensionError("tree: parent[" + std::to_string(j) +
                           "] violates topological order");
    }
  }
  if (roots != 1) throw DimensionError("tree: expected exactly one root");
  auto check_subset = [J](const std::vector<int>& set, const char* what) {
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (set[i] < 0 || set[i] >= J)
        throw DimensionError(std::string("tree: ") + what + " index out of range");
      if (i > 0 && set[i] <= set[i - 1])
        throw DimensionError(std::string("tree: ") + what + " not strictly ascending");
    }
  };
  check_subset(hand_joints, "hand_joints");
  check_subset(arm_joints, "arm_joints");
  if (!rest_offsets.allFinite()) throw DimensionError("tree: non-finite offsets");
}

StateLayout make_layout(const KinematicTree& tree, Index expression_dim) {
  StateLayout layout;
  layout.hand_joint_count = static_cast<Index>(tree.hand_joints.size());
  layout.body_joint_count = tree.joint_count() - layout.hand_joint_count;
  layout.expression_dim = expression_dim;
  return layout;
}

Mat ParamSequence::state() const {
  Mat s(frames(), state_dim());
  s << body_pose, hand_pose, expression;
  return s;
}

ParamSequence ParamSequence::from_state(const Mat& state, const StateLayout& layout,
                                        const Vec& shape, Scalar fps) {
  if (state.cols() != layout.dim())
    throw DimensionError("from_state: state width does not match layout");
  ParamSequence seq;
  seq.body_pose = state.leftCols(layout.body_dim());
  seq.hand_pose = state.middleCols(layout.body_dim(), layout.hand_dim());
  seq.expression = state.rightCols(layout.expression_dim);
  seq.shape = shape;
  seq.fps = fps;
  return seq;
}

void ParamSequence::validate() const {
  if (frames() < 1) throw DimensionError("sequence: F >= 1 required");
  if (hand_pose.rows() != frames() || expression.rows() != frames())
    throw DimensionError("sequence: frame counts differ across blocks");
  if (!body_pose.allFinite() || !hand_pose.allFinite() || !expression.allFinite() ||
      !shape.allFinite())
    throw DimensionError("sequence: non-finite parameters");
}

Camera Camera::from_focal(Scalar fx, Scalar fy, Scalar cx, Scalar cy) {
  Camera cam;
  cam.intrinsics << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return cam;
}

void Camera::validate() const {
  const Mat3d& k = intrinsics;
  if (k(1, 0) != 0 || k(2, 0) != 0 || k(2, 1) != 0)
    throw DimensionError("camera: K must be upper-triangular");
  if (k(0, 0) <= 0 || k(1, 1) <= 0 || k(2, 2) <= 0)
    throw DimensionError("camera: K diagonal must be positive");
}

void VertexRegressor::validate() const {
  for (int outer = 0; outer < weights.outerSize(); ++outer)
    for (Eigen::SparseMatrix<Scalar>::InnerIterator it(weights, outer); it; ++it)
      if (it.value() < 0) throw DimensionError("regressor: negative weight");
  Vec row_sums = weights * Vec::Ones(weights.cols());
  if ((row_sums.array() - 1.0).abs().maxCoeff() > 1e-9)
    throw DimensionError("regressor: rows must sum to 1");
}

std::array<Mat3d, 3> axis_angle_jacobian(const Vec3d& v) {
  const Scalar theta2 = v.squaredNorm();
  std::array<Mat3d, 3> out;
  auto skew = [](const Vec3d& w) {
    Mat3d s;
    s << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return s;
  };
  if (theta2 < 1e-16) {
    for (int i = 0; i < 3; ++i) out[i] = skew(Vec3d::Unit(i));
    return out;
  }
  const Mat3d r = axis_angle_to_matrix<Scalar>(v);
  for (int i = 0; i < 3; ++i) {
    const Vec3d w = v.cross((Mat3d::Identity() - r) * Vec3d::Unit(i));
    out[i] = (v(i) * skew(v) + skew(w)) * r / theta2;
  }
  return out;
}

FkFrame fk_frame(const KinematicTree& tree, const Vec& local_axis_angles,
                 const Vec3d& root_translation) {
  const int J = tree.joint_count();
  if (local_axis_angles.size() != 3 * J)
    throw DimensionError("fk: axis-angle vector length must be 3*J");
  FkFrame frame;
  frame.positions.resize(J, 3);
  frame.rotations.resize(J);
  for (int j = 0; j < J; ++j) {
    const Vec3d aa = local_axis_angles.segment<3>(3 * j);
    const Mat3d local = axis_angle_to_matrix<Scalar>(Vec3d(aa));
    if (tree.parent[j] == KinematicTree::kNoParent) {
      frame.rotations[j] = local;
      frame.positions.row(j) = root_translation.transpose();
    } else {
      const int p = tree.parent[j];
      frame.rotations[j] = frame.rotations[p] * local;
      frame.positions.row(j) =
          frame.positions.row(p) +
          (frame.rotations[p] * tree.rest_offsets.row(j).transpose()).transpose();
    }
  }
  return frame;
}

Mat local_axis_angles(const KinematicTree& tree, const ParamSequence& seq) {
  const int J = tree.joint_count();
  const auto body = tree.body_joints();
  if (seq.body_pose.cols() != static_cast<Index>(3 * body.size()) ||
      seq.hand_pose.cols() != static_cast<Index>(3 * tree.hand_joints.size()))
    throw DimensionError("fk: sequence pose widths do not match tree");
  Mat aa(seq.frames(), 3 * J);
  for (std::size_t b = 0; b < body.size(); ++b)
    aa.middleCols(3 * body[b], 3) = seq.body_pose.middleCols(3 * b, 3);
  for (std::size_t h = 0; h < tree.hand_joints.size(); ++h)
    aa.middleCols(3 * tree.hand_joints[h], 3) = seq.hand_pose.middleCols(3 * h, 3);
  return aa;
}

PointTrack forward_kinematics(const KinematicTree& tree, const ParamSequence& seq,
                              const Vec3d& root_translation) {
  const Mat aa = local_axis_angles(tree, seq);
  PointTrack track(seq.frames());
  for (Index f = 0; f < seq.frames(); ++f)
    track[f] = fk_frame(tree, aa.row(f).transpose(), root_translation).positions;
  return track;
}

PointTrack proxy_vertices(const VertexRegressor& regressor, const PointTrack& joints) {
  PointTrack vertices(joints.size());
  for (std::size_t f = 0; f < joints.size(); ++f) {
    if (joints[f].rows() != regressor.weights.cols())
      throw DimensionError("proxy_vertices: joint count does not match regressor");
    vertices[f] = regressor.weights * joints[f];
  }
  return vertices;
}

MatX2d project(const Camera& camera, const MatX3d& points) {
  MatX2d out(points.rows(), 2);
  const Mat3d& k = camera.intrinsics;
  for (Index i = 0; i < points.rows(); ++i) {
    const Scalar z = points(i, 2);
    if (z <= 0)
      throw BehindCameraError("project: point " + std::to_string(i) +
                              " has non-positive depth");
    const Vec3d h = k * points.row(i).transpose();
    out(i, 0) = h(0) / h(2);
    out(i, 1) = h(1) / h(2);
  }
  return out;
}

KinematicTree default_skeleton() {
  KinematicTree t;
  t.parent = {KinematicTree::kNoParent, 0, 0, 2, 3, 0, 5, 6,
              /* left hand  */ 4, 8, 9, 10,
              /* right hand */ 7, 12, 13, 14};
  t.names = {"chest",     "neck",      "l_shoulder", "l_elbow",
             "l_wrist",   "r_shoulder", "r_elbow",   "r_wrist",
             "l_hand0",   "l_hand1",   "l_hand2",    "l_hand3",
             "r_hand0",   "r_hand1",   "r_hand2",    "r_hand3"};
  t.rest_offsets.resize(16, 3);
  t.rest_offsets << 0.00, 0.00, 0.00,    // chest (root)
      0.00, 0.25, 0.00,                  // neck
      -0.20, 0.18, 0.00,                 // l_shoulder
      -0.26, 0.00, 0.00,                 // l_elbow
      -0.25, 0.00, 0.00,                 // l_wrist
      0.20, 0.18, 0.00,                  // r_shoulder
      0.26, 0.00, 0.00,                  // r_elbow
      0.25, 0.00, 0.00,                  // r_wrist
      -0.05, 0.00, 0.02,                 // l_hand0
      -0.04, 0.00, 0.00,                 // l_hand1
      -0.03, 0.00, 0.00,                 // l_hand2
      -0.025, 0.00, 0.00,                // l_hand3
      0.05, 0.00, 0.02,                  // r_hand0
      0.04, 0.00, 0.00,                  // r_hand1
      0.03, 0.00, 0.00,                  // r_hand2
      0.025, 0.00, 0.00;                 // r_hand3
  t.hand_joints = {8, 9, 10, 11, 12, 13, 14, 15};
  t.arm_joints = {2, 3, 4, 5, 6, 7};
  t.validate();
  return t;
}

VertexRegressor default_regressor(const KinematicTree& tree) {
  const int J = tree.joint_count();
  std::vector<Eigen::Triplet<Scalar>> triplets;
  int row = 0;
  for (int j = 0; j < J; ++j) triplets.emplace_back(row++, j, 1.0);
  for (int j = 0; j < J; ++j) {
    if (tree.parent[j] == KinematicTree::kNoParent) continue;
    for (Scalar a : {0.25, 0.5, 0.75}) {
      triplets.emplace_back(row, tree.parent[j], 1.0 - a);
      triplets.emplace_back(row, j, a);
      ++row;
    }
  }
  VertexRegressor reg;
  reg.weights.resize(row, J);
  reg.weights.setFromTriplets(triplets.begin(), triplets.end());
  reg.validate();
  return reg;
}

KinematicTree skeleton_from_json(const json& j) {
  KinematicTree t;
  try {
    t.parent = j.at("parents").get<std::vector<int>>();
    t.names = j.at("names").get<std::vector<std::string>>();
    const auto offsets = j.at("offsets").get<std::vector<std::array<double, 3>>>();
    t.rest_offsets.resize(static_cast<Index>(offsets.size()), 3);
    for (std::size_t i = 0; i < offsets.size(); ++i)
      t.rest_offsets.row(static_cast<Index>(i)) << offsets[i][0], offsets[i][1],
          offsets[i][2];
    t.hand_joints = j.at("hand_joints").get<std::vector<int>>();
    t.arm_joints = j.at("arm_joints").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw FormatError("skeleton: missing or malformed field: " + std::string(e.what()));
  }
  t.validate();
  return t;
}

json skeleton_to_json(const KinematicTree& tree) {
  json j;
  j["parents"] = tree.parent;
  j["names"] = tree.names;
  std::vector<std::array<double, 3>> offsets(tree.joint_count());
  for (int i = 0; i < tree.joint_count(); ++i)
    offsets[i] = {tree.rest_offsets(i, 0), tree.rest_offsets(i, 1),
                  tree.rest_offsets(i, 2)};
  j["offsets"] = offsets;
  j["hand_joints"] = tree.hand_joints;
  j["arm_joints"] = tree.arm_joints;
  return j;
}

KinematicTree load_skeleton(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("skeleton: cannot open '" + path.string() + "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw FormatError("skeleton: invalid JSON: " + std::string(e.what()));
  }
  return skeleton_from_json(j);
}

void save_skeleton(const KinematicTree& tree, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("skeleton: cannot write '" + path.string() + "'");
  os << skeleton_to_json(tree).dump(2) << "\n";
}

Camera load_camera(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("camera: cannot open '" + path.string() + "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw FormatError("camera: invalid JSON: " + std::string(e.what()));
  }
  try {
    Camera cam = Camera::from_focal(j.at("fx"), j.at("fy"), j.at("cx"), j.at("cy"));
    cam.validate();
    return cam;
  } catch (const json::exception& e) {
    throw FormatError("camera: missing field: " + std::string(e.what()));
  }
}

void save_camera(const Camera& camera, const std::filesystem::path& path) {
  json j;
  j["fx"] = camera.intrinsics(0, 0);
  j["fy"] = camera.intrinsics(1, 1);
  j["cx"] = camera.intrinsics(0, 2);
  j["cy"] = camera.intrinsics(1, 2);
  std::ofstream os(path);
  if (!os) throw FormatError("camera: cannot write '" + path.string() + "'");
  os << j.dump(2) << "\n";
}

}  // namespace signmotion
