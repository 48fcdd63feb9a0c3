#include "signmotion/fitting.hpp"

#include "signmotion/container.hpp"
#include "signmotion/errors.hpp"

#include <algorithm>
#include <cmath>

namespace signmotion {

void Detections::validate(Index joint_count) const {
  if (static_cast<Index>(joints2d.size()) != confidence.rows())
    throw DimensionError("detections: frame counts differ");
  if (confidence.cols() != joint_count)
    throw DimensionError("detections: confidence width does not match joint count");
  for (const auto& frame : joints2d)
    if (frame.rows() != joint_count)
      throw DimensionError("detections: joints2d rows do not match joint count");
  if (confidence.minCoeff() < 0.0 || confidence.maxCoeff() > 1.0)
    throw DimensionError("detections: confidence outside [0, 1]");
}

void FitConfig::validate() const {
  if (max_iters < 1) throw DimensionError("fit config: max_iters >= 1 required");
  if (convergence_tol <= 0) throw DimensionError("fit config: tol > 0 required");
  if (step_size <= 0) throw DimensionError("fit config: step_size > 0 required");
  if (lambda_prior < 0 || lambda_temp < 0)
    throw DimensionError("fit config: negative loss weight");
  if (optimized_joints.empty())
    throw DimensionError("fit config: optimized_joints is empty");
}

Scalar reprojection_loss(const Detections& detections, const PointTrack& joints3d,
                         const Camera& camera) {
  const Index frames = detections.frames();
  if (static_cast<Index>(joints3d.size()) != frames)
    throw DimensionError("reprojection: frame counts differ");
  if (frames == 0) throw DimensionError("reprojection: empty input");
  if (detections.confidence.maxCoeff() <= 0.0)
    throw DegenerateInputError("reprojection: all confidences are zero");

  const Index joints = detections.confidence.cols();
  Scalar sum = 0;
  for (Index f = 0; f < frames; ++f) {
    const MatX2d projected = project(camera, joints3d[f]);
    const MatX2d diff = (projected - detections.joints2d[f]).cwiseAbs();
    sum += (detections.confidence.row(f).transpose().array() *
            (diff.col(0) + diff.col(1)).array())
               .sum();
  }
  return sum / static_cast<Scalar>(frames * joints);
}

Scalar temporal_loss(const PointTrack& vertices, const PointTrack& joints,
                     bool* single_frame) {
  if (vertices.size() != joints.size())
    throw DimensionError("temporal: track lengths differ");
  const Index frames = static_cast<Index>(joints.size());
  if (single_frame) *single_frame = frames < 2;
  if (frames < 2) return 0.0;
  Scalar sum = 0;
  for (Index f = 1; f < frames; ++f)
    sum += (vertices[f] - vertices[f - 1]).norm() + (joints[f] - joints[f - 1]).norm();
  return sum / static_cast<Scalar>(frames - 1);
}

Scalar total_loss(Scalar rec, Scalar prior, Scalar temp, const FitConfig& config) {
  return rec + config.lambda_prior * prior + config.lambda_temp * temp;
}

// --- objective ----------------------------------------------------------------

namespace {

inline Scalar sign_or_zero(Scalar v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

Vec flatten_subset(const MatX3d& positions, const std::vector<int>& joints) {
  Vec x(3 * static_cast<Index>(joints.size()));
  for (std::size_t i = 0; i < joints.size(); ++i)
    x.segment<3>(3 * static_cast<Index>(i)) = positions.row(joints[i]).transpose();
  return x;
}

}  // namespace

FitObjective::FitObjective(const Detections& detections, const Camera& camera,
                           const KinematicTree& tree, const PriorSet& priors,
                           const VertexRegressor& regressor, const FitConfig& config)
    : detections_(detections),
      camera_(camera),
      tree_(tree),
      priors_(priors),
      regressor_(regressor),
      config_(config),
      descendants_(tree.descendant_sets()) {
  config_.validate();
  detections_.validate(tree.joint_count());
  for (int k : config.optimized_joints)
    if (k < 0 || k >= tree.joint_count())
      throw DimensionError("fit config: optimized joint out of range");
}

Scalar FitObjective::loss(const Mat& axis_angles) const {
  return terms(axis_angles).total;
}

FitObjective::Terms FitObjective::terms(const Mat& axis_angles) const {
  const Index frames = axis_angles.rows();
  PointTrack joints(frames), vertices(frames);
  for (Index f = 0; f < frames; ++f) {
    joints[f] = fk_frame(tree_, axis_angles.row(f).transpose(), config_.root_translation).positions;
    vertices[f] = regressor_.weights * joints[f];
  }
  Terms t;
  t.reprojection = reprojection_loss(detections_, joints, camera_);
  for (Index f = 0; f < frames; ++f)
    for (const auto& entry : priors_.entries)
      t.prior += prior_loss(entry.prior, flatten_subset(joints[f], entry.joints));
  t.prior /= static_cast<Scalar>(frames);
  t.temporal = temporal_loss(vertices, joints);
  t.total = total_loss(t.reprojection, t.prior, t.temporal, config_);
  return t;
}

Scalar FitObjective::loss_and_gradient(const Mat& axis_angles, Mat& gradient) const {
  const Index frames = axis_angles.rows();
  const int joint_count = tree_.joint_count();
  gradient = Mat::Zero(frames, axis_angles.cols());

  std::vector<FkFrame> fk(frames);
  PointTrack joints(frames), vertices(frames);
  for (Index f = 0; f < frames; ++f) {
    fk[f] = fk_frame(tree_, axis_angles.row(f).transpose(), config_.root_translation);
    joints[f] = fk[f].positions;
    vertices[f] = regressor_.weights * joints[f];
  }

  if (detections_.confidence.maxCoeff() <= 0.0)
    throw DegenerateInputError("reprojection: all confidences are zero");

  // d(total)/d(position), one J x 3 block per frame.
  std::vector<MatX3d> pos_grad(frames, MatX3d::Zero(joint_count, 3));
  Scalar rec = 0, prior_sum = 0, temp = 0;

  const Mat3d& k = camera_.intrinsics;
  const Scalar fx = k(0, 0), fy = k(1, 1);
  const Scalar rec_scale =
      1.0 / static_cast<Scalar>(frames * joint_count);
  for (Index f = 0; f < frames; ++f) {
    const MatX2d projected = project(camera_, joints[f]);
    for (int j = 0; j < joint_count; ++j) {
      const Scalar conf = detections_.confidence(f, j);
      const Scalar du = projected(j, 0) - detections_.joints2d[f](j, 0);
      const Scalar dv = projected(j, 1) - detections_.joints2d[f](j, 1);
      rec += conf * (std::abs(du) + std::abs(dv));
      const Scalar su = sign_or_zero(du) * conf * rec_scale;
      const Scalar sv = sign_or_zero(dv) * conf * rec_scale;
      const Scalar x = joints[f](j, 0), y = joints[f](j, 1), z = joints[f](j, 2);
      pos_grad[f](j, 0) += su * fx / z;
      pos_grad[f](j, 1) += sv * fy / z;
      pos_grad[f](j, 2) += -su * fx * x / (z * z) - sv * fy * y / (z * z);
    }
  }
  rec *= rec_scale;

  const Scalar prior_scale = config_.lambda_prior / static_cast<Scalar>(frames);
  if (config_.lambda_prior > 0) {
    for (Index f = 0; f < frames; ++f) {
      for (const auto& entry : priors_.entries) {
        const Vec x = flatten_subset(joints[f], entry.joints);
        prior_sum += prior_loss(entry.prior, x);
        const Vec g = prior_loss_gradient(entry.prior, x) * prior_scale;
        for (std::size_t i = 0; i < entry.joints.size(); ++i)
          pos_grad[f].row(entry.joints[i]) +=
              g.segment<3>(3 * static_cast<Index>(i)).transpose();
      }
    }
  } else {
    for (Index f = 0; f < frames; ++f)
      for (const auto& entry : priors_.entries)
        prior_sum += prior_loss(entry.prior, flatten_subset(joints[f], entry.joints));
  }
  prior_sum /= static_cast<Scalar>(frames);

  if (frames >= 2) {
    const Scalar temp_scale = config_.lambda_temp / static_cast<Scalar>(frames - 1);
    for (Index f = 1; f < frames; ++f) {
      const MatX3d dj = joints[f] - joints[f - 1];
      const MatX3d dx = vertices[f] - vertices[f - 1];
      const Scalar nj = dj.norm();
      const Scalar nx = dx.norm();
      temp += nj + nx;
      if (config_.lambda_temp > 0) {
        if (nj > 0) {
          const MatX3d g = (temp_scale / nj) * dj;
          pos_grad[f] += g;
          pos_grad[f - 1] -= g;
        }
        if (nx > 0) {
          const MatX3d g =
              regressor_.weights.transpose() * ((temp_scale / nx) * dx).eval();
          pos_grad[f] += g;
          pos_grad[f - 1] -= g;
        }
      }
    }
    temp /= static_cast<Scalar>(frames - 1);
  }

  // Chain rule from joint positions back to the axis-angle channels of the
  // optimized joints. A joint's rotation moves only its strict descendants:
  // p_j = p_k + R_par(k) exp(a_k) w_j, so
  //   d p_j / d a_i = R_par(k) dExp_i exp(a_k)^T R_par(k)^T (p_j - p_k).
  for (Index f = 0; f < frames; ++f) {
    for (int k_joint : config_.optimized_joints) {
      const auto& desc = descendants_[k_joint];
      if (desc.empty()) continue;
      Mat3d outer = Mat3d::Zero();
      const Vec3d pk = joints[f].row(k_joint).transpose();
      for (int j : desc) {
        const Vec3d g = pos_grad[f].row(j).transpose();
        const Vec3d d = joints[f].row(j).transpose() - pk;
        outer += g * d.transpose();
      }
      const int parent = tree_.parent[k_joint];
      const Mat3d r_par =
          parent == KinematicTree::kNoParent ? Mat3d::Identity() : fk[f].rotations[parent];
      const Vec3d aa = axis_angles.row(f).segment<3>(3 * k_joint).transpose();
      const Mat3d local = axis_angle_to_matrix<Scalar>(aa);
      const auto dexp = axis_angle_jacobian(aa);
      for (int i = 0; i < 3; ++i) {
        const Mat3d a = r_par * dexp[i] * local.transpose() * r_par.transpose();
        gradient(f, 3 * k_joint + i) = a.cwiseProduct(outer).sum();
      }
    }
  }

  return total_loss(rec, prior_sum, temp, config_);
}

// --- optimizer ------------------------------------------------------------------

namespace {

struct ChannelMap {
  std::vector<Index> columns;  // optimized columns of the F x 3J state

  Vec gather(const Mat& aa) const {
    Vec x(static_cast<Index>(columns.size()) * aa.rows());
    Index at = 0;
    for (Index f = 0; f < aa.rows(); ++f)
      for (Index c : columns) x(at++) = aa(f, c);
    return x;
  }

  void scatter(const Vec& x, Mat& aa) const {
    Index at = 0;
    for (Index f = 0; f < aa.rows(); ++f)
      for (Index c : columns) aa(f, c) = x(at++);
  }
};

}  // namespace

FitResult fit_sequence(const ParamSequence& init, const Detections& detections,
                       const Camera& camera, const KinematicTree& tree,
                       const PriorSet& priors, const VertexRegressor& regressor,
                       const FitConfig& config) {
  init.validate();
  config.validate();
  const FitObjective objective(detections, camera, tree, priors, regressor, config);

  Mat aa = local_axis_angles(tree, init);
  ChannelMap channels;
  for (int k : config.optimized_joints)
    for (Index i = 0; i < 3; ++i) channels.columns.push_back(3 * k + i);
  std::sort(channels.columns.begin(), channels.columns.end());

  Mat grad_full;
  Scalar current = objective.loss_and_gradient(aa, grad_full);
  if (!std::isfinite(current))
    throw DivergenceError("fit: non-finite loss at iteration 0");

  FitResult result;
  result.loss_trace.push_back(current);

  Vec x = channels.gather(aa);
  Vec m = Vec::Zero(x.size());
  Vec v = Vec::Zero(x.size());
  constexpr Scalar kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  int stalls = 0;

  Mat aa_try = aa;
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    const Vec g = channels.gather(grad_full);
    m = kBeta1 * m + (1 - kBeta1) * g;
    v = kBeta2 * v + (1 - kBeta2) * g.cwiseProduct(g);
    const Scalar bc1 = 1 - std::pow(kBeta1, iter);
    const Scalar bc2 = 1 - std::pow(kBeta2, iter);
    const Vec direction =
        (m / bc1).cwiseQuotient(((v / bc2).cwiseSqrt().array() + kEps).matrix());

    Scalar step = config.step_size;
    bool accepted = false;
    Scalar trial_loss = 0;
    Vec x_try;
    for (int halvings = 0; halvings < 30 && !accepted; ++halvings) {
      x_try = x - step * direction;
      channels.scatter(x_try, aa_try);
      bool feasible = true;
      try {
        trial_loss = objective.loss(aa_try);
      } catch (const BehindCameraError&) {
        feasible = false;  // wild trial step; shrink and retry
      }
      if (feasible && std::isfinite(trial_loss) && trial_loss <= current) {
        accepted = true;
      } else {
        step *= 0.5;
      }
    }

    if (!accepted) {
      if (++stalls >= 2) break;
      continue;
    }
    stalls = 0;

    const Scalar previous = current;
    x = x_try;
    channels.scatter(x, aa);
    current = objective.loss_and_gradient(aa, grad_full);
    if (!std::isfinite(current))
      throw DivergenceError("fit: non-finite loss at iteration " + std::to_string(iter));
    result.loss_trace.push_back(current);
    result.iterations = iter;

    if (std::abs(previous - current) <= config.convergence_tol * std::max(1.0, std::abs(previous))) {
      result.converged = true;
      break;
    }
  }

  // Write optimized channels back; everything else keeps init's bits.
  result.params = init;
  const auto body = tree.body_joints();
  std::vector<Index> body_rank(tree.joint_count(), -1), hand_rank(tree.joint_count(), -1);
  for (std::size_t b = 0; b < body.size(); ++b) body_rank[body[b]] = static_cast<Index>(b);
  for (std::size_t h = 0; h < tree.hand_joints.size(); ++h)
    hand_rank[tree.hand_joints[h]] = static_cast<Index>(h);
  for (int k : config.optimized_joints) {
    if (tree.is_hand(k))
      result.params.hand_pose.middleCols(3 * hand_rank[k], 3) = aa.middleCols(3 * k, 3);
    else
      result.params.body_pose.middleCols(3 * body_rank[k], 3) = aa.middleCols(3 * k, 3);
  }
  return result;
}

// --- persistence -----------------------------------------------------------------

void save_detections(const Detections& detections, const std::filesystem::path& path) {
  const Index frames = detections.frames();
  const Index joints = detections.confidence.cols();
  Mat packed(frames, 2 * joints);
  for (Index f = 0; f < frames; ++f)
    for (Index j = 0; j < joints; ++j) {
      packed(f, 2 * j) = detections.joints2d[f](j, 0);
      packed(f, 2 * j + 1) = detections.joints2d[f](j, 1);
    }
  ArrayContainer c;
  c.add("joints2d", packed);
  c.add("confidence", detections.confidence);
  c.save(path);
}

Detections load_detections(const std::filesystem::path& path) {
  const ArrayContainer c = ArrayContainer::load(path);
  const Mat& packed = c.at("joints2d");
  Detections d;
  d.confidence = c.at("confidence");
  if (packed.cols() != 2 * d.confidence.cols() || packed.rows() != d.confidence.rows())
    throw FormatError("detections: joints2d/confidence shapes disagree");
  d.joints2d.resize(packed.rows());
  for (Index f = 0; f < packed.rows(); ++f) {
    d.joints2d[f].resize(d.confidence.cols(), 2);
    for (Index j = 0; j < d.confidence.cols(); ++j) {
      d.joints2d[f](j, 0) = packed(f, 2 * j);
      d.joints2d[f](j, 1) = packed(f, 2 * j + 1);
    }
  }
  d.validate(d.confidence.cols());
  return d;
}

}  // namespace signmotion
