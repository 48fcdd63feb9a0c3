#include "signmotion/evaluation.hpp"

#include "signmotion/diffusion.hpp"
#include "signmotion/errors.hpp"
#include "signmotion/random.hpp"

#include <algorithm>

namespace signmotion {

namespace {

std::vector<Index> pose_channels_of(const KinematicTree& tree, const StateLayout& layout,
                                    const std::vector<int>& joints) {
  const auto body = tree.body_joints();
  std::vector<Index> body_rank(tree.joint_count(), -1), hand_rank(tree.joint_count(), -1);
  for (std::size_t b = 0; b < body.size(); ++b) body_rank[body[b]] = static_cast<Index>(b);
  for (std::size_t h = 0; h < tree.hand_joints.size(); ++h)
    hand_rank[tree.hand_joints[h]] = static_cast<Index>(h);
  std::vector<Index> channels;
  for (int j : joints) {
    const Index base =
        tree.is_hand(j) ? layout.body_dim() + 3 * hand_rank[j] : 3 * body_rank[j];
    for (Index i = 0; i < 3; ++i) channels.push_back(base + i);
  }
  std::sort(channels.begin(), channels.end());
  return channels;
}

PointTrack track_subset(const PointTrack& track, const std::vector<int>& rows) {
  PointTrack out(track.size());
  for (std::size_t f = 0; f < track.size(); ++f) {
    out[f].resize(static_cast<Index>(rows.size()), 3);
    for (std::size_t r = 0; r < rows.size(); ++r) out[f].row(r) = track[f].row(rows[r]);
  }
  return out;
}

Mat channel_subset(const Mat& states, const std::vector<Index>& channels) {
  Mat out(states.rows(), static_cast<Index>(channels.size()));
  for (std::size_t c = 0; c < channels.size(); ++c) out.col(c) = states.col(channels[c]);
  return out;
}

}  // namespace

std::vector<SubsetSpec> report_subsets(const KinematicTree& tree, const StateLayout& layout,
                                       const VertexRegressor& regressor) {
  SubsetSpec body{"body", {}, {}, {}};
  SubsetSpec left{"left_hand", {}, {}, {}};
  SubsetSpec right{"right_hand", {}, {}, {}};
  for (int j = 0; j < tree.joint_count(); ++j) {
    if (!tree.is_hand(j)) {
      body.joints.push_back(j);
    } else if (tree.names[j].rfind("l_", 0) == 0) {
      left.joints.push_back(j);
    } else {
      right.joints.push_back(j);
    }
  }

  std::vector<SubsetSpec> subsets{std::move(body), std::move(left), std::move(right)};
  for (auto& s : subsets) s.channels = pose_channels_of(tree, layout, s.joints);

  // A proxy vertex belongs to the subset of its heaviest joint.
  std::vector<int> owner(regressor.weights.rows(), 0);
  std::vector<Scalar> best(regressor.weights.rows(), -1.0);
  for (int outer = 0; outer < regressor.weights.outerSize(); ++outer)
    for (Eigen::SparseMatrix<Scalar>::InnerIterator it(regressor.weights, outer); it; ++it)
      if (it.value() > best[it.row()]) {
        best[it.row()] = it.value();
        owner[it.row()] = static_cast<int>(it.col());
      }
  for (Index v = 0; v < regressor.weights.rows(); ++v) {
    for (auto& s : subsets)
      if (std::binary_search(s.joints.begin(), s.joints.end(), owner[v]))
        s.vertices.push_back(static_cast<int>(v));
  }
  return subsets;
}

EvaluationResult evaluate_checkpoint(const Checkpoint& ckpt,
                                     const std::vector<const MotionSample*>& samples,
                                     std::uint64_t seed,
                                     const std::optional<ExternalEncoderConfig>& external) {
  if (samples.empty()) throw DegenerateInputError("evaluate: no samples");
  const VertexRegressor regressor = default_regressor(ckpt.tree);
  const auto subsets = report_subsets(ckpt.tree, ckpt.layout, regressor);
  Denoiser& model = *ckpt.model;
  auto eps_model = [&model](const Mat& x, int t, const Vec& cond) {
    return model.forward(x, t, cond);
  };

  struct Accumulator {
    Scalar mpjpe = 0, mpvpe = 0, dtw_sum = 0;
    std::vector<Mat> gen_pool, truth_pool;
  };
  std::vector<Accumulator> acc(subsets.size());
  Accumulator overall;
  std::vector<Mat> gen_pose_sequences, truth_pose_sequences;
  const Index pose_dim = ckpt.layout.body_dim() + ckpt.layout.hand_dim();

  for (const auto* item : samples) {
    const Vec text = ckpt.encode_text(item->transcript, external);
    const std::uint64_t sample_seed = seed ^ fnv1a64(item->id);
    const ParamSequence generated =
        sample(eps_model, text, item->params.frames(), ckpt.layout, ckpt.stats,
               ckpt.schedule, sample_seed, ckpt.fps, ckpt.shape_dim);

    const PointTrack gen_joints = forward_kinematics(ckpt.tree, generated);
    const PointTrack truth_joints = forward_kinematics(ckpt.tree, item->params);
    const PointTrack gen_vertices = proxy_vertices(regressor, gen_joints);
    const PointTrack truth_vertices = proxy_vertices(regressor, truth_joints);
    const Mat gen_states = generated.state();
    const Mat truth_states = item->params.state();

    for (std::size_t s = 0; s < subsets.size(); ++s) {
      acc[s].mpjpe += mpjpe(track_subset(gen_joints, subsets[s].joints),
                            track_subset(truth_joints, subsets[s].joints));
      acc[s].mpvpe += mpvpe(track_subset(gen_vertices, subsets[s].vertices),
                            track_subset(truth_vertices, subsets[s].vertices));
      acc[s].dtw_sum += dtw(channel_subset(gen_states, subsets[s].channels),
                            channel_subset(truth_states, subsets[s].channels));
      acc[s].gen_pool.push_back(channel_subset(gen_states, subsets[s].channels));
      acc[s].truth_pool.push_back(channel_subset(truth_states, subsets[s].channels));
    }
    overall.mpjpe += mpjpe(gen_joints, truth_joints);
    overall.mpvpe += mpvpe(gen_vertices, truth_vertices);
    overall.dtw_sum += dtw(gen_states, truth_states);
    overall.gen_pool.push_back(gen_states);
    overall.truth_pool.push_back(truth_states);

    gen_pose_sequences.push_back(gen_states.leftCols(pose_dim));
    truth_pose_sequences.push_back(truth_states.leftCols(pose_dim));
  }

  const Scalar n = static_cast<Scalar>(samples.size());
  auto finish = [&n](const Accumulator& a) {
    Index rows = 0, cols = a.gen_pool.front().cols();
    for (const Mat& m : a.gen_pool) rows += m.rows();
    Mat gen(rows, cols);
    Index at = 0;
    for (const Mat& m : a.gen_pool) {
      gen.middleRows(at, m.rows()) = m;
      at += m.rows();
    }
    rows = 0;
    for (const Mat& m : a.truth_pool) rows += m.rows();
    Mat truth(rows, cols);
    at = 0;
    for (const Mat& m : a.truth_pool) {
      truth.middleRows(at, m.rows()) = m;
      at += m.rows();
    }
    EvalBlock block;
    block.mpjpe = a.mpjpe / n;
    block.mpvpe = a.mpvpe / n;
    block.dtw = a.dtw_sum / n;
    block.fid = fid(gen, truth);
    return block;
  };

  EvaluationResult result;
  result.sample_count = static_cast<int>(samples.size());
  result.report.body = finish(acc[0]);
  result.report.left_hand = finish(acc[1]);
  result.report.right_hand = finish(acc[2]);
  result.overall = finish(overall);
  result.generated_stats = frame_pose_stats(gen_pose_sequences);
  result.truth_stats = frame_pose_stats(truth_pose_sequences);
  return result;
}

}  // namespace signmotion
