#pragma once

#include "signmotion/dataset.hpp"
#include "signmotion/metrics.hpp"
#include "signmotion/training.hpp"
#include "signmotion/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace signmotion {

// Joint, state-channel and proxy-vertex subsets for one report column block.
struct SubsetSpec {
  std::string name;
  std::vector<int> joints;
  std::vector<Index> channels;      // pose channels of those joints
  std::vector<int> vertices;        // proxy vertices dominated by those joints
};

// body / left_hand / right_hand blocks. Hand sidedness comes from the "l_" /
// "r_" name prefix convention of the skeleton file.
std::vector<SubsetSpec> report_subsets(const KinematicTree& tree, const StateLayout& layout,
                                       const VertexRegressor& regressor);

struct EvaluationResult {
  EvalReport report;
  EvalBlock overall;
  FrameStats generated_stats;  // per-frame |pose| statistics of the generations
  FrameStats truth_stats;
  int sample_count = 0;
};

// Generates one motion per sample (seeded from the sample id) at the ground
// truth frame count and scores it against the annotation.
EvaluationResult evaluate_checkpoint(
    const Checkpoint& ckpt, const std::vector<const MotionSample*>& samples,
    std::uint64_t seed,
    const std::optional<ExternalEncoderConfig>& external = {});

}  // namespace signmotion
