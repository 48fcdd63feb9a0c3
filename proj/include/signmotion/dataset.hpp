#pragma once

#include "signmotion/kinematics.hpp"
#include "signmotion/types.hpp"

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace signmotion {

enum class Split { train, val, test };

std::string split_name(Split split);
Split split_from_name(const std::string& name);

// 80/10/10, pure function of the sample id.
Split split_of_id(const std::string& id);

struct MotionSample {
  ParamSequence params;
  std::string transcript;
  std::string id;
  Split split = Split::train;
};

// One motion primitive per lexicon token: sinusoidal axis-angle programs on
// a subset of arm/hand joints plus an expression program, fixed duration.
struct MotionPrimitive {
  struct Channel {
    int joint = 0;       // tree joint index
    Vec3d axis;          // unit rotation axis
    Scalar amplitude = 0;  // radians, within the lexicon's joint limit
    Scalar frequency = 1;  // cycles over the primitive
    Scalar phase = 0;
  };
  int duration = 12;  // frames
  std::vector<Channel> channels;
  Vec expression_amplitude;  // E
  Vec expression_frequency;  // E
};

struct Lexicon {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, MotionPrimitive> primitives;
  Scalar joint_limit = 1.2;  // max |axis-angle| per channel, radians
  Index expression_dim = 4;

  const MotionPrimitive& primitive(const std::string& token) const;
};

// Deterministic lexicon over the tree's arm and hand joints.
Lexicon default_lexicon(const KinematicTree& tree, std::uint64_t seed,
                        int token_count = 64, Index expression_dim = 4);

// Frame range a token occupies inside a composed sentence (cross-fade width
// kCrossFadeFrames between consecutive primitives). Exposed so tests can
// extract segments by schedule.
constexpr int kCrossFadeFrames = 4;
struct SegmentSchedule {
  int begin = 0;  // first frame
  int end = 0;    // one past last
};
std::vector<SegmentSchedule> sentence_schedule(const Lexicon& lexicon,
                                               const std::vector<std::string>& tokens);

// Compose one sentence's motion; sentence tokens must exist in the lexicon.
ParamSequence synthesize_motion(const Lexicon& lexicon, const KinematicTree& tree,
                                const std::vector<std::string>& tokens, Scalar fps = 30.0);

// Random token sentences of length 2..6, deterministic per seed, split by id
// hash. Samples are returned ordered by id.
std::vector<MotionSample> generate_corpus(const Lexicon& lexicon, const KinematicTree& tree,
                                          int sentence_count, std::uint64_t seed);

// --- persistence --------------------------------------------------------------

// Sequence container arrays: theta_b, theta_h, psi, beta, fps.
void save_params(const ParamSequence& seq, const std::filesystem::path& path);
ParamSequence load_params(const std::filesystem::path& path);

// Corpus directory: manifest.jsonl (one {id, transcript, split, file} object
// per line) plus one sequence container per sample.
void save_corpus(const std::vector<MotionSample>& samples, const std::filesystem::path& dir);
std::vector<MotionSample> load_corpus(const std::filesystem::path& manifest_path);

std::vector<const MotionSample*> filter_split(const std::vector<MotionSample>& samples,
                                              Split split);

}  // namespace signmotion
