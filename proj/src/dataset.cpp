#include "signmotion/dataset.hpp"

#include "signmotion/container.hpp"
#include "signmotion/errors.hpp"
#include "signmotion/random.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace signmotion {

using nlohmann::json;

std::string split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw FormatError("corpus: unknown split '" + name + "'");
}

Split split_of_id(const std::string& id) {
  const std::uint64_t bucket = fnv1a64(id) % 10;
  if (bucket < 8) return Split::train;
  if (bucket == 8) return Split::val;
  return Split::test;
}

const MotionPrimitive& Lexicon::primitive(const std::string& token) const {
  auto it = primitives.find(token);
  if (it == primitives.end())
    throw DegenerateInputError("lexicon: unknown token '" + token + "'");
  return it->second;
}

Lexicon default_lexicon(const KinematicTree& tree, std::uint64_t seed, int token_count,
                        Index expression_dim) {
  if (token_count < 1) throw DimensionError("lexicon: need at least one token");
  Lexicon lex;
  lex.expression_dim = expression_dim;
  Rng rng(seed);

  std::vector<int> movable = tree.arm_joints;
  movable.insert(movable.end(), tree.hand_joints.begin(), tree.hand_joints.end());

  for (int t = 0; t < token_count; ++t) {
    const std::string token = "w" + std::to_string(t);
    MotionPrimitive prim;
    prim.duration = 10 + static_cast<int>(rng.uniform_index(6));
    for (int joint : movable) {
      MotionPrimitive::Channel ch;
      ch.joint = joint;
      Vec3d axis = rng.gaussian_vector(3);
      while (axis.norm() < 1e-6) axis = rng.gaussian_vector(3);
      ch.axis = axis / axis.norm();
      ch.amplitude = rng.uniform(0.15, 0.75 * lex.joint_limit);
      ch.frequency = 0.5 * (1 + static_cast<Scalar>(rng.uniform_index(4)));
      ch.phase = rng.uniform(0.0, 2.0 * M_PI);
      prim.channels.push_back(ch);
    }
    prim.expression_amplitude.resize(expression_dim);
    prim.expression_frequency.resize(expression_dim);
    for (Index e = 0; e < expression_dim; ++e) {
      prim.expression_amplitude(e) = rng.uniform(0.0, 0.8);
      prim.expression_frequency(e) = 0.5 * (1 + static_cast<Scalar>(rng.uniform_index(4)));
    }
    lex.tokens.push_back(token);
    lex.primitives[token] = std::move(prim);
  }
  return lex;
}

std::vector<SegmentSchedule> sentence_schedule(const Lexicon& lexicon,
                                               const std::vector<std::string>& tokens) {
  std::vector<SegmentSchedule> schedule;
  int begin = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& prim = lexicon.primitive(tokens[i]);
    schedule.push_back({begin, begin + prim.duration});
    begin += prim.duration - kCrossFadeFrames;
  }
  return schedule;
}

namespace {

// Per-frame local axis-angle of one primitive at local time tau.
void add_primitive_frame(const MotionPrimitive& prim, int tau, Scalar weight, Index row,
                         Mat& aa, Mat& psi) {
  const Scalar t = static_cast<Scalar>(tau) / static_cast<Scalar>(prim.duration);
  for (const auto& ch : prim.channels) {
    const Scalar angle = ch.amplitude * std::sin(2.0 * M_PI * ch.frequency * t + ch.phase);
    aa.row(row).segment<3>(3 * ch.joint) += weight * angle * ch.axis.transpose();
  }
  for (Index e = 0; e < psi.cols(); ++e)
    psi(row, e) += weight * prim.expression_amplitude(e) *
                   std::sin(2.0 * M_PI * prim.expression_frequency(e) * t);
}

}  // namespace

ParamSequence synthesize_motion(const Lexicon& lexicon, const KinematicTree& tree,
                                const std::vector<std::string>& tokens, Scalar fps) {
  if (tokens.empty()) throw DegenerateInputError("synthesize: empty sentence");
  const auto schedule = sentence_schedule(lexicon, tokens);
  const int frames = schedule.back().end;
  const int J = tree.joint_count();

  Mat aa = Mat::Zero(frames, 3 * J);
  Mat psi = Mat::Zero(frames, lexicon.expression_dim);

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& prim = lexicon.primitive(tokens[i]);
    const auto& seg = schedule[i];
    for (int t = seg.begin; t < seg.end; ++t) {
      Scalar weight = 1.0;
      // Ramp against the previous primitive over the shared frames, and
      // symmetrically against the next one; weights in an overlap sum to 1.
      if (i > 0 && t < schedule[i - 1].end) {
        const int k = t - seg.begin;
        weight = static_cast<Scalar>(k + 1) / static_cast<Scalar>(kCrossFadeFrames + 1);
      } else if (i + 1 < tokens.size() && t >= schedule[i + 1].begin) {
        const int k = t - schedule[i + 1].begin;
        weight = 1.0 - static_cast<Scalar>(k + 1) / static_cast<Scalar>(kCrossFadeFrames + 1);
      }
      add_primitive_frame(prim, t - seg.begin, weight, t, aa, psi);
    }
  }

  // Scatter tree-ordered channels into the body/hand blocks.
  const auto body = tree.body_joints();
  ParamSequence seq;
  seq.body_pose.resize(frames, 3 * static_cast<Index>(body.size()));
  seq.hand_pose.resize(frames, 3 * static_cast<Index>(tree.hand_joints.size()));
  for (std::size_t b = 0; b < body.size(); ++b)
    seq.body_pose.middleCols(3 * b, 3) = aa.middleCols(3 * body[b], 3);
  for (std::size_t h = 0; h < tree.hand_joints.size(); ++h)
    seq.hand_pose.middleCols(3 * h, 3) = aa.middleCols(3 * tree.hand_joints[h], 3);
  seq.expression = psi;
  seq.shape = Vec::Zero(8);
  seq.fps = fps;
  return seq;
}

std::vector<MotionSample> generate_corpus(const Lexicon& lexicon, const KinematicTree& tree,
                                          int sentence_count, std::uint64_t seed) {
  if (lexicon.tokens.empty()) throw DegenerateInputError("corpus: empty lexicon");
  Rng rng(seed);
  std::vector<MotionSample> samples;
  samples.reserve(sentence_count);
  char id_buf[16];
  for (int s = 0; s < sentence_count; ++s) {
    const int length = 2 + static_cast<int>(rng.uniform_index(5));
    std::vector<std::string> tokens(length);
    for (int i = 0; i < length; ++i)
      tokens[i] = lexicon.tokens[rng.uniform_index(lexicon.tokens.size())];
    MotionSample sample;
    std::snprintf(id_buf, sizeof(id_buf), "s%05d", s);
    sample.id = id_buf;
    sample.split = split_of_id(sample.id);
    std::string transcript;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) transcript += ' ';
      transcript += tokens[i];
    }
    sample.transcript = std::move(transcript);
    sample.params = synthesize_motion(lexicon, tree, tokens);
    samples.push_back(std::move(sample));
  }
  return samples;
}

void save_params(const ParamSequence& seq, const std::filesystem::path& path) {
  ArrayContainer c;
  c.add("theta_b", seq.body_pose);
  c.add("theta_h", seq.hand_pose);
  c.add("psi", seq.expression);
  c.add("beta", seq.shape);
  c.add_scalar("fps", seq.fps);
  c.save(path);
}

ParamSequence load_params(const std::filesystem::path& path) {
  const ArrayContainer c = ArrayContainer::load(path);
  ParamSequence seq;
  seq.body_pose = c.at("theta_b");
  seq.hand_pose = c.at("theta_h");
  seq.expression = c.at("psi");
  seq.shape = c.vector_at("beta");
  seq.fps = c.scalar_at("fps");
  seq.validate();
  return seq;
}

void save_corpus(const std::vector<MotionSample>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw FormatError("corpus: cannot write manifest in '" + dir.string() + "'");
  for (const auto& sample : samples) {
    const std::string file = sample.id + ".smc";
    save_params(sample.params, dir / file);
    json line;
    line["id"] = sample.id;
    line["transcript"] = sample.transcript;
    line["split"] = split_name(sample.split);
    line["file"] = file;
    manifest << line.dump() << "\n";
  }
}

std::vector<MotionSample> load_corpus(const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw FormatError("corpus: cannot open '" + manifest_path.string() + "'");
  const std::filesystem::path dir = manifest_path.parent_path();
  std::vector<MotionSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("corpus: bad manifest line " + std::to_string(line_no) + ": " +
                        e.what());
    }
    MotionSample sample;
    try {
      sample.id = j.at("id").get<std::string>();
      sample.transcript = j.at("transcript").get<std::string>();
      sample.split = split_from_name(j.at("split").get<std::string>());
      sample.params = load_params(dir / j.at("file").get<std::string>());
    } catch (const json::exception& e) {
      throw FormatError("corpus: manifest line " + std::to_string(line_no) +
                        " missing field: " + e.what());
    }
    if (sample.transcript.empty())
      throw FormatError("corpus: empty transcript for id '" + sample.id + "'");
    samples.push_back(std::move(sample));
  }
  return samples;
}

std::vector<const MotionSample*> filter_split(const std::vector<MotionSample>& samples,
                                              Split split) {
  std::vector<const MotionSample*> out;
  for (const auto& s : samples)
    if (s.split == split) out.push_back(&s);
  return out;
}

}  // namespace signmotion
