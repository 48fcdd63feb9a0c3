#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "signmotion/dataset.hpp"
#include "signmotion/errors.hpp"
#include "signmotion/pose_prior.hpp"
#include "signmotion/random.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace signmotion;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "sm_dataset" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("corpus generation is deterministic per seed") {
  const auto tree = default_skeleton();
  const auto lex = default_lexicon(tree, 99, 16);
  const auto a = generate_corpus(lex, tree, 12, 7);
  const auto b = generate_corpus(lex, tree, 12, 7);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].transcript == b[i].transcript);
    CHECK(a[i].params.body_pose == b[i].params.body_pose);
    CHECK(a[i].params.hand_pose == b[i].params.hand_pose);
    CHECK(a[i].params.expression == b[i].params.expression);
  }
  const auto c = generate_corpus(lex, tree, 12, 8);
  bool any_difference = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    any_difference |= a[i].transcript != c[i].transcript;
  CHECK(any_difference);
}

TEST_CASE("single-token sentence spans exactly the primitive duration") {
  const auto tree = default_skeleton();
  const auto lex = default_lexicon(tree, 4, 8);
  const auto& token = lex.tokens[3];
  const auto seq = synthesize_motion(lex, tree, {token});
  CHECK(seq.frames() == lex.primitive(token).duration);
}

TEST_CASE("a shared token's interior segment matches across sentences") {
  const auto tree = default_skeleton();
  const auto lex = default_lexicon(tree, 5, 12);
  const std::vector<std::string> sent_a{lex.tokens[0], lex.tokens[4], lex.tokens[2]};
  const std::vector<std::string> sent_b{lex.tokens[1], lex.tokens[4]};

  const auto seq_a = synthesize_motion(lex, tree, sent_a);
  const auto seq_b = synthesize_motion(lex, tree, sent_b);
  const auto sched_a = sentence_schedule(lex, sent_a);
  const auto sched_b = sentence_schedule(lex, sent_b);

  // Token 4 sits at position 1 in both sentences; compare its frames outside
  // the cross-fade zones.
  const int begin_a = sched_a[1].begin + kCrossFadeFrames;
  const int end_a = sched_a[1].end - kCrossFadeFrames;
  const int begin_b = sched_b[1].begin + kCrossFadeFrames;
  REQUIRE(end_a > begin_a);
  for (int offset = 0; offset < end_a - begin_a; ++offset) {
    const Index fa = begin_a + offset;
    const Index fb = begin_b + offset;
    CHECK((seq_a.body_pose.row(fa) - seq_b.body_pose.row(fb)).cwiseAbs().maxCoeff() <
          1e-12);
    CHECK((seq_a.hand_pose.row(fa) - seq_b.hand_pose.row(fb)).cwiseAbs().maxCoeff() <
          1e-12);
  }
}

TEST_CASE("every generated channel stays inside the lexicon joint limit") {
  const auto tree = default_skeleton();
  const auto lex = default_lexicon(tree, 21, 32);
  const auto corpus = generate_corpus(lex, tree, 20, 3);
  for (const auto& sample : corpus) {
    CHECK(sample.params.body_pose.cwiseAbs().maxCoeff() <= lex.joint_limit);
    CHECK(sample.params.hand_pose.cwiseAbs().maxCoeff() <= lex.joint_limit);
  }
}

TEST_CASE("split assignment is a pure function of the id") {
  CHECK(split_of_id("s00042") == split_of_id("s00042"));
  int train = 0, val = 0, test = 0;
  for (int i = 0; i < 1000; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%05d", i);
    switch (split_of_id(buf)) {
      case Split::train: ++train; break;
      case Split::val: ++val; break;
      case Split::test: ++test; break;
    }
  }
  CHECK(train > 700);
  CHECK(val > 40);
  CHECK(test > 40);
}

TEST_CASE("sequence save/load round trip is bit exact") {
  const auto tree = default_skeleton();
  const auto lex = default_lexicon(tree, 1, 8);
  const auto seq = synthesize_motion(lex, tree, {lex.tokens[0], lex.tokens[1]});
  const auto path = fresh_dir("roundtrip") / "seq.smc";
  save_params(seq, path);
  const auto loaded = load_params(path);
  CHECK(loaded.body_pose == seq.body_pose);
  CHECK(loaded.hand_pose == seq.hand_pose);
  CHECK(loaded.expression == seq.expression);
  CHECK(loaded.shape == seq.shape);
  CHECK(loaded.fps == seq.fps);
}

TEST_CASE("corrupted magic bytes are a format error") {
  const auto tree = default_skeleton();
  const auto lex = default_lexicon(tree, 1, 8);
  const auto seq = synthesize_motion(lex, tree, {lex.tokens[0]});
  const auto path = fresh_dir("corrupt") / "seq.smc";
  save_params(seq, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("????", 4);
  }
  CHECK_THROWS_AS(load_params(path), FormatError);
}

TEST_CASE("corpus directory round trip preserves samples and splits") {
  const auto tree = default_skeleton();
  const auto lex = default_lexicon(tree, 2, 8);
  const auto corpus = generate_corpus(lex, tree, 25, 5);
  const auto dir = fresh_dir("corpus");
  save_corpus(corpus, dir);
  const auto loaded = load_corpus(dir / "manifest.jsonl");
  REQUIRE(loaded.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(loaded[i].id == corpus[i].id);
    CHECK(loaded[i].transcript == corpus[i].transcript);
    CHECK(loaded[i].split == corpus[i].split);
    CHECK(loaded[i].params.hand_pose == corpus[i].params.hand_pose);
  }
  CHECK(filter_split(loaded, Split::train).size() +
            filter_split(loaded, Split::val).size() +
            filter_split(loaded, Split::test).size() ==
        loaded.size());
}

TEST_CASE("a hand-authored annotation file parses into a sample") {
  // Written byte-by-byte against the documented container layout rather than
  // through save_params, so it exercises the ingestion schema itself.
  const auto dir = fresh_dir("fixture");
  const auto path = dir / "external.smc";
  {
    std::ofstream os(path, std::ios::binary);
    auto u32 = [&os](std::uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };
    auto u64 = [&os](std::uint64_t v) { os.write(reinterpret_cast<char*>(&v), 8); };
    auto f64 = [&os](double v) { os.write(reinterpret_cast<char*>(&v), 8); };
    auto array = [&](const char* name, std::uint64_t rows, std::uint64_t cols,
                     std::initializer_list<double> values) {
      u32(static_cast<std::uint32_t>(std::strlen(name)));
      os.write(name, static_cast<std::streamsize>(std::strlen(name)));
      u64(rows);
      u64(cols);
      for (double v : values) f64(v);
    };
    os.write("SMC1", 4);
    u32(1);   // version
    u64(0);   // no metadata
    u32(5);   // array count
    // 2 frames, 1 body joint, 1 hand joint, E = 2.
    array("theta_b", 2, 3, {0.1, 0, 0, 0.2, 0, 0});
    array("theta_h", 2, 3, {0, 0.3, 0, 0, 0.4, 0});
    array("psi", 2, 2, {0.5, 0.6, 0.7, 0.8});
    array("beta", 2, 1, {0.0, 0.0});
    array("fps", 1, 1, {25.0});
  }
  const ParamSequence seq = load_params(path);
  CHECK(seq.frames() == 2);
  CHECK(seq.body_pose(1, 0) == doctest::Approx(0.2));
  CHECK(seq.hand_pose(0, 1) == doctest::Approx(0.3));
  CHECK(seq.expression(1, 1) == doctest::Approx(0.8));
  CHECK(seq.fps == doctest::Approx(25.0));

  MotionSample sample;
  sample.params = seq;
  sample.transcript = "external annotation";
  sample.id = "x00001";
  sample.split = split_of_id(sample.id);
  CHECK(!sample.transcript.empty());
}

TEST_CASE("generated motions look feasible to a prior trained on the lexicon") {
  const auto tree = default_skeleton();
  const auto lex = default_lexicon(tree, 31, 24);
  const auto corpus = generate_corpus(lex, tree, 40, 11);

  // Flattened left-hand positions over all corpus frames.
  std::vector<int> subset{4, 8, 9, 10, 11};
  std::vector<Vec> rows;
  for (const auto& sample : corpus) {
    const auto track = forward_kinematics(tree, sample.params);
    for (const auto& frame : track) {
      Vec x(3 * static_cast<Index>(subset.size()));
      for (std::size_t i = 0; i < subset.size(); ++i)
        x.segment<3>(3 * static_cast<Index>(i)) = frame.row(subset[i]).transpose();
      rows.push_back(x);
    }
  }
  Mat data(static_cast<Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) data.row(static_cast<Index>(i)) = rows[i];

  const PCAPrior prior = fit_prior(data, 12);
  Vec losses(data.rows());
  for (Index i = 0; i < data.rows(); ++i)
    losses(i) = prior_loss(prior, data.row(i).transpose());
  std::sort(losses.data(), losses.data() + losses.size());
  const Scalar p99 = losses(static_cast<Index>(0.99 * (losses.size() - 1)));

  // Freshly generated motions from the same lexicon stay below the training
  // 99th percentile.
  const auto fresh = generate_corpus(lex, tree, 6, 777);
  int checked = 0, below = 0;
  for (const auto& sample : fresh) {
    const auto track = forward_kinematics(tree, sample.params);
    for (const auto& frame : track) {
      Vec x(3 * static_cast<Index>(subset.size()));
      for (std::size_t i = 0; i < subset.size(); ++i)
        x.segment<3>(3 * static_cast<Index>(i)) = frame.row(subset[i]).transpose();
      ++checked;
      below += prior_loss(prior, x) <= p99 ? 1 : 0;
    }
  }
  CHECK(below > 0.95 * checked);
}
