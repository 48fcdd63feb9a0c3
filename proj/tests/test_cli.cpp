#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "signmotion/container.hpp"
#include "signmotion/dataset.hpp"
#include "signmotion/fitting.hpp"
#include "signmotion/kinematics.hpp"
#include "signmotion/random.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

using namespace signmotion;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kWork = fs::temp_directory_path() / "sm_cli";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SM_CLI_PATH) + " " + args + " >> " +
                          (kWork / "cli.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  json j;
  is >> j;
  return j;
}

struct Workspace {
  Workspace() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

void write_desk_configs() {
  {
    std::ofstream os(kWork / "model.json");
    os << R"({"layer_widths":[8,16],"token_width":6,"recurrence_depth":1,
         "decoder_hidden":24,"text_embedding_dim":64,"time_embedding_dim":16,
         "decoder_variant":"recurrent","init_seed":3})";
  }
  {
    std::ofstream os(kWork / "schedule.json");
    os << R"({"T":10,"beta_start":0.001,"beta_end":0.25})";
  }
}

}  // namespace

TEST_CASE("end to end command pipeline") {
  Workspace ws;
  write_desk_configs();

  // gen-data
  REQUIRE(run_cli("gen-data --seed 3 --out " + (kWork / "corpus").string() +
                  " --sentences 30 --tokens 12") == 0);
  REQUIRE(fs::exists(kWork / "corpus" / "manifest.jsonl"));
  const auto corpus = load_corpus(kWork / "corpus" / "manifest.jsonl");
  CHECK(corpus.size() == 30);

  // fit-prior
  REQUIRE(run_cli("fit-prior --data " + (kWork / "corpus" / "manifest.jsonl").string() +
                  " --d 8 --out " + (kWork / "priors").string()) == 0);
  CHECK(fs::exists(kWork / "priors" / "arms.prior"));
  CHECK(fs::exists(kWork / "priors" / "left_hand.prior.json"));

  // train (tiny)
  REQUIRE(run_cli("train --data " + (kWork / "corpus" / "manifest.jsonl").string() +
                  " --model-config " + (kWork / "model.json").string() + " --schedule " +
                  (kWork / "schedule.json").string() + " --epochs 2 --seed 5 --out " +
                  (kWork / "model.ckpt").string()) == 0);
  REQUIRE(fs::exists(kWork / "model.ckpt"));
  const json losslog = read_json(kWork / "model.ckpt.losslog.json");
  CHECK(losslog["epoch_loss"].size() == 2);

  // sample twice with the same seed -> bit-identical parameter files
  const std::string sample_cmd =
      "sample --checkpoint " + (kWork / "model.ckpt").string() +
      " --text \"w1 w2\" --frames 14 --seed 9 --out ";
  REQUIRE(run_cli(sample_cmd + (kWork / "gen_a.smc").string()) == 0);
  REQUIRE(run_cli(sample_cmd + (kWork / "gen_b.smc").string()) == 0);
  const ParamSequence gen_a = load_params(kWork / "gen_a.smc");
  const ParamSequence gen_b = load_params(kWork / "gen_b.smc");
  CHECK(gen_a.body_pose == gen_b.body_pose);
  CHECK(gen_a.hand_pose == gen_b.hand_pose);
  CHECK(gen_a.expression == gen_b.expression);
  CHECK(gen_a.frames() == 14);

  const json joints = read_json(kWork / "gen_a.smc.joints.json");
  CHECK(joints["frames"].size() == 14);
  CHECK(joints["names"].size() == 16);

  // evaluate on the test split
  REQUIRE(run_cli("evaluate --checkpoint " + (kWork / "model.ckpt").string() +
                  " --data " + (kWork / "corpus" / "manifest.jsonl").string() +
                  " --report " + (kWork / "report.json").string() + " --split test") == 0);
  const json report = read_json(kWork / "report.json");
  for (const char* block : {"body", "left_hand", "right_hand"})
    for (const char* metric : {"MPVPE", "MPJPE", "FID", "DTW"})
      CHECK(report[block][metric].is_number());

  // fit: perturb a training sequence, refine against its own projections
  {
    const auto tree = default_skeleton();
    const Camera camera = Camera::from_focal(700, 700, 320, 240);
    save_camera(camera, kWork / "camera.json");
    const ParamSequence truth = corpus[0].params;
    const Vec3d scene(0, 0, 2.2);
    const PointTrack joints3d = forward_kinematics(tree, truth, scene);
    Detections det;
    det.confidence = Mat::Ones(truth.frames(), tree.joint_count());
    det.joints2d.resize(joints3d.size());
    for (std::size_t f = 0; f < joints3d.size(); ++f)
      det.joints2d[f] = project(camera, joints3d[f]);
    save_detections(det, kWork / "detections.smc");

    ParamSequence init = truth;
    Rng rng(4);
    init.hand_pose += rng.gaussian(init.hand_pose.rows(), init.hand_pose.cols()) * 0.08;
    save_params(init, kWork / "init.smc");

    json fit_cfg;
    fit_cfg["lambda_prior"] = 0.05;
    fit_cfg["lambda_temp"] = 0.5;
    fit_cfg["max_iters"] = 40;
    fit_cfg["step_size"] = 0.04;
    fit_cfg["root_translation"] = {0.0, 0.0, 2.2};
    fit_cfg["optimized_joints"] = {8, 9, 10, 11, 12, 13, 14, 15};
    fit_cfg["priors"] = {(kWork / "priors" / "arms.prior").string(),
                         (kWork / "priors" / "left_hand.prior").string(),
                         (kWork / "priors" / "right_hand.prior").string()};
    std::ofstream os(kWork / "fit.json");
    os << fit_cfg.dump();
  }
  REQUIRE(run_cli("fit --init " + (kWork / "init.smc").string() + " --detections " +
                  (kWork / "detections.smc").string() + " --camera " +
                  (kWork / "camera.json").string() + " --config " +
                  (kWork / "fit.json").string() + " --out " +
                  (kWork / "refined.smc").string()) == 0);
  const json trace = read_json(kWork / "refined.smc.trace.json");
  const auto losses = trace["loss"].get<std::vector<double>>();
  REQUIRE(losses.size() >= 2);
  CHECK(losses.back() <= losses.front());

  // ablate emits a table row
  REQUIRE(run_cli("ablate --variant no-tokens --data " +
                  (kWork / "corpus" / "manifest.jsonl").string() + " --model-config " +
                  (kWork / "model.json").string() + " --schedule " +
                  (kWork / "schedule.json").string() +
                  " --epochs 1 --eval-split test --out " +
                  (kWork / "ablate.ckpt").string() + " --report " +
                  (kWork / "row.json").string()) == 0);
  const json row = read_json(kWork / "row.json");
  CHECK(row["variant"] == "no-tokens");
  CHECK(row["MPJPE"].is_number());
  CHECK(row["decoder_parameters"]["recurrent"].is_number());
}

TEST_CASE("exit codes distinguish user errors") {
  Workspace ws;
  write_desk_configs();
  // Missing files -> 1.
  CHECK(run_cli("train --data /nonexistent/manifest.jsonl --model-config " +
                (kWork / "model.json").string() + " --schedule " +
                (kWork / "schedule.json").string() + " --out " +
                (kWork / "x.ckpt").string()) == 1);
  CHECK(run_cli("sample --checkpoint /nonexistent.ckpt --text hi --out " +
                (kWork / "y.smc").string()) == 1);
  // Bad flags -> 1.
  CHECK(run_cli("ablate --variant bogus --data x --model-config y --schedule z "
                "--out o --report r") == 1);
  CHECK(run_cli("definitely-not-a-subcommand") == 1);
}
