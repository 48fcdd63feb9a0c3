// Command-line entry points: synthetic data generation, prior fitting,
// sequence fitting, diffusion training, sampling, evaluation and ablations.

#include "signmotion/container.hpp"
#include "signmotion/dataset.hpp"
#include "signmotion/denoiser.hpp"
#include "signmotion/diffusion.hpp"
#include "signmotion/errors.hpp"
#include "signmotion/evaluation.hpp"
#include "signmotion/fitting.hpp"
#include "signmotion/metrics.hpp"
#include "signmotion/pose_prior.hpp"
#include "signmotion/text_encoding.hpp"
#include "signmotion/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace signmotion;

namespace {

struct UsageError : Error {
  using Error::Error;
};

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path))
    throw UsageError(what + " not found: '" + path.string() + "'");
}

json load_json_file(const fs::path& path, const std::string& what) {
  require_file(path, what);
  std::ifstream is(path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw UsageError(what + " is not valid JSON: " + std::string(e.what()));
  }
  return j;
}

void write_json_file(const json& j, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw UsageError("cannot write '" + path.string() + "'");
  os << j.dump(2) << "\n";
}

KinematicTree tree_from_flag(const std::string& skeleton_path) {
  if (skeleton_path.empty()) return default_skeleton();
  require_file(skeleton_path, "skeleton file");
  return load_skeleton(skeleton_path);
}

struct ScheduleSpec {
  int steps = 100;
  Scalar beta_start = 1e-4;
  Scalar beta_end = 0.02;
};

ScheduleSpec schedule_from_file(const fs::path& path) {
  const json j = load_json_file(path, "schedule file");
  ScheduleSpec spec;
  spec.steps = j.value("T", 100);
  spec.beta_start = j.value("beta_start", 1e-4);
  spec.beta_end = j.value("beta_end", 0.02);
  return spec;
}

// Named prior subsets: arms as configured, each hand chain with its wrist.
std::vector<std::pair<std::string, std::vector<int>>> prior_subsets(
    const KinematicTree& tree) {
  std::vector<int> left, right;
  std::set<int> roots_left, roots_right;
  for (int j : tree.hand_joints) {
    const bool is_left = tree.names[j].rfind("l_", 0) == 0;
    (is_left ? left : right).push_back(j);
    int parent = tree.parent[j];
    if (parent != KinematicTree::kNoParent && !tree.is_hand(parent))
      (is_left ? roots_left : roots_right).insert(parent);
  }
  left.insert(left.begin(), roots_left.begin(), roots_left.end());
  right.insert(right.begin(), roots_right.begin(), roots_right.end());
  return {{"arms", tree.arm_joints}, {"left_hand", left}, {"right_hand", right}};
}

Mat subset_positions(const KinematicTree& tree, const std::vector<MotionSample>& corpus,
                     const std::vector<int>& joints, const Vec3d& translation) {
  std::vector<Vec> rows;
  for (const auto& sample : corpus) {
    const PointTrack track = forward_kinematics(tree, sample.params, translation);
    for (const auto& frame : track) {
      Vec x(3 * static_cast<Index>(joints.size()));
      for (std::size_t i = 0; i < joints.size(); ++i)
        x.segment<3>(3 * static_cast<Index>(i)) = frame.row(joints[i]).transpose();
      rows.push_back(std::move(x));
    }
  }
  Mat data(static_cast<Index>(rows.size()), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) data.row(static_cast<Index>(i)) = rows[i];
  return data;
}

// --- subcommand payloads ------------------------------------------------------

struct GenDataArgs {
  std::uint64_t seed = 7;
  std::string out;
  int sentences = 500;
  int tokens = 64;
  std::uint64_t lexicon_seed = 41;
  std::string skeleton;
};

int run_gen_data(const GenDataArgs& args) {
  const KinematicTree tree = tree_from_flag(args.skeleton);
  const Lexicon lexicon = default_lexicon(tree, args.lexicon_seed, args.tokens);
  const auto corpus = generate_corpus(lexicon, tree, args.sentences, args.seed);
  save_corpus(corpus, args.out);
  int train = 0, val = 0, test = 0;
  for (const auto& s : corpus) {
    if (s.split == Split::train) ++train;
    else if (s.split == Split::val) ++val;
    else ++test;
  }
  std::cout << "wrote " << corpus.size() << " samples to " << args.out << " (train "
            << train << ", val " << val << ", test " << test << ")\n";
  return 0;
}

struct FitPriorArgs {
  std::string data;
  Index components = 12;
  std::string out;
  std::string skeleton;
  std::vector<Scalar> translation{0, 0, 2.5};
};

int run_fit_prior(const FitPriorArgs& args) {
  require_file(args.data, "corpus manifest");
  const KinematicTree tree = tree_from_flag(args.skeleton);
  const auto corpus = load_corpus(args.data);
  if (corpus.empty()) throw UsageError("corpus is empty");
  const Vec3d translation(args.translation[0], args.translation[1], args.translation[2]);

  fs::create_directories(args.out);
  for (const auto& [name, joints] : prior_subsets(tree)) {
    if (joints.empty()) throw UsageError("prior subset '" + name + "' has no joints");
    const Mat data = subset_positions(tree, corpus, joints, translation);
    const PCAPrior prior = fit_prior(data, args.components);
    const fs::path path = fs::path(args.out) / (name + ".prior");
    save_prior(prior, joints, path);
    std::cout << "prior '" << name << "': " << data.rows() << " samples, d="
              << args.components << " -> " << path.string() << "\n";
  }
  return 0;
}

struct FitArgs {
  std::string init, detections, camera, config, out;
  std::string trace;
};

int run_fit(const FitArgs& args) {
  require_file(args.init, "initial parameters");
  require_file(args.detections, "detections file");
  require_file(args.camera, "camera file");
  const json cfg = load_json_file(args.config, "fit config");

  const KinematicTree tree = tree_from_flag(cfg.value("skeleton", std::string()));
  const ParamSequence init = load_params(args.init);
  const Detections detections = load_detections(args.detections);
  const Camera camera = load_camera(args.camera);

  FitConfig config;
  config.lambda_prior = cfg.value("lambda_prior", 0.1);
  config.lambda_temp = cfg.value("lambda_temp", 1.0);
  config.max_iters = cfg.value("max_iters", 200);
  config.step_size = cfg.value("step_size", 0.05);
  config.convergence_tol = cfg.value("convergence_tol", 1e-5);
  if (cfg.contains("root_translation")) {
    const auto t = cfg["root_translation"].get<std::vector<Scalar>>();
    if (t.size() != 3) throw UsageError("root_translation must have 3 entries");
    config.root_translation = Vec3d(t[0], t[1], t[2]);
  }
  if (cfg.contains("optimized_joints")) {
    config.optimized_joints = cfg["optimized_joints"].get<std::vector<int>>();
  } else {
    config.optimized_joints = tree.arm_joints;
    config.optimized_joints.insert(config.optimized_joints.end(),
                                   tree.hand_joints.begin(), tree.hand_joints.end());
  }

  PriorSet priors;
  if (cfg.contains("priors")) {
    for (const auto& entry : cfg["priors"]) {
      const fs::path path = entry.get<std::string>();
      require_file(path, "prior file");
      LoadedPrior loaded = load_prior(path);
      priors.entries.push_back(
          {path.stem().string(), std::move(loaded.prior), std::move(loaded.joint_subset)});
    }
  }

  const VertexRegressor regressor = default_regressor(tree);
  const FitResult result =
      fit_sequence(init, detections, camera, tree, priors, regressor, config);
  save_params(result.params, args.out);

  json trace;
  trace["iterations"] = result.iterations;
  trace["converged"] = result.converged;
  trace["loss"] = result.loss_trace;
  const fs::path trace_path =
      args.trace.empty() ? fs::path(args.out + ".trace.json") : fs::path(args.trace);
  write_json_file(trace, trace_path);
  std::cout << "fit: " << result.iterations << " iterations, loss "
            << result.loss_trace.front() << " -> " << result.loss_trace.back() << "\n";
  return 0;
}

struct TrainArgs {
  std::string data, model_config, schedule, out;
  int epochs = 50;
  std::uint64_t seed = 7;
  Scalar lr_start = 1e-3, lr_end = 1e-6;
  std::string text_encoder = "toy";
  std::string endpoint, cache_dir;
  std::string log;
  int checkpoint_every = 0;
  Index expression_dim = -1;
};

int run_train(const TrainArgs& args, const std::string& variant = std::string()) {
  require_file(args.data, "corpus manifest");
  ModelConfig model_config = load_model_config(args.model_config);
  const ScheduleSpec spec = schedule_from_file(args.schedule);

  if (!variant.empty()) {
    if (variant == "no-gnn") {
      model_config.pose_encoder = PoseEncoderVariant::mlp;
    } else if (variant == "no-tokens") {
      model_config.tokens_enabled = false;
    } else if (variant == "no-recurrence") {
      model_config.decoder = DecoderVariant::frame_positional;
      model_config.positional_encoding = false;
    } else if (variant == "frame-positional") {
      model_config.decoder = DecoderVariant::frame_positional;
      model_config.positional_encoding = true;
    } else if (variant == "attention-decoder") {
      model_config.decoder = DecoderVariant::attention;
    } else if (variant == "toy-text" || variant == "full") {
      // baseline text path, nothing to change
    } else if (variant == "wordbag-text") {
      model_config.text_embedding_dim = 256;
    } else {
      throw UsageError("unknown ablation variant '" + variant + "'");
    }
  }

  const auto corpus = load_corpus(args.data);
  const auto train_set = filter_split(corpus, Split::train);
  if (train_set.empty()) throw UsageError("corpus has no training split");
  const Index expr_dim = args.expression_dim >= 0
                             ? args.expression_dim
                             : train_set.front()->params.expression.cols();

  // The skeleton travels with the corpus convention; the default tree matches
  // gen-data unless a custom skeleton was used for both.
  const KinematicTree tree = default_skeleton();
  const StateLayout layout = make_layout(tree, expr_dim);

  std::vector<Mat> states;
  for (const auto* s : train_set) states.push_back(s->params.state());
  const ChannelStats stats = fit_channel_stats(states);
  const NoiseSchedule schedule = make_schedule(spec.steps, spec.beta_start, spec.beta_end);
  const LossWeights weights = make_loss_weights(layout);

  std::string encoder_kind =
      (!variant.empty() && variant == "wordbag-text") ? "wordbag" : args.text_encoder;
  std::unique_ptr<WordBagEncoder> wordbag;
  TextEncoderFn encode;
  if (encoder_kind == "wordbag") {
    std::set<std::string> vocab_set;
    for (const auto* s : train_set)
      for (const auto& token : tokenize_whitespace(s->transcript)) vocab_set.insert(token);
    std::vector<std::string> vocab(vocab_set.begin(), vocab_set.end());
    wordbag = std::make_unique<WordBagEncoder>(vocab, model_config.text_embedding_dim,
                                               args.seed + 1);
    WordBagEncoder* bag = wordbag.get();
    encode = [bag](const std::string& text) { return bag->encode(text); };
  } else if (encoder_kind == "external") {
    if (args.endpoint.empty() || args.cache_dir.empty())
      throw UsageError("external text encoder needs --endpoint and --cache");
    ExternalEncoderConfig cfg{args.endpoint, args.cache_dir,
                              model_config.text_embedding_dim};
    encode = [cfg](const std::string& text) { return encode_external(text, cfg).vector; };
  } else if (encoder_kind == "toy") {
    const Index dim = model_config.text_embedding_dim;
    encode = [dim](const std::string& text) { return encode_toy(text, dim).vector; };
  } else {
    throw UsageError("unknown text encoder '" + encoder_kind + "'");
  }

  Denoiser model(model_config, tree, layout);
  TrainConfig train_config;
  train_config.epochs = args.epochs;
  train_config.seed = args.seed;
  train_config.lr_start = args.lr_start;
  train_config.lr_end = args.lr_end;

  const Scalar fps = train_set.front()->params.fps;
  auto save = [&](const fs::path& path) {
    save_checkpoint(model, tree, schedule, spec.beta_start, spec.beta_end, stats,
                    encoder_kind, wordbag.get(), fps, 8, path);
  };

  const TrainLog log = train_denoiser(
      model, train_set, encode, schedule, stats, weights, train_config, wordbag.get(),
      [&](int epoch, const TrainLog& running) {
        std::cout << "epoch " << epoch << " loss " << running.epoch_loss.back() << "\n";
        if (args.checkpoint_every > 0 && (epoch + 1) % args.checkpoint_every == 0 &&
            epoch + 1 < args.epochs)
          save(args.out + ".epoch" + std::to_string(epoch + 1));
      });
  save(args.out);

  json loss_log;
  loss_log["epochs"] = args.epochs;
  loss_log["seed"] = args.seed;
  loss_log["lr_start"] = args.lr_start;
  loss_log["lr_end"] = args.lr_end;
  loss_log["epoch_loss"] = log.epoch_loss;
  if (!variant.empty()) loss_log["variant"] = variant;
  const fs::path log_path =
      args.log.empty() ? fs::path(args.out + ".losslog.json") : fs::path(args.log);
  write_json_file(loss_log, log_path);
  std::cout << "training loss " << log.initial_loss << " -> " << log.final_loss << "\n";
  return 0;
}

struct SampleArgs {
  std::string checkpoint, text, out;
  Index frames = 48;
  std::uint64_t seed = 1;
  std::string joints_out;
  std::string endpoint, cache_dir;
};

int run_sample(const SampleArgs& args) {
  require_file(args.checkpoint, "checkpoint");
  if (args.text.empty()) throw UsageError("--text must be non-empty");
  const Checkpoint ckpt = load_checkpoint(args.checkpoint);

  std::optional<ExternalEncoderConfig> external;
  if (!args.endpoint.empty())
    external = ExternalEncoderConfig{args.endpoint, args.cache_dir,
                                     ckpt.model_config.text_embedding_dim};
  const Vec text = ckpt.encode_text(args.text, external);

  Denoiser& model = *ckpt.model;
  auto eps_model = [&model](const Mat& x, int t, const Vec& cond) {
    return model.forward(x, t, cond);
  };
  const ParamSequence generated = sample(eps_model, text, args.frames, ckpt.layout,
                                         ckpt.stats, ckpt.schedule, args.seed, ckpt.fps,
                                         ckpt.shape_dim);
  save_params(generated, args.out);

  const PointTrack joints = forward_kinematics(ckpt.tree, generated);
  json track;
  track["fps"] = generated.fps;
  track["names"] = ckpt.tree.names;
  json frame_array = json::array();
  for (const auto& frame : joints) {
    json fj = json::array();
    for (Index j = 0; j < frame.rows(); ++j)
      fj.push_back({frame(j, 0), frame(j, 1), frame(j, 2)});
    frame_array.push_back(std::move(fj));
  }
  track["frames"] = std::move(frame_array);
  const fs::path joints_path = args.joints_out.empty()
                                   ? fs::path(args.out + ".joints.json")
                                   : fs::path(args.joints_out);
  write_json_file(track, joints_path);
  std::cout << "sampled " << args.frames << " frames -> " << args.out << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string checkpoint, data, report;
  std::string split = "test";
  std::uint64_t seed = 11;
  int limit = 0;
  std::string endpoint, cache_dir;
};

int run_evaluate(const EvaluateArgs& args) {
  require_file(args.checkpoint, "checkpoint");
  require_file(args.data, "corpus manifest");
  const Checkpoint ckpt = load_checkpoint(args.checkpoint);
  const auto corpus = load_corpus(args.data);
  auto samples = filter_split(corpus, split_from_name(args.split));
  if (samples.empty()) throw UsageError("no samples in split '" + args.split + "'");
  if (args.limit > 0 && static_cast<int>(samples.size()) > args.limit)
    samples.resize(args.limit);

  std::optional<ExternalEncoderConfig> external;
  if (!args.endpoint.empty())
    external = ExternalEncoderConfig{args.endpoint, args.cache_dir,
                                     ckpt.model_config.text_embedding_dim};

  const EvaluationResult result = evaluate_checkpoint(ckpt, samples, args.seed, external);
  json report = report_to_json(result.report);
  auto vec_to_json = [](const Vec& v) {
    return std::vector<Scalar>(v.data(), v.data() + v.size());
  };
  report["overall"] = {{"MPVPE", result.overall.mpvpe},
                       {"MPJPE", result.overall.mpjpe},
                       {"FID", result.overall.fid},
                       {"DTW", result.overall.dtw}};
  report["sample_count"] = result.sample_count;
  report["split"] = args.split;
  report["frame_stats"] = {{"generated_mean", vec_to_json(result.generated_stats.mean)},
                           {"generated_std", vec_to_json(result.generated_stats.stddev)},
                           {"truth_mean", vec_to_json(result.truth_stats.mean)},
                           {"truth_std", vec_to_json(result.truth_stats.stddev)}};
  write_json_file(report, args.report);
  std::cout << "evaluated " << result.sample_count << " samples; overall MPJPE "
            << result.overall.mpjpe << ", FID " << result.overall.fid << "\n";
  return 0;
}

struct AblateArgs {
  TrainArgs train;
  EvaluateArgs evaluate;
  std::string variant;
  std::string report;
};

int run_ablate(const AblateArgs& args) {
  run_train(args.train, args.variant);

  EvaluateArgs eval = args.evaluate;
  eval.checkpoint = args.train.out;
  eval.data = args.train.data;
  eval.report = args.report + ".full_report.json";
  run_evaluate(eval);

  const json full = load_json_file(eval.report, "evaluation report");
  const ModelConfig config = load_model_config(args.train.model_config);
  json row;
  row["variant"] = args.variant;
  row["MPVPE"] = full["overall"]["MPVPE"];
  row["MPJPE"] = full["overall"]["MPJPE"];
  row["FID"] = full["overall"]["FID"];
  row["DTW"] = full["overall"]["DTW"];
  row["decoder_parameters"] = {
      {"recurrent", decoder_parameter_count(config, DecoderVariant::recurrent)},
      {"attention", decoder_parameter_count(config, DecoderVariant::attention)}};
  write_json_file(row, args.report);
  std::cout << "ablation row '" << args.variant << "' -> " << args.report << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"text-conditioned 3D sign motion generation toolkit"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen->add_option("--seed", gen_args.seed);
  gen->add_option("--out", gen_args.out)->required();
  gen->add_option("--sentences", gen_args.sentences);
  gen->add_option("--tokens", gen_args.tokens);
  gen->add_option("--lexicon-seed", gen_args.lexicon_seed);
  gen->add_option("--skeleton", gen_args.skeleton);

  FitPriorArgs prior_args;
  auto* fit_prior_cmd = app.add_subcommand("fit-prior", "train PCA pose priors");
  fit_prior_cmd->add_option("--data", prior_args.data)->required();
  fit_prior_cmd->add_option("--d", prior_args.components);
  fit_prior_cmd->add_option("--out", prior_args.out)->required();
  fit_prior_cmd->add_option("--skeleton", prior_args.skeleton);
  fit_prior_cmd->add_option("--translation", prior_args.translation)->expected(3);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "refine parameters against 2D detections");
  fit_cmd->add_option("--init", fit_args.init)->required();
  fit_cmd->add_option("--detections", fit_args.detections)->required();
  fit_cmd->add_option("--camera", fit_args.camera)->required();
  fit_cmd->add_option("--config", fit_args.config)->required();
  fit_cmd->add_option("--out", fit_args.out)->required();
  fit_cmd->add_option("--trace", fit_args.trace);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train the diffusion denoiser");
  train_cmd->add_option("--data", train_args.data)->required();
  train_cmd->add_option("--model-config", train_args.model_config)->required();
  train_cmd->add_option("--schedule", train_args.schedule)->required();
  train_cmd->add_option("--epochs", train_args.epochs);
  train_cmd->add_option("--out", train_args.out)->required();
  train_cmd->add_option("--seed", train_args.seed);
  train_cmd->add_option("--lr-start", train_args.lr_start);
  train_cmd->add_option("--lr-end", train_args.lr_end);
  train_cmd->add_option("--text-encoder", train_args.text_encoder);
  train_cmd->add_option("--endpoint", train_args.endpoint);
  train_cmd->add_option("--cache", train_args.cache_dir);
  train_cmd->add_option("--log", train_args.log);
  train_cmd->add_option("--checkpoint-every", train_args.checkpoint_every);
  train_cmd->add_option("--expression-dim", train_args.expression_dim);

  SampleArgs sample_args;
  auto* sample_cmd = app.add_subcommand("sample", "generate a motion from text");
  sample_cmd->add_option("--checkpoint", sample_args.checkpoint)->required();
  sample_cmd->add_option("--text", sample_args.text)->required();
  sample_cmd->add_option("--frames", sample_args.frames);
  sample_cmd->add_option("--seed", sample_args.seed);
  sample_cmd->add_option("--out", sample_args.out)->required();
  sample_cmd->add_option("--joints-out", sample_args.joints_out);
  sample_cmd->add_option("--endpoint", sample_args.endpoint);
  sample_cmd->add_option("--cache", sample_args.cache_dir);

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on a corpus split");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval_cmd->add_option("--data", eval_args.data)->required();
  eval_cmd->add_option("--report", eval_args.report)->required();
  eval_cmd->add_option("--split", eval_args.split);
  eval_cmd->add_option("--seed", eval_args.seed);
  eval_cmd->add_option("--limit", eval_args.limit);
  eval_cmd->add_option("--endpoint", eval_args.endpoint);
  eval_cmd->add_option("--cache", eval_args.cache_dir);

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "train and score a model variant");
  ablate_cmd->add_option("--variant", ablate_args.variant)
      ->required()
      ->check(CLI::IsMember({"full", "no-gnn", "no-tokens", "no-recurrence",
                             "frame-positional", "attention-decoder", "toy-text",
                             "wordbag-text"}));
  ablate_cmd->add_option("--data", ablate_args.train.data)->required();
  ablate_cmd->add_option("--model-config", ablate_args.train.model_config)->required();
  ablate_cmd->add_option("--schedule", ablate_args.train.schedule)->required();
  ablate_cmd->add_option("--epochs", ablate_args.train.epochs);
  ablate_cmd->add_option("--seed", ablate_args.train.seed);
  ablate_cmd->add_option("--lr-start", ablate_args.train.lr_start);
  ablate_cmd->add_option("--lr-end", ablate_args.train.lr_end);
  ablate_cmd->add_option("--out", ablate_args.train.out)->required();
  ablate_cmd->add_option("--report", ablate_args.report)->required();
  ablate_cmd->add_option("--eval-split", ablate_args.evaluate.split);
  ablate_cmd->add_option("--eval-seed", ablate_args.evaluate.seed);
  ablate_cmd->add_option("--eval-limit", ablate_args.evaluate.limit);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return run_gen_data(gen_args);
    if (fit_prior_cmd->parsed()) return run_fit_prior(prior_args);
    if (fit_cmd->parsed()) return run_fit(fit_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (sample_cmd->parsed()) return run_sample(sample_args);
    if (eval_cmd->parsed()) return run_evaluate(eval_args);
    if (ablate_cmd->parsed()) return run_ablate(ablate_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DegenerateInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const UnavailableError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ProtocolError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
