#include "signmotion/training.hpp"

#include "signmotion/container.hpp"
#include "signmotion/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numeric>
#include <unordered_map>

namespace signmotion {

using nlohmann::json;

void AdamOptimizer::attach(const std::vector<ParamRef>& params) {
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
    v.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
  }
  step_count = 0;
}

void AdamOptimizer::step(std::vector<ParamRef>& params, Scalar learning_rate) {
  ++step_count;
  const Scalar bc1 = 1.0 - std::pow(beta1, step_count);
  const Scalar bc2 = 1.0 - std::pow(beta2, step_count);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Mat& g = *params[i].grad;
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseAbs2();
    params[i].value->array() -=
        learning_rate * (m[i].array() / bc1) / ((v[i].array() / bc2).sqrt() + eps);
  }
}

TrainLog train_denoiser(Denoiser& model, const std::vector<const MotionSample*>& train_set,
                        const TextEncoderFn& encode_text, const NoiseSchedule& schedule,
                        const ChannelStats& stats, const LossWeights& weights,
                        const TrainConfig& config, WordBagEncoder* wordbag,
                        const EpochCallback& on_epoch) {
  if (train_set.empty()) throw DegenerateInputError("train: empty training set");
  if (config.epochs < 1) throw DimensionError("train: epochs >= 1 required");

  model.set_schedule(schedule.alpha_bar);
  std::vector<ParamRef> params = model.params();
  if (wordbag)
    params.push_back({"wordbag.table", "text", &wordbag->table(), &wordbag->gradient()});
  AdamOptimizer adam;
  adam.attach(params);

  // Normalized states once; text embeddings once unless they are trainable.
  std::vector<Mat> states;
  states.reserve(train_set.size());
  for (const auto* sample : train_set) states.push_back(stats.normalize(sample->params.state()));
  std::vector<Vec> cached_text;
  if (!wordbag) {
    cached_text.reserve(train_set.size());
    for (const auto* sample : train_set) cached_text.push_back(encode_text(sample->transcript));
  }

  Rng rng(config.seed);
  const Scalar weight_sum = weights.w.sum();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainLog log;

  // Pre-training evaluation pass: the loss of the freshly initialized model
  // under the same (t, eps) sampling; the baseline that "loss reduction"
  // statements refer to.
  {
    Rng probe(config.seed ^ 0x9E3779B97F4A7C15ULL);
    Scalar sum = 0;
    for (std::size_t i = 0; i < states.size(); ++i) {
      const Mat& p0 = states[i];
      const int t = 1 + static_cast<int>(probe.uniform_index(schedule.steps()));
      const Mat eps = probe.gaussian(p0.rows(), p0.cols());
      const Vec text =
          wordbag ? wordbag->encode(train_set[i]->transcript) : cached_text[i];
      sum += training_loss(
          [&model](const Mat& x, int step, const Vec& cond) {
            return model.forward(x, step, cond);
          },
          p0, text, t, eps, weights, schedule);
    }
    log.initial_loss = sum / static_cast<Scalar>(states.size());
  }

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const Scalar lr =
        config.epochs == 1
            ? config.lr_start
            : config.lr_start + (config.lr_end - config.lr_start) * epoch /
                                    static_cast<Scalar>(config.epochs - 1);
    rng.shuffle(order);
    Scalar loss_sum = 0;
    for (std::size_t idx : order) {
      const Mat& p0 = states[idx];
      const int t = 1 + static_cast<int>(rng.uniform_index(schedule.steps()));
      const Mat eps = rng.gaussian(p0.rows(), p0.cols());
      const Mat noisy = q_sample(p0, t, eps, schedule);
      const Vec text =
          wordbag ? wordbag->encode(train_set[idx]->transcript) : cached_text[idx];

      const Mat predicted = model.forward(noisy, t, text);
      if (!predicted.allFinite())
        throw TrainingInstabilityError("train: non-finite prediction at epoch " +
                                       std::to_string(epoch));
      const Mat diff = predicted - eps;
      const Scalar denom = static_cast<Scalar>(p0.rows()) * weight_sum;
      Scalar loss = 0;
      for (Index f = 0; f < diff.rows(); ++f)
        loss += diff.row(f).cwiseAbs2().dot(weights.w.transpose());
      loss /= denom;

      Mat d_pred = (2.0 / denom) * diff;
      d_pred.array().rowwise() *= weights.w.transpose().array();

      model.zero_grad();
      if (wordbag) wordbag->gradient().setZero();
      const Vec d_text = model.backward(d_pred);
      if (wordbag) wordbag->accumulate_gradient(train_set[idx]->transcript, d_text);
      adam.step(params, lr);
      loss_sum += loss;
    }
    log.epoch_loss.push_back(loss_sum / static_cast<Scalar>(train_set.size()));
    if (on_epoch) on_epoch(epoch, log);
  }
  log.final_loss = log.epoch_loss.back();
  return log;
}

// --- checkpoints -------------------------------------------------------------------

void save_checkpoint(const Denoiser& model, const KinematicTree& tree,
                     const NoiseSchedule& schedule, Scalar beta_start, Scalar beta_end,
                     const ChannelStats& stats, const std::string& text_encoder,
                     const WordBagEncoder* wordbag, Scalar fps, Index shape_dim,
                     const std::filesystem::path& path) {
  ArrayContainer c;
  for (const auto& p : model.params()) c.add(p.name, *p.value);
  c.add("norm_mean", stats.mean);
  c.add("norm_scale", stats.scale);
  if (wordbag) c.add("wordbag_table", const_cast<WordBagEncoder*>(wordbag)->table());

  json meta;
  meta["format"] = "signmotion-checkpoint";
  meta["version"] = 1;
  meta["model_config"] = model_config_to_json(model.config());
  meta["skeleton"] = skeleton_to_json(tree);
  meta["T"] = schedule.steps();
  meta["beta_start"] = beta_start;
  meta["beta_end"] = beta_end;
  meta["expression_dim"] = model.layout().expression_dim;
  meta["text_encoder"] = text_encoder;
  if (wordbag) meta["wordbag_vocab"] = wordbag->vocabulary();
  meta["fps"] = fps;
  meta["shape_dim"] = shape_dim;
  c.metadata = meta.dump();
  c.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const ArrayContainer c = ArrayContainer::load(path);
  json meta;
  try {
    meta = json::parse(c.metadata);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint: invalid metadata: " + std::string(e.what()));
  }
  if (meta.value("format", "") != "signmotion-checkpoint")
    throw FormatError("checkpoint: not a model checkpoint");

  Checkpoint ckpt;
  try {
    ckpt.model_config = model_config_from_json(meta.at("model_config"));
    ckpt.tree = skeleton_from_json(meta.at("skeleton"));
    ckpt.beta_start = meta.at("beta_start");
    ckpt.beta_end = meta.at("beta_end");
    ckpt.schedule = make_schedule(meta.at("T"), ckpt.beta_start, ckpt.beta_end);
    ckpt.layout = make_layout(ckpt.tree, meta.at("expression_dim"));
    ckpt.text_encoder = meta.at("text_encoder");
    ckpt.fps = meta.at("fps");
    ckpt.shape_dim = meta.at("shape_dim");
    if (meta.contains("wordbag_vocab"))
      ckpt.wordbag_vocab = meta["wordbag_vocab"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError("checkpoint: missing metadata field: " + std::string(e.what()));
  }

  ckpt.stats.mean = c.vector_at("norm_mean");
  ckpt.stats.scale = c.vector_at("norm_scale");
  ckpt.model = std::make_unique<Denoiser>(ckpt.model_config, ckpt.tree, ckpt.layout);
  ckpt.model->set_schedule(ckpt.schedule.alpha_bar);
  for (auto& p : ckpt.model->params()) {
    const Mat& stored = c.at(p.name);
    if (stored.rows() != p.value->rows() || stored.cols() != p.value->cols())
      throw FormatError("checkpoint: array '" + p.name + "' has unexpected shape");
    *p.value = stored;
  }
  if (ckpt.text_encoder == "wordbag") {
    ckpt.wordbag = std::make_unique<WordBagEncoder>(ckpt.wordbag_vocab,
                                                    ckpt.model_config.text_embedding_dim, 1);
    ckpt.wordbag->table() = c.at("wordbag_table");
  }
  return ckpt;
}

Vec Checkpoint::encode_text(const std::string& text,
                            const std::optional<ExternalEncoderConfig>& external) const {
  if (text_encoder == "wordbag") {
    if (!wordbag) throw Error("checkpoint: wordbag encoder missing");
    return wordbag->encode(text);
  }
  if (text_encoder == "external") {
    if (!external)
      throw UnavailableError("checkpoint: external encoder config required");
    ExternalEncoderConfig cfg = *external;
    cfg.dim = model_config.text_embedding_dim;
    return encode_external(text, cfg).vector;
  }
  return encode_toy(text, model_config.text_embedding_dim).vector;
}

}  // namespace signmotion
