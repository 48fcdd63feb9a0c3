#include "signmotion/denoiser.hpp"

#include "signmotion/errors.hpp"
#include "signmotion/random.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace signmotion {

using nlohmann::json;

// --- nonlinearity -----------------------------------------------------------------

Gamma gamma_from_name(const std::string& name) {
  if (name == "identity") return Gamma::identity;
  if (name == "relu") return Gamma::relu;
  if (name == "tanh") return Gamma::tanh_fn;
  throw FormatError("model config: unknown nonlinearity '" + name + "'");
}

std::string gamma_name(Gamma gamma) {
  switch (gamma) {
    case Gamma::identity: return "identity";
    case Gamma::relu: return "relu";
    case Gamma::tanh_fn: return "tanh";
  }
  return "tanh";
}

Mat apply_gamma(Gamma gamma, const Mat& pre) {
  switch (gamma) {
    case Gamma::identity: return pre;
    case Gamma::relu: return pre.cwiseMax(0.0);
    case Gamma::tanh_fn: return pre.array().tanh().matrix();
  }
  return pre;
}

Mat gamma_backward(Gamma gamma, const Mat& pre, const Mat& d_out) {
  switch (gamma) {
    case Gamma::identity: return d_out;
    case Gamma::relu:
      return (pre.array() > 0.0).select(d_out, Mat::Zero(d_out.rows(), d_out.cols()));
    case Gamma::tanh_fn:
      return (d_out.array() * (1.0 - pre.array().tanh().square())).matrix();
  }
  return d_out;
}

// --- Linear ------------------------------------------------------------------------

void Linear::init(Index in, Index out, Rng& rng, Scalar gain) {
  const Scalar bound = gain * std::sqrt(3.0 / static_cast<Scalar>(in));
  weight = rng.uniform_matrix(out, in, -bound, bound);
  const Scalar bias_bound = 1.0 / std::sqrt(static_cast<Scalar>(in));
  bias = rng.uniform_matrix(out, 1, -bias_bound, bias_bound);
  weight_grad = Mat::Zero(out, in);
  bias_grad = Mat::Zero(out, 1);
}

Mat Linear::forward(const Mat& x) {
  if (x.cols() != weight.cols())
    throw DimensionError("linear: input width " + std::to_string(x.cols()) +
                         " != " + std::to_string(weight.cols()));
  x_cache_ = x;
  Mat out = x * weight.transpose();
  out.rowwise() += bias.col(0).transpose();
  return out;
}

Mat Linear::backward(const Mat& d_out) {
  weight_grad += d_out.transpose() * x_cache_;
  bias_grad.col(0) += d_out.colwise().sum().transpose();
  return d_out * weight;
}

void Linear::zero_grad() {
  weight_grad.setZero();
  bias_grad.setZero();
}

// --- GnnLayer ------------------------------------------------------------------------

void GnnLayer::init(const KinematicTree& tree, Index in, Index out, bool with_tokens,
                    Gamma nonlinearity, Rng& rng, Scalar gain) {
  joints = tree.joint_count();
  in_width = in;
  out_width = out;
  use_tokens = with_tokens;
  gamma = nonlinearity;
  kernels.clear();
  const auto neighbors = tree.neighbor_sets();
  for (int i = 0; i < joints; ++i) {
    // Messages are feature differences summed over deg(i) neighbors; scale
    // each kernel so the aggregate keeps roughly unit variance.
    const Scalar fan = static_cast<Scalar>(in) * 2.0 *
                       std::max<std::size_t>(neighbors[i].size(), 1);
    const Scalar bound = gain * std::sqrt(3.0 / fan);
    for (int j : neighbors[i]) {
      EdgeKernel k;
      k.receiver = i;
      k.neighbor = j;
      k.weight = rng.uniform_matrix(out, in, -bound, bound);
      k.grad = Mat::Zero(out, in);
      kernels.push_back(std::move(k));
    }
  }
  tokens = rng.gaussian(joints, out) * 0.3;
  token_grad = Mat::Zero(joints, out);
}

Mat GnnLayer::forward(const Mat& features) {
  if (features.cols() != in_width) throw DimensionError("gnn_layer: feature width mismatch");
  if (features.rows() % joints != 0)
    throw DimensionError("gnn_layer: row count is not a multiple of the joint count");
  const Index frames = features.rows() / joints;
  x_cache_ = features;

  Mat pre = Mat::Zero(features.rows(), out_width);
  if (use_tokens)
    for (Index f = 0; f < frames; ++f) pre.middleRows(f * joints, joints) = tokens;

  Mat diff(frames, in_width);
  for (const auto& k : kernels) {
    for (Index f = 0; f < frames; ++f)
      diff.row(f) =
          features.row(f * joints + k.neighbor) - features.row(f * joints + k.receiver);
    const Mat contrib = diff * k.weight.transpose();
    for (Index f = 0; f < frames; ++f) pre.row(f * joints + k.receiver) += contrib.row(f);
  }
  pre_cache_ = pre;
  return apply_gamma(gamma, pre);
}

Mat GnnLayer::backward(const Mat& d_out) {
  const Index frames = x_cache_.rows() / joints;
  const Mat d_pre = gamma_backward(gamma, pre_cache_, d_out);

  if (use_tokens)
    for (Index f = 0; f < frames; ++f)
      token_grad += d_pre.middleRows(f * joints, joints);

  Mat d_x = Mat::Zero(x_cache_.rows(), in_width);
  Mat diff(frames, in_width);
  Mat d_rec(frames, out_width);
  for (auto& k : kernels) {
    for (Index f = 0; f < frames; ++f) {
      diff.row(f) =
          x_cache_.row(f * joints + k.neighbor) - x_cache_.row(f * joints + k.receiver);
      d_rec.row(f) = d_pre.row(f * joints + k.receiver);
    }
    k.grad += d_rec.transpose() * diff;
    const Mat d_diff = d_rec * k.weight;
    for (Index f = 0; f < frames; ++f) {
      d_x.row(f * joints + k.neighbor) += d_diff.row(f);
      d_x.row(f * joints + k.receiver) -= d_diff.row(f);
    }
  }
  return d_x;
}

void GnnLayer::zero_grad() {
  for (auto& k : kernels) k.grad.setZero();
  token_grad.setZero();
}

// --- NodeMlpLayer ----------------------------------------------------------------------

void NodeMlpLayer::init(int node_count, Index in, Index out, bool with_tokens,
                        Gamma nonlinearity, Rng& rng, Scalar gain) {
  nodes = node_count;
  use_tokens = with_tokens;
  gamma = nonlinearity;
  lin.init(in, out, rng, gain);
  tokens = rng.gaussian(nodes, in) * 0.3;
  token_grad = Mat::Zero(nodes, in);
}

Mat NodeMlpLayer::forward(const Mat& features) {
  if (features.rows() % nodes != 0)
    throw DimensionError("expression_layer: row count is not a multiple of the node count");
  const Index frames = features.rows() / nodes;
  Mat with_token = features;
  if (use_tokens)
    for (Index f = 0; f < frames; ++f) with_token.middleRows(f * nodes, nodes) += tokens;
  pre_cache_ = lin.forward(with_token);
  return apply_gamma(gamma, pre_cache_);
}

Mat NodeMlpLayer::backward(const Mat& d_out) {
  const Index frames = d_out.rows() / nodes;
  const Mat d_pre = gamma_backward(gamma, pre_cache_, d_out);
  const Mat d_with_token = lin.backward(d_pre);
  if (use_tokens)
    for (Index f = 0; f < frames; ++f)
      token_grad += d_with_token.middleRows(f * nodes, nodes);
  return d_with_token;
}

void NodeMlpLayer::zero_grad() {
  lin.zero_grad();
  token_grad.setZero();
}

// --- ConditionGate ----------------------------------------------------------------------

void ConditionGate::init(Index width, Index cond_dim, Rng& rng, Scalar scale_gain,
                         Scalar shift_gain) {
  const Scalar base = std::sqrt(3.0 / static_cast<Scalar>(cond_dim));
  scale_map = rng.uniform_matrix(width, cond_dim, -scale_gain * base, scale_gain * base);
  shift_map = rng.uniform_matrix(width, cond_dim, -shift_gain * base, shift_gain * base);
  scale_grad = Mat::Zero(width, cond_dim);
  shift_grad = Mat::Zero(width, cond_dim);
}

Mat ConditionGate::forward(const Mat& h, const Vec& cond) {
  if (h.cols() != scale_map.rows()) throw DimensionError("gate: feature width mismatch");
  if (cond.size() != scale_map.cols()) throw DimensionError("gate: condition width mismatch");
  h_cache_ = h;
  cond_cache_ = cond;
  pre_gate_cache_ = scale_map * cond;
  gate_cache_ = (1.0 / (1.0 + (-pre_gate_cache_.array()).exp())).matrix();
  const Vec shift = shift_map * cond;
  Mat out = h.array().rowwise() * gate_cache_.transpose().array();
  out.rowwise() += shift.transpose();
  return out;
}

Mat ConditionGate::backward(const Mat& d_out, Vec& d_cond) {
  const Mat d_h = d_out.array().rowwise() * gate_cache_.transpose().array();
  const Vec d_gate = (d_out.array() * h_cache_.array()).colwise().sum().transpose();
  const Vec d_shift = d_out.colwise().sum().transpose();
  const Vec d_pre =
      (d_gate.array() * gate_cache_.array() * (1.0 - gate_cache_.array())).matrix();
  scale_grad += d_pre * cond_cache_.transpose();
  shift_grad += d_shift * cond_cache_.transpose();
  d_cond += scale_map.transpose() * d_pre + shift_map.transpose() * d_shift;
  return d_h;
}

void ConditionGate::zero_grad() {
  scale_grad.setZero();
  shift_grad.setZero();
}

// --- LstmStack ----------------------------------------------------------------------------

void LstmStack::init(Index in, Index hidden_width, int layer_count, Rng& rng) {
  input_dim = in;
  hidden = hidden_width;
  depth = layer_count;
  w_ih.clear();
  w_hh.clear();
  bias.clear();
  // Stacked cells contract hard at the conventional 1/sqrt(H) scale; the
  // larger input-weight bound keeps the frame signal alive through 4 layers.
  for (int l = 0; l < depth; ++l) {
    const Index layer_in = l == 0 ? in : hidden;
    const Scalar in_bound = 2.0 * std::sqrt(3.0 / static_cast<Scalar>(layer_in));
    const Scalar rec_bound = 1.0 / std::sqrt(static_cast<Scalar>(hidden));
    w_ih.push_back(rng.uniform_matrix(4 * hidden, layer_in, -in_bound, in_bound));
    w_hh.push_back(rng.uniform_matrix(4 * hidden, hidden, -rec_bound, rec_bound));
    bias.push_back(rng.uniform_matrix(4 * hidden, 1, -rec_bound, rec_bound));
    w_ih_grad.push_back(Mat::Zero(4 * hidden, layer_in));
    w_hh_grad.push_back(Mat::Zero(4 * hidden, hidden));
    bias_grad.push_back(Mat::Zero(4 * hidden, 1));
  }
  caches_.resize(depth);
}

Mat LstmStack::forward(const Mat& x) {
  const Index frames = x.rows();
  Mat layer_in = x;
  for (int l = 0; l < depth; ++l) {
    auto& cache = caches_[l];
    cache.input = layer_in;
    cache.gates.resize(frames, 4 * hidden);
    cache.cell.resize(frames, hidden);
    cache.cell_tanh.resize(frames, hidden);
    cache.hidden_states.resize(frames, hidden);

    Vec h_prev = Vec::Zero(hidden);
    Vec c_prev = Vec::Zero(hidden);
    for (Index f = 0; f < frames; ++f) {
      Vec z = w_ih[l] * layer_in.row(f).transpose() + w_hh[l] * h_prev + bias[l].col(0);
      Vec gi = (1.0 / (1.0 + (-z.segment(0, hidden).array()).exp())).matrix();
      Vec gf = (1.0 / (1.0 + (-z.segment(hidden, hidden).array()).exp())).matrix();
      Vec gg = z.segment(2 * hidden, hidden).array().tanh().matrix();
      Vec go = (1.0 / (1.0 + (-z.segment(3 * hidden, hidden).array()).exp())).matrix();
      const Vec c = gf.cwiseProduct(c_prev) + gi.cwiseProduct(gg);
      const Vec ct = c.array().tanh().matrix();
      const Vec h = go.cwiseProduct(ct);
      cache.gates.row(f) << gi.transpose(), gf.transpose(), gg.transpose(), go.transpose();
      cache.cell.row(f) = c.transpose();
      cache.cell_tanh.row(f) = ct.transpose();
      cache.hidden_states.row(f) = h.transpose();
      h_prev = h;
      c_prev = c;
    }
    layer_in = cache.hidden_states;
  }
  return layer_in;
}

Mat LstmStack::backward(const Mat& d_out) {
  const Index frames = d_out.rows();
  Mat d_layer_out = d_out;
  for (int l = depth - 1; l >= 0; --l) {
    const auto& cache = caches_[l];
    Mat d_in(frames, cache.input.cols());
    Vec dh_carry = Vec::Zero(hidden);
    Vec dc_carry = Vec::Zero(hidden);
    for (Index f = frames - 1; f >= 0; --f) {
      const Vec gi = cache.gates.row(f).segment(0, hidden).transpose();
      const Vec gf = cache.gates.row(f).segment(hidden, hidden).transpose();
      const Vec gg = cache.gates.row(f).segment(2 * hidden, hidden).transpose();
      const Vec go = cache.gates.row(f).segment(3 * hidden, hidden).transpose();
      const Vec ct = cache.cell_tanh.row(f).transpose();
      const Vec c_prev =
          f > 0 ? Vec(cache.cell.row(f - 1).transpose()) : Vec(Vec::Zero(hidden));
      const Vec h_prev =
          f > 0 ? Vec(cache.hidden_states.row(f - 1).transpose()) : Vec(Vec::Zero(hidden));

      const Vec dh = d_layer_out.row(f).transpose() + dh_carry;
      const Vec d_go = dh.cwiseProduct(ct);
      const Vec dc = dc_carry + dh.cwiseProduct(go).cwiseProduct(
                                    (1.0 - ct.array().square()).matrix());
      const Vec d_gi = dc.cwiseProduct(gg);
      const Vec d_gg = dc.cwiseProduct(gi);
      const Vec d_gf = dc.cwiseProduct(c_prev);
      dc_carry = dc.cwiseProduct(gf);

      Vec dz(4 * hidden);
      dz.segment(0, hidden) = d_gi.array() * gi.array() * (1.0 - gi.array());
      dz.segment(hidden, hidden) = d_gf.array() * gf.array() * (1.0 - gf.array());
      dz.segment(2 * hidden, hidden) = d_gg.array() * (1.0 - gg.array().square());
      dz.segment(3 * hidden, hidden) = d_go.array() * go.array() * (1.0 - go.array());

      w_ih_grad[l] += dz * cache.input.row(f);
      w_hh_grad[l] += dz * h_prev.transpose();
      bias_grad[l].col(0) += dz;
      d_in.row(f) = (w_ih[l].transpose() * dz).transpose();
      dh_carry = w_hh[l].transpose() * dz;
    }
    d_layer_out = d_in;
  }
  return d_layer_out;
}

void LstmStack::zero_grad() {
  for (int l = 0; l < depth; ++l) {
    w_ih_grad[l].setZero();
    w_hh_grad[l].setZero();
    bias_grad[l].setZero();
  }
}

// --- AttentionBlock -------------------------------------------------------------------------

void AttentionBlock::init(Index width, int head_count, Rng& rng) {
  dim = width;
  heads = head_count;
  if (dim % heads != 0) throw DimensionError("attention: width not divisible by heads");
  q.init(dim, dim, rng);
  k.init(dim, dim, rng);
  v.init(dim, dim, rng);
  o.init(dim, dim, rng);
  ff1.init(dim, 4 * dim, rng);
  ff2.init(4 * dim, dim, rng);
}

Mat AttentionBlock::forward(const Mat& x) {
  const Index frames = x.rows();
  const Index dh = dim / heads;
  x_cache_ = x;
  qm_ = q.forward(x);
  km_ = k.forward(x);
  vm_ = v.forward(x);
  attended_.resize(frames, dim);
  softmax_.assign(heads, Mat());
  const Scalar inv_sqrt = 1.0 / std::sqrt(static_cast<Scalar>(dh));
  for (int h = 0; h < heads; ++h) {
    const Mat s =
        qm_.middleCols(h * dh, dh) * km_.middleCols(h * dh, dh).transpose() * inv_sqrt;
    Mat a(frames, frames);
    for (Index r = 0; r < frames; ++r) {
      const Vec row = (s.row(r).array() - s.row(r).maxCoeff()).exp().matrix().transpose();
      a.row(r) = row.transpose() / row.sum();
    }
    softmax_[h] = a;
    attended_.middleCols(h * dh, dh) = a * vm_.middleCols(h * dh, dh);
  }
  h_cache_ = x + o.forward(attended_);
  ff_mid_pre_ = ff1.forward(h_cache_);
  return h_cache_ + ff2.forward(apply_gamma(Gamma::tanh_fn, ff_mid_pre_));
}

Mat AttentionBlock::backward(const Mat& d_out) {
  const Index frames = d_out.rows();
  const Index dh = dim / heads;
  const Scalar inv_sqrt = 1.0 / std::sqrt(static_cast<Scalar>(dh));

  const Mat d_mid = ff2.backward(d_out);
  Mat d_h = d_out + ff1.backward(gamma_backward(Gamma::tanh_fn, ff_mid_pre_, d_mid));

  const Mat d_attended = o.backward(d_h);
  Mat d_q = Mat::Zero(frames, dim), d_k = Mat::Zero(frames, dim),
      d_v = Mat::Zero(frames, dim);
  for (int h = 0; h < heads; ++h) {
    const Mat& a = softmax_[h];
    const Mat d_att_h = d_attended.middleCols(h * dh, dh);
    const Mat d_a = d_att_h * vm_.middleCols(h * dh, dh).transpose();
    d_v.middleCols(h * dh, dh) = a.transpose() * d_att_h;
    Mat d_s(frames, frames);
    for (Index r = 0; r < frames; ++r) {
      const Scalar dot = d_a.row(r).dot(a.row(r));
      d_s.row(r) = (a.row(r).array() * (d_a.row(r).array() - dot)).matrix();
    }
    d_q.middleCols(h * dh, dh) = d_s * km_.middleCols(h * dh, dh) * inv_sqrt;
    d_k.middleCols(h * dh, dh) = d_s.transpose() * qm_.middleCols(h * dh, dh) * inv_sqrt;
  }
  Mat d_x = d_h;
  d_x += q.backward(d_q);
  d_x += k.backward(d_k);
  d_x += v.backward(d_v);
  return d_x;
}

void AttentionBlock::zero_grad() {
  q.zero_grad();
  k.zero_grad();
  v.zero_grad();
  o.zero_grad();
  ff1.zero_grad();
  ff2.zero_grad();
}

Vec sinusoidal_encoding(Scalar position, Index width) {
  Vec code(width);
  for (Index i = 0; i < width; i += 2) {
    const Scalar omega =
        std::exp(-std::log(10000.0) * static_cast<Scalar>(i) / static_cast<Scalar>(width));
    code(i) = std::sin(position * omega);
    if (i + 1 < width) code(i + 1) = std::cos(position * omega);
  }
  return code;
}

// --- config ---------------------------------------------------------------------------------

DecoderVariant decoder_variant_from_name(const std::string& name) {
  if (name == "recurrent") return DecoderVariant::recurrent;
  if (name == "attention") return DecoderVariant::attention;
  if (name == "frame-positional") return DecoderVariant::frame_positional;
  throw FormatError("model config: unknown decoder variant '" + name + "'");
}

std::string decoder_variant_name(DecoderVariant variant) {
  switch (variant) {
    case DecoderVariant::recurrent: return "recurrent";
    case DecoderVariant::attention: return "attention";
    case DecoderVariant::frame_positional: return "frame-positional";
  }
  return "recurrent";
}

void ModelConfig::validate() const {
  if (layer_widths.empty()) throw DimensionError("model config: no encoder layers");
  for (Index w : layer_widths)
    if (w < 1) throw DimensionError("model config: non-positive layer width");
  if (token_width < 1 || decoder_hidden < 1 || text_embedding_dim < 1 ||
      time_embedding_dim < 1)
    throw DimensionError("model config: non-positive width");
  if (recurrence_depth < 1) throw DimensionError("model config: recurrence_depth >= 1");
  gamma_from_name(nonlinearity);
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    if (j.contains("layer_widths")) c.layer_widths = j["layer_widths"].get<std::vector<Index>>();
    if (j.contains("token_width")) c.token_width = j["token_width"];
    if (j.contains("recurrence_depth")) c.recurrence_depth = j["recurrence_depth"];
    if (j.contains("decoder_hidden")) c.decoder_hidden = j["decoder_hidden"];
    if (j.contains("text_embedding_dim")) c.text_embedding_dim = j["text_embedding_dim"];
    if (j.contains("time_embedding_dim")) c.time_embedding_dim = j["time_embedding_dim"];
    if (j.contains("decoder_variant"))
      c.decoder = decoder_variant_from_name(j["decoder_variant"]);
    if (j.contains("pose_encoder"))
      c.pose_encoder = j["pose_encoder"] == "mlp" ? PoseEncoderVariant::mlp
                                                  : PoseEncoderVariant::gnn;
    if (j.contains("tokens_enabled")) c.tokens_enabled = j["tokens_enabled"];
    if (j.contains("positional_encoding")) c.positional_encoding = j["positional_encoding"];
    if (j.contains("residual_head")) c.residual_head = j["residual_head"];
    if (j.contains("nonlinearity")) c.nonlinearity = j["nonlinearity"];
    if (j.contains("init_seed")) c.init_seed = j["init_seed"];
  } catch (const json::exception& e) {
    throw FormatError("model config: malformed field: " + std::string(e.what()));
  }
  c.validate();
  return c;
}

json model_config_to_json(const ModelConfig& config) {
  json j;
  j["layer_widths"] = config.layer_widths;
  j["token_width"] = config.token_width;
  j["recurrence_depth"] = config.recurrence_depth;
  j["decoder_hidden"] = config.decoder_hidden;
  j["text_embedding_dim"] = config.text_embedding_dim;
  j["time_embedding_dim"] = config.time_embedding_dim;
  j["decoder_variant"] = decoder_variant_name(config.decoder);
  j["pose_encoder"] = config.pose_encoder == PoseEncoderVariant::mlp ? "mlp" : "gnn";
  j["tokens_enabled"] = config.tokens_enabled;
  j["positional_encoding"] = config.positional_encoding;
  j["residual_head"] = config.residual_head;
  j["nonlinearity"] = config.nonlinearity;
  j["init_seed"] = config.init_seed;
  return j;
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("model config: cannot open '" + path.string() + "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw FormatError("model config: invalid JSON: " + std::string(e.what()));
  }
  return model_config_from_json(j);
}

void save_model_config(const ModelConfig& config, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("model config: cannot write '" + path.string() + "'");
  os << model_config_to_json(config).dump(2) << "\n";
}

// --- Denoiser ---------------------------------------------------------------------------------

namespace {
constexpr Scalar kTextConditionScale = 6.0;
}

Denoiser::Denoiser(const ModelConfig& config, const KinematicTree& tree,
                   const StateLayout& layout)
    : config_(config), tree_(tree), layout_(layout) {
  config_.validate();
  tree_.validate();
  joint_count_ = tree_.joint_count();
  if (layout_.body_joint_count + layout_.hand_joint_count != joint_count_)
    throw DimensionError("denoiser: layout joint counts do not match the tree");

  joint_channel_.assign(joint_count_, 0);
  const auto body = tree_.body_joints();
  for (std::size_t b = 0; b < body.size(); ++b)
    joint_channel_[body[b]] = 3 * static_cast<Index>(b);
  for (std::size_t h = 0; h < tree_.hand_joints.size(); ++h)
    joint_channel_[tree_.hand_joints[h]] = layout_.body_dim() + 3 * static_cast<Index>(h);

  Rng rng(config_.init_seed);
  const Gamma gamma = gamma_from_name(config_.nonlinearity);
  const Index cond_dim = config_.text_embedding_dim + config_.time_embedding_dim;
  const std::size_t levels = config_.layer_widths.size();

  // Gate sigmoids sit at 1/2 and tanh contracts; these gains keep the
  // pre-activation variance near one through the encoder stack. The first
  // layer sees unit-scale embeddings, deeper layers see gated tanh outputs.
  constexpr Scalar kFirstLayerGain = 1.2;
  constexpr Scalar kEncoderGain = 3.3;
  constexpr Scalar kTanhGain = 5.0 / 3.0;
  constexpr Scalar kGateScaleGain = 4.0;

  pose_embed_.init(3, config_.token_width, rng);
  expr_embed_.init(1, config_.token_width, rng);
  time_lin_.init(config_.time_embedding_dim, config_.time_embedding_dim, rng, kTanhGain);

  Index in_width = config_.token_width;
  for (std::size_t l = 0; l < levels; ++l) {
    const Index out_width = config_.layer_widths[l];
    const Scalar gain = l == 0 ? kFirstLayerGain : kEncoderGain;
    if (config_.pose_encoder == PoseEncoderVariant::gnn) {
      GnnLayer layer;
      layer.init(tree_, in_width, out_width, config_.tokens_enabled, gamma, rng, gain);
      gnn_layers_.push_back(std::move(layer));
    } else {
      NodeMlpLayer layer;
      layer.init(joint_count_, in_width, out_width, config_.tokens_enabled, gamma, rng,
                 gain);
      pose_mlp_layers_.push_back(std::move(layer));
    }
    ConditionGate gate;
    gate.init(out_width, cond_dim, rng, kGateScaleGain, 1.0);
    pose_gates_.push_back(std::move(gate));

    NodeMlpLayer expr_layer;
    expr_layer.init(static_cast<int>(layout_.expression_dim), in_width, out_width,
                    config_.tokens_enabled, gamma, rng, gain);
    expr_layers_.push_back(std::move(expr_layer));
    ConditionGate expr_gate;
    expr_gate.init(out_width, cond_dim, rng, kGateScaleGain, 1.0);
    expr_gates_.push_back(std::move(expr_gate));

    in_width = out_width;
  }

  const Index pooled =
      (joint_count_ + layout_.expression_dim) * config_.layer_widths.back();
  frame_proj_.init(pooled, config_.decoder_hidden, rng, 3.0);

  switch (config_.decoder) {
    case DecoderVariant::recurrent:
      lstm_.init(config_.decoder_hidden, config_.decoder_hidden, config_.recurrence_depth,
                 rng);
      break;
    case DecoderVariant::attention:
      for (int l = 0; l < config_.recurrence_depth; ++l) {
        AttentionBlock block;
        block.init(config_.decoder_hidden, 4, rng);
        attention_.push_back(std::move(block));
      }
      break;
    case DecoderVariant::frame_positional:
      for (int l = 0; l < config_.recurrence_depth; ++l) {
        Linear lin;
        lin.init(config_.decoder_hidden, config_.decoder_hidden, rng, kTanhGain);
        frame_mlp_.push_back(std::move(lin));
      }
      break;
  }

  head_hidden_.init(config_.decoder_hidden, config_.decoder_hidden, rng, kTanhGain);
  // Near-zero output head: early steps then chase the noise correlation
  // instead of shrinking the prediction, which would close the gates and
  // starve the encoder of gradient.
  head_out_.init(config_.decoder_hidden, layout_.dim(), rng, 0.01);
  head_out_.bias *= 0.01;
  skip_scale_ = Mat::Zero(1, 1);
  skip_scale_grad_ = Mat::Zero(1, 1);

  // Registry -------------------------------------------------------------
  auto reg = [this](const std::string& name, const std::string& group, Mat& value,
                    Mat& grad) {
    params_.push_back({name, group, &value, &grad});
  };
  auto reg_linear = [&](const std::string& name, const std::string& group, Linear& lin) {
    reg(name + ".w", group, lin.weight, lin.weight_grad);
    reg(name + ".b", group, lin.bias, lin.bias_grad);
  };

  reg_linear("pose_embed", "embed", pose_embed_);
  reg_linear("expr_embed", "embed", expr_embed_);
  reg_linear("time_lin", "embed", time_lin_);
  for (std::size_t l = 0; l < gnn_layers_.size(); ++l) {
    auto& layer = gnn_layers_[l];
    for (std::size_t e = 0; e < layer.kernels.size(); ++e)
      reg("gnn" + std::to_string(l) + ".edge" + std::to_string(e), "kernels",
          layer.kernels[e].weight, layer.kernels[e].grad);
    if (config_.tokens_enabled)
      reg("gnn" + std::to_string(l) + ".tokens", "tokens", layer.tokens, layer.token_grad);
  }
  for (std::size_t l = 0; l < pose_mlp_layers_.size(); ++l) {
    auto& layer = pose_mlp_layers_[l];
    reg_linear("pose_mlp" + std::to_string(l), "kernels", layer.lin);
    if (config_.tokens_enabled)
      reg("pose_mlp" + std::to_string(l) + ".tokens", "tokens", layer.tokens,
          layer.token_grad);
  }
  for (std::size_t l = 0; l < expr_layers_.size(); ++l) {
    auto& layer = expr_layers_[l];
    reg_linear("expr" + std::to_string(l), "kernels", layer.lin);
    if (config_.tokens_enabled)
      reg("expr" + std::to_string(l) + ".tokens", "tokens", layer.tokens, layer.token_grad);
  }
  for (std::size_t l = 0; l < pose_gates_.size(); ++l) {
    reg("pose_gate" + std::to_string(l) + ".scale", "gates", pose_gates_[l].scale_map,
        pose_gates_[l].scale_grad);
    reg("pose_gate" + std::to_string(l) + ".shift", "gates", pose_gates_[l].shift_map,
        pose_gates_[l].shift_grad);
    reg("expr_gate" + std::to_string(l) + ".scale", "gates", expr_gates_[l].scale_map,
        expr_gates_[l].scale_grad);
    reg("expr_gate" + std::to_string(l) + ".shift", "gates", expr_gates_[l].shift_map,
        expr_gates_[l].shift_grad);
  }
  switch (config_.decoder) {
    case DecoderVariant::recurrent:
      for (int l = 0; l < lstm_.depth; ++l) {
        const std::string base = "lstm" + std::to_string(l);
        reg(base + ".w_ih", "recurrence", lstm_.w_ih[l], lstm_.w_ih_grad[l]);
        reg(base + ".w_hh", "recurrence", lstm_.w_hh[l], lstm_.w_hh_grad[l]);
        reg(base + ".b", "recurrence", lstm_.bias[l], lstm_.bias_grad[l]);
      }
      break;
    case DecoderVariant::attention:
      for (std::size_t l = 0; l < attention_.size(); ++l) {
        const std::string base = "attn" + std::to_string(l);
        reg_linear(base + ".q", "recurrence", attention_[l].q);
        reg_linear(base + ".k", "recurrence", attention_[l].k);
        reg_linear(base + ".v", "recurrence", attention_[l].v);
        reg_linear(base + ".o", "recurrence", attention_[l].o);
        reg_linear(base + ".ff1", "recurrence", attention_[l].ff1);
        reg_linear(base + ".ff2", "recurrence", attention_[l].ff2);
      }
      break;
    case DecoderVariant::frame_positional:
      for (std::size_t l = 0; l < frame_mlp_.size(); ++l)
        reg_linear("frame_mlp" + std::to_string(l), "recurrence", frame_mlp_[l]);
      break;
  }
  reg_linear("frame_proj", "head", frame_proj_);
  reg_linear("head_hidden", "head", head_hidden_);
  reg_linear("head_out", "head", head_out_);
  if (config_.residual_head) reg("head_skip", "head", skip_scale_, skip_scale_grad_);
}

void Denoiser::set_schedule(const Vec& alpha_bar) { alpha_bar_ = alpha_bar; }

Mat Denoiser::states_to_joint_rows(const Mat& states) const {
  const Index frames = states.rows();
  Mat rows(frames * joint_count_, 3);
  for (Index f = 0; f < frames; ++f)
    for (int j = 0; j < joint_count_; ++j)
      rows.row(f * joint_count_ + j) = states.row(f).segment<3>(joint_channel_[j]);
  return rows;
}

Vec Denoiser::condition_vector(int t, const Vec& text_embedding) {
  if (text_embedding.size() != config_.text_embedding_dim)
    throw DimensionError("denoiser: text embedding has dimension " +
                         std::to_string(text_embedding.size()) + ", expected " +
                         std::to_string(config_.text_embedding_dim));
  time_sin_cache_ = sinusoidal_encoding(static_cast<Scalar>(t), config_.time_embedding_dim);
  time_pre_cache_ = time_lin_.forward(time_sin_cache_.transpose());
  const Mat time_emb = apply_gamma(Gamma::tanh_fn, time_pre_cache_);
  // Sentence embeddings are unit-norm while the timestep embedding spreads
  // over many channels; rescale so neither side drowns the other in the gates.
  Vec cond(config_.text_embedding_dim + config_.time_embedding_dim);
  cond << kTextConditionScale * text_embedding, time_emb.row(0).transpose();
  cond_cache_ = cond;
  return cond;
}

Mat Denoiser::forward(const Mat& noisy_states, int t, const Vec& text_embedding,
                      bool mask_encoder_input) {
  if (noisy_states.cols() != layout_.dim())
    throw DimensionError("denoiser: state width " + std::to_string(noisy_states.cols()) +
                         " does not match layout D=" + std::to_string(layout_.dim()));
  frames_ = noisy_states.rows();
  const Vec cond = condition_vector(t, text_embedding);

  pose_rows_in_ = mask_encoder_input ? Mat(Mat::Zero(frames_ * joint_count_, 3))
                                     : states_to_joint_rows(noisy_states);
  Mat pose_feat = pose_embed_.forward(pose_rows_in_);

  expr_rows_in_.resize(frames_ * layout_.expression_dim, 1);
  if (mask_encoder_input) {
    expr_rows_in_.setZero();
  } else {
    for (Index f = 0; f < frames_; ++f)
      for (Index e = 0; e < layout_.expression_dim; ++e)
        expr_rows_in_(f * layout_.expression_dim + e, 0) =
            noisy_states(f, layout_.body_dim() + layout_.hand_dim() + e);
  }
  Mat expr_feat = expr_embed_.forward(expr_rows_in_);

  for (std::size_t l = 0; l < config_.layer_widths.size(); ++l) {
    if (config_.pose_encoder == PoseEncoderVariant::gnn)
      pose_feat = gnn_layers_[l].forward(pose_feat);
    else
      pose_feat = pose_mlp_layers_[l].forward(pose_feat);
    pose_feat = pose_gates_[l].forward(pose_feat, cond);
    expr_feat = expr_layers_[l].forward(expr_feat);
    expr_feat = expr_gates_[l].forward(expr_feat, cond);
  }

  // Pool per frame: concatenated joint features then expression features.
  const Index w = config_.layer_widths.back();
  Mat pooled(frames_, (joint_count_ + layout_.expression_dim) * w);
  for (Index f = 0; f < frames_; ++f) {
    for (int j = 0; j < joint_count_; ++j)
      pooled.row(f).segment(j * w, w) = pose_feat.row(f * joint_count_ + j);
    for (Index e = 0; e < layout_.expression_dim; ++e)
      pooled.row(f).segment((joint_count_ + e) * w, w) =
          expr_feat.row(f * layout_.expression_dim + e);
  }

  frame_proj_pre_ = frame_proj_.forward(pooled);
  decoder_in_ = apply_gamma(Gamma::tanh_fn, frame_proj_pre_);
  if (config_.positional_encoding)
    for (Index f = 0; f < frames_; ++f)
      decoder_in_.row(f) +=
          sinusoidal_encoding(static_cast<Scalar>(f), config_.decoder_hidden).transpose();

  Mat decoded;
  switch (config_.decoder) {
    case DecoderVariant::recurrent:
      decoded = lstm_.forward(decoder_in_);
      break;
    case DecoderVariant::attention: {
      decoded = decoder_in_;
      for (auto& block : attention_) decoded = block.forward(decoded);
      break;
    }
    case DecoderVariant::frame_positional: {
      decoded = decoder_in_;
      frame_mlp_pre_.clear();
      for (auto& lin : frame_mlp_) {
        frame_mlp_pre_.push_back(lin.forward(decoded));
        decoded = apply_gamma(Gamma::tanh_fn, frame_mlp_pre_.back());
      }
      break;
    }
  }

  head_mid_pre_ = head_hidden_.forward(decoded);
  const Mat head = head_out_.forward(apply_gamma(Gamma::tanh_fn, head_mid_pre_));
  if (!config_.residual_head) return head;
  if (alpha_bar_.size() == 0)
    throw DimensionError("denoiser: residual head requires set_schedule()");
  if (t < 1 || t > alpha_bar_.size())
    throw DimensionError("denoiser: step out of schedule range");
  skip_coeff_ = std::sqrt(1.0 - alpha_bar_(t - 1));
  noisy_cache_ = noisy_states;
  return (skip_scale_(0, 0) * skip_coeff_) * noisy_states + head;
}

Vec Denoiser::backward(const Mat& d_prediction) {
  if (config_.residual_head)
    skip_scale_grad_(0, 0) +=
        skip_coeff_ * (d_prediction.array() * noisy_cache_.array()).sum();
  const Mat d_mid = head_out_.backward(d_prediction);
  Mat d_decoded = head_hidden_.backward(gamma_backward(Gamma::tanh_fn, head_mid_pre_, d_mid));

  Mat d_decoder_in;
  switch (config_.decoder) {
    case DecoderVariant::recurrent:
      d_decoder_in = lstm_.backward(d_decoded);
      break;
    case DecoderVariant::attention: {
      d_decoder_in = d_decoded;
      for (auto it = attention_.rbegin(); it != attention_.rend(); ++it)
        d_decoder_in = it->backward(d_decoder_in);
      break;
    }
    case DecoderVariant::frame_positional: {
      d_decoder_in = d_decoded;
      for (std::size_t l = frame_mlp_.size(); l-- > 0;)
        d_decoder_in =
            frame_mlp_[l].backward(gamma_backward(Gamma::tanh_fn, frame_mlp_pre_[l], d_decoder_in));
      break;
    }
  }

  const Mat d_pooled =
      frame_proj_.backward(gamma_backward(Gamma::tanh_fn, frame_proj_pre_, d_decoder_in));

  const Index w = config_.layer_widths.back();
  Mat d_pose(frames_ * joint_count_, w);
  Mat d_expr(frames_ * layout_.expression_dim, w);
  for (Index f = 0; f < frames_; ++f) {
    for (int j = 0; j < joint_count_; ++j)
      d_pose.row(f * joint_count_ + j) = d_pooled.row(f).segment(j * w, w);
    for (Index e = 0; e < layout_.expression_dim; ++e)
      d_expr.row(f * layout_.expression_dim + e) =
          d_pooled.row(f).segment((joint_count_ + e) * w, w);
  }

  Vec d_cond = Vec::Zero(config_.text_embedding_dim + config_.time_embedding_dim);
  for (std::size_t l = config_.layer_widths.size(); l-- > 0;) {
    d_pose = pose_gates_[l].backward(d_pose, d_cond);
    if (config_.pose_encoder == PoseEncoderVariant::gnn)
      d_pose = gnn_layers_[l].backward(d_pose);
    else
      d_pose = pose_mlp_layers_[l].backward(d_pose);
    d_expr = expr_gates_[l].backward(d_expr, d_cond);
    d_expr = expr_layers_[l].backward(d_expr);
  }
  pose_embed_.backward(d_pose);
  expr_embed_.backward(d_expr);

  // Timestep branch of the condition vector.
  const Mat d_time_emb = d_cond.tail(config_.time_embedding_dim).transpose();
  time_lin_.backward(gamma_backward(Gamma::tanh_fn, time_pre_cache_, d_time_emb));

  return kTextConditionScale * d_cond.head(config_.text_embedding_dim);
}

void Denoiser::zero_grad() {
  for (auto& p : params_) p.grad->setZero();
}

Index Denoiser::parameter_count() const {
  Index total = 0;
  for (const auto& p : params_) total += p.value->size();
  return total;
}

Index Denoiser::parameter_count(const std::string& group) const {
  Index total = 0;
  for (const auto& p : params_)
    if (p.group == group) total += p.value->size();
  return total;
}

Index decoder_parameter_count(const ModelConfig& config, DecoderVariant variant) {
  const Index h = config.decoder_hidden;
  Index total = 0;
  switch (variant) {
    case DecoderVariant::recurrent:
      total = config.recurrence_depth * (4 * h * h + 4 * h * h + 4 * h);
      break;
    case DecoderVariant::attention:
      total = config.recurrence_depth *
              (4 * (h * h + h) /* qkvo */ + (4 * h * h + 4 * h) + (4 * h * h + h) /* ff */);
      break;
    case DecoderVariant::frame_positional:
      total = config.recurrence_depth * (h * h + h);
      break;
  }
  return total;
}

}  // namespace signmotion
