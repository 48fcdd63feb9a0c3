#pragma once

#include "signmotion/kinematics.hpp"
#include "signmotion/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace signmotion {

// --- building blocks ------------------------------------------------------------

enum class Gamma { identity, relu, tanh_fn };
Gamma gamma_from_name(const std::string& name);
std::string gamma_name(Gamma gamma);
Mat apply_gamma(Gamma gamma, const Mat& pre);
Mat gamma_backward(Gamma gamma, const Mat& pre, const Mat& d_out);

struct Linear {
  Mat weight;  // out x in
  Mat bias;    // out x 1
  Mat weight_grad;
  Mat bias_grad;

  // Uniform init with std gain/sqrt(in); gain > 1 counteracts contractive
  // nonlinearities downstream.
  void init(Index in, Index out, class Rng& rng, Scalar gain = 1.0);
  Mat forward(const Mat& x);       // rows are items
  Mat backward(const Mat& d_out);  // returns d_x, accumulates parameter grads
  void zero_grad();

 private:
  Mat x_cache_;
};

// Anatomically informed message-passing layer over the kinematic tree:
//   f'_i = gamma( sum_{j in K_i} W_ij (f_j - f_i) + P_i )
// with one learnable kernel per directed (receiver, neighbor) pair and one
// token P_i per joint. Rows are frame-major: row f*J + j is joint j at frame f.
struct GnnLayer {
  struct EdgeKernel {
    int receiver = 0;
    int neighbor = 0;
    Mat weight;  // out x in
    Mat grad;
  };

  int joints = 0;
  Index in_width = 0, out_width = 0;
  std::vector<EdgeKernel> kernels;
  Mat tokens;  // J x out
  Mat token_grad;
  bool use_tokens = true;
  Gamma gamma = Gamma::tanh_fn;

  void init(const KinematicTree& tree, Index in, Index out, bool with_tokens,
            Gamma nonlinearity, class Rng& rng, Scalar gain = 1.0);
  Mat forward(const Mat& features);
  Mat backward(const Mat& d_out);
  void zero_grad();

 private:
  Mat x_cache_, pre_cache_;
};

// Shared per-node feed-forward with an additive input token:
//   g'_i = gamma( W (g_i + E_i) + b ).
// Serves as the expression encoder layer and as the no-GNN pose encoder.
struct NodeMlpLayer {
  int nodes = 0;
  Linear lin;
  Mat tokens;  // nodes x in
  Mat token_grad;
  bool use_tokens = true;
  Gamma gamma = Gamma::tanh_fn;

  void init(int node_count, Index in, Index out, bool with_tokens, Gamma nonlinearity,
            class Rng& rng, Scalar gain = 1.0);
  Mat forward(const Mat& features);
  Mat backward(const Mat& d_out);
  void zero_grad();

 private:
  Mat pre_cache_;
};

// Feature-wise conditioning applied after each encoder layer:
//   h <- h * sigmoid(G c) + B c, shared across all rows of one call.
struct ConditionGate {
  Mat scale_map;  // width x cond_dim
  Mat shift_map;
  Mat scale_grad, shift_grad;

  void init(Index width, Index cond_dim, class Rng& rng, Scalar scale_gain = 1.0,
            Scalar shift_gain = 1.0);
  Mat forward(const Mat& h, const Vec& cond);
  // Returns d_h and accumulates d_cond for the caller.
  Mat backward(const Mat& d_out, Vec& d_cond);
  void zero_grad();

 private:
  Mat h_cache_;
  Vec cond_cache_, gate_cache_, pre_gate_cache_;
};

struct LstmStack {
  Index input_dim = 0, hidden = 0;
  int depth = 0;
  // Per layer: W_ih (4H x in), W_hh (4H x H), bias (4H x 1). Gate order i, f, g, o.
  std::vector<Mat> w_ih, w_hh, bias;
  std::vector<Mat> w_ih_grad, w_hh_grad, bias_grad;

  void init(Index in, Index hidden_width, int layer_count, class Rng& rng);
  Mat forward(const Mat& x);       // F x in -> F x H
  Mat backward(const Mat& d_out);  // F x H -> F x in
  void zero_grad();

 private:
  struct LayerCache {
    Mat input;              // F x in
    Mat gates;              // F x 4H, post-activation
    Mat cell, cell_tanh;    // F x H
    Mat hidden_states;      // F x H
  };
  std::vector<LayerCache> caches_;
};

// Residual self-attention encoder block (no layer norm at this scale):
//   h = x + MHSA(x); out = h + W2 tanh(W1 h).
struct AttentionBlock {
  Index dim = 0;
  int heads = 4;
  Linear q, k, v, o, ff1, ff2;

  void init(Index width, int head_count, class Rng& rng);
  Mat forward(const Mat& x);
  Mat backward(const Mat& d_out);
  void zero_grad();

 private:
  Mat x_cache_, qm_, km_, vm_, attended_, ff_mid_pre_, h_cache_;
  std::vector<Mat> softmax_;  // per head, F x F
};

// Sinusoidal position code of the given width (even entries sin, odd cos).
Vec sinusoidal_encoding(Scalar position, Index width);

// --- model ------------------------------------------------------------------------

enum class DecoderVariant { recurrent, attention, frame_positional };
enum class PoseEncoderVariant { gnn, mlp };

DecoderVariant decoder_variant_from_name(const std::string& name);
std::string decoder_variant_name(DecoderVariant variant);

struct ModelConfig {
  std::vector<Index> layer_widths = {64, 128, 256, 512};
  Index token_width = 64;
  int recurrence_depth = 4;
  Index decoder_hidden = 512;
  Index text_embedding_dim = 768;
  Index time_embedding_dim = 128;
  DecoderVariant decoder = DecoderVariant::recurrent;
  PoseEncoderVariant pose_encoder = PoseEncoderVariant::gnn;
  bool tokens_enabled = true;
  bool positional_encoding = true;
  // Head parameterization. With the residual head the noise estimate is
  // s * sqrt(1 - abar_t) * x_t + head(...) with a single learnable scalar s
  // (zero at init): the unconditional passthrough collapses into one
  // parameter, so the learned head spends its capacity on the clean-state
  // component instead of rediscovering the passthrough. The module output is
  // a noise estimate either way.
  bool residual_head = true;
  std::string nonlinearity = "tanh";
  std::uint64_t init_seed = 1;

  void validate() const;
};

ModelConfig load_model_config(const std::filesystem::path& path);
void save_model_config(const ModelConfig& config, const std::filesystem::path& path);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json model_config_to_json(const ModelConfig& config);

struct ParamRef {
  std::string name;
  std::string group;  // kernels | tokens | gates | recurrence | head | embed
  Mat* value = nullptr;
  Mat* grad = nullptr;
};

// The noise prediction network epsilon_Theta: anatomically informed pose
// encoder with joint tokens, token-augmented expression encoder, per-layer
// text/timestep gating, frame pooling, a sequence decoder and an output head.
class Denoiser {
 public:
  Denoiser(const ModelConfig& config, const KinematicTree& tree, const StateLayout& layout);

  // The parameter registry points into this object; pin it in place.
  Denoiser(const Denoiser&) = delete;
  Denoiser& operator=(const Denoiser&) = delete;

  // The residual head needs the cumulative schedule products; must be
  // called before forward() when config.residual_head is set.
  void set_schedule(const Vec& alpha_bar);

  // noisy_states is F x D in normalized state space; returns predicted noise.
  // mask_encoder_input feeds the encoders zeros while the residual skip still
  // sees the state; with the residual head this turns the sample into a pure
  // conditioning-regression target (used as a training-time augmentation).
  Mat forward(const Mat& noisy_states, int t, const Vec& text_embedding,
              bool mask_encoder_input = false);

  // Backpropagates d(loss)/d(prediction); accumulates parameter gradients and
  // returns d(loss)/d(text_embedding) for trainable text encoders.
  Vec backward(const Mat& d_prediction);

  void zero_grad();

  std::vector<ParamRef>& params() { return params_; }
  const std::vector<ParamRef>& params() const { return params_; }
  const ModelConfig& config() const { return config_; }
  const StateLayout& layout() const { return layout_; }

  Index parameter_count() const;
  Index parameter_count(const std::string& group) const;

  // Map sequence pose channels to frame-major per-joint rows and back.
  Mat states_to_joint_rows(const Mat& states) const;

 private:
  Vec condition_vector(int t, const Vec& text_embedding);

  ModelConfig config_;
  KinematicTree tree_;
  StateLayout layout_;
  int joint_count_ = 0;
  std::vector<Index> joint_channel_;  // tree joint -> first state channel

  Linear pose_embed_, expr_embed_;
  std::vector<GnnLayer> gnn_layers_;
  std::vector<NodeMlpLayer> pose_mlp_layers_;
  std::vector<NodeMlpLayer> expr_layers_;
  std::vector<ConditionGate> pose_gates_, expr_gates_;
  Linear time_lin_;
  Linear frame_proj_;
  LstmStack lstm_;
  std::vector<AttentionBlock> attention_;
  std::vector<Linear> frame_mlp_;
  Linear head_hidden_, head_out_;

  std::vector<ParamRef> params_;

  Vec alpha_bar_;  // set via set_schedule for the residual head
  Mat skip_scale_, skip_scale_grad_;  // 1x1, residual head only

  // forward caches
  Index frames_ = 0;
  Scalar skip_coeff_ = 0;  // sqrt(1 - abar_t) of the last forward
  Mat noisy_cache_;
  Mat pose_rows_in_, expr_rows_in_;
  Mat frame_proj_pre_, decoder_in_;
  std::vector<Mat> frame_mlp_pre_;
  Mat head_mid_pre_;
  Vec cond_cache_;
  Mat time_pre_cache_;
  Vec time_sin_cache_;
};

// Parameter count of a decoder stack of the given variant at this config's
// width and depth (used for the recurrent-vs-attention report).
Index decoder_parameter_count(const ModelConfig& config, DecoderVariant variant);

}  // namespace signmotion
