#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gtal/common.hpp"
#include "gtal/kernels.hpp"
#include "gtal/snippet_data.hpp"

namespace gtal {

/// Learnable weights of the two-branch snippet model.
///
/// Embedder: kernel-3 temporal convolution, taps ordered (n-1, n, n+1), each a
/// D x H block stored row-major in `embed_w` as [tap][d][h]. Attention head is
/// a sigmoid over `attn_w`; classification head a per-snippet softmax over
/// C_I + 1 logits (background last).
struct ModelParams {
  int feature_dim = 0;
  int hidden_dim = 0;
  int num_classes = 0;  // foreground classes C_I

  std::vector<double> embed_w;  // 3*D*H
  std::vector<double> embed_b;  // H
  std::vector<double> attn_w;   // H
  std::vector<double> attn_b;   // 1
  std::vector<double> cls_w;    // H*(C_I+1)
  std::vector<double> cls_b;    // C_I+1

  static constexpr std::size_t kNumTensors = 6;
  static const std::array<const char*, kNumTensors>& tensor_names();

  static ModelParams zeros(int feature_dim, int hidden_dim, int num_classes);

  int num_outputs() const { return num_classes + 1; }
  std::span<double> tensor(std::size_t i);
  std::span<const double> tensor(std::size_t i) const;
  std::size_t size() const;
  bool same_shape(const ModelParams& other) const;
  void check_finite(const std::string& context) const;

  bool operator==(const ModelParams&) const = default;
};

/// Gradients share the parameter layout.
using ParamGradients = ModelParams;

struct ForwardOutput {
  std::vector<double> attention;  // phi, length N
  Matrix cas;                     // Psi, N x (C_I+1), rows on the simplex
};

/// Inverted-dropout mask over the hidden layer (entries 0 or 1/(1-p)).
struct DropoutMask {
  Matrix scale;  // N x H
};

DropoutMask make_dropout_mask(std::size_t N, int hidden_dim, double rate, Rng& rng);

/// Intermediate activations kept for the backward pass.
struct ForwardCache {
  Matrix pre;     // N x H, before ReLU
  Matrix hidden;  // N x H, after ReLU and dropout
  Matrix dropout_scale;  // empty when no dropout
  ForwardOutput out;
};

ForwardCache forward_cached(const ModelParams& params, const FeatureSequence& feats, const DropoutMask* mask);

/// Dropout is applied only when `dropout_rate > 0` and an rng is given.
ForwardOutput forward(const ModelParams& params, const FeatureSequence& feats, double dropout_rate = 0.0,
                      Rng* rng = nullptr);

/// Backpropagates upstream gradients w.r.t. (phi, Psi) to parameter gradients.
/// Either upstream span may be empty, meaning zero.
ParamGradients backward(const ModelParams& params, const FeatureSequence& feats, const ForwardCache& cache,
                        std::span<const double> d_attention, const Matrix* d_cas);

/// k = max(1, ceil(N / r_agg)).
std::size_t topk_count(std::size_t N, int r_agg);

/// Mean of the k largest entries per column (no softmax). Also returns the
/// selected rows per column when `selection` is non-null.
std::vector<double> topk_mean(const Matrix& scores, int r_agg,
                              std::vector<std::vector<std::size_t>>* selection = nullptr);

/// f_agg: top-k mean per class followed by a softmax over classes.
std::vector<double> aggregate_topk(const Matrix& scores, int r_agg);

/// phi (.) Psi with phi broadcast across columns.
Matrix attention_weighted(const ForwardOutput& out);

struct VideoScores {
  std::vector<double> y_base;
  std::vector<double> y_supp;
};

VideoScores video_scores(const ForwardOutput& out, int r_agg);

struct LossWithUpstream {
  double loss = 0.0;
  std::vector<double> d_attention;
  Matrix d_cas;
};

/// MIL classification loss with extended labels [y,1] / [y,0], each
/// normalized to unit sum. Upstream gradients are w.r.t. phi and Psi.
LossWithUpstream classification_loss_with_grad(const ForwardOutput& out, std::span<const int> label, int r_agg);
double classification_loss(const ForwardOutput& out, std::span<const int> label, int r_agg);

struct TrainConfig {
  double learning_rate = 3e-5;
  int batch_size = 30;
  int epochs = 10;
  int topk_ratio = 8;
  double dropout = 0.1;
  int hidden_dim = 128;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BatchGradient {
  double mean_loss = 0.0;
  ParamGradients grad;
};

/// Mean L_cls and its exact gradient over `batch`. Dropout masks are drawn
/// per video from `mask_seed` so repeated calls see the same masks.
BatchGradient classification_gradients(const ModelParams& params, std::span<const VideoRecord* const> batch,
                                       const TrainConfig& cfg, std::uint64_t mask_seed,
                                       Execution ex = Execution::parallel);

/// Uniform(+-1/sqrt(fan_in)) initialization.
ModelParams init_params(int feature_dim, int hidden_dim, int num_classes, Rng& rng);

struct EpochLoss {
  int epoch = 0;
  double mean_loss = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLoss> log;
};

TrainResult train_base(const Dataset& ds, const TrainConfig& cfg);

/// Mean L_cls over a dataset with dropout off.
double mean_classification_loss(const ModelParams& params, const Dataset& ds, int r_agg);

inline constexpr int kCheckpointFormatVersion = 1;

void save_checkpoint(const ModelParams& params, const std::filesystem::path& file);
ModelParams load_checkpoint(const std::filesystem::path& file);

}  // namespace gtal
