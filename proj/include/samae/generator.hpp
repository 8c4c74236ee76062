#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "samae/common.hpp"

namespace samae {

/// U-Net layout. The toy preset keeps the full-scale topology at reduced
/// width: 3 resolutions, 2 residual blocks each, attention at the lowest.
struct GeneratorConfig {
  int image_channels = 3;
  int base_width = 32;
  std::vector<int> channel_mult{1, 2, 2};
  int num_res_blocks = 2;
  bool attention_at_lowest = true;
  int condition_dim = 512 + 64;
  int embed_dim = 128;

  [[nodiscard]] int spatial_channels() const { return image_channels + 2; }
  /// Spatial size must be divisible by this.
  [[nodiscard]] int size_multiple() const { return 1 << (channel_mult.size() - 1); }

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

/// Batched generator input: spatial stack [I_ras, I_p, kp_image] and the
/// condition vector [c_id, c_skin].
struct GeneratorInput {
  torch::Tensor spatial;    ///< [B, image_channels + 2, H, W]
  torch::Tensor condition;  ///< [B, D_id + D_skin]
};

/// Stacks the pieces in channel order I_ras, I_p, kp_image and concatenates
/// c_id with c_skin. All spatial inputs are [B, C, H, W]; vectors are [B, D].
GeneratorInput make_generator_input(const torch::Tensor& i_ras, const torch::Tensor& i_p,
                                    const torch::Tensor& kp_image, const torch::Tensor& c_id,
                                    const torch::Tensor& c_skin);

/// Residual block with adaptive group normalization: the condition
/// embedding is projected (zero-initialized) to a per-channel scale/shift
/// applied after the second normalization.
struct ResBlockImpl : torch::nn::Module {
  ResBlockImpl(int in_channels, int out_channels, int embed_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& embedding);

  /// h -> norm(h) * (1 + scale) + shift.
  torch::Tensor inject_conditions(const torch::Tensor& embedding, const torch::Tensor& normalized);

  int out_channels;
  torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::Linear emb_proj{nullptr};
  torch::nn::Conv2d skip{nullptr};
};
TORCH_MODULE(ResBlock);

struct AttentionBlockImpl : torch::nn::Module {
  explicit AttentionBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::GroupNorm norm{nullptr};
  torch::nn::Conv2d qkv{nullptr}, proj{nullptr};
};
TORCH_MODULE(AttentionBlock);

struct UNetGeneratorImpl : torch::nn::Module {
  explicit UNetGeneratorImpl(GeneratorConfig config);

  /// Output in [-1, 1], same spatial size as the input.
  torch::Tensor forward(const torch::Tensor& spatial, const torch::Tensor& condition);
  /// Shared condition MLP.
  torch::Tensor embed_condition(const torch::Tensor& condition);

  GeneratorConfig config;
  torch::nn::Sequential cond_mlp{nullptr};
  torch::nn::Conv2d input_conv{nullptr};
  torch::nn::ModuleList down_blocks{nullptr};  // ResBlock / AttentionBlock / Conv2d (downsample)
  std::vector<std::string> down_kinds;
  ResBlock mid1{nullptr}, mid2{nullptr};
  AttentionBlock mid_attn{nullptr};
  torch::nn::ModuleList up_blocks{nullptr};
  std::vector<std::string> up_kinds;
  torch::nn::GroupNorm out_norm{nullptr};
  torch::nn::Conv2d out_conv{nullptr};
};
TORCH_MODULE(UNetGenerator);

/// Runs the generator after validating the input invariants.
torch::Tensor generate(UNetGenerator& generator, const GeneratorInput& input);

/// Re-applies the zero-initialization of every conditioning projection.
void zero_condition_projections(UNetGenerator& generator);

}  // namespace samae
