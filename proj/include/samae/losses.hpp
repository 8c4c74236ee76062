#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "samae/common.hpp"
#include "samae/conditioning.hpp"

namespace samae {

struct LossWeights {
  double rec = 1.0;
  double id = 1.0;
  double gan = 1.0;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossParts {
  torch::Tensor l1;
  torch::Tensor perceptual;
  torch::Tensor id;
  torch::Tensor gan;

  [[nodiscard]] torch::Tensor rec() const { return l1 + perceptual; }
};

/// Frozen three-stage random convolutional pyramid used as the perceptual
/// feature space (and as the FID feature extractor).
struct PerceptualNetImpl : torch::nn::Module {
  PerceptualNetImpl();
  std::vector<torch::Tensor> features(const torch::Tensor& x);
  /// Global-average-pooled last-stage features, [B, 64].
  torch::Tensor pooled(const torch::Tensor& x);

  torch::nn::Conv2d stage1{nullptr}, stage2{nullptr}, stage3{nullptr};
};
TORCH_MODULE(PerceptualNet);

PerceptualNet make_perceptual_net(std::uint64_t seed);

/// Residual discriminator in the StyleGAN2 layout (fromRGB, downsampling
/// residual blocks to 4x4, conv + two dense layers), reduced width. Input is
/// an image channel-concatenated with one keypoint channel.
struct DiscriminatorConfig {
  int in_channels = 4;
  int base_width = 32;
  int max_width = 128;

  friend bool operator==(const DiscriminatorConfig&, const DiscriminatorConfig&) = default;
};

struct DiscBlockImpl : torch::nn::Module {
  DiscBlockImpl(int in_channels, int out_channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
};
TORCH_MODULE(DiscBlock);

struct DiscriminatorImpl : torch::nn::Module {
  DiscriminatorImpl(DiscriminatorConfig config, int resolution);
  /// Logits, shape [B].
  torch::Tensor forward(const torch::Tensor& pairs);

  DiscriminatorConfig config;
  torch::nn::Conv2d from_rgb{nullptr}, final_conv{nullptr};
  torch::nn::ModuleList blocks{nullptr};
  torch::nn::Linear fc{nullptr}, out{nullptr};
};
TORCH_MODULE(Discriminator);

/// Image batch channel-concatenated with its keypoint image, [B, C+1, H, W].
torch::Tensor make_pair(const torch::Tensor& image, const torch::Tensor& keypoints);

struct DiscriminatorPairs {
  torch::Tensor real;  ///< (I, K(I))
  torch::Tensor fake;  ///< (I, K_perturbed) stacked with (I_hat, K_fake)
};

/// Real pair (I ⊕ K(I)); fakes (I ⊕ K_perturbed) and (Î ⊕ K(I)). When
/// `generated_uses_perturbed` is set the generated fake uses K_perturbed.
DiscriminatorPairs build_discriminator_pairs(const torch::Tensor& real_image, const torch::Tensor& gen_image,
                                             const torch::Tensor& kp_real, const torch::Tensor& kp_perturbed,
                                             bool generated_uses_perturbed = false);

/// f(u) = -log(1 + exp(-u)), evaluated stably.
torch::Tensor nonsaturating_f(const torch::Tensor& u);

/// Sum over the three pyramid stages of mean |phi(pred) - phi(gt)|.
torch::Tensor perceptual_distance(PerceptualNet& net, const torch::Tensor& pred, const torch::Tensor& gt);
torch::Tensor l1_loss(const torch::Tensor& pred, const torch::Tensor& gt);
/// Mean absolute error plus perceptual distance.
torch::Tensor recon_loss(const torch::Tensor& pred, const torch::Tensor& gt, PerceptualNet& net);

/// 1 - cos(E(pred), E(gt)), averaged over the batch. No jitter is applied.
torch::Tensor identity_loss(const torch::Tensor& pred, const torch::Tensor& gt, IdentityEncoder& encoder);

/// mean softplus(-D(real)) + mean softplus(D(fake)), from logits.
torch::Tensor gan_loss_d(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);
/// mean softplus(-D(fake)), from logits.
torch::Tensor gan_loss_g(const torch::Tensor& fake_logits);

template <class Critic>
torch::Tensor gan_loss_d(const torch::Tensor& real_pairs, const torch::Tensor& fake_pairs, Critic&& critic) {
  return gan_loss_d(critic(real_pairs), critic(fake_pairs));
}

/// Generator objective with the discriminator's parameters excluded from
/// the graph (requires_grad is off for the duration of the call).
torch::Tensor gan_loss_g(const torch::Tensor& fake_pairs, Discriminator& discriminator);

/// weights.rec * (l1 + perceptual) + weights.id * id + weights.gan * gan.
/// Terms with zero weight are omitted from the graph entirely.
torch::Tensor total_loss(const LossParts& parts, const LossWeights& weights);

/// R1 gradient penalty on real pairs (off unless enabled in the config).
torch::Tensor r1_penalty(Discriminator& discriminator, const torch::Tensor& real_pairs);

}  // namespace samae
