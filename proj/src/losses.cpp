#include "samae/losses.hpp"

#include <cmath>

#include "samae/tensor_utils.hpp"

namespace samae {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

torch::Tensor lrelu(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)); }

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* op) {
  if (a.sizes() != b.sizes()) throw ShapeMismatch(std::string(op) + ": tensor shapes differ");
}

}  // namespace

PerceptualNetImpl::PerceptualNetImpl() {
  stage1 = register_module("stage1", nn::Conv2d(nn::Conv2dOptions(3, 16, 3).padding(1)));
  stage2 = register_module("stage2", nn::Conv2d(nn::Conv2dOptions(16, 32, 3).stride(2).padding(1)));
  stage3 = register_module("stage3", nn::Conv2d(nn::Conv2dOptions(32, 64, 3).stride(2).padding(1)));
}

std::vector<torch::Tensor> PerceptualNetImpl::features(const torch::Tensor& x) {
  auto f1 = lrelu(stage1(x));
  auto f2 = lrelu(stage2(f1));
  auto f3 = lrelu(stage3(f2));
  return {f1, f2, f3};
}

torch::Tensor PerceptualNetImpl::pooled(const torch::Tensor& x) { return features(x).back().mean({2, 3}); }

PerceptualNet make_perceptual_net(std::uint64_t seed) {
  PerceptualNet net;
  seeded_init(*net, seed);
  freeze(*net);
  net->eval();
  return net;
}

// ---------------------------------------------------------------------------

DiscBlockImpl::DiscBlockImpl(int in_channels, int out_channels) {
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in_channels, in_channels, 3).padding(1)));
  conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 3).padding(1)));
  skip = register_module("skip", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 1).bias(false)));
}

torch::Tensor DiscBlockImpl::forward(const torch::Tensor& x) {
  auto s = skip(F::avg_pool2d(x, F::AvgPool2dFuncOptions(2)));
  auto h = lrelu(conv1(x));
  h = lrelu(conv2(h));
  h = F::avg_pool2d(h, F::AvgPool2dFuncOptions(2));
  return (s + h) * (1.0 / std::sqrt(2.0));
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig cfg, int resolution) : config(cfg) {
  if (resolution < 8 || (resolution & (resolution - 1)) != 0)
    throw InvalidArgument("discriminator: resolution must be a power of two >= 8");
  int ch = config.base_width;
  from_rgb = register_module("from_rgb", nn::Conv2d(nn::Conv2dOptions(config.in_channels, ch, 1)));
  blocks = register_module("blocks", nn::ModuleList());
  for (int res = resolution; res > 4; res /= 2) {
    const int next = std::min(2 * ch, config.max_width);
    blocks->push_back(DiscBlock(ch, next));
    ch = next;
  }
  final_conv = register_module("final_conv", nn::Conv2d(nn::Conv2dOptions(ch, ch, 3).padding(1)));
  fc = register_module("fc", nn::Linear(ch * 4 * 4, ch));
  out = register_module("out", nn::Linear(ch, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& pairs) {
  if (pairs.dim() != 4 || pairs.size(1) != config.in_channels)
    throw ShapeMismatch("discriminator: pair has the wrong channel count");
  auto h = lrelu(from_rgb(pairs));
  for (const auto& b : *blocks) h = b->as<DiscBlockImpl>()->forward(h);
  h = lrelu(final_conv(h));
  h = lrelu(fc(h.flatten(1)));
  return out(h).squeeze(1);
}

torch::Tensor make_pair(const torch::Tensor& image, const torch::Tensor& keypoints) {
  if (image.dim() != 4 || keypoints.dim() != 4 || keypoints.size(1) != 1 || image.size(0) != keypoints.size(0) ||
      image.size(2) != keypoints.size(2) || image.size(3) != keypoints.size(3))
    throw ShapeMismatch("make_pair: image and keypoint image sizes differ");
  return torch::cat({image, keypoints}, 1);
}

DiscriminatorPairs build_discriminator_pairs(const torch::Tensor& real_image, const torch::Tensor& gen_image,
                                             const torch::Tensor& kp_real, const torch::Tensor& kp_perturbed,
                                             bool generated_uses_perturbed) {
  require_same_shape(real_image, gen_image, "build_discriminator_pairs");
  require_same_shape(kp_real, kp_perturbed, "build_discriminator_pairs");
  DiscriminatorPairs pairs;
  pairs.real = make_pair(real_image, kp_real);
  pairs.fake = torch::cat({make_pair(real_image, kp_perturbed),
                           make_pair(gen_image, generated_uses_perturbed ? kp_perturbed : kp_real)},
                          0);
  return pairs;
}

// ---------------------------------------------------------------------------

torch::Tensor nonsaturating_f(const torch::Tensor& u) { return -F::softplus(-u); }

torch::Tensor l1_loss(const torch::Tensor& pred, const torch::Tensor& gt) {
  require_same_shape(pred, gt, "l1_loss");
  return (pred - gt).abs().mean();
}

torch::Tensor perceptual_distance(PerceptualNet& net, const torch::Tensor& pred, const torch::Tensor& gt) {
  require_same_shape(pred, gt, "perceptual_distance");
  const auto fp = net->features(pred);
  std::vector<torch::Tensor> fg;
  {
    torch::NoGradGuard no_grad;
    fg = net->features(gt);
  }
  auto total = (fp[0] - fg[0]).abs().mean();
  for (std::size_t s = 1; s < fp.size(); ++s) total = total + (fp[s] - fg[s]).abs().mean();
  return total;
}

torch::Tensor recon_loss(const torch::Tensor& pred, const torch::Tensor& gt, PerceptualNet& net) {
  return samae::l1_loss(pred, gt) + perceptual_distance(net, pred, gt);
}

torch::Tensor identity_loss(const torch::Tensor& pred, const torch::Tensor& gt, IdentityEncoder& encoder) {
  require_same_shape(pred, gt, "identity_loss");
  const auto ep = encoder.embed(pred);
  torch::Tensor eg;
  {
    torch::NoGradGuard no_grad;
    eg = encoder.embed(gt);
  }
  return (1.0 - (ep * eg).sum(1)).mean();
}

torch::Tensor gan_loss_d(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
  return F::softplus(-real_logits).mean() + F::softplus(fake_logits).mean();
}

torch::Tensor gan_loss_g(const torch::Tensor& fake_logits) { return F::softplus(-fake_logits).mean(); }

torch::Tensor gan_loss_g(const torch::Tensor& fake_pairs, Discriminator& discriminator) {
  std::vector<bool> previous;
  for (auto& p : discriminator->parameters()) {
    previous.push_back(p.requires_grad());
    p.set_requires_grad(false);
  }
  auto loss = gan_loss_g(discriminator->forward(fake_pairs));
  std::size_t i = 0;
  for (auto& p : discriminator->parameters()) p.set_requires_grad(previous[i++]);
  return loss;
}

torch::Tensor total_loss(const LossParts& parts, const LossWeights& weights) {
  if (weights.rec < 0 || weights.id < 0 || weights.gan < 0) throw InvalidArgument("total_loss: negative weight");
  std::vector<torch::Tensor> terms;
  if (weights.rec != 0.0) terms.push_back(weights.rec * parts.rec());
  if (weights.id != 0.0) terms.push_back(weights.id * parts.id);
  if (weights.gan != 0.0) terms.push_back(weights.gan * parts.gan);
  if (terms.empty()) return torch::zeros({}, parts.l1.options());
  auto sum = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) sum = sum + terms[i];
  return sum;
}

torch::Tensor r1_penalty(Discriminator& discriminator, const torch::Tensor& real_pairs) {
  auto x = real_pairs.detach().requires_grad_(true);
  auto logits = discriminator->forward(x);
  auto grad = torch::autograd::grad({logits.sum()}, {x}, {}, /*retain_graph=*/true, /*create_graph=*/true)[0];
  return grad.pow(2).flatten(1).sum(1).mean();
}

}  // namespace samae
