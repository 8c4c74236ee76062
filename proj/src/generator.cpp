#include "samae/generator.hpp"

#include <cmath>

#include "samae/tensor_utils.hpp"

namespace samae {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

GeneratorInput make_generator_input(const torch::Tensor& i_ras, const torch::Tensor& i_p,
                                    const torch::Tensor& kp_image, const torch::Tensor& c_id,
                                    const torch::Tensor& c_skin) {
  if (i_ras.dim() != 4 || i_p.dim() != 4 || kp_image.dim() != 4)
    throw ShapeMismatch("generator input: spatial tensors must be [B,C,H,W]");
  if (i_ras.size(1) != 1 || kp_image.size(1) != 1)
    throw ShapeMismatch("generator input: I_ras and keypoint image must be single-channel");
  if (i_ras.sizes() != kp_image.sizes() || i_ras.size(0) != i_p.size(0) || i_ras.size(2) != i_p.size(2) ||
      i_ras.size(3) != i_p.size(3))
    throw ShapeMismatch("generator input: spatial sizes differ");
  if (c_id.dim() != 2 || c_skin.dim() != 2 || c_id.size(0) != i_ras.size(0) || c_skin.size(0) != i_ras.size(0))
    throw ShapeMismatch("generator input: condition vectors must be [B,D]");
  GeneratorInput in;
  in.spatial = torch::cat({i_ras, i_p, kp_image}, 1);
  in.condition = torch::cat({c_id, c_skin}, 1);
  return in;
}

// ---------------------------------------------------------------------------

ResBlockImpl::ResBlockImpl(int in_channels, int out_channels_, int embed_dim) : out_channels(out_channels_) {
  norm1 = register_module("norm1", nn::GroupNorm(nn::GroupNormOptions(norm_groups(in_channels), in_channels)));
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 3).padding(1)));
  norm2 = register_module("norm2", nn::GroupNorm(nn::GroupNormOptions(norm_groups(out_channels), out_channels)));
  conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out_channels, out_channels, 3).padding(1)));
  emb_proj = register_module("emb_proj", nn::Linear(embed_dim, 2 * out_channels));
  if (in_channels != out_channels)
    skip = register_module("skip", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 1)));
}

torch::Tensor ResBlockImpl::inject_conditions(const torch::Tensor& embedding, const torch::Tensor& normalized) {
  auto ss = emb_proj(F::silu(embedding)).unsqueeze(-1).unsqueeze(-1);
  auto parts = ss.chunk(2, 1);
  return normalized * (1 + parts[0]) + parts[1];
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& embedding) {
  auto h = conv1(F::silu(norm1(x)));
  h = inject_conditions(embedding, norm2(h));
  h = conv2(F::silu(h));
  return (skip ? skip(x) : x) + h;
}

AttentionBlockImpl::AttentionBlockImpl(int channels) {
  norm = register_module("norm", nn::GroupNorm(nn::GroupNormOptions(norm_groups(channels), channels)));
  qkv = register_module("qkv", nn::Conv2d(nn::Conv2dOptions(channels, 3 * channels, 1)));
  proj = register_module("proj", nn::Conv2d(nn::Conv2dOptions(channels, channels, 1)));
}

torch::Tensor AttentionBlockImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  auto parts = qkv(norm(x)).reshape({b, 3 * c, h * w}).chunk(3, 1);
  auto weights = torch::softmax(torch::bmm(parts[0].transpose(1, 2), parts[1]) / std::sqrt(static_cast<double>(c)), -1);
  auto out = torch::bmm(parts[2], weights.transpose(1, 2)).reshape({b, c, h, w});
  return x + proj(out);
}

// ---------------------------------------------------------------------------

UNetGeneratorImpl::UNetGeneratorImpl(GeneratorConfig cfg) : config(std::move(cfg)) {
  const int e = config.embed_dim;
  cond_mlp = register_module("cond_mlp", nn::Sequential(nn::Linear(config.condition_dim, e), nn::SiLU(), nn::Linear(e, e)));
  const int base = config.base_width;
  input_conv = register_module("input_conv", nn::Conv2d(nn::Conv2dOptions(config.spatial_channels(), base, 3).padding(1)));

  down_blocks = register_module("down", nn::ModuleList());
  up_blocks = register_module("up", nn::ModuleList());
  const int levels = static_cast<int>(config.channel_mult.size());
  std::vector<int> skip_channels{base};
  int ch = base;
  for (int level = 0; level < levels; ++level) {
    const int out = base * config.channel_mult[level];
    const bool attn = config.attention_at_lowest && level == levels - 1;
    for (int i = 0; i < config.num_res_blocks; ++i) {
      down_blocks->push_back(ResBlock(ch, out, e));
      down_kinds.emplace_back("res");
      ch = out;
      if (attn) {
        down_blocks->push_back(AttentionBlock(ch));
        down_kinds.emplace_back("attn");
      }
      skip_channels.push_back(ch);
    }
    if (level != levels - 1) {
      down_blocks->push_back(nn::Conv2d(nn::Conv2dOptions(ch, ch, 3).stride(2).padding(1)));
      down_kinds.emplace_back("down");
      skip_channels.push_back(ch);
    }
  }

  mid1 = register_module("mid1", ResBlock(ch, ch, e));
  mid_attn = register_module("mid_attn", AttentionBlock(ch));
  mid2 = register_module("mid2", ResBlock(ch, ch, e));

  for (int level = levels - 1; level >= 0; --level) {
    const int out = base * config.channel_mult[level];
    const bool attn = config.attention_at_lowest && level == levels - 1;
    for (int i = 0; i <= config.num_res_blocks; ++i) {
      const int skip = skip_channels.back();
      skip_channels.pop_back();
      up_blocks->push_back(ResBlock(ch + skip, out, e));
      up_kinds.emplace_back("res");
      ch = out;
      if (attn) {
        up_blocks->push_back(AttentionBlock(ch));
        up_kinds.emplace_back("attn");
      }
      if (level != 0 && i == config.num_res_blocks) {
        up_blocks->push_back(nn::Conv2d(nn::Conv2dOptions(ch, ch, 3).padding(1)));
        up_kinds.emplace_back("up");
      }
    }
  }

  out_norm = register_module("out_norm", nn::GroupNorm(nn::GroupNormOptions(norm_groups(ch), ch)));
  out_conv = register_module("out_conv", nn::Conv2d(nn::Conv2dOptions(ch, config.image_channels, 3).padding(1)));
}

torch::Tensor UNetGeneratorImpl::embed_condition(const torch::Tensor& condition) { return cond_mlp->forward(condition); }

torch::Tensor UNetGeneratorImpl::forward(const torch::Tensor& spatial, const torch::Tensor& condition) {
  const auto emb = embed_condition(condition);
  std::vector<torch::Tensor> skips;
  auto h = input_conv(spatial);
  skips.push_back(h);
  for (std::size_t i = 0; i < down_kinds.size(); ++i) {
    const auto& kind = down_kinds[i];
    if (kind == "res") {
      h = down_blocks->ptr(i)->as<ResBlockImpl>()->forward(h, emb);
      if (i + 1 < down_kinds.size() && down_kinds[i + 1] == "attn") continue;
    } else if (kind == "attn") {
      h = down_blocks->ptr(i)->as<AttentionBlockImpl>()->forward(h);
    } else {
      h = down_blocks->ptr(i)->as<nn::Conv2dImpl>()->forward(h);
    }
    skips.push_back(h);
  }
  h = mid1->forward(h, emb);
  h = mid_attn->forward(h);
  h = mid2->forward(h, emb);
  for (std::size_t i = 0; i < up_kinds.size(); ++i) {
    const auto& kind = up_kinds[i];
    if (kind == "res") {
      h = torch::cat({h, skips.back()}, 1);
      skips.pop_back();
      h = up_blocks->ptr(i)->as<ResBlockImpl>()->forward(h, emb);
    } else if (kind == "attn") {
      h = up_blocks->ptr(i)->as<AttentionBlockImpl>()->forward(h);
    } else {
      h = F::interpolate(h, F::InterpolateFuncOptions()
                                .scale_factor(std::vector<double>{2.0, 2.0})
                                .mode(torch::kNearest));
      h = up_blocks->ptr(i)->as<nn::Conv2dImpl>()->forward(h);
    }
  }
  return torch::tanh(out_conv(F::silu(out_norm(h))));
}

torch::Tensor generate(UNetGenerator& generator, const GeneratorInput& input) {
  const auto& cfg = generator->config;
  if (input.spatial.dim() != 4 || input.spatial.size(1) != cfg.spatial_channels())
    throw ShapeMismatch("generate: spatial input must have image_channels + 2 channels");
  if (input.condition.dim() != 2 || input.condition.size(1) != cfg.condition_dim ||
      input.condition.size(0) != input.spatial.size(0))
    throw ShapeMismatch("generate: condition vector has the wrong length");
  if (input.spatial.size(2) % cfg.size_multiple() != 0 || input.spatial.size(3) % cfg.size_multiple() != 0)
    throw ShapeMismatch("generate: spatial size not divisible by the U-Net depth");
  if (!torch::isfinite(input.spatial).all().item<bool>() || !torch::isfinite(input.condition).all().item<bool>())
    throw InvalidArgument("generate: non-finite input");
  return generator->forward(input.spatial, input.condition);
}

void zero_condition_projections(UNetGenerator& generator) {
  torch::NoGradGuard no_grad;
  for (auto& m : generator->modules(/*include_self=*/false)) {
    if (auto* block = m->as<ResBlockImpl>()) {
      block->emb_proj->weight.zero_();
      block->emb_proj->bias.zero_();
    }
  }
}

}  // namespace samae
