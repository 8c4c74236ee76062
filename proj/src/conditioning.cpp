#include "samae/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "samae/tensor_utils.hpp"

namespace samae {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

double keypoint_radius(int resolution) { return std::max(1.5, 0.04 * resolution); }

Image render_iris_stickmen(const IrisKeypoints& kps, int resolution, double radius) {
  Image img(1, resolution, resolution, 0.0f);
  const double r2 = radius * radius;
  for (int k = 0; k < 2; ++k) {
    if (!kps.visible[k]) continue;
    const double cx = kps.points[k][0];
    const double cy = kps.points[k][1];
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - 1)));
    const int x1 = std::min(resolution - 1, static_cast<int>(std::ceil(cx + radius + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - 1)));
    const int y1 = std::min(resolution - 1, static_cast<int>(std::ceil(cy + radius + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - cx;
        const double dy = y + 0.5 - cy;
        if (dx * dx + dy * dy <= r2) img.at(0, y, x) = 1.0f;
      }
    }
  }
  return img;
}

IrisKeypoints perturb_keypoints(const IrisKeypoints& kps, Rng& rng, double sigma_px, int resolution) {
  diagnostics::count_keypoint_perturbation();
  IrisKeypoints out = kps;
  const double hi = resolution - 1.0;
  for (int k = 0; k < 2; ++k) {
    if (!kps.visible[k]) continue;
    for (int d = 0; d < 2; ++d) {
      const double offset = sigma_px > 0.0 ? sigma_px * rng.normal() : 0.0;
      out.points[k][d] = std::clamp(kps.points[k][d] + offset, 0.0, hi);
    }
  }
  return out;
}

nlohmann::json keypoints_to_json(const IrisKeypoints& kps) {
  nlohmann::json arr = nlohmann::json::array();
  for (int k = 0; k < 2; ++k)
    arr.push_back({{"x", kps.points[k][0]}, {"y", kps.points[k][1]}, {"visible", kps.visible[k]}});
  return {{"keypoints", arr}};
}

IrisKeypoints keypoints_from_json(const nlohmann::json& j) {
  const auto& arr = j.at("keypoints");
  if (!arr.is_array() || arr.size() != 2) throw InvalidArgument("keypoints: expected exactly two entries");
  IrisKeypoints kps;
  for (int k = 0; k < 2; ++k) {
    kps.points[k] = {arr[k].at("x").get<double>(), arr[k].at("y").get<double>()};
    kps.visible[k] = arr[k].at("visible").get<bool>();
  }
  return kps;
}

Image color_jitter(const Image& image, Rng& rng, const JitterConfig& config) {
  if (image.channels != 3) throw ShapeMismatch("color_jitter: expected a 3-channel image");
  const double brightness = 1.0 + rng.uniform(-config.brightness, config.brightness);
  const double contrast = 1.0 + rng.uniform(-config.contrast, config.contrast);
  const double hue = rng.uniform(-config.hue, config.hue) * 2.0 * std::numbers::pi;

  Image out = image;
  const std::size_t n = out.plane();
  float* r = out.data.data();
  float* g = r + n;
  float* b = g + n;
  for (float& v : out.data) v = static_cast<float>(std::clamp(v * brightness, 0.0, 1.0));

  double mean_luma = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_luma += 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  mean_luma /= static_cast<double>(n);
  for (float& v : out.data) v = static_cast<float>(std::clamp((v - mean_luma) * contrast + mean_luma, 0.0, 1.0));

  const double ch = std::cos(hue), sh = std::sin(hue);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    const double ci = 0.596 * r[i] - 0.274 * g[i] - 0.322 * b[i];
    const double cq = 0.211 * r[i] - 0.523 * g[i] + 0.312 * b[i];
    const double i2 = ch * ci - sh * cq;
    const double q2 = sh * ci + ch * cq;
    // Exact inverse of the forward matrix so a zero rotation round-trips.
    r[i] = static_cast<float>(std::clamp(y + 0.9561706854041451 * i2 + 0.6214325663465855 * q2, 0.0, 1.0));
    g[i] = static_cast<float>(std::clamp(y - 0.2726886023301063 * i2 - 0.6468132370201739 * q2, 0.0, 1.0));
    b[i] = static_cast<float>(std::clamp(y - 1.1037440821760263 * i2 + 1.7006230946773062 * q2, 0.0, 1.0));
  }
  return out;
}

// ---------------------------------------------------------------------------

ToyRecognizerImpl::ToyRecognizerImpl(int embedding_dim) {
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(3, 16, 3).stride(2).padding(1)));
  conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(16, 32, 3).stride(2).padding(1)));
  conv3 = register_module("conv3", nn::Conv2d(nn::Conv2dOptions(32, 64, 3).stride(2).padding(1)));
  head = register_module("head", nn::Linear(64 * 4 * 4, embedding_dim));
}

torch::Tensor ToyRecognizerImpl::forward(const torch::Tensor& x) {
  auto h = F::leaky_relu(conv1(x), F::LeakyReLUFuncOptions().negative_slope(0.2));
  h = F::leaky_relu(conv2(h), F::LeakyReLUFuncOptions().negative_slope(0.2));
  h = F::leaky_relu(conv3(h), F::LeakyReLUFuncOptions().negative_slope(0.2));
  h = F::adaptive_avg_pool2d(h, F::AdaptiveAvgPool2dFuncOptions({4, 4}));
  return head(h.flatten(1));
}

ToyIdentityEncoder::ToyIdentityEncoder(std::uint64_t seed, int embedding_dim)
    : seed_(seed), dim_(embedding_dim), net_(embedding_dim) {
  seeded_init(*net_, seed);
  freeze(*net_);
  net_->eval();
}

torch::Tensor ToyIdentityEncoder::embed(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeMismatch("identity encoder expects [B,3,H,W]");
  return F::normalize(net_->forward(images), F::NormalizeFuncOptions().p(2).dim(1).eps(1e-12));
}

// ---------------------------------------------------------------------------

SkinEncoderImpl::SkinEncoderImpl(int out_dim_, int width) : out_dim(out_dim_) {
  auto conv = [](int in, int out, int stride) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
  };
  stem = register_module("stem", conv(3, width, 1));
  res1a = register_module("res1a", conv(width, width, 1));
  res1b = register_module("res1b", conv(width, width, 1));
  down1 = register_module("down1", conv(width, 2 * width, 2));
  res2a = register_module("res2a", conv(2 * width, 2 * width, 1));
  res2b = register_module("res2b", conv(2 * width, 2 * width, 1));
  down2 = register_module("down2", conv(2 * width, 4 * width, 2));
  head = register_module("head", nn::Linear(4 * width, out_dim));
}

torch::Tensor SkinEncoderImpl::forward(const torch::Tensor& x) {
  const auto act = [](const torch::Tensor& t) {
    return F::leaky_relu(t, F::LeakyReLUFuncOptions().negative_slope(0.2));
  };
  auto h = act(stem(x));
  h = h + res1b(act(res1a(h))) * (1.0 / std::sqrt(2.0));
  h = act(down1(h));
  h = h + res2b(act(res2a(h))) * (1.0 / std::sqrt(2.0));
  h = act(down2(h));
  h = h.mean({2, 3});
  return head(h);
}

torch::Tensor encode_identity(const Image& image, bool jitter, Rng& rng, IdentityEncoder& encoder,
                              const JitterConfig& config) {
  const Image input = jitter ? color_jitter(image, rng, config) : image;
  torch::NoGradGuard no_grad;
  auto t = image_to_tensor(to_signed_range(input));
  return encoder.embed(t)[0];
}

torch::Tensor encode_skin(SkinEncoder& encoder, const torch::Tensor& images, const torch::Tensor& skin_masks) {
  if (images.dim() != 4 || skin_masks.dim() != 4 || images.size(0) != skin_masks.size(0) ||
      images.size(2) != skin_masks.size(2) || images.size(3) != skin_masks.size(3) || skin_masks.size(1) != 1)
    throw ShapeMismatch("encode_skin: image and skin mask shapes differ");
  return encoder->forward(images * skin_masks);
}

torch::Tensor encode_skin(SkinEncoder& encoder, const Image& image, const Mask& skin_mask) {
  if (image.height != skin_mask.height() || image.width != skin_mask.width())
    throw ShapeMismatch("encode_skin: image and skin mask shapes differ");
  return encode_skin(encoder, image_to_tensor(image), mask_to_tensor(skin_mask))[0];
}

}  // namespace samae
