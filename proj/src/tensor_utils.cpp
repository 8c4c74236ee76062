#include "samae/tensor_utils.hpp"

#include <cmath>

namespace samae {

torch::Tensor image_to_tensor(const Image& image) {
  auto t = torch::empty({1, image.channels, image.height, image.width}, torch::kFloat32);
  std::memcpy(t.data_ptr<float>(), image.data.data(), image.data.size() * sizeof(float));
  return t;
}

Image tensor_to_image(const torch::Tensor& tensor) {
  auto t = tensor.detach().to(torch::kFloat32).contiguous();
  if (t.dim() == 4) {
    if (t.size(0) != 1) throw ShapeMismatch("tensor_to_image: batch dimension must be 1");
    t = t[0];
  }
  if (t.dim() != 3) throw ShapeMismatch("tensor_to_image: expected [C,H,W]");
  Image img(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), static_cast<int>(t.size(2)));
  std::memcpy(img.data.data(), t.data_ptr<float>(), img.data.size() * sizeof(float));
  return img;
}

torch::Tensor mask_to_tensor(const Mask& mask) {
  auto t = torch::empty({1, 1, mask.height(), mask.width()}, torch::kFloat32);
  float* dst = t.data_ptr<float>();
  const auto bits = mask.bits();
  for (std::size_t i = 0; i < bits.size(); ++i) dst[i] = bits[i] ? 1.0f : 0.0f;
  return t;
}

void freeze(torch::nn::Module& module) {
  for (auto& p : module.parameters()) p.set_requires_grad(false);
}

void seeded_init(torch::nn::Module& module, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto gen = torch::make_generator<torch::CPUGeneratorImpl>(seed);
  for (auto& item : module.named_parameters()) {
    auto& p = item.value();
    const std::string& name = item.key();
    const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
    if (is_bias || p.dim() < 2) {
      // Norm gains stay at 1; biases start at 0.
      const bool is_norm_weight = !is_bias && p.dim() == 1;
      p.fill_(is_norm_weight ? 1.0 : 0.0);
      continue;
    }
    const double fan_in = static_cast<double>(p.numel() / p.size(0));
    const double std = std::sqrt(2.0 / fan_in);
    p.copy_(at::normal(0.0, std, p.sizes(), gen, p.options()));
  }
}

std::int64_t parameter_count(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

int norm_groups(int channels) {
  for (int g : {8, 4, 2}) {
    if (channels % g == 0) return g;
  }
  return 1;
}

}  // namespace samae
