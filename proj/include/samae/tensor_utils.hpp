#pragma once

#include <torch/torch.h>

#include "samae/common.hpp"
#include "samae/masks.hpp"

namespace samae {

/// Image -> [1, C, H, W] float32 tensor (copy).
torch::Tensor image_to_tensor(const Image& image);
/// [C, H, W] or [1, C, H, W] tensor -> Image (copy, float32).
Image tensor_to_image(const torch::Tensor& tensor);
/// Mask -> [1, 1, H, W] float32 tensor of {0, 1}.
torch::Tensor mask_to_tensor(const Mask& mask);

/// Disables gradients for every parameter of `module`.
void freeze(torch::nn::Module& module);

/// Kaiming-style fan-in initialization driven by an explicit seed, so each
/// network's initial weights are independent of construction order.
void seeded_init(torch::nn::Module& module, std::uint64_t seed);

/// Number of scalar parameters.
std::int64_t parameter_count(const torch::nn::Module& module);

/// Group count for GroupNorm over `channels`.
int norm_groups(int channels);

}  // namespace samae
