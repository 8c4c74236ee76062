#pragma once

#include <array>
#include <cstdint>
#include <memory>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "samae/common.hpp"
#include "samae/masks.hpp"

namespace samae {

inline constexpr int kDefaultIdentityDim = 512;
inline constexpr int kDefaultSkinDim = 64;

// ---------------------------------------------------------------------------
// Iris keypoints and their stickmen rendering
// ---------------------------------------------------------------------------

struct IrisKeypoints {
  std::array<std::array<double, 2>, 2> points{};  ///< (x, y) pixels; left then right
  std::array<bool, 2> visible{false, false};

  friend bool operator==(const IrisKeypoints&, const IrisKeypoints&) = default;
};

/// Disc radius used for stickmen rendering at a given resolution.
double keypoint_radius(int resolution);

/// Filled discs of `radius` at each visible keypoint; a pixel is lit when its
/// centre lies within the disc. No anti-aliasing.
Image render_iris_stickmen(const IrisKeypoints& kps, int resolution, double radius);
inline Image render_iris_stickmen(const IrisKeypoints& kps, int resolution) {
  return render_iris_stickmen(kps, resolution, keypoint_radius(resolution));
}

/// Offsets each visible keypoint by isotropic N(0, sigma_px^2) and clips it
/// to [0, resolution - 1]. Invisible keypoints are untouched.
IrisKeypoints perturb_keypoints(const IrisKeypoints& kps, Rng& rng, double sigma_px, int resolution);

/// Keypoint sidecar JSON: {"keypoints": [{"x":..,"y":..,"visible":..}, ..]}.
nlohmann::json keypoints_to_json(const IrisKeypoints& kps);
IrisKeypoints keypoints_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Colour jitter
// ---------------------------------------------------------------------------

struct JitterConfig {
  double brightness = 0.3;
  double contrast = 0.3;
  double hue = 0.1;  ///< fraction of a full hue turn

  friend bool operator==(const JitterConfig&, const JitterConfig&) = default;
};

/// Brightness, contrast then hue rotation (YIQ), each sampled uniformly in
/// [-range, range]. Input and output in [0, 1].
Image color_jitter(const Image& image, Rng& rng, const JitterConfig& config);

// ---------------------------------------------------------------------------
// Encoders
// ---------------------------------------------------------------------------

/// Face-recognition embedding. Inputs are [B, 3, H, W] in [-1, 1]; outputs
/// are L2-normalized rows of length dim().
class IdentityEncoder {
 public:
  virtual ~IdentityEncoder() = default;
  virtual torch::Tensor embed(const torch::Tensor& images) = 0;
  [[nodiscard]] virtual int dim() const = 0;
  /// Converts weights to `dtype` (used by double-precision gradient checks).
  virtual void to(torch::Dtype dtype) = 0;
};

struct ToyRecognizerImpl : torch::nn::Module {
  explicit ToyRecognizerImpl(int embedding_dim);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(ToyRecognizer);

/// Frozen, seed-initialized convolutional recognizer standing in for a
/// pretrained face-recognition network.
class ToyIdentityEncoder final : public IdentityEncoder {
 public:
  explicit ToyIdentityEncoder(std::uint64_t seed, int embedding_dim = kDefaultIdentityDim);

  torch::Tensor embed(const torch::Tensor& images) override;
  [[nodiscard]] int dim() const override { return dim_; }
  void to(torch::Dtype dtype) override { net_->to(dtype); }

  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  ToyRecognizer& net() { return net_; }

 private:
  std::uint64_t seed_;
  int dim_;
  ToyRecognizer net_;
};

/// Trainable skin-tone encoder: residual conv stack, global average pool,
/// linear projection to `out_dim`.
struct SkinEncoderImpl : torch::nn::Module {
  explicit SkinEncoderImpl(int out_dim = kDefaultSkinDim, int width = 16);
  torch::Tensor forward(const torch::Tensor& x);

  int out_dim;
  torch::nn::Conv2d stem{nullptr}, res1a{nullptr}, res1b{nullptr}, down1{nullptr}, res2a{nullptr}, res2b{nullptr},
      down2{nullptr};
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(SkinEncoder);

/// c_id for one dataset-range ([0,1]) image. With jitter on, the colour
/// jitter is drawn from `rng` before encoding. Returns a [dim] unit vector.
torch::Tensor encode_identity(const Image& image, bool jitter, Rng& rng, IdentityEncoder& encoder,
                              const JitterConfig& config = {});

/// c_skin: zeroes non-skin pixels and encodes. `images` [B,3,H,W] in
/// [-1,1], `skin_masks` [B,1,H,W] of {0,1}. Gradients flow to the encoder.
torch::Tensor encode_skin(SkinEncoder& encoder, const torch::Tensor& images, const torch::Tensor& skin_masks);
torch::Tensor encode_skin(SkinEncoder& encoder, const Image& image, const Mask& skin_mask);

}  // namespace samae
