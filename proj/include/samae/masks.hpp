#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "samae/common.hpp"

namespace samae {

struct MeshAsset;
struct MorphableParams;

/// Binary H x W grid. Every cell is exactly 0 or 1.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, std::uint8_t fill = 0);

  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] std::size_t size() const { return bits_.size(); }

  [[nodiscard]] bool test(int y, int x) const { return bits_[index(y, x)] != 0; }
  void set(int y, int x, bool on) { bits_[index(y, x)] = on ? 1 : 0; }

  /// Number of foreground pixels.
  [[nodiscard]] std::size_t area() const;
  [[nodiscard]] std::span<const std::uint8_t> bits() const { return bits_; }

  /// True when every foreground pixel of `other` is also set here.
  [[nodiscard]] bool contains(const Mask& other) const;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  [[nodiscard]] std::size_t index(int y, int x) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Per-pixel max (set union).
Mask unite(const Mask& a, const Mask& b);
/// Per-pixel a * (1 - b) (set difference).
Mask subtract(const Mask& a, const Mask& b);

/// M = M_ras - M_occ.
Mask final_mask_basic(const Mask& m_ras, const Mask& m_occ);

/// Shape pool for perforation confusion. Each entry is one shape-coefficient
/// vector.
using AlphaPool = std::vector<std::vector<double>>;

/// Training-time perforation confusion: draws a random shape from `pool`,
/// renders it with every other field of `params` (albedo neutralized), and
/// returns ((m_ras | m_rand) - m_occ) together with the random-shape params.
std::pair<Mask, MorphableParams> perforation_confusion_train(const Mask& m_ras, const Mask& m_occ,
                                                             const MeshAsset& asset,
                                                             const MorphableParams& params,
                                                             const AlphaPool& pool, Rng& rng);

/// Inference variant: (m_ras_tgt | m_ras_swap) - m_occ.
Mask perforation_mask_infer(const Mask& m_ras_tgt, const Mask& m_ras_swap, const Mask& m_occ);

/// I_p = (1 - M) * I. Every channel of the image is masked.
Image masked_image(const Image& image, const Mask& m);

/// 8-bit single-channel mask files: 0 background, 255 foreground. Loading
/// thresholds at 128.
void write_mask(const std::filesystem::path& path, const Mask& m);
Mask read_mask(const std::filesystem::path& path);

Image mask_to_image(const Mask& m);

}  // namespace samae
