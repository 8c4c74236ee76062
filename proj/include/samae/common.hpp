#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace samae {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SAMAE_DEFINE_ERROR(Name)            \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

SAMAE_DEFINE_ERROR(ShapeMismatch);
SAMAE_DEFINE_ERROR(DegenerateMesh);
SAMAE_DEFINE_ERROR(MissingSidecar);
SAMAE_DEFINE_ERROR(EmptyPool);
SAMAE_DEFINE_ERROR(NonFiniteLoss);
SAMAE_DEFINE_ERROR(CorruptCheckpoint);
SAMAE_DEFINE_ERROR(CorruptAsset);
SAMAE_DEFINE_ERROR(IOError);
SAMAE_DEFINE_ERROR(EmptyReport);
SAMAE_DEFINE_ERROR(InvalidConfig);
SAMAE_DEFINE_ERROR(InvalidArgument);

#undef SAMAE_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Seeded random source
// ---------------------------------------------------------------------------

/// Explicit, serializable random source. All stochastic operations take one
/// of these by reference; there is no global generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller, no cached second value so the state is
  /// fully described by the engine).
  double normal();
  /// Standard normal truncated to [-bound, bound] by rejection.
  double truncated_normal(double bound);
  /// Uniform index in [0, n).
  std::size_t index(std::size_t n);

  std::uint64_t next_u64() { return engine_(); }

  std::string serialize() const;
  void deserialize(const std::string& state);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

/// Planar (channel-major) float image. Value range is a convention of the
/// caller: dataset images live in [0,1], model-side images in [-1,1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  [[nodiscard]] bool empty() const { return data.empty(); }

  float& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  [[nodiscard]] float at(int c, int y, int x) const {
    return data[c * plane() + static_cast<std::size_t>(y) * width + x];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Binary netpbm I/O. PGM (P5) for one channel, PPM (P6) for three. Values
/// are clamped to [0,1] and quantized to 8 bits on write.
void write_netpbm(const std::filesystem::path& path, const Image& image);
Image read_netpbm(const std::filesystem::path& path);

/// Maps [0,1] to [-1,1] and back.
Image to_signed_range(const Image& image);
Image to_unit_range(const Image& image);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

/// Call counters for stochastic training-only operations, so tests can
/// assert that inference never reaches them.
namespace diagnostics {
std::uint64_t random_mesh_scale_calls();
std::uint64_t keypoint_perturbation_calls();
void count_random_mesh_scale();
void count_keypoint_perturbation();
void reset_counters();
}  // namespace diagnostics

}  // namespace samae
