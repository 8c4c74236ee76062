#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "samae/common.hpp"
#include "samae/masks.hpp"

namespace samae {

inline constexpr int kNumShLighting = 9;

/// Parameter tuple of the morphable face model: shape, expression, albedo,
/// lighting, rotation, 2D translation and scale. The camera is orthographic,
/// so there is no depth translation.
struct MorphableParams {
  std::vector<double> alpha;                 ///< shape coefficients
  std::vector<double> beta;                  ///< expression coefficients
  std::vector<double> gamma;                 ///< albedo coefficients
  std::array<double, kNumShLighting> delta{};  ///< band-2 SH lighting, grayscale
  std::array<double, 3> rotation{};          ///< pitch, yaw, roll (radians)
  std::array<double, 2> translation{};       ///< normalized image units, [-1, 1]
  double scale = 0.0;                        ///< half-width factor 1 + 0.1 * scale

  friend bool operator==(const MorphableParams&, const MorphableParams&) = default;
};

/// Throws InvalidArgument unless all values are finite, |angles| <= pi and
/// the rendered face size is positive.
void validate(const MorphableParams& params);

/// Linear face model over a template mesh. Vertex-indexed arrays are stored
/// x,y,z interleaved (3V rows); bases are column-major with one column per
/// coefficient.
struct MeshAsset {
  int num_vertices = 0;
  std::vector<float> vertices;          ///< 3V template positions
  std::vector<std::uint32_t> triangles; ///< 3F vertex indices
  std::vector<float> shape_basis;       ///< 3V x K_alpha
  std::vector<float> expression_basis;  ///< 3V x K_beta
  std::vector<float> albedo_mean;       ///< 3V (r,g,b per vertex)
  std::vector<float> albedo_basis;      ///< 3V x K_gamma; column 0 is the whitening direction / 4
  std::array<std::uint32_t, 2> iris_vertices{};  ///< left, right iris centres
  std::vector<std::uint32_t> landmark_vertices;
  std::vector<std::uint8_t> skin_labels;  ///< 1 skin, 0 non-skin (eyes, lips)
  int k_alpha = 0;
  int k_beta = 0;
  int k_gamma = 0;

  [[nodiscard]] int num_triangles() const { return static_cast<int>(triangles.size() / 3); }

  friend bool operator==(const MeshAsset&, const MeshAsset&) = default;
};

/// Throws CorruptAsset on out-of-range indices or mismatched basis sizes.
void validate(const MeshAsset& asset);

/// Deterministic toy face: a mirror-symmetric deformed half-ellipsoid with
/// eye, nose and mouth relief and K_alpha = K_beta = K_gamma = 8.
MeshAsset make_toy_asset();

/// Zero coefficient vectors sized for `asset`, frontal pose, default light.
MorphableParams default_params(const MeshAsset& asset);

/// Nominal lighting used by defaults and the synthetic data generator.
std::array<double, kNumShLighting> nominal_lighting();

void save_asset(const std::filesystem::path& path, const MeshAsset& asset);
MeshAsset load_asset(const std::filesystem::path& path);
void save_asset(std::ostream& out, const MeshAsset& asset);
MeshAsset load_asset(std::istream& in);

/// gamma_neu: coefficient vector whose reconstructed albedo is constant white.
std::vector<double> neutral_albedo_coefficients(std::size_t k_gamma);

/// Replaces gamma with gamma_neu. Idempotent.
MorphableParams neutralize_albedo(MorphableParams params);

struct RenderOptions {
  int resolution = 64;
  /// Three-channel I_ras (albedo colour kept); default is grayscale.
  bool color = false;
};

struct RenderOutput {
  Image i_ras;                  ///< min-max normalized over the foreground, 0 elsewhere
  Mask m_ras;                   ///< rasterizer coverage
  std::vector<float> depth;     ///< H*W, +inf where uncovered
  std::vector<std::int32_t> triangle_ids;  ///< H*W, -1 where uncovered
  std::vector<std::array<double, 2>> landmarks_px;
  std::array<std::array<double, 2>, 2> iris_px{};  ///< projected iris vertices
};

/// Orthographic z-buffered rasterization with SH shading. Pixel centres sit
/// at (x + 0.5, y + 0.5); edges follow the top-left fill rule and depth ties
/// keep the lower triangle index.
RenderOutput render(const MeshAsset& asset, const MorphableParams& params, const RenderOptions& options);
inline RenderOutput render(const MeshAsset& asset, const MorphableParams& params, int resolution) {
  return render(asset, params, RenderOptions{resolution, false});
}

/// Unnormalized RGB shading (albedo x lighting, clamped to [0,1]) used to
/// synthesize dataset images. Uses the same rasterization as `render`.
Image shade_color(const MeshAsset& asset, const MorphableParams& params, const RenderOutput& raster);

/// Pixels whose winning triangle is labelled skin.
Mask skin_mask_from_render(const MeshAsset& asset, const RenderOutput& raster);

/// Mask equal to rasterizer coverage.
Mask derive_mesh_mask(const RenderOutput& render_output);

}  // namespace samae
