#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "samae/config.hpp"
#include "samae/dataset.hpp"
#include "samae/generator.hpp"
#include "samae/losses.hpp"
#include "samae/masks.hpp"
#include "samae/morphable.hpp"

namespace samae {

/// Fixed seeds of the frozen auxiliary networks. They do not depend on the
/// run seed, so every run and every checkpoint sees the same feature spaces.
inline constexpr std::uint64_t kIdentityEncoderSeed = 0x5A4D'0001;
inline constexpr std::uint64_t kPerceptualNetSeed = 0x5A4D'0002;
/// Held-out recognizer used only by evaluation.
inline constexpr std::uint64_t kEvalEncoderSeed = 0x5A4D'0003;

inline constexpr double kRandomScaleLow = -4.0;
inline constexpr double kRandomScaleHigh = 1.0;

/// With `enabled`, replaces s with a U(-4, 1) draw; otherwise returns the
/// params unchanged. Every enabled call bumps the diagnostics counter.
MorphableParams random_mesh_scale(MorphableParams params, Rng& rng, bool enabled);

/// Everything build_train_sample needs besides the record.
struct SampleContext {
  const MeshAsset* asset = nullptr;
  const AlphaPool* alpha_pool = nullptr;
  IdentityEncoder* recognizer = nullptr;
  /// When null, c_skin is left undefined for the caller to encode in batch.
  SkinEncoder* skin_encoder = nullptr;
};

/// One self-reconstruction sample. Tensors are batch-of-one float32.
struct TrainSample {
  GeneratorInput input;   ///< condition is undefined while c_skin is deferred
  torch::Tensor gt;       ///< [1,3,H,W] in [-1,1]
  torch::Tensor c_id;     ///< [1,D_id]
  torch::Tensor c_skin;   ///< [1,D_skin]; zeros when the skin flag is off
  torch::Tensor kp_image; ///< [1,1,H,W]
  torch::Tensor skin_image;  ///< gt in [-1,1], fed to the skin encoder
  torch::Tensor skin_mask;   ///< [1,1,H,W]

  // Intermediate artifacts.
  MorphableParams render_params;  ///< after albedo neutralization and scaling
  std::optional<MorphableParams> random_shape_params;
  RenderOutput raster;
  Mask m_ras;
  Mask mask;  ///< final mask M
  Image i_p;  ///< masked image in [-1,1]
};

/// lookup -> neutralize albedo -> random scale (R) -> render -> M_ras ->
/// perforation confusion (P) or the basic mask -> I_p -> c_id (jittered),
/// c_skin (S) -> keypoint stickmen. Random draws come from `rng` in that order.
TrainSample build_train_sample(const DatasetRecord& record, const TrainConfig& config, Rng& rng,
                               const SampleContext& ctx);

/// Dataset index of every element of the batch at `step`. Epochs are
/// independent seeded permutations, so the schedule is a pure function of
/// (seed, step) and survives checkpoint/resume.
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::int64_t step, int batch_size, std::size_t n);

/// A collated training batch.
struct TrainBatch {
  std::vector<std::size_t> indices;
  torch::Tensor spatial;      ///< [B, 5, H, W]
  torch::Tensor c_id;         ///< [B, D_id]
  torch::Tensor skin_image;   ///< [B, 3, H, W]
  torch::Tensor skin_mask;    ///< [B, 1, H, W]
  torch::Tensor gt;           ///< [B, 3, H, W]
  torch::Tensor kp_real;      ///< [B, 1, H, W]
  torch::Tensor kp_perturbed; ///< [B, 1, H, W]

  [[nodiscard]] TrainBatch to(torch::Dtype dtype) const;
};

struct StepMetrics {
  std::int64_t step = 0;
  double l1 = 0, perc = 0, id = 0, gan_g = 0, gan_d = 0;

  friend bool operator==(const StepMetrics&, const StepMetrics&) = default;
};

nlohmann::json metrics_to_json(const StepMetrics& m);

/// Networks, optimizers and the training random stream.
class TrainState {
 public:
  TrainState(TrainConfig config, MeshAsset asset, AlphaPool alpha_pool);

  TrainConfig config;
  MeshAsset asset;
  AlphaPool alpha_pool;

  UNetGenerator generator{nullptr};
  Discriminator discriminator{nullptr};
  SkinEncoder skin_encoder{nullptr};
  std::shared_ptr<ToyIdentityEncoder> recognizer;
  PerceptualNet perceptual{nullptr};

  std::unique_ptr<torch::optim::Adam> opt_g;  ///< generator and skin encoder
  std::unique_ptr<torch::optim::Adam> opt_d;

  std::int64_t step = 0;
  Rng rng;
  /// Where a NonFiniteLoss diagnostic is written (empty: stderr only).
  std::filesystem::path diagnostic_dir;

  [[nodiscard]] SampleContext sample_context(bool defer_skin) const;
  /// Converts every network (including the frozen ones) to `dtype`.
  void to(torch::Dtype dtype);
  [[nodiscard]] torch::Dtype dtype() const;
};

/// Builds and collates the samples for `indices`, drawing from state.rng.
/// Keypoint perturbation for the discriminator is drawn here as well.
TrainBatch prepare_batch(TrainState& state, const std::vector<DatasetRecord>& records,
                         const std::vector<std::size_t>& indices);

/// Condition vectors [c_id, c_skin] of a batch; c_skin carries gradients to
/// the skin encoder when the skin flag is on, zeros otherwise.
torch::Tensor batch_condition(TrainState& state, const TrainBatch& batch);

/// Generator-side loss terms for an already generated batch `out`.
LossParts loss_parts_from_output(TrainState& state, const TrainBatch& batch, const torch::Tensor& out);

/// Generator-side loss terms on a batch. The generated image is returned
/// through `generated` when requested.
LossParts generator_loss_parts(TrainState& state, const TrainBatch& batch, torch::Tensor* generated = nullptr);

/// One discriminator update followed by one generator + skin-encoder update.
/// Throws NonFiniteLoss (after writing a diagnostic dump) on NaN/Inf.
StepMetrics train_step(TrainState& state, const std::vector<DatasetRecord>& records);

/// Runs `steps` further steps. `on_step` is called after each one.
void train(TrainState& state, const std::vector<DatasetRecord>& records, std::int64_t steps,
           const std::function<void(const StepMetrics&)>& on_step = {});

// ---------------------------------------------------------------------------
// Swap inference
// ---------------------------------------------------------------------------

/// v_swap = (alpha_src, beta_tgt, gamma_neu, delta_tgt, R_tgt, t_tgt, s_tgt).
MorphableParams compose_swap_params(const MorphableParams& source, const MorphableParams& target);

struct SwapResult {
  Image image;  ///< RGB in [0,1]
  MorphableParams v_swap;
  RenderOutput raster_swap;
  Mask m_ras_target;
  Mask mask;
  Image i_p;  ///< [-1,1]
  torch::Tensor c_id;
  torch::Tensor c_skin;
  IrisKeypoints keypoints;
};

/// Cross-identity swap. Deterministic: no jitter, no random scaling, no
/// keypoint perturbation.
SwapResult swap(TrainState& state, const DatasetRecord& source, const DatasetRecord& target);

/// Self-reconstruction of a record without any training-time randomness
/// (basic mask, stored scale, no jitter).
torch::Tensor reconstruct(TrainState& state, const DatasetRecord& record);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
/// Throws CorruptCheckpoint on bad magic, unsupported version, truncation or
/// a tensor layout that does not match the stored config.
std::unique_ptr<TrainState> load_checkpoint(const std::filesystem::path& path);

}  // namespace samae
