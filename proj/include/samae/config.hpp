#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "samae/conditioning.hpp"
#include "samae/generator.hpp"
#include "samae/losses.hpp"

namespace samae {

/// Training configuration. Defaults are the full-scale settings (256 px,
/// batch 8, lr 2e-4); `toy()` and `tiny()` are the CPU presets.
struct TrainConfig {
  std::string preset = "full";
  double learning_rate = 2e-4;
  int batch_size = 8;
  std::int64_t max_steps = 500000;
  std::uint64_t seed = 0;
  LossWeights weights;
  int resolution = 256;

  // Ablation flags: P, R, S.
  bool perforation_confusion = true;
  bool random_mesh_scaling = true;
  bool skin_condition = true;

  double adam_beta1 = 0.0;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;

  bool color_jitter = true;
  JitterConfig jitter;
  double keypoint_sigma_fraction = 0.05;
  /// Use the perturbed keypoint image in the generated fake pair instead of K(I).
  bool generated_fake_uses_perturbed = false;
  double r1_gamma = 0.0;  ///< 0 disables R1

  int identity_dim = kDefaultIdentityDim;
  int skin_dim = kDefaultSkinDim;
  int skin_encoder_width = 16;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;

  std::int64_t log_every = 50;
  std::int64_t checkpoint_every = 0;  ///< 0: only the final checkpoint

  static TrainConfig full();
  /// 64 px, width 32, batch 4: the CPU test default.
  static TrainConfig toy();
  /// 32 px, width 8, one block per level; for gradient checks and fast tests.
  static TrainConfig tiny();
  static TrainConfig from_preset(const std::string& name);

  /// Table-2 ablation rows: "B", "B+P", "B+P+R", "B+P+R+S".
  void set_ablation(const std::string& row);
  [[nodiscard]] std::string ablation() const;

  /// Throws InvalidConfig on non-positive lr/batch/steps or inconsistent sizes.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::json config_to_json(const TrainConfig& config);
/// Applies "preset" first (when present), then every other key. Unknown keys
/// are rejected with InvalidConfig.
TrainConfig config_from_json(const nlohmann::json& j);
/// Reads a JSON config file; SAMAE_SEED in the environment overrides "seed".
TrainConfig load_train_config(const std::filesystem::path& path);
/// Applies the SAMAE_SEED override, if set.
void apply_seed_override(TrainConfig& config);

}  // namespace samae
