#include "samae/config.hpp"

#include <cstdlib>
#include <set>

namespace samae {

using nlohmann::json;

TrainConfig TrainConfig::full() {
  TrainConfig c;
  c.preset = "full";
  c.resolution = 256;
  c.batch_size = 8;
  c.max_steps = 500000;
  c.generator.base_width = 128;
  c.generator.channel_mult = {1, 1, 2, 2, 4, 4};
  c.generator.num_res_blocks = 2;
  c.generator.embed_dim = 512;
  c.discriminator.base_width = 64;
  c.discriminator.max_width = 512;
  c.skin_encoder_width = 64;
  return c;
}

TrainConfig TrainConfig::toy() {
  TrainConfig c;
  c.preset = "toy";
  c.resolution = 64;
  c.batch_size = 4;
  c.max_steps = 2000;
  c.generator.base_width = 32;
  c.generator.channel_mult = {1, 2, 2};
  c.generator.num_res_blocks = 2;
  c.generator.embed_dim = 128;
  c.discriminator.base_width = 16;
  c.discriminator.max_width = 128;
  c.skin_encoder_width = 16;
  return c;
}

TrainConfig TrainConfig::tiny() {
  TrainConfig c;
  c.preset = "tiny";
  c.resolution = 32;
  c.batch_size = 2;
  c.max_steps = 50;
  c.generator.base_width = 8;
  c.generator.channel_mult = {1, 2};
  c.generator.num_res_blocks = 1;
  c.generator.embed_dim = 16;
  c.discriminator.base_width = 8;
  c.discriminator.max_width = 16;
  c.skin_encoder_width = 4;
  return c;
}

TrainConfig TrainConfig::from_preset(const std::string& name) {
  if (name == "full") return full();
  if (name == "toy") return toy();
  if (name == "tiny") return tiny();
  throw InvalidConfig("unknown preset '" + name + "' (expected full, toy or tiny)");
}

void TrainConfig::set_ablation(const std::string& row) {
  if (row == "B") {
    perforation_confusion = random_mesh_scaling = skin_condition = false;
  } else if (row == "B+P") {
    perforation_confusion = true;
    random_mesh_scaling = skin_condition = false;
  } else if (row == "B+P+R") {
    perforation_confusion = random_mesh_scaling = true;
    skin_condition = false;
  } else if (row == "B+P+R+S") {
    perforation_confusion = random_mesh_scaling = skin_condition = true;
  } else {
    throw InvalidConfig("unknown ablation row '" + row + "'");
  }
}

std::string TrainConfig::ablation() const {
  std::string s = "B";
  if (perforation_confusion) s += "+P";
  if (random_mesh_scaling) s += "+R";
  if (skin_condition) s += "+S";
  return s;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw InvalidConfig("learning_rate must be positive");
  if (batch_size <= 0) throw InvalidConfig("batch_size must be positive");
  if (max_steps <= 0) throw InvalidConfig("max_steps must be positive");
  if (weights.rec < 0 || weights.id < 0 || weights.gan < 0) throw InvalidConfig("loss weights must be non-negative");
  if (resolution < 16 || (resolution & (resolution - 1)) != 0)
    throw InvalidConfig("resolution must be a power of two >= 16");
  if (generator.channel_mult.empty() || generator.num_res_blocks < 1 || generator.base_width < 1)
    throw InvalidConfig("generator layout is empty");
  if (resolution % generator.size_multiple() != 0) throw InvalidConfig("resolution not divisible by U-Net depth");
  if (identity_dim < 1 || skin_dim < 1) throw InvalidConfig("condition dimensions must be positive");
  if (keypoint_sigma_fraction < 0 || r1_gamma < 0) throw InvalidConfig("negative sigma / r1 weight");
  if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1) throw InvalidConfig("adam betas");
}

json config_to_json(const TrainConfig& c) {
  return {
      {"preset", c.preset},
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"max_steps", c.max_steps},
      {"seed", c.seed},
      {"lambda_rec", c.weights.rec},
      {"lambda_id", c.weights.id},
      {"lambda_gan", c.weights.gan},
      {"resolution", c.resolution},
      {"perforation_confusion", c.perforation_confusion},
      {"random_mesh_scaling", c.random_mesh_scaling},
      {"skin_condition", c.skin_condition},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"adam_eps", c.adam_eps},
      {"color_jitter", c.color_jitter},
      {"jitter_brightness", c.jitter.brightness},
      {"jitter_contrast", c.jitter.contrast},
      {"jitter_hue", c.jitter.hue},
      {"keypoint_sigma_fraction", c.keypoint_sigma_fraction},
      {"generated_fake_uses_perturbed", c.generated_fake_uses_perturbed},
      {"r1_gamma", c.r1_gamma},
      {"identity_dim", c.identity_dim},
      {"skin_dim", c.skin_dim},
      {"skin_encoder_width", c.skin_encoder_width},
      {"generator_width", c.generator.base_width},
      {"generator_channel_mult", c.generator.channel_mult},
      {"generator_res_blocks", c.generator.num_res_blocks},
      {"generator_attention", c.generator.attention_at_lowest},
      {"generator_embed_dim", c.generator.embed_dim},
      {"discriminator_width", c.discriminator.base_width},
      {"discriminator_max_width", c.discriminator.max_width},
      {"log_every", c.log_every},
      {"checkpoint_every", c.checkpoint_every},
  };
}

TrainConfig config_from_json(const json& j) {
  if (!j.is_object()) throw InvalidConfig("config must be a JSON object");
  TrainConfig c = j.contains("preset") ? TrainConfig::from_preset(j.at("preset").get<std::string>()) : TrainConfig{};
  try {
    for (const auto& item : j.items()) {
      const std::string& k = item.key();
      const json& v = item.value();
      if (k == "preset") continue;
      else if (k == "learning_rate") c.learning_rate = v.get<double>();
      else if (k == "batch_size") c.batch_size = v.get<int>();
      else if (k == "max_steps") c.max_steps = v.get<std::int64_t>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "lambda_rec") c.weights.rec = v.get<double>();
      else if (k == "lambda_id") c.weights.id = v.get<double>();
      else if (k == "lambda_gan") c.weights.gan = v.get<double>();
      else if (k == "resolution") c.resolution = v.get<int>();
      else if (k == "perforation_confusion") c.perforation_confusion = v.get<bool>();
      else if (k == "random_mesh_scaling") c.random_mesh_scaling = v.get<bool>();
      else if (k == "skin_condition") c.skin_condition = v.get<bool>();
      else if (k == "adam_beta1") c.adam_beta1 = v.get<double>();
      else if (k == "adam_beta2") c.adam_beta2 = v.get<double>();
      else if (k == "adam_eps") c.adam_eps = v.get<double>();
      else if (k == "color_jitter") c.color_jitter = v.get<bool>();
      else if (k == "jitter_brightness") c.jitter.brightness = v.get<double>();
      else if (k == "jitter_contrast") c.jitter.contrast = v.get<double>();
      else if (k == "jitter_hue") c.jitter.hue = v.get<double>();
      else if (k == "keypoint_sigma_fraction") c.keypoint_sigma_fraction = v.get<double>();
      else if (k == "generated_fake_uses_perturbed") c.generated_fake_uses_perturbed = v.get<bool>();
      else if (k == "r1_gamma") c.r1_gamma = v.get<double>();
      else if (k == "identity_dim") c.identity_dim = v.get<int>();
      else if (k == "skin_dim") c.skin_dim = v.get<int>();
      else if (k == "skin_encoder_width") c.skin_encoder_width = v.get<int>();
      else if (k == "generator_width") c.generator.base_width = v.get<int>();
      else if (k == "generator_channel_mult") c.generator.channel_mult = v.get<std::vector<int>>();
      else if (k == "generator_res_blocks") c.generator.num_res_blocks = v.get<int>();
      else if (k == "generator_attention") c.generator.attention_at_lowest = v.get<bool>();
      else if (k == "generator_embed_dim") c.generator.embed_dim = v.get<int>();
      else if (k == "discriminator_width") c.discriminator.base_width = v.get<int>();
      else if (k == "discriminator_max_width") c.discriminator.max_width = v.get<int>();
      else if (k == "log_every") c.log_every = v.get<std::int64_t>();
      else if (k == "checkpoint_every") c.checkpoint_every = v.get<std::int64_t>();
      else if (k == "ablation") c.set_ablation(v.get<std::string>());
      else throw InvalidConfig("unknown config key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("config value has the wrong type: ") + e.what());
  }
  c.generator.condition_dim = c.identity_dim + c.skin_dim;
  c.validate();
  return c;
}

void apply_seed_override(TrainConfig& config) {
  if (const char* env = std::getenv("SAMAE_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long seed = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw InvalidConfig(std::string("SAMAE_SEED is not an integer: ") + env);
    config.seed = seed;
  }
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw InvalidConfig("cannot parse " + path.string() + ": " + e.what());
  }
  TrainConfig c = config_from_json(j);
  apply_seed_override(c);
  return c;
}

}  // namespace samae
