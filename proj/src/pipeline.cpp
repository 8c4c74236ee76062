#include "samae/pipeline.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "samae/tensor_utils.hpp"

namespace samae {

using nlohmann::json;

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

torch::Tensor image_tensor(const Image& image) { return image_to_tensor(image); }

void require_resolution(const DatasetRecord& record, int resolution, const char* op) {
  if (record.image.height != resolution || record.image.width != resolution)
    throw ShapeMismatch(std::string(op) + ": record resolution differs from the model resolution");
}

double scalar(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

}  // namespace

MorphableParams random_mesh_scale(MorphableParams params, Rng& rng, bool enabled) {
  if (!enabled) return params;
  diagnostics::count_random_mesh_scale();
  params.scale = rng.uniform(kRandomScaleLow, kRandomScaleHigh);
  return params;
}

TrainSample build_train_sample(const DatasetRecord& record, const TrainConfig& config, Rng& rng,
                               const SampleContext& ctx) {
  if (ctx.asset == nullptr || ctx.recognizer == nullptr) throw InvalidArgument("build_train_sample: incomplete context");
  validate(record);
  require_resolution(record, config.resolution, "build_train_sample");
  const int res = config.resolution;

  TrainSample s;
  MorphableParams params = neutralize_albedo(lookup_params(record));
  params = random_mesh_scale(std::move(params), rng, config.random_mesh_scaling);
  s.raster = render(*ctx.asset, params, res);
  s.m_ras = derive_mesh_mask(s.raster);
  if (config.perforation_confusion) {
    static const AlphaPool kEmpty;
    auto [m, v_rand] = perforation_confusion_train(s.m_ras, record.occlusion_mask, *ctx.asset, params,
                                                   ctx.alpha_pool ? *ctx.alpha_pool : kEmpty, rng);
    s.mask = std::move(m);
    s.random_shape_params = std::move(v_rand);
  } else {
    s.mask = final_mask_basic(s.m_ras, record.occlusion_mask);
  }
  s.render_params = std::move(params);

  const Image gt = to_signed_range(record.image);
  s.i_p = masked_image(gt, s.mask);
  s.c_id = encode_identity(record.image, config.color_jitter, rng, *ctx.recognizer, config.jitter).unsqueeze(0);
  s.skin_image = image_tensor(gt);
  s.skin_mask = mask_to_tensor(record.skin_mask);
  if (!config.skin_condition) {
    s.c_skin = torch::zeros({1, config.skin_dim});
  } else if (ctx.skin_encoder != nullptr) {
    torch::NoGradGuard no_grad;
    s.c_skin = encode_skin(*ctx.skin_encoder, s.skin_image, s.skin_mask);
  }
  s.kp_image = image_tensor(render_iris_stickmen(record.iris, res));
  s.gt = s.skin_image;

  const auto i_ras = image_tensor(s.raster.i_ras);
  const auto i_p = image_tensor(s.i_p);
  if (s.c_skin.defined()) {
    s.input = make_generator_input(i_ras, i_p, s.kp_image, s.c_id, s.c_skin);
  } else {
    s.input = make_generator_input(i_ras, i_p, s.kp_image, s.c_id, torch::zeros({1, config.skin_dim}));
    s.input.condition = torch::Tensor();
  }
  return s;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::int64_t step, int batch_size, std::size_t n) {
  if (n == 0) throw InvalidArgument("batch_indices: empty dataset");
  if (batch_size <= 0 || step < 0) throw InvalidArgument("batch_indices: bad step or batch size");
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  std::int64_t cached_epoch = -1;
  std::vector<std::size_t> perm(n);
  for (int b = 0; b < batch_size; ++b) {
    const std::uint64_t k = static_cast<std::uint64_t>(step) * batch_size + b;
    const auto epoch = static_cast<std::int64_t>(k / n);
    if (epoch != cached_epoch) {
      for (std::size_t i = 0; i < n; ++i) perm[i] = i;
      Rng r(mix_seed(seed, 1000 + static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[r.index(i + 1)]);
      cached_epoch = epoch;
    }
    out.push_back(perm[k % n]);
  }
  return out;
}

TrainBatch TrainBatch::to(torch::Dtype dtype) const {
  TrainBatch b = *this;
  for (auto* t : {&b.spatial, &b.c_id, &b.skin_image, &b.skin_mask, &b.gt, &b.kp_real, &b.kp_perturbed})
    *t = t->to(dtype);
  return b;
}

json metrics_to_json(const StepMetrics& m) {
  return {{"step", m.step}, {"l1", m.l1}, {"perc", m.perc}, {"id", m.id}, {"gan_g", m.gan_g}, {"gan_d", m.gan_d}};
}

// ---------------------------------------------------------------------------

TrainState::TrainState(TrainConfig cfg, MeshAsset mesh, AlphaPool pool)
    : config(std::move(cfg)), asset(std::move(mesh)), alpha_pool(std::move(pool)), rng(mix_seed(config.seed, 0)) {
  config.generator.condition_dim = config.identity_dim + config.skin_dim;
  config.discriminator.in_channels = config.generator.image_channels + 1;
  config.validate();
  validate(asset);

  generator = UNetGenerator(config.generator);
  seeded_init(*generator, mix_seed(config.seed, 1));
  zero_condition_projections(generator);
  discriminator = Discriminator(config.discriminator, config.resolution);
  seeded_init(*discriminator, mix_seed(config.seed, 2));
  skin_encoder = SkinEncoder(config.skin_dim, config.skin_encoder_width);
  seeded_init(*skin_encoder, mix_seed(config.seed, 3));
  recognizer = std::make_shared<ToyIdentityEncoder>(kIdentityEncoderSeed, config.identity_dim);
  perceptual = make_perceptual_net(kPerceptualNetSeed);

  const auto adam = torch::optim::AdamOptions(config.learning_rate)
                        .betas(std::make_tuple(config.adam_beta1, config.adam_beta2))
                        .eps(config.adam_eps);
  auto g_params = generator->parameters();
  for (auto& p : skin_encoder->parameters()) g_params.push_back(p);
  opt_g = std::make_unique<torch::optim::Adam>(g_params, adam);
  opt_d = std::make_unique<torch::optim::Adam>(discriminator->parameters(), adam);
}

SampleContext TrainState::sample_context(bool defer_skin) const {
  SampleContext ctx;
  ctx.asset = &asset;
  ctx.alpha_pool = &alpha_pool;
  ctx.recognizer = recognizer.get();
  ctx.skin_encoder = defer_skin ? nullptr : const_cast<SkinEncoder*>(&skin_encoder);
  return ctx;
}

void TrainState::to(torch::Dtype dtype) {
  generator->to(dtype);
  discriminator->to(dtype);
  skin_encoder->to(dtype);
  recognizer->to(dtype);
  perceptual->to(dtype);
}

torch::Dtype TrainState::dtype() const {
  return generator->parameters().front().scalar_type();
}

TrainBatch prepare_batch(TrainState& state, const std::vector<DatasetRecord>& records,
                         const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw InvalidArgument("prepare_batch: empty batch");
  const auto ctx = state.sample_context(/*defer_skin=*/true);
  const int res = state.config.resolution;
  const double sigma = state.config.keypoint_sigma_fraction * res;
  std::vector<torch::Tensor> spatial, c_id, skin_image, skin_mask, gt, kp_real, kp_pert;
  for (const std::size_t i : indices) {
    if (i >= records.size()) throw InvalidArgument("prepare_batch: index out of range");
    const TrainSample s = build_train_sample(records[i], state.config, state.rng, ctx);
    spatial.push_back(s.input.spatial);
    c_id.push_back(s.c_id);
    skin_image.push_back(s.skin_image);
    skin_mask.push_back(s.skin_mask);
    gt.push_back(s.gt);
    kp_real.push_back(s.kp_image);
    const IrisKeypoints perturbed = perturb_keypoints(records[i].iris, state.rng, sigma, res);
    kp_pert.push_back(image_tensor(render_iris_stickmen(perturbed, res)));
  }
  TrainBatch b;
  b.indices = indices;
  b.spatial = torch::cat(spatial, 0);
  b.c_id = torch::cat(c_id, 0);
  b.skin_image = torch::cat(skin_image, 0);
  b.skin_mask = torch::cat(skin_mask, 0);
  b.gt = torch::cat(gt, 0);
  b.kp_real = torch::cat(kp_real, 0);
  b.kp_perturbed = torch::cat(kp_pert, 0);
  return b;
}

torch::Tensor batch_condition(TrainState& state, const TrainBatch& batch) {
  torch::Tensor c_skin;
  if (state.config.skin_condition) {
    c_skin = encode_skin(state.skin_encoder, batch.skin_image, batch.skin_mask);
  } else {
    c_skin = torch::zeros({batch.c_id.size(0), state.config.skin_dim}, batch.c_id.options());
  }
  return torch::cat({batch.c_id, c_skin}, 1);
}

LossParts loss_parts_from_output(TrainState& state, const TrainBatch& batch, const torch::Tensor& out) {
  LossParts parts;
  parts.l1 = samae::l1_loss(out, batch.gt);
  parts.perceptual = perceptual_distance(state.perceptual, out, batch.gt);
  parts.id = identity_loss(out, batch.gt, *state.recognizer);
  const auto& kp = state.config.generated_fake_uses_perturbed ? batch.kp_perturbed : batch.kp_real;
  if (state.config.weights.gan != 0.0) {
    parts.gan = gan_loss_g(make_pair(out, kp), state.discriminator);
  } else {
    torch::NoGradGuard no_grad;
    parts.gan = gan_loss_g(state.discriminator->forward(make_pair(out, kp)));
  }
  return parts;
}

LossParts generator_loss_parts(TrainState& state, const TrainBatch& batch, torch::Tensor* generated) {
  const auto out = generate(state.generator, GeneratorInput{batch.spatial, batch_condition(state, batch)});
  if (generated) *generated = out;
  return loss_parts_from_output(state, batch, out);
}

namespace {

[[noreturn]] void non_finite(const TrainState& state, const TrainBatch& batch, const StepMetrics& m,
                             const std::string& what) {
  json dump = {{"error", what}, {"step", state.step}, {"batch_indices", batch.indices},
               {"metrics", metrics_to_json(m)}, {"config", config_to_json(state.config)}};
  const std::string text = dump.dump(2);
  std::cerr << "non-finite loss at step " << state.step << ": " << what << "\n" << text << "\n";
  if (!state.diagnostic_dir.empty()) {
    try {
      write_text_file(state.diagnostic_dir / ("nonfinite_step_" + std::to_string(state.step) + ".json"), text);
    } catch (const Error&) {
      // the exception below carries the information anyway
    }
  }
  throw NonFiniteLoss(what + " at step " + std::to_string(state.step));
}

}  // namespace

StepMetrics train_step(TrainState& state, const std::vector<DatasetRecord>& records) {
  const auto& cfg = state.config;
  const auto indices = batch_indices(cfg.seed, state.step, cfg.batch_size, records.size());
  const TrainBatch batch = prepare_batch(state, records, indices).to(state.dtype());
  StepMetrics m;
  m.step = state.step;

  // The generator output does not depend on D, so one forward pass serves
  // both updates: D sees it detached, G's losses use the updated D.
  const auto out = generate(state.generator, GeneratorInput{batch.spatial, batch_condition(state, batch)});

  // Discriminator update.
  const auto pairs = build_discriminator_pairs(batch.gt, out.detach(), batch.kp_real, batch.kp_perturbed,
                                               cfg.generated_fake_uses_perturbed);
  state.opt_d->zero_grad();
  auto loss_d = gan_loss_d(state.discriminator->forward(pairs.real), state.discriminator->forward(pairs.fake));
  if (cfg.r1_gamma > 0) loss_d = loss_d + 0.5 * cfg.r1_gamma * r1_penalty(state.discriminator, pairs.real);
  m.gan_d = scalar(loss_d);
  if (!std::isfinite(m.gan_d)) non_finite(state, batch, m, "discriminator loss");
  loss_d.backward();
  state.opt_d->step();

  // Generator + skin encoder update; D is frozen inside gan_loss_g.
  state.opt_g->zero_grad();
  const LossParts parts = loss_parts_from_output(state, batch, out);
  const auto total = total_loss(parts, cfg.weights);
  m.l1 = scalar(parts.l1);
  m.perc = scalar(parts.perceptual);
  m.id = scalar(parts.id);
  m.gan_g = scalar(parts.gan);
  if (!std::isfinite(m.l1) || !std::isfinite(m.perc) || !std::isfinite(m.id) || !std::isfinite(m.gan_g) ||
      !std::isfinite(scalar(total)))
    non_finite(state, batch, m, "generator loss");
  if (total.requires_grad()) {
    total.backward();
    state.opt_g->step();
  }
  ++state.step;
  return m;
}

void train(TrainState& state, const std::vector<DatasetRecord>& records, std::int64_t steps,
           const std::function<void(const StepMetrics&)>& on_step) {
  for (std::int64_t i = 0; i < steps; ++i) {
    const StepMetrics m = train_step(state, records);
    if (on_step) on_step(m);
  }
}

// ---------------------------------------------------------------------------

MorphableParams compose_swap_params(const MorphableParams& source, const MorphableParams& target) {
  MorphableParams v = target;
  v.alpha = source.alpha;
  v.gamma = neutral_albedo_coefficients(target.gamma.size());
  return v;
}

SwapResult swap(TrainState& state, const DatasetRecord& source, const DatasetRecord& target) {
  const int res = state.config.resolution;
  validate(source);
  validate(target);
  require_resolution(source, res, "swap");
  require_resolution(target, res, "swap");

  SwapResult r;
  const MorphableParams p_src = lookup_params(source);
  const MorphableParams p_tgt = lookup_params(target);
  r.v_swap = compose_swap_params(p_src, p_tgt);
  r.raster_swap = render(state.asset, r.v_swap, res);
  r.m_ras_target = derive_mesh_mask(render(state.asset, neutralize_albedo(p_tgt), res));
  r.mask = perforation_mask_infer(r.m_ras_target, derive_mesh_mask(r.raster_swap), target.occlusion_mask);
  r.i_p = masked_image(to_signed_range(target.image), r.mask);
  r.keypoints = target.iris;

  torch::NoGradGuard no_grad;
  Rng unused(0);  // jitter is off, so nothing is drawn
  r.c_id = encode_identity(source.image, /*jitter=*/false, unused, *state.recognizer).unsqueeze(0);
  if (state.config.skin_condition) {
    r.c_skin = encode_skin(state.skin_encoder, image_tensor(to_signed_range(target.image)),
                           mask_to_tensor(target.skin_mask));
  } else {
    r.c_skin = torch::zeros({1, state.config.skin_dim});
  }
  const auto dtype = state.dtype();
  auto input = make_generator_input(image_tensor(r.raster_swap.i_ras), image_tensor(r.i_p),
                                    image_tensor(render_iris_stickmen(r.keypoints, res)), r.c_id, r.c_skin);
  input.spatial = input.spatial.to(dtype);
  input.condition = input.condition.to(dtype);
  r.image = to_unit_range(tensor_to_image(generate(state.generator, input).to(torch::kFloat32)));
  return r;
}

torch::Tensor reconstruct(TrainState& state, const DatasetRecord& record) {
  const int res = state.config.resolution;
  validate(record);
  require_resolution(record, res, "reconstruct");
  const MorphableParams params = neutralize_albedo(lookup_params(record));
  const RenderOutput raster = render(state.asset, params, res);
  const Mask mask = final_mask_basic(derive_mesh_mask(raster), record.occlusion_mask);
  const Image i_p = masked_image(to_signed_range(record.image), mask);

  torch::NoGradGuard no_grad;
  Rng unused(0);
  const auto c_id = encode_identity(record.image, false, unused, *state.recognizer).unsqueeze(0);
  const auto c_skin = state.config.skin_condition
                          ? encode_skin(state.skin_encoder, image_tensor(to_signed_range(record.image)),
                                        mask_to_tensor(record.skin_mask))
                          : torch::zeros({1, state.config.skin_dim});
  auto input = make_generator_input(image_tensor(raster.i_ras), image_tensor(i_p),
                                    image_tensor(render_iris_stickmen(record.iris, res)), c_id, c_skin);
  input.spatial = input.spatial.to(state.dtype());
  input.condition = input.condition.to(state.dtype());
  return generate(state.generator, input);
}

// ---------------------------------------------------------------------------
// Checkpoint file: "SAMC", u32 version, u64 metadata length, metadata JSON,
// u32 array count, then per array: u32 name length, name, u8 dtype
// (0 f32, 1 f64, 2 u8), u64 element count, raw little-endian data.
// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'S', 'A', 'M', 'C'};

struct NamedArray {
  std::uint8_t dtype = 0;
  std::string bytes;
};

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CorruptCheckpoint("checkpoint is truncated");
  return v;
}

std::string read_bytes(std::istream& in, std::uint64_t n) {
  constexpr std::uint64_t kLimit = 1ULL << 34;
  if (n > kLimit) throw CorruptCheckpoint("checkpoint section length is implausible");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw CorruptCheckpoint("checkpoint is truncated");
  return s;
}

NamedArray to_array(const torch::Tensor& t) {
  auto c = t.detach().contiguous().cpu();
  NamedArray a;
  a.dtype = c.scalar_type() == torch::kFloat64 ? 1 : 0;
  if (a.dtype == 0) c = c.to(torch::kFloat32);
  a.bytes.assign(static_cast<const char*>(c.data_ptr()), c.numel() * c.element_size());
  return a;
}

const NamedArray& find_array(const std::map<std::string, NamedArray>& arrays, const std::string& name) {
  const auto it = arrays.find(name);
  if (it == arrays.end()) throw CorruptCheckpoint("checkpoint lacks tensor " + name);
  return it->second;
}

// Copies a stored array into `t`, converting to t's dtype.
void copy_array(const NamedArray& a, const std::string& name, torch::Tensor& t) {
  const auto src_type = a.dtype == 1 ? torch::kFloat64 : torch::kFloat32;
  const auto elem = a.dtype == 1 ? 8 : 4;
  if (a.dtype > 1 || a.bytes.size() != static_cast<std::size_t>(t.numel()) * elem)
    throw CorruptCheckpoint("checkpoint tensor " + name + " has the wrong size");
  auto src = torch::from_blob(const_cast<char*>(a.bytes.data()), t.sizes(), torch::TensorOptions().dtype(src_type));
  t.copy_(src.to(t.scalar_type()));
}

void add_module(std::map<std::string, NamedArray>& arrays, const std::string& prefix, const torch::nn::Module& m) {
  for (const auto& p : m.named_parameters()) arrays[prefix + "/" + p.key()] = to_array(p.value());
  for (const auto& b : m.named_buffers()) arrays[prefix + "/" + b.key()] = to_array(b.value());
}

void load_module(const std::map<std::string, NamedArray>& arrays, const std::string& prefix, torch::nn::Module& m) {
  torch::NoGradGuard no_grad;
  auto load = [&](const std::string& name, torch::Tensor& t) {
    copy_array(find_array(arrays, prefix + "/" + name), prefix + "/" + name, t);
  };
  for (auto& p : m.named_parameters()) load(p.key(), p.value());
  for (auto& b : m.named_buffers()) load(b.key(), b.value());
}

std::vector<torch::Tensor> optimizer_params(torch::optim::Optimizer& opt) {
  std::vector<torch::Tensor> out;
  for (auto& group : opt.param_groups())
    for (auto& p : group.params()) out.push_back(p);
  return out;
}

// Adam moments are stored per parameter position (torch's own archive keys
// them by address, which makes the bytes differ between identical states).
// Returns the positions that carry state.
std::vector<std::size_t> add_optimizer(std::map<std::string, NamedArray>& arrays, const std::string& prefix,
                                       torch::optim::Optimizer& opt) {
  std::vector<std::size_t> with_state;
  const auto params = optimizer_params(opt);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto it = opt.state().find(params[i].unsafeGetTensorImpl());
    if (it == opt.state().end()) continue;
    const auto& st = static_cast<const torch::optim::AdamParamState&>(*it->second);
    const std::string base = prefix + "/" + std::to_string(i) + "/";
    arrays[base + "exp_avg"] = to_array(st.exp_avg());
    arrays[base + "exp_avg_sq"] = to_array(st.exp_avg_sq());
    arrays[base + "step"] = to_array(torch::tensor(static_cast<double>(st.step()), torch::kFloat64));
    with_state.push_back(i);
  }
  return with_state;
}

void load_optimizer(const std::map<std::string, NamedArray>& arrays, const std::string& prefix,
                    const std::vector<std::size_t>& with_state, torch::optim::Optimizer& opt) {
  torch::NoGradGuard no_grad;
  const auto params = optimizer_params(opt);
  opt.state().clear();
  for (const std::size_t i : with_state) {
    if (i >= params.size()) throw CorruptCheckpoint("optimizer state refers to a missing parameter");
    const std::string base = prefix + "/" + std::to_string(i) + "/";
    auto exp_avg = torch::zeros_like(params[i]);
    auto exp_avg_sq = torch::zeros_like(params[i]);
    auto step = torch::zeros({}, torch::kFloat64);
    copy_array(find_array(arrays, base + "exp_avg"), base + "exp_avg", exp_avg);
    copy_array(find_array(arrays, base + "exp_avg_sq"), base + "exp_avg_sq", exp_avg_sq);
    copy_array(find_array(arrays, base + "step"), base + "step", step);
    auto st = std::make_unique<torch::optim::AdamParamState>();
    st->step(static_cast<std::int64_t>(step.item<double>()));
    st->exp_avg(exp_avg);
    st->exp_avg_sq(exp_avg_sq);
    opt.state()[params[i].unsafeGetTensorImpl()] = std::move(st);
  }
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  std::map<std::string, NamedArray> arrays;
  add_module(arrays, "generator", *state.generator);
  add_module(arrays, "discriminator", *state.discriminator);
  add_module(arrays, "skin_encoder", *state.skin_encoder);
  const auto opt_g_state = add_optimizer(arrays, "opt_g", *state.opt_g);
  const auto opt_d_state = add_optimizer(arrays, "opt_d", *state.opt_d);
  {
    std::ostringstream os;
    save_asset(os, state.asset);
    arrays["asset"] = {2, os.str()};
  }
  std::vector<std::size_t> pool_sizes;
  {
    NamedArray a;
    a.dtype = 1;
    for (const auto& alpha : state.alpha_pool) {
      pool_sizes.push_back(alpha.size());
      a.bytes.append(reinterpret_cast<const char*>(alpha.data()), alpha.size() * sizeof(double));
    }
    arrays["alpha_pool"] = std::move(a);
  }

  const json meta = {{"format", "samae-checkpoint"},
                     {"config", config_to_json(state.config)},
                     {"step", state.step},
                     {"rng", state.rng.serialize()},
                     {"alpha_pool_sizes", pool_sizes},
                     {"identity_encoder_seed", kIdentityEncoderSeed},
                     {"perceptual_seed", kPerceptualNetSeed},
                     {"dtype", state.dtype() == torch::kFloat64 ? "f64" : "f32"},
                     {"optimizer_state", {{"opt_g", opt_g_state}, {"opt_d", opt_d_state}}}};
  const std::string meta_text = meta.dump();

  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IOError("cannot write " + tmp.string());
    out.write(kCheckpointMagic, 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, meta_text.size());
    out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& [name, a] : arrays) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint8_t>(out, a.dtype);
      const std::uint64_t elem = a.dtype == 0 ? 4 : a.dtype == 1 ? 8 : 1;
      put<std::uint64_t>(out, a.bytes.size() / elem);
      out.write(a.bytes.data(), static_cast<std::streamsize>(a.bytes.size()));
    }
    if (!out) throw IOError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::unique_ptr<TrainState> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw CorruptCheckpoint("not a checkpoint (bad magic)");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw CorruptCheckpoint("unsupported checkpoint version " + std::to_string(version));
  const std::string meta_text = read_bytes(in, get<std::uint64_t>(in));
  json meta;
  try {
    meta = json::parse(meta_text);
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(std::string("checkpoint metadata is not JSON: ") + e.what());
  }

  std::map<std::string, NamedArray> arrays;
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_bytes(in, get<std::uint32_t>(in));
    NamedArray a;
    a.dtype = get<std::uint8_t>(in);
    if (a.dtype > 2) throw CorruptCheckpoint("checkpoint array " + name + " has an unknown dtype");
    const std::uint64_t elem = a.dtype == 0 ? 4 : a.dtype == 1 ? 8 : 1;
    const auto n = get<std::uint64_t>(in);
    a.bytes = read_bytes(in, n * elem);
    arrays[name] = std::move(a);
  }

  auto required = [&](const std::string& name) -> const NamedArray& {
    const auto it = arrays.find(name);
    if (it == arrays.end()) throw CorruptCheckpoint("checkpoint lacks " + name);
    return it->second;
  };

  try {
    TrainConfig config = config_from_json(meta.at("config"));
    MeshAsset asset;
    {
      std::istringstream is(required("asset").bytes);
      asset = load_asset(is);
    }
    AlphaPool pool;
    {
      const auto& a = required("alpha_pool");
      const auto sizes = meta.at("alpha_pool_sizes").get<std::vector<std::size_t>>();
      std::size_t offset = 0;
      for (const std::size_t k : sizes) {
        if ((offset + k) * sizeof(double) > a.bytes.size()) throw CorruptCheckpoint("alpha pool is truncated");
        std::vector<double> alpha(k);
        std::memcpy(alpha.data(), a.bytes.data() + offset * sizeof(double), k * sizeof(double));
        pool.push_back(std::move(alpha));
        offset += k;
      }
    }
    auto state = std::make_unique<TrainState>(std::move(config), std::move(asset), std::move(pool));
    if (meta.value("dtype", "f32") == "f64") state->to(torch::kFloat64);
    load_module(arrays, "generator", *state->generator);
    load_module(arrays, "discriminator", *state->discriminator);
    load_module(arrays, "skin_encoder", *state->skin_encoder);
    const auto& opt_state = meta.at("optimizer_state");
    load_optimizer(arrays, "opt_g", opt_state.at("opt_g").get<std::vector<std::size_t>>(), *state->opt_g);
    load_optimizer(arrays, "opt_d", opt_state.at("opt_d").get<std::vector<std::size_t>>(), *state->opt_d);
    state->step = meta.at("step").get<std::int64_t>();
    state->rng.deserialize(meta.at("rng").get<std::string>());
    return state;
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(std::string("checkpoint metadata is incomplete: ") + e.what());
  } catch (const CorruptAsset& e) {
    throw CorruptCheckpoint(std::string("checkpoint asset is corrupt: ") + e.what());
  } catch (const InvalidConfig& e) {
    throw CorruptCheckpoint(std::string("checkpoint config is invalid: ") + e.what());
  }
}

}  // namespace samae
