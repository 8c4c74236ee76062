// samae command-line front end.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "samae/config.hpp"
#include "samae/dataset.hpp"
#include "samae/eval.hpp"
#include "samae/pipeline.hpp"
#include "samae/tensor_utils.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace samae;

namespace {

int cmd_synth(int n, std::uint64_t seed, const fs::path& out, int resolution) {
  Rng rng(seed);
  const Dataset ds = synth_dataset(n, rng, out, resolution, make_toy_asset());
  std::cout << "wrote " << ds.records.size() << " records to " << out << "\n";
  return 0;
}

int cmd_train(const fs::path& config_path, const fs::path& data, const fs::path& out, std::int64_t steps_override,
              const fs::path& resume) {
  Dataset ds = load_dataset(data);
  std::unique_ptr<TrainState> state;
  if (!resume.empty()) {
    state = load_checkpoint(resume);
  } else {
    TrainConfig cfg = load_train_config(config_path);
    if (cfg.resolution != ds.resolution)
      throw InvalidConfig("config resolution " + std::to_string(cfg.resolution) + " differs from dataset resolution " +
                          std::to_string(ds.resolution));
    state = std::make_unique<TrainState>(cfg, ds.asset, alpha_pool_from(ds.records));
  }
  fs::create_directories(out);
  state->diagnostic_dir = out;
  write_text_file(out / "config.json", config_to_json(state->config).dump(2) + "\n");

  const std::int64_t target = steps_override > 0 ? steps_override : state->config.max_steps;
  std::ofstream log(out / "metrics.jsonl", std::ios::app);
  const auto t0 = std::chrono::steady_clock::now();
  const std::int64_t ckpt_every = state->config.checkpoint_every;
  while (state->step < target) {
    const StepMetrics m = train_step(*state, ds.records);
    log << metrics_to_json(m).dump() << "\n";
    if (state->config.log_every > 0 && (m.step % state->config.log_every == 0 || state->step == target)) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("step %lld  l1 %.4f  perc %.4f  id %.4f  gan_g %.4f  gan_d %.4f  (%.1fs)\n",
                  static_cast<long long>(m.step), m.l1, m.perc, m.id, m.gan_g, m.gan_d, secs);
      std::fflush(stdout);
    }
    if (ckpt_every > 0 && state->step % ckpt_every == 0)
      save_checkpoint(*state, out / ("checkpoint_" + std::to_string(state->step) + ".samc"));
  }
  save_checkpoint(*state, out / "checkpoint.samc");
  std::cout << "saved " << (out / "checkpoint.samc").string() << "\n";
  return 0;
}

int cmd_swap(const fs::path& ckpt, const fs::path& source, const fs::path& target, const fs::path& out) {
  auto state = load_checkpoint(ckpt);
  const DatasetRecord src = load_record(source);
  const DatasetRecord tgt = load_record(target);
  const SwapResult r = swap(*state, src, tgt);
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  write_netpbm(out, r.image);
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_render_debug(const fs::path& params_path, const fs::path& out, int resolution, const fs::path& asset_path) {
  const MeshAsset asset = asset_path.empty() ? make_toy_asset() : load_asset(asset_path);
  const json j = json::parse(read_text_file(params_path));
  fs::create_directories(out);
  // Either bare params or a full record sidecar.
  const bool is_record = j.contains("params") && j.contains("image");
  std::optional<DatasetRecord> record;
  MorphableParams params;
  if (is_record) {
    record = load_record(params_path);
    params = lookup_params(*record);
    resolution = record->image.height;
  } else {
    params = params_from_json(j);
  }
  const MorphableParams neutral = neutralize_albedo(params);
  const RenderOutput r = render(asset, neutral, resolution);
  write_netpbm(out / "i_ras.pgm", r.i_ras);
  write_mask(out / "m_ras.pgm", derive_mesh_mask(r));
  write_netpbm(out / "shaded.ppm", shade_color(asset, params, render(asset, params, RenderOptions{resolution, true})));
  IrisKeypoints kps;
  for (int e = 0; e < 2; ++e) {
    kps.points[e] = r.iris_px[e];
    kps.visible[e] = true;
  }
  if (record) {
    kps = record->iris;
    const Mask m = final_mask_basic(derive_mesh_mask(r), record->occlusion_mask);
    write_mask(out / "m_occ.pgm", record->occlusion_mask);
    write_mask(out / "m_skin.pgm", record->skin_mask);
    write_mask(out / "mask.pgm", m);
    write_netpbm(out / "i_p.ppm", to_unit_range(masked_image(to_signed_range(record->image), m)));
  }
  write_netpbm(out / "stickmen.pgm", render_iris_stickmen(kps, resolution));
  std::cout << "wrote debug images to " << out.string() << "\n";
  return 0;
}

/// pairs.json: {"pairs": [{"source": "<record>", "target": "<record>"}, ...]};
/// relative paths resolve against the file's directory.
int cmd_eval(const fs::path& pairs_path, const fs::path& ckpt, const fs::path& out, int grid_rows) {
  auto state = load_checkpoint(ckpt);
  const json j = json::parse(read_text_file(pairs_path));
  const fs::path base = pairs_path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  std::map<std::string, DatasetRecord> cache;
  auto get = [&](const std::string& p) -> const DatasetRecord& {
    auto it = cache.find(p);
    if (it == cache.end()) it = cache.emplace(p, load_record(resolve(p))).first;
    return it->second;
  };

  ToyIdentityEncoder held_out(kEvalEncoderSeed);
  PerceptualNet fid_net = make_perceptual_net(kPerceptualNetSeed);

  struct Method {
    std::vector<Image> outputs;
    std::map<std::string, std::vector<Image>> by_source;
    double id_sim = 0, shape = 0, expression = 0, pose = 0;
  };
  Method model, copy;
  std::vector<Image> targets;
  std::vector<std::array<Image, 3>> grid;
  const auto& pairs = j.at("pairs");
  if (pairs.empty()) throw EmptyReport("eval: no pairs");
  for (const auto& pr : pairs) {
    const std::string sp = pr.at("source").get<std::string>(), tp = pr.at("target").get<std::string>();
    const DatasetRecord& src = get(sp);
    const DatasetRecord& tgt = get(tp);
    const SwapResult r = swap(*state, src, tgt);
    const auto p_src = lookup_params(src), p_tgt = lookup_params(tgt);
    targets.push_back(tgt.image);

    // Geometry of the swapped face is read from the composed parameters; a
    // learned estimator would plug in here for real images.
    const auto g = geometry_distances(r.v_swap, p_src, p_tgt);
    model.id_sim += id_similarity(r.image, src.image, held_out);
    model.shape += g.shape;
    model.expression += g.expression;
    model.pose += g.head_pose;
    model.outputs.push_back(r.image);
    model.by_source[sp].push_back(r.image);

    const auto gc = geometry_distances(p_tgt, p_src, p_tgt);
    copy.id_sim += id_similarity(tgt.image, src.image, held_out);
    copy.shape += gc.shape;
    copy.expression += gc.expression;
    copy.pose += gc.head_pose;
    copy.outputs.push_back(tgt.image);
    copy.by_source[sp].push_back(tgt.image);

    if (static_cast<int>(grid.size()) < grid_rows) grid.push_back({src.image, tgt.image, r.image});
  }

  MetricTable table;
  const double n = static_cast<double>(pairs.size());
  for (auto* m : {&model, &copy}) {
    double cons = 0;
    int groups = 0;
    for (const auto& [_, imgs] : m->by_source) {
      if (imgs.size() < 2) continue;
      cons += id_consistency(imgs, held_out);
      ++groups;
    }
    if (groups == 0) throw InvalidArgument("eval: identity consistency needs a source paired with two or more targets");
    const FidResult fid = toy_fid(m->outputs, targets, fid_net);
    if (fid.undersampled && m == &model)
      std::cerr << "warning: FID estimated from fewer samples than twice the feature dimension\n";
    table.add(m == &model ? "samae" : "copy_target",
              {m->id_sim / n, cons / groups, m->shape / n, m->expression / n, m->pose / n, fid.distance});
  }
  write_report(out, table, grid);
  std::cout << metric_csv(table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"samae: shape-agnostic masked face swapping at desk scale"};
  app.require_subcommand(1);

  int n = 16, resolution = 64;
  std::uint64_t seed = 0;
  std::string out;
  auto* synth = app.add_subcommand("synth-data", "generate a synthetic dataset");
  synth->add_option("--n", n, "number of records")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "random seed");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--resolution", resolution, "image size")->check(CLI::Range(16, 4096));

  std::string config, data, resume;
  std::int64_t steps = 0;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", config, "JSON config");
  train_cmd->add_option("--data", data, "dataset directory")->required();
  train_cmd->add_option("--out", out, "run directory")->required();
  train_cmd->add_option("--steps", steps, "stop after this many steps (default: max_steps)");
  train_cmd->add_option("--resume", resume, "checkpoint to resume from");

  std::string ckpt, source, target;
  auto* swap_cmd = app.add_subcommand("swap", "swap the source identity onto the target");
  swap_cmd->add_option("--ckpt", ckpt, "checkpoint")->required();
  swap_cmd->add_option("--source", source, "source record (image or sidecar path)")->required();
  swap_cmd->add_option("--target", target, "target record (image or sidecar path)")->required();
  swap_cmd->add_option("--out", out, "output image (.ppm)")->required();

  std::string params, asset;
  auto* debug = app.add_subcommand("render-debug", "dump renderer and mask intermediates");
  debug->add_option("--params", params, "params JSON or record sidecar")->required();
  debug->add_option("--out", out, "output directory")->required();
  debug->add_option("--resolution", resolution, "image size for bare params");
  debug->add_option("--asset", asset, "mesh asset (default: built-in toy asset)");

  std::string pairs;
  int grid_rows = 8;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on source/target pairs");
  eval_cmd->add_option("--pairs", pairs, "pairs JSON")->required();
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint")->required();
  eval_cmd->add_option("--out", out, "report directory")->required();
  eval_cmd->add_option("--grid-rows", grid_rows, "rows in the comparison grid");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(n, seed, out, resolution);
    if (*train_cmd) {
      if (config.empty() && resume.empty()) throw InvalidConfig("train needs --config or --resume");
      return cmd_train(config, data, out, steps, resume);
    }
    if (*swap_cmd) return cmd_swap(ckpt, source, target, out);
    if (*debug) return cmd_render_debug(params, out, resolution, asset);
    if (*eval_cmd) return cmd_eval(pairs, ckpt, out, grid_rows);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
