#include "samae/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace samae {

namespace fs = std::filesystem;
using nlohmann::json;

Mask occluder_footprint(const OccluderRect& rect, int resolution) {
  Mask m(resolution, resolution);
  for (int y = std::max(0, rect.y0); y < std::min(resolution, rect.y1); ++y)
    for (int x = std::max(0, rect.x0); x < std::min(resolution, rect.x1); ++x) m.set(y, x, true);
  return m;
}

void validate(const DatasetRecord& record) {
  const auto& img = record.image;
  if (img.channels != 3) throw InvalidArgument("record: image must be RGB");
  for (const Mask* m : {&record.occlusion_mask, &record.skin_mask})
    if (m->height() != img.height || m->width() != img.width)
      throw ShapeMismatch("record: mask shape does not match the image");
}

MorphableParams lookup_params(const DatasetRecord& record) {
  if (!record.params) throw MissingSidecar("record '" + record.id_tag + "' has no morphable-params sidecar");
  return *record.params;
}

json params_to_json(const MorphableParams& p) {
  return {{"alpha", p.alpha},       {"beta", p.beta},
          {"gamma", p.gamma},       {"delta", p.delta},
          {"rotation", p.rotation}, {"translation", p.translation},
          {"scale", p.scale}};
}

MorphableParams params_from_json(const json& j) {
  static const std::vector<std::string> kKeys = {"alpha", "beta", "gamma", "delta", "rotation", "translation", "scale"};
  for (const auto& item : j.items())
    if (std::find(kKeys.begin(), kKeys.end(), item.key()) == kKeys.end())
      throw InvalidArgument("params: unknown key '" + item.key() + "'");
  MorphableParams p;
  p.alpha = j.at("alpha").get<std::vector<double>>();
  p.beta = j.at("beta").get<std::vector<double>>();
  p.gamma = j.at("gamma").get<std::vector<double>>();
  p.delta = j.at("delta").get<std::array<double, kNumShLighting>>();
  p.rotation = j.at("rotation").get<std::array<double, 3>>();
  p.translation = j.at("translation").get<std::array<double, 2>>();
  p.scale = j.at("scale").get<double>();
  return p;
}

void save_record(const fs::path& dir, const std::string& stem, const DatasetRecord& record) {
  validate(record);
  fs::create_directories(dir);
  json side;
  side["id_tag"] = record.id_tag;
  side["image"] = stem + ".ppm";
  side["occlusion_mask"] = stem + "_occ.pgm";
  side["skin_mask"] = stem + "_skin.pgm";
  side["iris"] = keypoints_to_json(record.iris);
  if (record.params) side["params"] = params_to_json(*record.params);
  if (record.occluder) {
    const auto& o = *record.occluder;
    side["occluder"] = {{"x0", o.x0}, {"y0", o.y0}, {"x1", o.x1}, {"y1", o.y1}, {"color", o.color}};
  }
  write_netpbm(dir / (stem + ".ppm"), record.image);
  write_mask(dir / (stem + "_occ.pgm"), record.occlusion_mask);
  write_mask(dir / (stem + "_skin.pgm"), record.skin_mask);
  write_text_file(dir / (stem + ".json"), side.dump(2) + "\n");
}

DatasetRecord load_record(const fs::path& path) {
  fs::path sidecar = path;
  sidecar.replace_extension(".json");
  if (!fs::exists(sidecar)) throw MissingSidecar("no sidecar for " + path.string());
  json side;
  try {
    side = json::parse(read_text_file(sidecar));
  } catch (const json::exception& e) {
    throw IOError("malformed sidecar " + sidecar.string() + ": " + e.what());
  }
  const fs::path dir = sidecar.parent_path();
  DatasetRecord r;
  try {
    r.id_tag = side.value("id_tag", sidecar.stem().string());
    r.image = read_netpbm(dir / side.at("image").get<std::string>());
    if (side.contains("occlusion_mask"))
      r.occlusion_mask = read_mask(dir / side.at("occlusion_mask").get<std::string>());
    else
      r.occlusion_mask = Mask(r.image.height, r.image.width);
    if (!side.contains("skin_mask")) throw MissingSidecar("no skin mask for " + path.string());
    r.skin_mask = read_mask(dir / side.at("skin_mask").get<std::string>());
    if (!side.contains("iris")) throw MissingSidecar("no iris keypoints for " + path.string());
    r.iris = keypoints_from_json(side.at("iris"));
    if (side.contains("params")) r.params = params_from_json(side.at("params"));
    if (side.contains("occluder") && !side.at("occluder").is_null()) {
      const auto& o = side.at("occluder");
      r.occluder = OccluderRect{o.at("x0").get<int>(), o.at("y0").get<int>(), o.at("x1").get<int>(),
                                o.at("y1").get<int>(), o.at("color").get<std::array<double, 3>>()};
    }
  } catch (const json::exception& e) {
    throw IOError("malformed sidecar " + sidecar.string() + ": " + e.what());
  }
  validate(r);
  return r;
}

namespace {

MorphableParams sample_params(const MeshAsset& asset, Rng& rng) {
  MorphableParams p = default_params(asset);
  for (double& a : p.alpha) a = rng.truncated_normal(2.5);
  for (double& b : p.beta) b = rng.truncated_normal(2.5);
  for (double& g : p.gamma) g = rng.truncated_normal(2.5);
  for (double& d : p.delta) d += 0.1 * rng.truncated_normal(2.5);
  p.rotation = {0.15 * rng.truncated_normal(2.5), 0.2 * rng.truncated_normal(2.5), 0.1 * rng.truncated_normal(2.5)};
  p.translation = {0.05 * rng.truncated_normal(2.5), 0.05 * rng.truncated_normal(2.5)};
  p.scale = std::clamp(0.8 * rng.truncated_normal(2.5), -4.0, 1.0);
  return p;
}

Image procedural_background(int res, Rng& rng) {
  std::array<double, 3> c1{}, c2{};
  for (double& c : c1) c = rng.uniform(0.1, 0.9);
  for (double& c : c2) c = rng.uniform(0.1, 0.9);
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double freq = rng.uniform(1.0, 4.0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  Image bg(3, res, res);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const double u = (x + 0.5) / res - 0.5;
      const double v = (y + 0.5) / res - 0.5;
      const double t = std::clamp(0.5 + u * std::cos(theta) + v * std::sin(theta), 0.0, 1.0);
      const double stripes = 0.08 * std::sin(2.0 * std::numbers::pi * freq * (u * std::sin(theta) - v * std::cos(theta)) + phase);
      for (int c = 0; c < 3; ++c)
        bg.at(c, y, x) = static_cast<float>(std::clamp((1.0 - t) * c1[c] + t * c2[c] + stripes, 0.0, 1.0));
    }
  }
  return bg;
}

}  // namespace

Dataset synth_dataset(int n, Rng& rng, const fs::path& out_dir, int resolution, const MeshAsset& asset) {
  if (n < 1) throw InvalidArgument("synth_dataset: n must be >= 1");
  Dataset ds;
  ds.asset = asset;
  ds.resolution = resolution;
  const double iris_radius = 0.6 * keypoint_radius(resolution);
  for (int i = 0; i < n; ++i) {
    DatasetRecord r;
    char tag[32];
    std::snprintf(tag, sizeof(tag), "synth_%04d", i);
    r.id_tag = tag;
    const MorphableParams params = sample_params(asset, rng);
    const RenderOutput raster = render(asset, params, resolution);
    const Image face = shade_color(asset, params, raster);
    Image img = procedural_background(resolution, rng);
    for (int y = 0; y < resolution; ++y)
      for (int x = 0; x < resolution; ++x)
        if (raster.m_ras.test(y, x))
          for (int c = 0; c < 3; ++c) img.at(c, y, x) = face.at(c, y, x);

    // Dark iris discs so the keypoints correspond to image content.
    for (const auto& iris : raster.iris_px) {
      for (int y = 0; y < resolution; ++y) {
        for (int x = 0; x < resolution; ++x) {
          const double dx = x + 0.5 - iris[0], dy = y + 0.5 - iris[1];
          if (dx * dx + dy * dy <= iris_radius * iris_radius && raster.m_ras.test(y, x)) {
            img.at(0, y, x) = 0.25f;
            img.at(1, y, x) = 0.17f;
            img.at(2, y, x) = 0.12f;
          }
        }
      }
    }

    r.occlusion_mask = Mask(resolution, resolution);
    if (rng.uniform() < 0.2) {
      int fx0 = resolution, fx1 = 0, fy0 = resolution, fy1 = 0;
      for (int y = 0; y < resolution; ++y)
        for (int x = 0; x < resolution; ++x)
          if (raster.m_ras.test(y, x)) {
            fx0 = std::min(fx0, x);
            fx1 = std::max(fx1, x);
            fy0 = std::min(fy0, y);
            fy1 = std::max(fy1, y);
          }
      const double w = rng.uniform(0.15, 0.5) * resolution;
      const double h = rng.uniform(0.08, 0.2) * resolution;
      const double cx = rng.uniform(fx0, fx1 + 1);
      const double cy = rng.uniform(fy0, fy1 + 1);
      OccluderRect o;
      o.x0 = static_cast<int>(std::lround(cx - 0.5 * w));
      o.x1 = static_cast<int>(std::lround(cx + 0.5 * w));
      o.y0 = static_cast<int>(std::lround(cy - 0.5 * h));
      o.y1 = static_cast<int>(std::lround(cy + 0.5 * h));
      for (double& c : o.color) c = rng.uniform(0.0, 1.0);
      const Mask footprint = occluder_footprint(o, resolution);
      for (int y = 0; y < resolution; ++y)
        for (int x = 0; x < resolution; ++x)
          if (footprint.test(y, x))
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(o.color[c]);
      r.occlusion_mask = unite(r.occlusion_mask, footprint);
      r.occlusion_mask = subtract(r.occlusion_mask, subtract(r.occlusion_mask, raster.m_ras));
      r.occluder = o;
    }
    // Quantize so in-memory records equal what a reload would produce.
    for (float& v : img.data) v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
    r.image = std::move(img);
    r.skin_mask = subtract(skin_mask_from_render(asset, raster), r.occlusion_mask);
    for (int k = 0; k < 2; ++k) {
      r.iris.points[k] = raster.iris_px[k];
      const double x = raster.iris_px[k][0], y = raster.iris_px[k][1];
      bool visible = x >= 0.0 && y >= 0.0 && x < resolution && y < resolution;
      if (visible && r.occluder) visible = !occluder_footprint(*r.occluder, resolution).test(static_cast<int>(y), static_cast<int>(x));
      r.iris.visible[k] = visible;
    }
    r.params = params;
    ds.records.push_back(std::move(r));
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    save_asset(out_dir / "asset.sama", asset);
    json manifest;
    manifest["format"] = "samae-dataset";
    manifest["version"] = 1;
    manifest["resolution"] = resolution;
    manifest["asset"] = "asset.sama";
    json files = json::array();
    for (int i = 0; i < n; ++i) {
      char stem[16];
      std::snprintf(stem, sizeof(stem), "%04d", i);
      save_record(out_dir / "records", stem, ds.records[i]);
      files.push_back(std::string("records/") + stem + ".json");
    }
    manifest["records"] = files;
    write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  }
  return ds;
}

Dataset load_dataset(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw IOError("malformed dataset manifest in " + dir.string() + ": " + e.what());
  }
  Dataset ds;
  ds.resolution = manifest.at("resolution").get<int>();
  ds.asset = load_asset(dir / manifest.value("asset", std::string("asset.sama")));
  for (const auto& f : manifest.at("records")) {
    ds.records.push_back(load_record(dir / f.get<std::string>()));
    if (ds.records.back().image.width != ds.resolution || ds.records.back().image.height != ds.resolution)
      throw ShapeMismatch("dataset: record resolution differs from the manifest");
  }
  if (ds.records.empty()) throw InvalidArgument("dataset: no records in " + dir.string());
  return ds;
}

AlphaPool alpha_pool_from(const std::vector<DatasetRecord>& records) {
  AlphaPool pool;
  for (const auto& r : records)
    if (r.params) pool.push_back(r.params->alpha);
  return pool;
}

}  // namespace samae
