#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "samae/common.hpp"
#include "samae/conditioning.hpp"
#include "samae/masks.hpp"
#include "samae/morphable.hpp"

namespace samae {

/// Axis-aligned occluder bar drawn over a synthetic face; pixel ranges are
/// half-open [x0, x1) x [y0, y1).
struct OccluderRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::array<double, 3> color{};

  friend bool operator==(const OccluderRect&, const OccluderRect&) = default;
};

/// Rasterizes an occluder footprint.
Mask occluder_footprint(const OccluderRect& rect, int resolution);

/// One image with its ground-truth sidecars. Images are RGB in [0, 1].
struct DatasetRecord {
  Image image;
  std::optional<MorphableParams> params;
  Mask occlusion_mask;
  Mask skin_mask;
  IrisKeypoints iris;
  std::string id_tag;
  std::optional<OccluderRect> occluder;
};

/// Throws ShapeMismatch unless masks match the image shape.
void validate(const DatasetRecord& record);

/// Stored ground-truth params; MissingSidecar when the record has none.
MorphableParams lookup_params(const DatasetRecord& record);

nlohmann::json params_to_json(const MorphableParams& params);
MorphableParams params_from_json(const nlohmann::json& j);

/// Writes <stem>.ppm, <stem>.json, <stem>_occ.pgm and <stem>_skin.pgm into
/// `dir`.
void save_record(const std::filesystem::path& dir, const std::string& stem, const DatasetRecord& record);
/// Loads a record from its sidecar JSON or its image path (the sidecar is
/// the same path with a .json extension). MissingSidecar if absent.
DatasetRecord load_record(const std::filesystem::path& path);

struct Dataset {
  MeshAsset asset;
  int resolution = 0;
  std::vector<DatasetRecord> records;
};

/// Procedurally generates `n` records at `resolution`: sampled morphable
/// params (coefficients ~ N(0,1) truncated at +-2.5), a rendered face over a
/// procedural background, an occluder bar with probability 0.2, projected
/// skin mask and iris keypoints. When `out_dir` is non-empty the dataset is
/// written there (manifest.json, asset.sama, one set of files per record).
Dataset synth_dataset(int n, Rng& rng, const std::filesystem::path& out_dir, int resolution,
                      const MeshAsset& asset);

/// Loads a directory written by synth_dataset (or laid out the same way).
Dataset load_dataset(const std::filesystem::path& dir);

/// Shape coefficients of every record that carries params.
AlphaPool alpha_pool_from(const std::vector<DatasetRecord>& records);

}  // namespace samae
