#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "samae/common.hpp"
#include "samae/conditioning.hpp"
#include "samae/losses.hpp"
#include "samae/morphable.hpp"

namespace samae {

// ---------------------------------------------------------------------------
// Identity metrics. Images are RGB in [0, 1].
// ---------------------------------------------------------------------------

/// Cosine of the two embeddings, clamped to [-1, 1].
double id_similarity(const Image& swapped, const Image& source, IdentityEncoder& encoder);

/// Mean cosine over all unordered pairs; needs at least two images.
double id_consistency(const std::vector<Image>& swapped, IdentityEncoder& encoder);

struct GeometryDistances {
  double shape = 0;       ///< ||alpha_swap - alpha_src||
  double expression = 0;  ///< ||beta_swap - beta_tgt||
  double head_pose = 0;   ///< ||R_swap - R_tgt||, radians
};

GeometryDistances geometry_distances(const MorphableParams& swapped, const MorphableParams& source,
                                     const MorphableParams& target);

// ---------------------------------------------------------------------------
// Frechet distance
// ---------------------------------------------------------------------------

struct FidResult {
  double distance = 0;
  /// Fewer samples per set than twice the feature dimension.
  bool undersampled = false;
};

/// Frechet distance between Gaussians fitted to two feature sets (rows are
/// samples; unbiased covariance). The covariance square root is taken through
/// symmetric eigendecompositions.
FidResult frechet_distance(const Eigen::MatrixXd& features_a, const Eigen::MatrixXd& features_b);

/// Pooled last-stage features of `net` for each image, one row per image.
Eigen::MatrixXd fid_features(const std::vector<Image>& images, PerceptualNet& net);

FidResult toy_fid(const std::vector<Image>& set_a, const std::vector<Image>& set_b, PerceptualNet& net);

// ---------------------------------------------------------------------------
// Metric table and Overall score
// ---------------------------------------------------------------------------

inline constexpr int kNumMetrics = 6;
inline const std::array<std::string, kNumMetrics> kMetricNames{"id_sim", "id_cons", "shape",
                                                               "expression", "head_pose", "fid"};
/// Direction per column; higher is better for the two identity metrics.
inline constexpr std::array<bool, kNumMetrics> kHigherIsBetter{true, true, false, false, false, false};

struct MetricRow {
  std::string method;
  std::array<double, kNumMetrics> values{};

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct MetricTable {
  std::vector<MetricRow> rows;

  void add(std::string method, const std::array<double, kNumMetrics>& values);
  /// Throws InvalidArgument on non-finite values or duplicate method names.
  void validate() const;

  friend bool operator==(const MetricTable&, const MetricTable&) = default;
};

enum class StdConvention { Population, Sample };

/// Per-method mean of the signed column z-scores (higher-better columns
/// negated), so lower is better. Zero-variance columns contribute 0. Needs
/// at least two rows.
std::vector<double> overall_score(const MetricTable& table, StdConvention convention = StdConvention::Population);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline constexpr const char* kMetricCsvHeader = "method,id_sim,id_cons,shape,expression,head_pose,fid,overall";

/// CSV with the header above, values printed with 17 significant digits.
/// The overall column is "nan" when the table has fewer than two rows.
std::string metric_csv(const MetricTable& table);
/// Parses metric_csv output; the overall column is ignored.
MetricTable parse_metric_csv(const std::string& text);
nlohmann::json metric_json(const MetricTable& table);

/// One (source, target, swapped) triple per row: a 3W x N*H RGB image.
Image comparison_grid(const std::vector<std::array<Image, 3>>& rows);

/// Writes metrics.csv, metrics.json and grid.ppm (when `grid_rows` is not
/// empty) into `dir`. Throws EmptyReport for an empty table.
void write_report(const std::filesystem::path& dir, const MetricTable& table,
                  const std::vector<std::array<Image, 3>>& grid_rows);

}  // namespace samae
