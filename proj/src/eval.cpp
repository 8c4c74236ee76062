#include "samae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "samae/tensor_utils.hpp"

namespace samae {

using nlohmann::json;

namespace {

torch::Tensor embed_all(const std::vector<Image>& images, IdentityEncoder& encoder) {
  std::vector<torch::Tensor> ts;
  ts.reserve(images.size());
  for (const auto& im : images) {
    if (im.channels != 3) throw ShapeMismatch("identity metrics expect RGB images");
    ts.push_back(image_to_tensor(to_signed_range(im)));
  }
  torch::NoGradGuard no_grad;
  auto e = encoder.embed(torch::cat(ts, 0)).to(torch::kFloat64);
  return e / e.norm(2, 1, true).clamp_min(1e-12);
}

double clamp_cos(double c) { return std::clamp(c, -1.0, 1.0); }

double l2(const std::vector<double>& a, const std::vector<double>& b, const char* what) {
  if (a.size() != b.size()) throw ShapeMismatch(std::string("geometry_distances: ") + what + " lengths differ");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, Eigen::VectorXd& mean) {
  mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centred = x.rowwise() - mean.transpose();
  return centred.transpose() * centred / static_cast<double>(x.rows() - 1);
}

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double id_similarity(const Image& swapped, const Image& source, IdentityEncoder& encoder) {
  const auto e = embed_all({swapped, source}, encoder);
  return clamp_cos((e[0] * e[1]).sum().item<double>());
}

double id_consistency(const std::vector<Image>& swapped, IdentityEncoder& encoder) {
  if (swapped.size() < 2) throw InvalidArgument("id_consistency: needs at least two images");
  const auto e = embed_all(swapped, encoder);
  const auto gram = torch::mm(e, e.t());
  const auto n = static_cast<std::int64_t>(swapped.size());
  double sum = 0;
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = i + 1; j < n; ++j) sum += clamp_cos(gram[i][j].item<double>());
  return sum / static_cast<double>(n * (n - 1) / 2);
}

GeometryDistances geometry_distances(const MorphableParams& swapped, const MorphableParams& source,
                                     const MorphableParams& target) {
  GeometryDistances d;
  d.shape = l2(swapped.alpha, source.alpha, "shape");
  d.expression = l2(swapped.beta, target.beta, "expression");
  d.head_pose = l2({swapped.rotation.begin(), swapped.rotation.end()},
                   {target.rotation.begin(), target.rotation.end()}, "rotation");
  return d;
}

FidResult frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw ShapeMismatch("frechet_distance: feature dimensions differ");
  if (a.rows() < 2 || b.rows() < 2) throw InvalidArgument("frechet_distance: needs at least two samples per set");
  Eigen::VectorXd mu_a, mu_b;
  const Eigen::MatrixXd cov_a = covariance(a, mu_a);
  const Eigen::MatrixXd cov_b = covariance(b, mu_b);
  // Tr((A B)^1/2) = Tr((A^1/2 B A^1/2)^1/2), and the inner matrix is symmetric PSD.
  const Eigen::MatrixXd sa = symmetric_sqrt(cov_a);
  const Eigen::MatrixXd inner = sa * cov_b * sa;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  FidResult r;
  r.distance = std::max(0.0, (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt);
  r.undersampled = std::min(a.rows(), b.rows()) < 2 * a.cols();
  return r;
}

Eigen::MatrixXd fid_features(const std::vector<Image>& images, PerceptualNet& net) {
  if (images.empty()) throw InvalidArgument("fid_features: no images");
  std::vector<torch::Tensor> ts;
  for (const auto& im : images) ts.push_back(image_to_tensor(to_signed_range(im)));
  torch::NoGradGuard no_grad;
  const auto f = net->pooled(torch::cat(ts, 0).to(net->stage1->weight.scalar_type())).to(torch::kFloat64).contiguous();
  Eigen::MatrixXd out(f.size(0), f.size(1));
  const double* p = f.data_ptr<double>();
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = p[i * out.cols() + j];
  return out;
}

FidResult toy_fid(const std::vector<Image>& set_a, const std::vector<Image>& set_b, PerceptualNet& net) {
  return frechet_distance(fid_features(set_a, net), fid_features(set_b, net));
}

// ---------------------------------------------------------------------------

void MetricTable::add(std::string method, const std::array<double, kNumMetrics>& values) {
  rows.push_back({std::move(method), values});
}

void MetricTable::validate() const {
  std::set<std::string> names;
  for (const auto& r : rows) {
    if (!names.insert(r.method).second) throw InvalidArgument("metric table: duplicate method " + r.method);
    if (r.method.find_first_of(",\n\"") != std::string::npos)
      throw InvalidArgument("metric table: method name contains a reserved character");
    for (double v : r.values)
      if (!std::isfinite(v)) throw InvalidArgument("metric table: non-finite value for " + r.method);
  }
}

std::vector<double> overall_score(const MetricTable& table, StdConvention convention) {
  table.validate();
  const std::size_t n = table.rows.size();
  if (n < 2) throw InvalidArgument("overall_score: needs at least two methods");
  std::vector<double> overall(n, 0.0);
  for (int c = 0; c < kNumMetrics; ++c) {
    double mean = 0;
    for (const auto& r : table.rows) mean += r.values[c];
    mean /= static_cast<double>(n);
    double ss = 0;
    for (const auto& r : table.rows) ss += (r.values[c] - mean) * (r.values[c] - mean);
    const double denom = convention == StdConvention::Population ? static_cast<double>(n) : static_cast<double>(n - 1);
    const double sd = std::sqrt(ss / denom);
    if (!(sd > 0)) continue;
    const double sign = kHigherIsBetter[c] ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) overall[i] += sign * (table.rows[i].values[c] - mean) / sd;
  }
  for (double& o : overall) o /= kNumMetrics;
  return overall;
}

std::string metric_csv(const MetricTable& table) {
  table.validate();
  std::vector<double> overall(table.rows.size(), std::nan(""));
  if (table.rows.size() >= 2) overall = overall_score(table);
  std::ostringstream os;
  os << kMetricCsvHeader << "\n";
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    os << table.rows[i].method;
    for (double v : table.rows[i].values) os << "," << fmt(v);
    os << "," << fmt(overall[i]) << "\n";
  }
  return os.str();
}

MetricTable parse_metric_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kMetricCsvHeader) throw IOError("metric CSV: unexpected header");
  MetricTable t;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != kNumMetrics + 2) throw IOError("metric CSV: wrong column count in '" + line + "'");
    MetricRow row;
    row.method = cells[0];
    for (int c = 0; c < kNumMetrics; ++c) {
      char* end = nullptr;
      row.values[c] = std::strtod(cells[c + 1].c_str(), &end);
      if (end == cells[c + 1].c_str() || *end != '\0') throw IOError("metric CSV: bad number '" + cells[c + 1] + "'");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

json metric_json(const MetricTable& table) {
  table.validate();
  std::vector<double> overall;
  if (table.rows.size() >= 2) overall = overall_score(table);
  json rows = json::array();
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    json r = {{"method", table.rows[i].method}};
    for (int c = 0; c < kNumMetrics; ++c) r[kMetricNames[c]] = table.rows[i].values[c];
    r["overall"] = overall.empty() ? json(nullptr) : json(overall[i]);
    rows.push_back(std::move(r));
  }
  json dirs = json::object();
  for (int c = 0; c < kNumMetrics; ++c) dirs[kMetricNames[c]] = kHigherIsBetter[c] ? "higher" : "lower";
  return {{"rows", rows}, {"better", dirs}, {"overall_std", "population"}};
}

Image comparison_grid(const std::vector<std::array<Image, 3>>& rows) {
  if (rows.empty()) throw EmptyReport("comparison_grid: no rows");
  const int h = rows[0][0].height, w = rows[0][0].width;
  Image grid(3, h * static_cast<int>(rows.size()), 3 * w);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int k = 0; k < 3; ++k) {
      const Image& im = rows[r][k];
      if (im.height != h || im.width != w || (im.channels != 3 && im.channels != 1))
        throw ShapeMismatch("comparison_grid: tiles differ in size");
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            grid.at(c, static_cast<int>(r) * h + y, k * w + x) = im.at(im.channels == 3 ? c : 0, y, x);
    }
  }
  return grid;
}

void write_report(const std::filesystem::path& dir, const MetricTable& table,
                  const std::vector<std::array<Image, 3>>& grid_rows) {
  if (table.rows.empty()) throw EmptyReport("write_report: metric table is empty");
  std::filesystem::create_directories(dir);
  write_text_file(dir / "metrics.csv", metric_csv(table));
  write_text_file(dir / "metrics.json", metric_json(table).dump(2) + "\n");
  if (!grid_rows.empty()) write_netpbm(dir / "grid.ppm", comparison_grid(grid_rows));
}

}  // namespace samae
