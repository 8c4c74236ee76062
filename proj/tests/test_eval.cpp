#include <Eigen/Eigenvalues>

#include "samae/eval.hpp"
#include "test_util.hpp"

namespace samae {
namespace {

// Embedding = normalized (mean R, mean G, mean B) of a [0,1] image mapped to [-1,1].
class MeanEncoder final : public IdentityEncoder {
 public:
  torch::Tensor embed(const torch::Tensor& images) override {
    auto e = images.mean({2, 3});
    return e / e.norm(2, 1, true);
  }
  int dim() const override { return 3; }
  void to(torch::Dtype) override {}
};

Image flat(float r, float g, float b, int n = 4) {
  Image im(3, n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      im.at(0, y, x) = r;
      im.at(1, y, x) = g;
      im.at(2, y, x) = b;
    }
  return im;
}

// Trace of sqrt(A B) through the eigenvalues of the (non-symmetric) product.
double frechet_oracle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::RowVectorXd ma = a.colwise().mean(), mb = b.colwise().mean();
  const Eigen::MatrixXd ca = a.rowwise() - ma, cb = b.rowwise() - mb;
  const Eigen::MatrixXd sa = ca.transpose() * ca / (a.rows() - 1.0);
  const Eigen::MatrixXd sb = cb.transpose() * cb / (b.rows() - 1.0);
  Eigen::EigenSolver<Eigen::MatrixXd> es(sa * sb);
  double tr = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) tr += std::sqrt(std::max(0.0, es.eigenvalues()[i].real()));
  return (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2 * tr;
}

Eigen::MatrixXd random_features(Rng& r, int n, int d, double shift) {
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = r.normal() * (1 + 0.3 * j) + shift;
  return m;
}

TEST(IdentityMetrics, StubEncoder) {
  MeanEncoder enc;
  // [0,1] -> [-1,1]: 0.75 -> 0.5, 0.25 -> -0.5.
  EXPECT_NEAR(id_similarity(flat(0.75, 0.5, 0.5), flat(0.75, 0.5, 0.5), enc), 1.0, 1e-6);
  EXPECT_NEAR(id_similarity(flat(0.75, 0.5, 0.5), flat(0.25, 0.5, 0.5), enc), -1.0, 1e-6);
  EXPECT_NEAR(id_similarity(flat(0.75, 0.5, 0.5), flat(0.5, 0.75, 0.5), enc), 0.0, 1e-6);
  // Pairwise mean over {e_x, e_x, e_y}: (1 + 0 + 0) / 3.
  const std::vector<Image> set{flat(0.75, 0.5, 0.5), flat(0.75, 0.5, 0.5), flat(0.5, 0.75, 0.5)};
  EXPECT_NEAR(id_consistency(set, enc), 1.0 / 3.0, 1e-6);
  EXPECT_THROW(id_consistency({set[0]}, enc), InvalidArgument);
  EXPECT_THROW(id_similarity(Image(1, 4, 4), set[0], enc), ShapeMismatch);
}

TEST(Geometry, Distances) {
  const MeshAsset asset = make_toy_asset();
  MorphableParams src = default_params(asset), tgt = src, sw = src;
  src.alpha[0] = 1.0;
  sw.alpha[0] = 4.0;
  tgt.beta[1] = -2.0;
  sw.rotation = {0.0, 0.3, 0.4};
  const auto d = geometry_distances(sw, src, tgt);
  EXPECT_NEAR(d.shape, 3.0, 1e-12);
  EXPECT_NEAR(d.expression, 2.0, 1e-12);
  EXPECT_NEAR(d.head_pose, 0.5, 1e-12);
  MorphableParams bad = sw;
  bad.alpha.pop_back();
  EXPECT_THROW(geometry_distances(bad, src, tgt), ShapeMismatch);
}

TEST(Frechet, MatchesEigenProductOracle) {
  Rng r(1);
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 2 + trial % 4;
    const auto a = random_features(r, 40, d, 0.0), b = random_features(r, 50, d, 0.1 * trial);
    const FidResult f = frechet_distance(a, b);
    EXPECT_NEAR(f.distance, frechet_oracle(a, b), 1e-8 * (1 + f.distance));
    EXPECT_FALSE(f.undersampled);
    EXPECT_NEAR(f.distance, frechet_distance(b, a).distance, 1e-8 * (1 + f.distance));
  }
}

TEST(Frechet, OneDimensionalClosedForm) {
  Eigen::MatrixXd a(4, 1), b(3, 1);
  a << 0, 1, 2, 3;
  b << 10, 12, 14;
  // Means 1.5 and 12, sample variances 5/3 and 4.
  EXPECT_NEAR(frechet_distance(a, b).distance, 10.5 * 10.5 + std::pow(std::sqrt(5.0 / 3.0) - 2, 2), 1e-10);
}

TEST(Frechet, IdenticalSetsAndPointMasses) {
  Rng r(2);
  const auto a = random_features(r, 30, 3, 0);
  EXPECT_NEAR(frechet_distance(a, a).distance, 0.0, 1e-9);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(5, 3), q = Eigen::MatrixXd::Zero(5, 3);
  q.col(0).setConstant(3.0);
  q.col(2).setConstant(4.0);
  EXPECT_NEAR(frechet_distance(p, q).distance, 25.0, 1e-12);
  EXPECT_TRUE(frechet_distance(p, q).undersampled);  // 5 rows < 2 x 3 dims
  EXPECT_FALSE(frechet_distance(random_features(r, 6, 3, 0), random_features(r, 6, 3, 0)).undersampled);
  EXPECT_TRUE(frechet_distance(random_features(r, 4, 3, 0), random_features(r, 4, 3, 0)).undersampled);
  EXPECT_THROW(frechet_distance(p, Eigen::MatrixXd::Zero(5, 2)), ShapeMismatch);
  EXPECT_THROW(frechet_distance(p.topRows(1), q), InvalidArgument);
}

MetricTable random_table(Rng& r, int rows) {
  MetricTable t;
  for (int i = 0; i < rows; ++i) {
    std::array<double, kNumMetrics> v{};
    for (auto& x : v) x = r.uniform(0, 10);
    t.add("m" + std::to_string(i), v);
  }
  return t;
}

TEST(Overall, MatchesHandComputation) {
  Rng r(3);
  const MetricTable t = random_table(r, 5);
  const auto got = overall_score(t);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    double acc = 0;
    for (int k = 0; k < kNumMetrics; ++k) {
      std::vector<double> col;
      for (const auto& row : t.rows) col.push_back(row.values[k]);
      double mean = 0, var = 0;
      for (double v : col) mean += v / col.size();
      for (double v : col) var += (v - mean) * (v - mean) / col.size();
      const double z = (t.rows[i].values[k] - mean) / std::sqrt(var);
      acc += kHigherIsBetter[k] ? -z : z;
    }
    EXPECT_NEAR(got[i], acc / kNumMetrics, 1e-12);
  }
}

TEST(Overall, Properties) {
  Rng r(4);
  for (int trial = 0; trial < 20; ++trial) {
    MetricTable t = random_table(r, 3 + trial % 6);
    const auto base = overall_score(t);
    double sum = 0;
    for (double v : base) sum += v;
    EXPECT_NEAR(sum, 0.0, 1e-10);
    // Positive affine maps of a column leave the score unchanged.
    MetricTable scaled = t;
    const int k = trial % kNumMetrics;
    for (auto& row : scaled.rows) row.values[k] = 3.5 * row.values[k] - 7;
    const auto s = overall_score(scaled);
    for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(s[i], base[i], 1e-10);
    // Improving one row on a lower-is-better column lowers its score.
    MetricTable better = t;
    better.rows[0].values[5] = -100;
    EXPECT_LT(overall_score(better)[0], base[0]);
  }
  MetricTable two;
  two.add("a", {1, 1, 1, 1, 1, 1});
  two.add("b", {0, 0, 0, 0, 0, 0});
  const auto s = overall_score(two);
  // Two rows: z = +-1 per column; two higher-better columns cancel two of six.
  EXPECT_NEAR(s[0], (4.0 - 2.0) / 6.0, 1e-12);
  EXPECT_NEAR(s[1], -s[0], 1e-12);
  const auto sample = overall_score(two, StdConvention::Sample);
  EXPECT_NEAR(sample[0], s[0] / std::sqrt(2.0), 1e-12);
}

TEST(Overall, ConstantColumnAndErrors) {
  Rng r(5);
  MetricTable t = random_table(r, 4);
  for (auto& row : t.rows) row.values[2] = 1.0;
  const auto s = overall_score(t);
  for (double v : s) EXPECT_TRUE(std::isfinite(v));
  MetricTable one;
  one.add("a", {1, 1, 1, 1, 1, 1});
  EXPECT_THROW(overall_score(one), InvalidArgument);
  MetricTable dup = t;
  dup.add("m0", {1, 1, 1, 1, 1, 1});
  EXPECT_THROW(dup.validate(), InvalidArgument);
  MetricTable comma;
  comma.add("a,b", {1, 1, 1, 1, 1, 1});
  EXPECT_THROW(comma.validate(), InvalidArgument);
  MetricTable nan = t;
  nan.rows[1].values[0] = std::nan("");
  EXPECT_THROW(nan.validate(), InvalidArgument);
}

TEST(Reports, CsvRoundTrip) {
  Rng r(6);
  const MetricTable t = random_table(r, 4);
  const std::string csv = metric_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricCsvHeader);
  EXPECT_EQ(parse_metric_csv(csv), t);
  EXPECT_THROW(parse_metric_csv("method,x\n"), IOError);
  const auto j = metric_json(t);
  EXPECT_EQ(j.at("rows").size(), 4u);
}

TEST(Reports, GridAndFiles) {
  const Image a = flat(1, 0, 0, 8), b = flat(0, 1, 0, 8), c = flat(0, 0, 1, 8);
  const Image g = comparison_grid({{a, b, c}, {c, b, a}});
  EXPECT_EQ(g.channels, 3);
  EXPECT_EQ(g.width, 24);
  EXPECT_EQ(g.height, 16);
  EXPECT_EQ(g.at(0, 0, 0), 1.0f);
  EXPECT_EQ(g.at(1, 0, 8), 1.0f);
  EXPECT_EQ(g.at(2, 8, 0), 1.0f);
  EXPECT_THROW(comparison_grid({}), EmptyReport);

  const auto dir = testing::temp_dir("report");
  Rng r(7);
  write_report(dir, random_table(r, 3), {{a, b, c}});
  for (const char* f : {"metrics.csv", "metrics.json", "grid.ppm"}) EXPECT_TRUE(std::filesystem::exists(dir / f));
  EXPECT_THROW(write_report(dir, MetricTable{}, {{a, b, c}}), EmptyReport);
}

}  // namespace
}  // namespace samae
