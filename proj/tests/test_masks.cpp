#include "test_util.hpp"

namespace samae {
namespace {

using testing::random_image;
using testing::random_mask;

const MeshAsset& asset() {
  static const MeshAsset a = make_toy_asset();
  return a;
}

// Oracles work on plain bools, independent of the Mask implementation.
using Grid = std::vector<std::vector<bool>>;

Grid grid(const Mask& m) {
  Grid g(m.height(), std::vector<bool>(m.width()));
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) g[y][x] = m.test(y, x);
  return g;
}

void expect_grid(const Mask& m, const Grid& g) {
  ASSERT_EQ(m.height(), static_cast<int>(g.size()));
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) ASSERT_EQ(m.test(y, x), g[y][x]) << y << "," << x;
  for (auto b : m.bits()) ASSERT_TRUE(b == 0 || b == 1);
}

Mask rect(int n, int y0, int x0, int y1, int x1) {
  Mask m(n, n);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.set(y, x, true);
  return m;
}

TEST(MaskAlgebra, UnionLaws) {
  Rng r(1);
  for (int i = 0; i < 200; ++i) {
    const Mask a = random_mask(r, 8, 8), b = random_mask(r, 8, 8), c = random_mask(r, 8, 8);
    EXPECT_EQ(unite(a, Mask(8, 8)), a);
    EXPECT_EQ(unite(a, a), a);
    EXPECT_EQ(unite(a, b), unite(b, a));
    EXPECT_EQ(unite(unite(a, b), c), unite(a, unite(b, c)));
    EXPECT_TRUE(unite(a, b).contains(a));
  }
}

TEST(MaskAlgebra, SubtractLaws) {
  Rng r(2);
  for (int i = 0; i < 200; ++i) {
    const Mask a = random_mask(r, 8, 8), b = random_mask(r, 8, 8);
    EXPECT_EQ(subtract(a, Mask(8, 8)), a);
    EXPECT_EQ(subtract(a, a), Mask(8, 8));
    // Anti-monotone in the second argument.
    const Mask bigger = unite(b, random_mask(r, 8, 8));
    EXPECT_TRUE(subtract(a, b).contains(subtract(a, bigger)));
  }
}

TEST(MaskAlgebra, MatchesOracles) {
  Rng r(3);
  for (int i = 0; i < 300; ++i) {
    const Mask a = random_mask(r, 8, 8, r.uniform()), b = random_mask(r, 8, 8, r.uniform());
    const Mask c = random_mask(r, 8, 8, r.uniform());
    const Grid ga = grid(a), gb = grid(b), gc = grid(c);
    Grid u = ga, d = ga, inf = ga;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        u[y][x] = ga[y][x] || gb[y][x];
        d[y][x] = ga[y][x] && !gb[y][x];
        inf[y][x] = (ga[y][x] || gb[y][x]) && !gc[y][x];
      }
    expect_grid(unite(a, b), u);
    expect_grid(subtract(a, b), d);
    expect_grid(final_mask_basic(a, b), d);
    expect_grid(perforation_mask_infer(a, b, c), inf);
  }
}

TEST(MaskAlgebra, ShapeMismatch) {
  const Mask a(8, 8), b(8, 9);
  EXPECT_THROW(unite(a, b), ShapeMismatch);
  EXPECT_THROW(subtract(a, b), ShapeMismatch);
  EXPECT_THROW(final_mask_basic(a, b), ShapeMismatch);
  EXPECT_THROW(perforation_mask_infer(a, a, b), ShapeMismatch);
  EXPECT_THROW(masked_image(Image(3, 8, 9), a), ShapeMismatch);
}

TEST(FinalMaskBasic, Examples) {
  Rng r(4);
  const Mask m = random_mask(r, 8, 8);
  EXPECT_EQ(final_mask_basic(m, Mask(8, 8)), m);
  EXPECT_EQ(final_mask_basic(m, unite(m, random_mask(r, 8, 8))), Mask(8, 8));
}

TEST(PerforationInfer, Examples) {
  Rng r(5);
  const Mask t = random_mask(r, 8, 8), occ = random_mask(r, 8, 8, 0.2);
  EXPECT_EQ(perforation_mask_infer(t, t, occ), final_mask_basic(t, occ));
  // Disjoint target and swap regions.
  const Mask tgt = rect(16, 2, 1, 9, 7), swp = rect(16, 3, 9, 12, 15), o = rect(16, 5, 4, 8, 12);
  const Mask m = perforation_mask_infer(tgt, swp, o);
  EXPECT_EQ(m.area(), subtract(tgt, o).area() + subtract(swp, o).area());
  EXPECT_TRUE(m.contains(final_mask_basic(tgt, o)));
  EXPECT_TRUE(m.contains(final_mask_basic(swp, o)));
}

TEST(MaskedImage, MatchesHadamardOracle) {
  Rng r(6);
  for (int i = 0; i < 100; ++i) {
    const Image im = random_image(r, 3, 8, 8, -1, 1);
    const Mask m = random_mask(r, 8, 8);
    const Image out = masked_image(im, m);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          ASSERT_EQ(out.at(c, y, x), (1.0f - static_cast<float>(m.test(y, x))) * im.at(c, y, x));
  }
  const Image im = random_image(r, 3, 8, 8);
  EXPECT_EQ(masked_image(im, Mask(8, 8)), im);
  EXPECT_EQ(masked_image(im, Mask(8, 8, 1)), Image(3, 8, 8));
}

TEST(PerforationTrain, OwnShapePoolReducesToBasic) {
  Rng r(7);
  MorphableParams p = neutralize_albedo(default_params(asset()));
  for (auto& a : p.alpha) a = r.truncated_normal(2.5);
  const auto raster = render(asset(), p, 32);
  const Mask occ = rect(32, 10, 0, 14, 32);
  const AlphaPool pool{p.alpha};
  const auto [m, v_rand] = perforation_confusion_train(raster.m_ras, occ, asset(), p, pool, r);
  EXPECT_EQ(m, final_mask_basic(raster.m_ras, occ));
  EXPECT_EQ(v_rand, p);
}

TEST(PerforationTrain, OnlyShapeChangesAndSupersetHolds) {
  Rng r(8);
  AlphaPool pool;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> a(asset().k_alpha);
    for (auto& v : a) v = r.truncated_normal(2.5);
    pool.push_back(a);
  }
  for (int trial = 0; trial < 20; ++trial) {
    MorphableParams p = default_params(asset());
    for (auto& g : p.gamma) g = r.normal();
    p.rotation = {r.uniform(-0.2, 0.2), r.uniform(-0.3, 0.3), r.uniform(-0.1, 0.1)};
    p.scale = r.uniform(-4, 1);
    const auto raster = render(asset(), neutralize_albedo(p), 32);
    const Mask occ = random_mask(r, 32, 32, 0.1);
    const auto [m, v_rand] = perforation_confusion_train(raster.m_ras, occ, asset(), p, pool, r);
    MorphableParams expect = neutralize_albedo(p);
    expect.alpha = v_rand.alpha;
    EXPECT_EQ(v_rand, expect);
    EXPECT_NE(std::find(pool.begin(), pool.end(), v_rand.alpha), pool.end());
    const Mask m_rand = render(asset(), v_rand, 32).m_ras;
    EXPECT_TRUE(m.contains(final_mask_basic(raster.m_ras, occ)));
    EXPECT_TRUE(m.contains(final_mask_basic(m_rand, occ)));
    EXPECT_EQ(m, subtract(unite(raster.m_ras, m_rand), occ));
  }
}

TEST(PerforationTrain, EmptyPool) {
  Rng r(9);
  const MorphableParams p = default_params(asset());
  const Mask m(32, 32);
  EXPECT_THROW(perforation_confusion_train(m, m, asset(), p, {}, r), EmptyPool);
}

TEST(MaskFiles, RoundTripAndThreshold) {
  Rng r(10);
  const auto dir = testing::temp_dir("maskfiles");
  const Mask m = random_mask(r, 9, 13);
  write_mask(dir / "m.pgm", m);
  EXPECT_EQ(read_mask(dir / "m.pgm"), m);
  Image gray(1, 1, 3);
  gray.data = {127.0f / 255, 128.0f / 255, 1.0f};
  write_netpbm(dir / "g.pgm", gray);
  const Mask t = read_mask(dir / "g.pgm");
  EXPECT_FALSE(t.test(0, 0));
  EXPECT_TRUE(t.test(0, 1));
  EXPECT_TRUE(t.test(0, 2));
}

}  // namespace
}  // namespace samae
