#include <sstream>

#include "test_util.hpp"

namespace samae {
namespace {

using testing::random_params;
using testing::temp_dir;

const MeshAsset& asset() {
  static const MeshAsset a = make_toy_asset();
  return a;
}

// True when some pixel within Chebyshev distance d has a different mask value.
bool near_contour(const Mask& m, int y, int x, int d) {
  const bool v = m.test(y, x);
  for (int dy = -d; dy <= d; ++dy)
    for (int dx = -d; dx <= d; ++dx) {
      const int yy = y + dy, xx = x + dx;
      if (yy < 0 || xx < 0 || yy >= m.height() || xx >= m.width()) continue;
      if (m.test(yy, xx) != v) return true;
    }
  return false;
}

TEST(Asset, ToyAssetIsValid) {
  const auto& a = asset();
  EXPECT_NO_THROW(validate(a));
  EXPECT_EQ(a.k_alpha, 8);
  EXPECT_EQ(a.k_beta, 8);
  EXPECT_EQ(a.k_gamma, 8);
  EXPECT_GT(a.num_vertices, 1000);
  EXPECT_LT(a.num_vertices, 2500);
  EXPECT_EQ(a.iris_vertices.size(), 2u);
}

TEST(Asset, TemplateIsMirrorSymmetric) {
  const auto& a = asset();
  // Every vertex has a mirror partner (x -> -x) with equal y, z, up to
  // float rounding of the grid construction.
  auto near = [](float p, float q) { return std::abs(p - q) <= 1e-6f; };
  for (int v = 0; v < a.num_vertices; ++v) {
    bool found = false;
    for (int u = 0; u < a.num_vertices && !found; ++u)
      found = near(a.vertices[3 * u], -a.vertices[3 * v]) && near(a.vertices[3 * u + 1], a.vertices[3 * v + 1]) &&
              near(a.vertices[3 * u + 2], a.vertices[3 * v + 2]);
    ASSERT_TRUE(found) << "vertex " << v;
  }
}

TEST(Asset, FileRoundTripIsBitExact) {
  const auto dir = temp_dir("asset");
  save_asset(dir / "a.sama", asset());
  const MeshAsset back = load_asset(dir / "a.sama");
  EXPECT_EQ(back, asset());
  save_asset(dir / "b.sama", back);
  EXPECT_EQ(testing::read_bytes(dir / "a.sama"), testing::read_bytes(dir / "b.sama"));
}

TEST(Asset, CorruptFilesAreRejected) {
  std::ostringstream os;
  save_asset(os, asset());
  const std::string bytes = os.str();
  {
    std::string bad = bytes;
    bad[0] = 'X';
    std::istringstream is(bad);
    EXPECT_THROW(load_asset(is), CorruptAsset);
  }
  {
    std::istringstream is(bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(load_asset(is), CorruptAsset);
  }
  MeshAsset broken = asset();
  broken.triangles[5] = static_cast<std::uint32_t>(broken.num_vertices + 3);
  EXPECT_THROW(validate(broken), CorruptAsset);
}

TEST(Params, ValidationRejectsBadValues) {
  MorphableParams p = default_params(asset());
  EXPECT_NO_THROW(validate(p));
  p.rotation[1] = 4.0;
  EXPECT_THROW(validate(p), InvalidArgument);
  p = default_params(asset());
  p.alpha[0] = std::nan("");
  EXPECT_THROW(validate(p), InvalidArgument);
}

TEST(NeutralizeAlbedo, IsIdempotentAndOverwritesGamma) {
  Rng r(1);
  const MorphableParams p = random_params(asset(), r);
  const MorphableParams n = neutralize_albedo(p);
  EXPECT_EQ(neutralize_albedo(n), n);
  EXPECT_EQ(n.gamma, neutral_albedo_coefficients(asset().k_gamma));
  MorphableParams q = p;
  for (auto& g : q.gamma) g = -g + 0.3;
  EXPECT_EQ(neutralize_albedo(q), n);
  MorphableParams expect = p;
  expect.gamma = n.gamma;
  EXPECT_EQ(n, expect);
}

TEST(NeutralizeAlbedo, NeutralAlbedoIsWhite) {
  const auto& a = asset();
  const auto g = neutral_albedo_coefficients(a.k_gamma);
  for (std::size_t row = 0; row < a.albedo_mean.size(); ++row) {
    double v = a.albedo_mean[row];
    for (int k = 0; k < a.k_gamma; ++k) v += static_cast<double>(a.albedo_basis[k * a.albedo_mean.size() + row]) * g[k];
    ASSERT_NEAR(v, 1.0, 1e-6) << row;
  }
}

TEST(Render, AlbedoNeutralInvariancePixelExact) {
  Rng r(2);
  for (int trial = 0; trial < 5; ++trial) {
    MorphableParams p = random_params(asset(), r);
    MorphableParams q = p;
    for (auto& g : q.gamma) g = r.truncated_normal(2.5);
    const auto a = render(asset(), neutralize_albedo(p), 64);
    const auto b = render(asset(), neutralize_albedo(q), 64);
    EXPECT_EQ(a.i_ras, b.i_ras);
    EXPECT_EQ(a.m_ras, b.m_ras);
  }
}

TEST(Render, OutputInvariants) {
  Rng r(3);
  for (int trial = 0; trial < 5; ++trial) {
    const MorphableParams p = neutralize_albedo(random_params(asset(), r));
    const auto out = render(asset(), p, 64);
    ASSERT_EQ(out.i_ras.channels, 1);
    float lo = 2, hi = -1;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const float v = out.i_ras.at(0, y, x);
        const bool fg = out.m_ras.test(y, x);
        EXPECT_EQ(fg, std::isfinite(out.depth[y * 64 + x]));
        EXPECT_EQ(fg, out.triangle_ids[y * 64 + x] >= 0);
        if (!fg) {
          ASSERT_EQ(v, 0.0f);
        } else {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
    EXPECT_NEAR(lo, 0.0f, 1e-6);
    EXPECT_NEAR(hi, 1.0f, 1e-6);
    EXPECT_EQ(derive_mesh_mask(out), out.m_ras);
    EXPECT_GT(out.m_ras.area(), 0u);
  }
}

TEST(Render, Deterministic) {
  Rng r(4);
  const MorphableParams p = random_params(asset(), r);
  const auto a = render(asset(), p, 96);
  const auto b = render(asset(), p, 96);
  EXPECT_EQ(a.i_ras, b.i_ras);
  EXPECT_EQ(a.depth, b.depth);
  EXPECT_EQ(a.triangle_ids, b.triangle_ids);
}

TEST(Render, FrontalFaceIsCentredAndSymmetric) {
  MorphableParams p = neutralize_albedo(default_params(asset()));
  // Lighting even in x, so the shading is mirror symmetric too.
  p.delta = {0.75, 0.15, 0.35, 0.0, 0.0, 0.0, 0.05, 0.0, 0.0};
  const int n = 64;
  const auto out = render(asset(), p, n);
  int mismatched = 0;
  double cx = 0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const int mx = n - 1 - x;
      if (out.m_ras.test(y, x)) cx += x + 0.5;
      if (out.m_ras.test(y, x) != out.m_ras.test(y, mx)) {
        ++mismatched;
        EXPECT_TRUE(near_contour(out.m_ras, y, x, 1));
        continue;
      }
      // Interior pixels match up to one rasterization step of shading.
      if (out.m_ras.test(y, x) && !near_contour(out.m_ras, y, x, 1))
        EXPECT_NEAR(out.i_ras.at(0, y, x), out.i_ras.at(0, y, mx), 1e-4) << y << "," << x;
    }
  EXPECT_NEAR(cx / out.m_ras.area(), n / 2.0, 0.5);
  EXPECT_LE(mismatched, 8);
}

TEST(Render, TranslationEquivariance) {
  Rng r(5);
  const int n = 64;
  for (int delta : {1, 3, -4}) {
    MorphableParams p = neutralize_albedo(random_params(asset(), r, 0.5));
    p.rotation = {0.05, -0.1, 0.02};
    MorphableParams q = p;
    q.translation[0] += 2.0 * delta / n;
    const auto a = render(asset(), p, n);
    const auto b = render(asset(), q, n);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const int xs = x - delta;
        if (xs < 0 || xs >= n) continue;
        const float va = a.i_ras.at(0, y, xs), vb = b.i_ras.at(0, y, x);
        if (std::abs(va - vb) > 1e-5f) EXPECT_TRUE(near_contour(a.m_ras, y, xs, 1)) << y << "," << x;
      }
  }
}

TEST(Render, LightingGainDoesNotChangeImage) {
  Rng r(6);
  const MorphableParams p = neutralize_albedo(random_params(asset(), r));
  const auto base = render(asset(), p, 64);
  for (double c : {0.5, 2.0, 7.25}) {
    MorphableParams q = p;
    for (auto& d : q.delta) d *= c;
    const auto out = render(asset(), q, 64);
    EXPECT_EQ(out.m_ras, base.m_ras);
    for (std::size_t i = 0; i < out.i_ras.data.size(); ++i) EXPECT_NEAR(out.i_ras.data[i], base.i_ras.data[i], 1e-6);
  }
}

TEST(Render, ScaleGrowsMaskMonotonically) {
  Rng r(7);
  for (int trial = 0; trial < 3; ++trial) {
    MorphableParams p = neutralize_albedo(random_params(asset(), r));
    std::size_t prev = 0;
    for (double s : {-4.0, -2.5, -1.0, 0.0, 1.0}) {
      p.scale = s;
      const auto area = render(asset(), p, 64).m_ras.area();
      EXPECT_GT(area, prev) << "s=" << s;
      prev = area;
    }
  }
}

TEST(Render, RollMatchesImagePlaneRotation) {
  const int n = 128;
  MorphableParams p = neutralize_albedo(default_params(asset()));
  // Lighting symmetric about the view axis: constant, z and 3z^2-1 only.
  p.delta = {0.8, 0.0, 0.4, 0.0, 0.0, 0.0, 0.1, 0.0, 0.0};
  const auto base = render(asset(), p, n);
  for (double theta : {-0.3, 0.12, 0.3}) {
    MorphableParams q = p;
    q.rotation[2] = theta;
    const auto rot = render(asset(), q, n);
    const double c = std::cos(theta), s = std::sin(theta);
    const double centre = n / 2.0;
    double sum_err = 0;
    int count = 0;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double u1 = x + 0.5 - centre, v1 = y + 0.5 - centre;
        // Inverse image-plane rotation (image y points down).
        const double u0 = c * u1 - s * v1, v0 = s * u1 + c * v1;
        const int x0 = static_cast<int>(std::floor(u0 + centre)), y0 = static_cast<int>(std::floor(v0 + centre));
        const bool in0 = x0 >= 0 && y0 >= 0 && x0 < n && y0 < n && base.m_ras.test(y0, x0);
        if (in0 != rot.m_ras.test(y, x)) {
          EXPECT_TRUE(near_contour(rot.m_ras, y, x, 2)) << theta << " " << y << "," << x;
          continue;
        }
        if (in0 && !near_contour(rot.m_ras, y, x, 2)) {
          sum_err += std::abs(rot.i_ras.at(0, y, x) - base.i_ras.at(0, y0, x0));
          ++count;
        }
      }
    ASSERT_GT(count, 0);
    EXPECT_LT(sum_err / count, 0.02) << theta;
  }
}

TEST(Render, Errors) {
  const MorphableParams p = default_params(asset());
  EXPECT_THROW(render(asset(), p, 4), InvalidArgument);
  MorphableParams short_alpha = p;
  short_alpha.alpha.pop_back();
  EXPECT_THROW(render(asset(), short_alpha, 32), ShapeMismatch);

  MeshAsset flat = asset();
  for (auto& v : flat.vertices) v = 0.0f;
  for (auto* basis : {&flat.shape_basis, &flat.expression_basis})
    for (auto& b : *basis) b = 0.0f;
  EXPECT_THROW(render(flat, p, 32), DegenerateMesh);
}

TEST(Render, ShadeColorUsesAlbedo) {
  Rng r(8);
  MorphableParams p = random_params(asset(), r);
  const auto raster = render(asset(), p, RenderOptions{48, true});
  const Image rgb = shade_color(asset(), p, raster);
  ASSERT_EQ(rgb.channels, 3);
  bool coloured = false;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) {
      if (!raster.m_ras.test(y, x)) {
        EXPECT_EQ(rgb.at(0, y, x), 0.0f);
        continue;
      }
      coloured |= rgb.at(0, y, x) != rgb.at(2, y, x);
      for (int ch = 0; ch < 3; ++ch) {
        EXPECT_GE(rgb.at(ch, y, x), 0.0f);
        EXPECT_LE(rgb.at(ch, y, x), 1.0f);
      }
    }
  EXPECT_TRUE(coloured);
}

TEST(Render, SkinMaskIsInsideFace) {
  Rng r(9);
  const auto out = render(asset(), random_params(asset(), r), 64);
  const Mask skin = skin_mask_from_render(asset(), out);
  EXPECT_TRUE(out.m_ras.contains(skin));
  EXPECT_GT(skin.area(), out.m_ras.area() / 2);
  EXPECT_LT(skin.area(), out.m_ras.area());
}

TEST(LookupParams, SyntheticRecordRoundTrip) {
  Rng r(10);
  const Dataset ds = synth_dataset(2, r, {}, 32, asset());
  for (const auto& rec : ds.records) {
    const MorphableParams p = lookup_params(rec);
    EXPECT_EQ(p, *rec.params);
    // Rendering the looked-up params reproduces the record's face region.
    const auto a = render(asset(), p, 32);
    const auto b = render(asset(), lookup_params(rec), 32);
    EXPECT_EQ(a.i_ras, b.i_ras);
  }
  DatasetRecord bare = ds.records[0];
  bare.params.reset();
  EXPECT_THROW(lookup_params(bare), MissingSidecar);
}

}  // namespace
}  // namespace samae
