#include <numbers>

#include "samae/conditioning.hpp"
#include "samae/tensor_utils.hpp"
#include "test_util.hpp"

namespace samae {
namespace {

using testing::random_image;
using testing::random_mask;

IrisKeypoints kp(double x0, double y0, double x1, double y1, bool v0 = true, bool v1 = true) {
  IrisKeypoints k;
  k.points = {{{x0, y0}, {x1, y1}}};
  k.visible = {v0, v1};
  return k;
}

TEST(Stickmen, NoVisibleKeypointsIsBlank) {
  const Image im = render_iris_stickmen(kp(10, 10, 20, 20, false, false), 32);
  EXPECT_EQ(im, Image(1, 32, 32));
}

TEST(Stickmen, DiscAreaMatchesRadius) {
  for (int res : {64, 128, 256}) {
    const double r = keypoint_radius(res);
    const Image im = render_iris_stickmen(kp(res / 2.0, res / 2.0, 0, 0, true, false), res);
    double area = 0, cx = 0, cy = 0;
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x) {
        const float v = im.at(0, y, x);
        ASSERT_TRUE(v == 0.0f || v == 1.0f);
        area += v;
        cx += v * (x + 0.5);
        cy += v * (y + 0.5);
      }
    // Pixel centres inside the disc all lie in the annulus r +- sqrt(2)/2.
    EXPECT_NEAR(area, std::numbers::pi * r * r, 2.0 * std::numbers::sqrt2 * std::numbers::pi * r) << res;
    EXPECT_NEAR(cx / area, res / 2.0, 1e-9);
    EXPECT_NEAR(cy / area, res / 2.0, 1e-9);
  }
}

TEST(Stickmen, IntegerTranslationEquivariance) {
  const int n = 48;
  const Image a = render_iris_stickmen(kp(15.3, 20.7, 30.1, 21.2), n);
  const Image b = render_iris_stickmen(kp(18.3, 18.7, 33.1, 19.2), n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const int xs = x - 3, ys = y + 2;
      if (xs < 0 || ys >= n) continue;
      ASSERT_EQ(b.at(0, y, x), a.at(0, ys, xs)) << y << "," << x;
    }
}

TEST(PerturbKeypoints, ZeroSigmaIsIdentity) {
  Rng r(1);
  const IrisKeypoints k = kp(10.5, 11, 20, 12);
  EXPECT_EQ(perturb_keypoints(k, r, 0.0, 64), k);
}

TEST(PerturbKeypoints, StatisticsAndInvisibility) {
  Rng r(2);
  const double sigma = 0.05 * 64;
  const IrisKeypoints k = kp(32, 30, 40, 30, true, false);
  double s = 0, s2 = 0;
  const int n = 1000;
  const auto before = diagnostics::keypoint_perturbation_calls();
  for (int i = 0; i < n; ++i) {
    const IrisKeypoints p = perturb_keypoints(k, r, sigma, 64);
    EXPECT_EQ(p.points[1], k.points[1]);
    EXPECT_EQ(p.visible, k.visible);
    const double dx = p.points[0][0] - 32;
    s += dx;
    s2 += dx * dx;
  }
  EXPECT_EQ(diagnostics::keypoint_perturbation_calls() - before, static_cast<std::uint64_t>(n));
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  EXPECT_NEAR(sd, sigma, 0.15 * sigma);
}

TEST(PerturbKeypoints, ClipsToBounds) {
  Rng r(3);
  const IrisKeypoints k = kp(0.2, 63.5, 63.0, 0.0);
  for (int i = 0; i < 200; ++i) {
    const IrisKeypoints p = perturb_keypoints(k, r, 20.0, 64);
    for (const auto& pt : p.points)
      for (double v : pt) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 63.0);
      }
  }
}

TEST(KeypointJson, RoundTrip) {
  const IrisKeypoints k = kp(1.25, 2.5, 30.125, 7.0, true, false);
  EXPECT_EQ(keypoints_from_json(keypoints_to_json(k)), k);
  EXPECT_THROW(keypoints_from_json(nlohmann::json{{"keypoints", 3}}), InvalidArgument);
}

TEST(ColorJitter, StaysInRangeAndChangesImage) {
  Rng r(4);
  const Image im = random_image(r, 3, 16, 16);
  Rng a(10), b(11);
  const Image ja = color_jitter(im, a, {});
  const Image jb = color_jitter(im, b, {});
  EXPECT_NE(ja, im);
  EXPECT_NE(ja, jb);
  for (float v : ja.data) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
  Rng c(12);
  const Image same = color_jitter(im, c, JitterConfig{0, 0, 0});
  for (std::size_t i = 0; i < im.data.size(); ++i) EXPECT_NEAR(same.data[i], im.data[i], 1e-6);
}

TEST(IdentityEncoder, UnitNormAndDeterministic) {
  ToyIdentityEncoder enc(77);
  Rng r(5);
  const Image im = random_image(r, 3, 32, 32);
  Rng unused(0);
  const auto e1 = encode_identity(im, false, unused, enc);
  const auto e2 = encode_identity(im, false, unused, enc);
  EXPECT_EQ(e1.size(0), 512);
  EXPECT_TRUE(torch::equal(e1, e2));
  EXPECT_NEAR(e1.norm().item<double>(), 1.0, 1e-5);
  // Same seed, separate instance: identical weights.
  ToyIdentityEncoder again(77);
  EXPECT_TRUE(torch::equal(encode_identity(im, false, unused, again), e1));
  for (const auto& p : enc.net()->parameters()) EXPECT_FALSE(p.requires_grad());
}

TEST(IdentityEncoder, JitterPathIsActive) {
  ToyIdentityEncoder enc(77);
  Rng r(6);
  const Image im = random_image(r, 3, 32, 32);
  Rng a(1), b(2);
  const auto ea = encode_identity(im, true, a, enc);
  const auto eb = encode_identity(im, true, b, enc);
  const double cos = (ea * eb).sum().item<double>();
  EXPECT_TRUE(std::isfinite(cos));
  EXPECT_FALSE(torch::equal(ea, eb));
  Rng a2(1), b2(2);
  EXPECT_NE(color_jitter(im, a2, {}), color_jitter(im, b2, {}));
}

TEST(SkinEncoder, OutputAndMaskInvariance) {
  torch::manual_seed(0);
  SkinEncoder enc;
  seeded_init(*enc, 3);
  Rng r(7);
  const Mask skin = random_mask(r, 32, 32);
  Image a = random_image(r, 3, 32, 32, -1, 1);
  Image b = a;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (!skin.test(y, x)) b.at(c, y, x) = static_cast<float>(r.uniform(-1, 1));
  torch::NoGradGuard no_grad;
  const auto ca = encode_skin(enc, a, skin);
  const auto cb = encode_skin(enc, b, skin);
  EXPECT_EQ(ca.size(0), 64);
  EXPECT_TRUE(torch::equal(ca, cb));
  // Empty skin mask encodes the all-zero image.
  const auto c0 = encode_skin(enc, a, Mask(32, 32));
  const auto cz = enc->forward(torch::zeros({1, 3, 32, 32}))[0];
  EXPECT_TRUE(torch::equal(c0, cz));
  EXPECT_THROW(encode_skin(enc, a, Mask(16, 32)), ShapeMismatch);
}

TEST(SkinEncoder, IsTrainable) {
  SkinEncoder enc;
  seeded_init(*enc, 4);
  auto x = torch::rand({2, 3, 32, 32});
  auto m = torch::ones({2, 1, 32, 32});
  encode_skin(enc, x, m).sum().backward();
  double g = 0;
  for (const auto& p : enc->parameters()) {
    ASSERT_TRUE(p.grad().defined());
    g += p.grad().abs().sum().item<double>();
  }
  EXPECT_GT(g, 0.0);
}

}  // namespace
}  // namespace samae
