#include "samae/config.hpp"
#include "samae/generator.hpp"
#include "samae/tensor_utils.hpp"
#include "test_util.hpp"

namespace samae {
namespace {

GeneratorConfig tiny_config() {
  GeneratorConfig c = TrainConfig::tiny().generator;
  c.condition_dim = 24;
  return c;
}

UNetGenerator make(std::uint64_t seed, bool zero_proj = false) {
  UNetGenerator g(tiny_config());
  seeded_init(*g, seed);
  if (zero_proj) zero_condition_projections(g);
  return g;
}

GeneratorInput input(int b, int n, int cond, std::uint64_t seed) {
  torch::manual_seed(static_cast<std::int64_t>(seed));
  return {torch::rand({b, 5, n, n}) * 2 - 1, torch::randn({b, cond})};
}

TEST(Generator, ShapeAndRange) {
  auto g = make(1);
  torch::NoGradGuard ng;
  for (int n : {16, 32}) {
    const auto out = generate(g, input(2, n, 24, 3));
    EXPECT_EQ(out.sizes(), (std::vector<std::int64_t>{2, 3, n, n}));
    EXPECT_LE(out.abs().max().item<float>(), 1.0f);
  }
}

TEST(Generator, DeterministicForSeed) {
  auto a = make(5), b = make(5), c = make(6);
  torch::NoGradGuard ng;
  const auto in = input(1, 32, 24, 4);
  EXPECT_TRUE(torch::equal(generate(a, in), generate(b, in)));
  EXPECT_FALSE(torch::equal(generate(a, in), generate(c, in)));
}

TEST(Generator, ZeroInitProjectionsIgnoreCondition) {
  auto g = make(7, true);
  torch::NoGradGuard ng;
  auto in = input(1, 32, 24, 5);
  const auto base = generate(g, in);
  in.condition = torch::randn_like(in.condition) * 10;
  EXPECT_TRUE(torch::allclose(generate(g, in), base, 0, 1e-6));
}

TEST(Generator, SkinConditionChangesOutput) {
  auto g = make(8);
  torch::NoGradGuard ng;
  auto in = input(1, 32, 24, 6);
  const auto base = generate(g, in);
  // The trailing slice of the condition carries c_skin.
  in.condition.index_put_({0, torch::indexing::Slice(16, 24)}, torch::randn({8}));
  EXPECT_GT((generate(g, in) - base).abs().max().item<float>(), 1e-6f);
}

TEST(Generator, GradientReachesCondition) {
  auto g = make(9);
  auto in = input(2, 16, 24, 7);
  in.condition.requires_grad_(true);
  generate(g, in).sum().backward();
  ASSERT_TRUE(in.condition.grad().defined());
  EXPECT_GT(in.condition.grad().slice(1, 16, 24).abs().sum().item<float>(), 0.0f);
}

TEST(Generator, ZeroSpatialInputIsFinite) {
  auto g = make(10);
  torch::NoGradGuard ng;
  const auto out = generate(g, {torch::zeros({1, 5, 16, 16}), torch::zeros({1, 24})});
  EXPECT_TRUE(torch::isfinite(out).all().item<bool>());
}

TEST(Generator, InputValidation) {
  auto g = make(11);
  torch::NoGradGuard ng;
  EXPECT_THROW(generate(g, {torch::zeros({1, 4, 16, 16}), torch::zeros({1, 24})}), ShapeMismatch);
  EXPECT_THROW(generate(g, {torch::zeros({1, 5, 16, 16}), torch::zeros({1, 23})}), ShapeMismatch);
  EXPECT_THROW(generate(g, {torch::zeros({2, 5, 16, 16}), torch::zeros({1, 24})}), ShapeMismatch);
  EXPECT_THROW(generate(g, {torch::zeros({1, 5, 15, 16}), torch::zeros({1, 24})}), ShapeMismatch);
  auto bad = torch::zeros({1, 5, 16, 16});
  bad[0][0][0][0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(generate(g, {bad, torch::zeros({1, 24})}), InvalidArgument);
}

TEST(Generator, MakeInputStacksInOrder) {
  const auto ras = torch::full({1, 1, 8, 8}, 1.0f);
  const auto ip = torch::full({1, 3, 8, 8}, 2.0f);
  const auto kp = torch::full({1, 1, 8, 8}, 3.0f);
  const auto in = make_generator_input(ras, ip, kp, torch::ones({1, 4}), torch::zeros({1, 2}));
  ASSERT_EQ(in.spatial.size(1), 5);
  EXPECT_EQ(in.spatial[0][0][0][0].item<float>(), 1.0f);
  for (int c = 1; c < 4; ++c) EXPECT_EQ(in.spatial[0][c][0][0].item<float>(), 2.0f);
  EXPECT_EQ(in.spatial[0][4][0][0].item<float>(), 3.0f);
  EXPECT_TRUE(torch::equal(in.condition, torch::tensor({{1.f, 1.f, 1.f, 1.f, 0.f, 0.f}})));
}

}  // namespace
}  // namespace samae
