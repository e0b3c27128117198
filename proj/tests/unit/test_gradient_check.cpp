#include <gtest/gtest.h>

#include <limits>

#include <skipreward/gradient_check.hpp>

#include "test_support.hpp"

using namespace skipreward;

namespace {
constexpr Perspective kP = Perspective::alignment;

RewardModel<double> randomized(Objective o, std::uint64_t seed, int d = 8) {
  auto m = testsupport::tiny_model<double>(seed, testsupport::head_for(o), d);
  std::mt19937_64 rng(seed + 7);
  randomize_adapter(m.adapter(kP), rng);
  return m;
}
}  // namespace

class GradCheckByObjective : public ::testing::TestWithParam<Objective> {};

TEST_P(GradCheckByObjective, AnalyticMatchesNumeric) {
  const Objective o = GetParam();
  auto model = randomized(o, 1);
  const auto pairs = testsupport::tiny_pairs(2, 4);
  TrainConfig tc;
  tc.objective = o;
  const auto res = gradient_check(model, kP, std::span<const PairExample>(pairs), tc, GradCheckConfig{});
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
  EXPECT_EQ(res.entries.size(), 64u);
}

INSTANTIATE_TEST_SUITE_P(All, GradCheckByObjective, ::testing::Values(Objective::bt, Objective::gpm, Objective::ce),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(GradCheck, BinaryCrossEntropy) {
  auto model = randomized(Objective::ce, 3);
  const auto c = gen_synthetic_corpus(4, 4, testsupport::tiny_corpus());
  TrainConfig tc;
  tc.objective = Objective::ce;
  const auto res = gradient_check(model, kP, std::span<const BinaryExample>(c.binary), tc, GradCheckConfig{});
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
}

TEST(GradCheck, SaturatedBtGivesZeroGradient) {
  auto model = randomized(Objective::bt, 5);
  auto pairs = testsupport::tiny_pairs(6, 1);
  const double sc = model.score(pairs[0].prompt, pairs[0].chosen, kP).scalar();
  const double sr = model.score(pairs[0].prompt, pairs[0].rejected, kP).scalar();
  ASSERT_GT(std::abs(sc - sr), 0.05);
  if (sc < sr) std::swap(pairs[0].chosen, pairs[0].rejected);
  TrainConfig tc;
  tc.temperature = 1e-3;
  PerspectiveAdapter<double> grads = zeros_like(model.adapter(kP));
  const double loss = batch_loss(model, kP, std::span<const PairExample>(pairs), tc, &grads);
  EXPECT_LT(loss, 1e-20);
  grads.for_each([](const std::string& n, const Matrix<double>& m) {
    for (double x : m.values()) EXPECT_LT(std::abs(x), 1e-15) << n;
  });
}

TEST(GradCheck, CorruptedGradientDetected) {
  auto model = randomized(Objective::bt, 7);
  const auto pairs = testsupport::tiny_pairs(8, 4);
  GradCheckConfig gc;
  gc.corrupt = [](PerspectiveAdapter<double>& g) {
    g.for_each([](const std::string&, Matrix<double>& m) {
      for (double& x : m.values()) x *= 1.1;
    });
  };
  const auto res = gradient_check(model, kP, std::span<const PairExample>(pairs), TrainConfig{}, gc);
  EXPECT_GT(res.max_rel_error, 1e-2);
}

TEST(GradCheck, EpsilonRange) {
  auto model = randomized(Objective::bt, 9);
  const auto pairs = testsupport::tiny_pairs(1, 2);
  for (double eps : {1e-8, 1e-2}) {
    GradCheckConfig gc;
    gc.epsilon = eps;
    EXPECT_THROW(gradient_check(model, kP, std::span<const PairExample>(pairs), TrainConfig{}, gc), ConfigError);
  }
}

TEST(GradCheck, NonFiniteGradientNamed) {
  auto model = randomized(Objective::bt, 10);
  model.adapter(kP).head.g_w(0, 0) = std::numeric_limits<double>::infinity();
  const auto pairs = testsupport::tiny_pairs(1, 2);
  try {
    gradient_check(model, kP, std::span<const PairExample>(pairs), TrainConfig{}, GradCheckConfig{});
    FAIL() << "expected a numeric error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite gradient in "), std::string::npos) << e.what();
  }
}

TEST(GradCheck, WiderModel) {
  auto model = randomized(Objective::bt, 11, 16);
  const auto pairs = testsupport::tiny_pairs(12, 3);
  const auto res = gradient_check(model, kP, std::span<const PairExample>(pairs), TrainConfig{}, GradCheckConfig{});
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
}
