#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <skipreward/objectives.hpp>

using namespace skipreward;
using big = boost::multiprecision::cpp_bin_float_50;

namespace {

double softplus_ref(double x) {
  const big b(x);
  return static_cast<double>(boost::multiprecision::log1p(boost::multiprecision::exp(b)));
}

double sigmoid_ref(double x) {
  const big b(x);
  return static_cast<double>(big(1) / (big(1) + boost::multiprecision::exp(-b)));
}

ScoredExample scored(double s) {
  ScoredExample e;
  e.prompt = TextPrompt::from_text("a red square");
  e.score = s;
  return e;
}

}  // namespace

TEST(BradleyTerry, KnownValues) {
  EXPECT_NEAR(bt_loss(0.0, 0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(bt_loss(1.0, 0.0), 0.313262, 1e-6);
  EXPECT_LT(bt_loss(50.0, 0.0), 1e-20);
  EXPECT_GT(bt_loss(50.0, 0.0), 0.0);
  EXPECT_NEAR(bt_loss(0.0, 50.0), 50.0, 1e-12);
  EXPECT_NEAR(bt_loss(2.0, 0.0, 2.0), bt_loss(1.0, 0.0), 1e-15);
  EXPECT_THROW(bt_loss(0, 0, 0.0), ConfigError);
}

TEST(BradleyTerry, HighPrecisionOracle) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-40.0, 40.0);
  for (int i = 0; i < 2000; ++i) {
    const double a = u(rng), b = u(rng);
    const double want = softplus_ref(b - a);
    EXPECT_NEAR(bt_loss(a, b), want, 4e-16 * std::max(1.0, want));
  }
}

TEST(BradleyTerry, GradientMatchesDifference) {
  for (double d : {-3.0, -0.2, 0.0, 1.5, 8.0}) {
    const double h = 1e-6;
    EXPECT_NEAR(bt_loss_grad(d, 0.0), (bt_loss(d + h, 0.0) - bt_loss(d - h, 0.0)) / (2 * h), 1e-9);
  }
}

TEST(Gpm, UnitVectors) {
  const SkewOperator R(2);
  EXPECT_DOUBLE_EQ(gpm_score_diff(std::vector<double>{1, 0}, std::vector<double>{0, 1}, R), 1.0);
  EXPECT_DOUBLE_EQ(gpm_score_diff(std::vector<double>{0, 1}, std::vector<double>{1, 0}, R), -1.0);
}

TEST(Gpm, AntisymmetryAndSelfZero) {
  const SkewOperator R(4);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> u(-50, 50);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> a(4), b(4);
    for (auto& x : a) x = u(rng);
    for (auto& x : b) x = u(rng);
    EXPECT_EQ(gpm_score_diff(a, b, R), -gpm_score_diff(b, a, R));
    EXPECT_EQ(gpm_score_diff(a, a, R), 0.0);
  }
}

TEST(Gpm, GradientMatchesDifference) {
  const SkewOperator R(4);
  const std::vector<double> a = {0.3, -1.2, 0.8, 2.0}, b = {-0.5, 0.1, 1.1, -0.7};
  const auto [ga, gb] = gpm_score_diff_grad(a, b, R);
  for (int i = 0; i < 4; ++i) {
    auto ap = a, am = a, bp = b, bm = b;
    ap[i] += 1e-6;
    am[i] -= 1e-6;
    bp[i] += 1e-6;
    bm[i] -= 1e-6;
    EXPECT_NEAR(ga[i], (gpm_score_diff(ap, b, R) - gpm_score_diff(am, b, R)) / 2e-6, 1e-8);
    EXPECT_NEAR(gb[i], (gpm_score_diff(a, bp, R) - gpm_score_diff(a, bm, R)) / 2e-6, 1e-8);
  }
}

TEST(Gpm, OperatorValidation) {
  EXPECT_THROW(SkewOperator(3), ConfigError);
  EXPECT_THROW(SkewOperator::from_matrix(2, {0, 1, 1, 0}), ConfigError);
  EXPECT_THROW(SkewOperator::from_matrix(2, {0, 1}), ShapeError);
  EXPECT_THROW(gpm_score_diff(std::vector<double>{1, 0, 0}, std::vector<double>{1, 0}, SkewOperator(2)), ShapeError);
}

TEST(CrossEntropy, KnownValues) {
  EXPECT_NEAR(ce_term(-3.0, true), 3.048587, 1e-6);
  EXPECT_NEAR(ce_term(3.0, false), 3.048587, 1e-6);
  EXPECT_NEAR(ce_loss(0.0, 0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(ce_loss(-3.0, std::nullopt), 3.048587, 1e-6);
  EXPECT_NEAR(ce_loss(std::nullopt, 3.0), 3.048587, 1e-6);
  EXPECT_THROW(ce_loss(std::nullopt, std::nullopt), ConfigError);
  const double scores[] = {-3.0, 0.0};
  const bool labels[] = {true, false};
  EXPECT_NEAR(ce_loss_batch(scores, labels), 0.5 * (3.048587 + std::log(2.0)), 1e-6);
}

TEST(CrossEntropy, HighPrecisionOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int i = 0; i < 1000; ++i) {
    const double s = u(rng);
    EXPECT_NEAR(ce_term(s, true), softplus_ref(-s), 4e-16 * std::max(1.0, std::abs(s)));
    EXPECT_NEAR(ce_term_grad(s, false), sigmoid_ref(s), 2.3e-16);
  }
}

TEST(PreferenceProb, ValuesAndComplement) {
  EXPECT_NEAR(preference_prob(1.0, 0.0), 0.731059, 1e-6);
  EXPECT_EQ(preference_prob(0.0, 0.0), 0.5);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int i = 0; i < 10000; ++i) {
    const double a = u(rng), b = u(rng);
    const double s = preference_prob(a, b) + preference_prob(b, a);
    EXPECT_LE(std::abs(s - 1.0), std::nextafter(1.0, 2.0) - 1.0);
    EXPECT_NEAR(preference_prob(a, b), sigmoid_ref(a - b), 1e-15);
  }
}

TEST(PreferenceProb, Monotone) {
  double prev = 0.0;
  for (double d = -40.0; d <= 40.0; d += 0.01) {
    const double p = preference_prob(d, 0.0);
    EXPECT_GE(p, prev);
    prev = p;
  }
}

TEST(MedianLabels, EvenCountSplits) {
  const std::vector<ScoredExample> items = {scored(1), scored(2), scored(3), scored(4)};
  const auto out = cross_prompt_label(items);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_FALSE(out[0].label);
  EXPECT_FALSE(out[1].label);
  EXPECT_TRUE(out[2].label);
  EXPECT_TRUE(out[3].label);
}

TEST(MedianLabels, MedianItemsDropped) {
  const auto out = cross_prompt_label(std::vector<ScoredExample>{scored(1), scored(2), scored(3)});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_FALSE(out[0].label);
  EXPECT_TRUE(out[1].label);
}

TEST(MedianLabels, DegenerateInputs) {
  EXPECT_THROW(cross_prompt_label(std::vector<ScoredExample>{scored(5), scored(5), scored(5)}), LabelingError);
  EXPECT_THROW(cross_prompt_label(std::vector<ScoredExample>{scored(1)}), LabelingError);
}
