#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include <skipreward/data.hpp>

#include "test_support.hpp"

using namespace skipreward;

TEST(Prompt, ByteTokens) {
  const TextPrompt p = TextPrompt::from_text("a red square");
  EXPECT_EQ(p.raw, "a red square");
  ASSERT_EQ(p.tokens.size(), 12u);
  EXPECT_EQ(p.tokens[0], 'a');
  EXPECT_THROW(TextPrompt::from_text(""), ConfigError);
  EXPECT_THROW(TextPrompt::from_text(std::string(1, '\xff')), ConfigError);
}

TEST(Prompt, TextRoundTrip) {
  for (int count = 1; count <= 4; ++count)
    for (int color = 0; color < 8; ++color)
      for (int shape = 0; shape < 6; ++shape) {
        const PromptAttributes a{shape, color, count};
        const auto back = parse_prompt_attributes(prompt_text(a));
        ASSERT_TRUE(back.has_value()) << prompt_text(a);
        EXPECT_EQ(back->shape, shape);
        EXPECT_EQ(back->color, color);
        EXPECT_EQ(back->count, count);
      }
  EXPECT_EQ(prompt_text({0, 0, 2}), "two red squares");
  EXPECT_FALSE(parse_prompt_attributes("a red squares").has_value());
  EXPECT_FALSE(parse_prompt_attributes("a red square please").has_value());
  EXPECT_FALSE(parse_prompt_attributes("purple").has_value());
}

TEST(Corpus, Deterministic) {
  const CorpusSpec spec;
  const Corpus a = gen_synthetic_corpus(42, 50, spec);
  const Corpus b = gen_synthetic_corpus(42, 50, spec);
  const Corpus c = gen_synthetic_corpus(43, 50, spec);
  EXPECT_TRUE(a.pairs == b.pairs);
  EXPECT_TRUE(a.binary == b.binary);
  EXPECT_FALSE(a.pairs == c.pairs);
}

TEST(Corpus, ChosenAlwaysPreferredByRule) {
  for (Perspective p : kAllPerspectives) {
    CorpusSpec spec;
    spec.perspective = p;
    const Corpus c = gen_synthetic_corpus(7, 1000, spec);
    ASSERT_EQ(c.pairs.size(), 1000u);
    const auto n = std::count_if(c.pairs.begin(), c.pairs.end(), preferred_by_rule);
    EXPECT_EQ(n, 1000) << to_string(p);
  }
}

TEST(Corpus, ImagesHaveSpecShape) {
  CorpusSpec spec;
  spec.height = 8;
  spec.width = 12;
  const Corpus c = gen_synthetic_corpus(1, 5, spec);
  for (const auto& p : c.pairs) {
    EXPECT_EQ(p.chosen.height, 8);
    EXPECT_EQ(p.chosen.width, 12);
    EXPECT_EQ(p.chosen.pixels.size(), 8u * 12u * 3u);
    EXPECT_EQ(p.perspective, Perspective::alignment);
  }
}

TEST(Corpus, BindingKeepsBagOfFeatures) {
  CorpusSpec spec;
  spec.binding = true;
  spec.n_distractors = 3;
  spec.n_corruption_levels = 1;
  const Corpus c = gen_synthetic_corpus(3, 200, spec);
  for (const auto& pair : c.pairs) {
    const auto& a = pair.chosen.attributes;
    const auto& b = pair.rejected.attributes;
    std::multiset<int> shapes_a{a.shape}, shapes_b{b.shape}, colors_a{a.color}, colors_b{b.color};
    for (const auto& d : a.distractors) {
      shapes_a.insert(d.shape);
      colors_a.insert(d.color);
    }
    for (const auto& d : b.distractors) {
      shapes_b.insert(d.shape);
      colors_b.insert(d.color);
    }
    EXPECT_EQ(shapes_a, shapes_b);
    EXPECT_EQ(colors_a, colors_b);
    EXPECT_EQ(a.distractors.size(), b.distractors.size());
    EXPECT_TRUE(preferred_by_rule(pair));
  }
}

TEST(Corpus, InvalidSpecsRejected) {
  CorpusSpec s;
  s.n_shapes = 0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.binding = true;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.perspective = Perspective::fidelity;
  s.n_corruption_levels = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(gen_synthetic_corpus(0, 0, CorpusSpec{}), ConfigError);
}

TEST(Corpus, SafetyBinaryLabelsFollowUnsafeFlag) {
  CorpusSpec spec;
  spec.perspective = Perspective::safety;
  const Corpus c = gen_synthetic_corpus(9, 300, spec);
  int positives = 0;
  for (const auto& b : c.binary) {
    EXPECT_EQ(b.label, !b.image.attributes.unsafe);
    positives += b.label;
  }
  EXPECT_GT(positives, 90);
  EXPECT_LT(positives, 210);
}

TEST(Scored, ScoresFollowRule) {
  CorpusSpec spec;
  const auto ex = gen_scored_examples(4, 100, spec);
  for (const auto& e : ex) {
    const auto p = parse_prompt_attributes(e.prompt.raw);
    ASSERT_TRUE(p.has_value());
    EXPECT_EQ(e.score, alignment_score(*p, e.image.attributes));
  }
}

TEST(Render, NoJitterIsPositionStable) {
  CorpusSpec spec;
  spec.position_jitter = false;
  ImageAttributes a;
  a.shape = 0;
  a.color = 0;
  std::mt19937_64 r1(1), r2(2);
  const SyntheticImage x = render_image(a, spec, r1);
  const SyntheticImage y = render_image(a, spec, r2);
  // background shade varies; the object mask must not
  for (int yy = 0; yy < spec.height; ++yy)
    for (int xx = 0; xx < spec.width; ++xx)
      EXPECT_EQ(x.at(yy, xx, 0) > 0.5, y.at(yy, xx, 0) > 0.5);
}

TEST(Patches, RasterOrderOracle) {
  SyntheticImage img;
  img.height = 8;
  img.width = 8;
  img.channels = 3;
  img.pixels.resize(8 * 8 * 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i % 251);
  const Matrix<double> p = image_patches<double>(img, 4);
  ASSERT_EQ(p.rows(), 4u);
  ASSERT_EQ(p.cols(), 48u);
  for (int by = 0; by < 2; ++by)
    for (int bx = 0; bx < 2; ++bx)
      for (int py = 0; py < 4; ++py)
        for (int px = 0; px < 4; ++px)
          for (int c = 0; c < 3; ++c) {
            const int y = by * 4 + py, x = bx * 4 + px;
            const double want = img.pixels[(y * 8 + x) * 3 + c] / 255.0;
            EXPECT_EQ(p(by * 2 + bx, (py * 4 + px) * 3 + c), want);
          }
  EXPECT_THROW(image_patches<double>(img, 3), ShapeError);
}

TEST(Pixels, L2Squared) {
  SyntheticImage a, b;
  a.height = b.height = 1;
  a.width = b.width = 2;
  a.channels = b.channels = 3;
  a.pixels = {0, 0, 0, 255, 255, 255};
  b.pixels = {255, 0, 0, 255, 255, 255};
  EXPECT_DOUBLE_EQ(pixel_l2_squared(a, b), 1.0);
  EXPECT_DOUBLE_EQ(pixel_l2_squared(a, a), 0.0);
  b.pixels.pop_back();
  EXPECT_THROW(pixel_l2_squared(a, b), ShapeError);
}
