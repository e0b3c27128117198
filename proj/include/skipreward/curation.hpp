#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "data.hpp"
#include "levenshtein.hpp"

namespace skipreward {

namespace detail {

inline std::vector<std::string> holdout_prompts(const Dataset& holdout) {
  std::vector<std::string> out;
  for (const auto& p : holdout.pairs) out.push_back(p.prompt.raw);
  for (const auto& b : holdout.binary) out.push_back(b.prompt.raw);
  for (const auto& s : holdout.scored) out.push_back(s.prompt.raw);
  return out;
}

template <class Example>
std::vector<Example> keep_distant(const std::vector<Example>& items, const std::vector<std::string>& holdout,
                                  double threshold) {
  std::vector<Example> out;
  for (const auto& ex : items) {
    bool overlaps = false;
    for (const auto& h : holdout) {
      if (normalized_levenshtein(ex.prompt.raw, h) < threshold) {
        overlaps = true;
        break;
      }
    }
    if (!overlaps) out.push_back(ex);
  }
  return out;
}

}  // namespace detail

// Drops every training example whose prompt is closer than `threshold`
// (normalized edit distance) to some holdout prompt.
inline Dataset filter_overlap(const Dataset& train, const Dataset& holdout, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must be in [0,1]");
  const auto prompts = detail::holdout_prompts(holdout);
  Dataset out;
  out.pairs = detail::keep_distant(train.pairs, prompts, threshold);
  out.binary = detail::keep_distant(train.binary, prompts, threshold);
  out.scored = detail::keep_distant(train.scored, prompts, threshold);
  return out;
}

struct MiningStats {
  std::size_t negative_prompt_pairs = 0;
  std::size_t negative_image_pairs = 0;
};

// Appends hard-negative pairs to `dataset`. For every prompt t and each of its
// best-aligned (chosen) images i_k:
//   - (t, i_k) vs (t_neg, i_k), t_neg the closest other prompt by normalized
//     edit distance;
//   - (t, i_k) vs (t, i_neg), i_neg the closest image by pixel L2 among images
//     that are not best-aligned for t.
// Ties resolve to the lowest dataset index.
inline std::vector<PairExample> mine_hard_negatives(const std::vector<PairExample>& dataset,
                                                    MiningStats* stats = nullptr) {
  std::vector<std::string> prompts;
  std::map<std::string, std::size_t> prompt_index;
  std::vector<const TextPrompt*> prompt_objects;
  std::vector<const SyntheticImage*> pool;
  auto add_to_pool = [&pool](const SyntheticImage& img) {
    for (const auto* q : pool)
      if (q->pixels == img.pixels) return;
    pool.push_back(&img);
  };

  // best-aligned images per prompt, in first-seen order
  std::vector<std::vector<const SyntheticImage*>> best;
  std::vector<Perspective> group_perspective;

  for (const auto& pair : dataset) {
    if (pair.rejected_prompt) continue;  // previously mined
    auto [it, inserted] = prompt_index.try_emplace(pair.prompt.raw, prompts.size());
    if (inserted) {
      prompts.push_back(pair.prompt.raw);
      prompt_objects.push_back(&pair.prompt);
      best.emplace_back();
      group_perspective.push_back(pair.perspective);
    }
    auto& group = best[it->second];
    bool seen = false;
    for (const auto* q : group) seen = seen || q->pixels == pair.chosen.pixels;
    if (!seen) group.push_back(&pair.chosen);
    add_to_pool(pair.chosen);
    add_to_pool(pair.rejected);
  }

  if (prompts.size() < 2) throw MiningError("negative prompts need at least 2 distinct prompts");
  if (pool.size() < 2) throw MiningError("negative images need at least 2 distinct images");

  std::vector<PairExample> out = dataset;
  MiningStats local;
  for (std::size_t t = 0; t < prompts.size(); ++t) {
    std::size_t neg_prompt = t;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t u = 0; u < prompts.size(); ++u) {
      if (u == t) continue;
      const double d = normalized_levenshtein(prompts[t], prompts[u]);
      if (d < best_dist) {
        best_dist = d;
        neg_prompt = u;
      }
    }

    for (const SyntheticImage* positive : best[t]) {
      PairExample by_prompt;
      by_prompt.prompt = *prompt_objects[t];
      by_prompt.chosen = *positive;
      by_prompt.rejected = *positive;
      by_prompt.rejected_prompt = *prompt_objects[neg_prompt];
      by_prompt.perspective = group_perspective[t];
      out.push_back(std::move(by_prompt));
      ++local.negative_prompt_pairs;

      const SyntheticImage* neg_image = nullptr;
      double best_l2 = std::numeric_limits<double>::infinity();
      for (const SyntheticImage* cand : pool) {
        bool excluded = cand->pixels == positive->pixels;
        for (const auto* q : best[t]) excluded = excluded || q->pixels == cand->pixels;
        if (excluded) continue;
        const double d = pixel_l2_squared(*positive, *cand);
        if (d < best_l2) {
          best_l2 = d;
          neg_image = cand;
        }
      }
      if (neg_image == nullptr)
        throw MiningError("no candidate negative image for prompt '" + prompts[t] + "'");
      PairExample by_image;
      by_image.prompt = *prompt_objects[t];
      by_image.chosen = *positive;
      by_image.rejected = *neg_image;
      by_image.perspective = group_perspective[t];
      out.push_back(std::move(by_image));
      ++local.negative_image_pairs;
    }
  }
  if (stats) *stats = local;
  return out;
}

}  // namespace skipreward
