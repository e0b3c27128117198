#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "objectives.hpp"

namespace skipreward {

enum class Judgment { chosen, rejected, tie };

inline const char* to_string(Judgment j) {
  switch (j) {
    case Judgment::chosen: return "chosen";
    case Judgment::rejected: return "rejected";
    case Judgment::tie: return "tie";
  }
  return "unknown";
}

struct PairJudgment {
  Judgment predicted = Judgment::tie;
  Judgment ground_truth = Judgment::tie;
};

// Model output for one evaluated pair: the score difference s_c - s_r (for
// preference embeddings, the skew inner product).
struct PairRecord {
  double score_diff = 0.0;
  Judgment ground_truth = Judgment::chosen;
};

// Tie when the preference probability is within tie_eps of 1/2.
inline Judgment judge_diff(double score_diff, double tie_eps) {
  if (!(tie_eps >= 0.0)) throw ConfigError("tie_eps must be >= 0");
  if (std::abs(preference_prob(score_diff, 0.0) - 0.5) <= tie_eps) return Judgment::tie;
  return score_diff > 0.0 ? Judgment::chosen : Judgment::rejected;
}

inline Judgment judge_pair(double s_chosen, double s_rejected, double tie_eps) {
  if (!(tie_eps >= 0.0)) throw ConfigError("tie_eps must be >= 0");
  if (std::abs(preference_prob(s_chosen, s_rejected) - 0.5) <= tie_eps) return Judgment::tie;
  return s_chosen > s_rejected ? Judgment::chosen : Judgment::rejected;
}

inline std::vector<PairJudgment> judge_all(std::span<const PairRecord> records, double tie_eps) {
  std::vector<PairJudgment> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({judge_diff(r.score_diff, tie_eps), r.ground_truth});
  return out;
}

// Exact three-way match rate.
inline double accuracy_with_ties(std::span<const PairJudgment> judgments) {
  if (judgments.empty()) throw ConfigError("accuracy needs at least one judgment");
  std::size_t hit = 0;
  for (const auto& j : judgments) hit += j.predicted == j.ground_truth;
  return static_cast<double>(hit) / static_cast<double>(judgments.size());
}

inline double accuracy_with_ties(std::span<const PairRecord> records, double tie_eps) {
  const auto j = judge_all(records, tie_eps);
  return accuracy_with_ties(std::span<const PairJudgment>(j));
}

// Binary match rate with forced decisions (tie_eps = 0), over pairs where
// neither the ground truth nor the forced prediction is a tie.
inline double accuracy_without_ties(std::span<const PairRecord> records) {
  if (records.empty()) throw ConfigError("accuracy needs at least one pair");
  std::size_t hit = 0;
  std::size_t counted = 0;
  for (const auto& r : records) {
    if (r.ground_truth == Judgment::tie) continue;
    const Judgment forced = judge_diff(r.score_diff, 0.0);
    if (forced == Judgment::tie) continue;
    ++counted;
    hit += forced == r.ground_truth;
  }
  if (counted == 0) throw ConfigError("no non-tied pairs to score");
  return static_cast<double>(hit) / static_cast<double>(counted);
}

// ---------------------------------------------------------------------------
// Correlations over (model score, human score) lists
// ---------------------------------------------------------------------------

inline void check_lists(std::span<const double> model, std::span<const double> human) {
  if (model.size() != human.size()) throw ShapeError("score lists differ in length");
  if (model.size() < 2) throw ConfigError("correlation needs at least 2 items");
}

inline double pearson(std::span<const double> model, std::span<const double> human) {
  check_lists(model, human);
  const double n = static_cast<double>(model.size());
  const double mx = std::accumulate(model.begin(), model.end(), 0.0) / n;
  const double my = std::accumulate(human.begin(), human.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double dx = model[i] - mx;
    const double dy = human[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("correlation undefined for zero-variance input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Pair counts over all i < j: pairs tied in model score, tied in human score,
// tied in both, and discordant pairs (strictly opposite order).
struct PairCounts {
  std::int64_t total = 0;
  std::int64_t model_ties = 0;
  std::int64_t human_ties = 0;
  std::int64_t joint_ties = 0;
  std::int64_t discordant = 0;

  std::int64_t concordant() const { return total - model_ties - human_ties + joint_ties - discordant; }
};

namespace detail {

inline std::int64_t tied_pairs_sorted(const std::vector<double>& v) {
  std::int64_t ties = 0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    while (j < v.size() && v[j] == v[i]) ++j;
    const auto t = static_cast<std::int64_t>(j - i);
    ties += t * (t - 1) / 2;
    i = j;
  }
  return ties;
}

// Sorts v[lo, hi) and returns the number of inversions.
inline std::int64_t merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t inv = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
  return inv;
}

}  // namespace detail

// O(n log n) pair counting (sort by model score, then count human-score
// inversions with a merge sort).
inline PairCounts count_pairs(std::span<const double> model, std::span<const double> human) {
  check_lists(model, human);
  const std::size_t n = model.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return model[a] != model[b] ? model[a] < model[b] : human[a] < human[b];
  });
  PairCounts c;
  c.total = static_cast<std::int64_t>(n) * (static_cast<std::int64_t>(n) - 1) / 2;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && model[idx[j]] == model[idx[i]]) ++j;
    const auto t = static_cast<std::int64_t>(j - i);
    c.model_ties += t * (t - 1) / 2;
    std::size_t k = i;
    while (k < j) {
      std::size_t m = k;
      while (m < j && human[idx[m]] == human[idx[k]]) ++m;
      const auto u = static_cast<std::int64_t>(m - k);
      c.joint_ties += u * (u - 1) / 2;
      k = m;
    }
    i = j;
  }
  std::vector<double> ys(n);
  for (std::size_t k = 0; k < n; ++k) ys[k] = human[idx[k]];
  std::vector<double> buf(n);
  c.discordant = detail::merge_count(ys, buf, 0, n);
  c.human_ties = detail::tied_pairs_sorted(ys);
  return c;
}

// Kendall tau-b.
inline double kendall_tau(std::span<const double> model, std::span<const double> human) {
  const PairCounts c = count_pairs(model, human);
  const std::int64_t num = c.concordant() - c.discordant;
  const std::int64_t dm = c.total - c.model_ties;
  const std::int64_t dh = c.total - c.human_ties;
  if (dm == 0 || dh == 0) throw NumericError("Kendall tau undefined when one list is constant");
  return static_cast<double>(num) / std::sqrt(static_cast<double>(dm) * static_cast<double>(dh));
}

// Concordant fraction over pairs with distinct human scores; pairs tied in
// model score count one half.
inline double pairwise_acc(std::span<const double> model, std::span<const double> human) {
  const PairCounts c = count_pairs(model, human);
  const std::int64_t denom = c.total - c.human_ties;
  if (denom == 0) throw NumericError("pairwise accuracy undefined when human scores are all tied");
  const std::int64_t model_only_ties = c.model_ties - c.joint_ties;
  return (static_cast<double>(c.concordant()) + 0.5 * static_cast<double>(model_only_ties)) /
         static_cast<double>(denom);
}

// F1 on the positive class; 0 when precision + recall is 0.
inline double f1_binary(std::span<const bool> predictions, std::span<const bool> labels) {
  if (predictions.size() != labels.size() || predictions.empty())
    throw ShapeError("predictions and labels must be non-empty and of equal length");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    tp += predictions[i] && labels[i];
    fp += predictions[i] && !labels[i];
    fn += !predictions[i] && labels[i];
  }
  const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

struct MetricValue {
  std::string name;
  double value = 0.0;
  std::size_t n = 0;
};

}  // namespace skipreward
