#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "data.hpp"

namespace skipreward {

enum class Objective { bt, gpm, ce };

inline const char* to_string(Objective o) {
  switch (o) {
    case Objective::bt: return "bt";
    case Objective::gpm: return "gpm";
    case Objective::ce: return "ce";
  }
  return "unknown";
}

inline Objective parse_objective(std::string_view s) {
  if (s == "bt") return Objective::bt;
  if (s == "gpm") return Objective::gpm;
  if (s == "ce") return Objective::ce;
  throw ConfigError("unknown objective '" + std::string(s) + "'");
}

// Pairwise ranking loss -log σ((s_c - s_r) / T), evaluated as softplus.
inline double bt_loss(double s_chosen, double s_rejected, double temperature = 1.0) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ConfigError("temperature must be positive and finite");
  return softplus((s_rejected - s_chosen) / temperature);
}

// d bt_loss / d s_chosen (the rejected-side derivative is its negation).
inline double bt_loss_grad(double s_chosen, double s_rejected, double temperature = 1.0) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  return -sigmoid((s_rejected - s_chosen) / temperature) / temperature;
}

// m x m skew-symmetric matrix, row-major.
class SkewOperator {
 public:
  // Block-diagonal with [[0,-1],[1,0]] blocks.
  explicit SkewOperator(int m = 2) : m_(m), r_(static_cast<std::size_t>(m) * m, 0.0) {
    if (m < 2 || m % 2 != 0) throw ConfigError("preference operator dimension must be even and >= 2");
    for (int b = 0; b < m; b += 2) {
      ref(b, b + 1) = -1.0;
      ref(b + 1, b) = 1.0;
    }
  }

  static SkewOperator from_matrix(int m, std::vector<double> values) {
    SkewOperator op(m);
    if (values.size() != static_cast<std::size_t>(m) * m) throw ShapeError("operator needs m*m values");
    op.r_ = std::move(values);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        if (op.at(i, j) != -op.at(j, i)) throw ConfigError("operator is not skew-symmetric");
    return op;
  }

  int dim() const { return m_; }
  double at(int i, int j) const { return r_[static_cast<std::size_t>(i) * m_ + j]; }

 private:
  double& ref(int i, int j) { return r_[static_cast<std::size_t>(i) * m_ + j]; }
  int m_;
  std::vector<double> r_;
};

// s_c - s_r = <R r_c, r_r>.
template <class V>
double gpm_score_diff(const V& r_chosen, const V& r_rejected, const SkewOperator& R) {
  const auto m = static_cast<std::size_t>(R.dim());
  if (r_chosen.size() != m || r_rejected.size() != m) throw ShapeError("embedding dimension does not match operator");
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double ri = 0.0;
    for (std::size_t j = 0; j < m; ++j) ri += R.at(static_cast<int>(i), static_cast<int>(j)) * r_chosen[j];
    s += ri * r_rejected[i];
  }
  return s;
}

// Gradients of gpm_score_diff: d/dr_c = R^T r_r, d/dr_r = R r_c.
template <class V>
std::pair<std::vector<double>, std::vector<double>> gpm_score_diff_grad(const V& r_chosen, const V& r_rejected,
                                                                       const SkewOperator& R) {
  const int m = R.dim();
  std::vector<double> gc(m, 0.0), gr(m, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      gc[j] += R.at(i, j) * r_rejected[i];
      gr[i] += R.at(i, j) * r_chosen[j];
    }
  return {gc, gr};
}

// One labeled term: -log σ(s) for true, -log(1 - σ(s)) for false.
inline double ce_term(double score, bool label) { return label ? softplus(-score) : softplus(score); }

// d ce_term / d score = σ(s) - label.
inline double ce_term_grad(double score, bool label) { return sigmoid(score) - (label ? 1.0 : 0.0); }

// Mean over the present terms; chosen is labeled true, rejected false.
inline double ce_loss(std::optional<double> s_chosen, std::optional<double> s_rejected) {
  if (!s_chosen && !s_rejected) throw ConfigError("ce_loss needs at least one score");
  double total = 0.0;
  int n = 0;
  if (s_chosen) {
    total += ce_term(*s_chosen, true);
    ++n;
  }
  if (s_rejected) {
    total += ce_term(*s_rejected, false);
    ++n;
  }
  return total / n;
}

inline double ce_loss_batch(std::span<const double> scores, std::span<const bool> labels) {
  if (scores.empty() || scores.size() != labels.size()) throw ShapeError("scores and labels must match and be non-empty");
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) total += ce_term(scores[i], labels[i]);
  return total / static_cast<double>(scores.size());
}

// P(i_c ≻ i_r | t) = σ(s_c - s_r). The negative branch is the exact complement
// of the positive one, so P(a,b) + P(b,a) == 1.
inline double preference_prob(double s_a, double s_b) {
  const double d = s_a - s_b;
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  const double p_other = 1.0 / (1.0 + e);
  const double complement = 1.0 - p_other;
  // keep tail precision when the complement rounds to zero
  return complement > 0.0 ? complement : e / (1.0 + e);
}

// Labels every item against the global median of all scores: above is true,
// below false, items exactly at the median are dropped.
template <class Item>
std::vector<BinaryExample> cross_prompt_label(const std::vector<Item>& scored) {
  if (scored.size() < 2) throw LabelingError("cross-prompt labeling needs at least 2 scored examples");
  std::vector<double> s;
  s.reserve(scored.size());
  for (const auto& it : scored) s.push_back(it.score);
  std::sort(s.begin(), s.end());
  if (s.front() == s.back()) throw LabelingError("all scores identical; no median split possible");
  const std::size_t n = s.size();
  const double median = n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
  std::vector<BinaryExample> out;
  for (const auto& it : scored) {
    if (it.score == median) continue;
    BinaryExample b;
    b.prompt = it.prompt;
    b.image = it.image;
    b.perspective = it.perspective;
    b.label = it.score > median;
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace skipreward
