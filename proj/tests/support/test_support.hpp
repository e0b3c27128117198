#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <skipreward/evaluation.hpp>
#include <skipreward/training.hpp>

namespace testsupport {

using namespace skipreward;

// 8x8 images, 4 visual tokens, d_model 8.
inline ModelConfig tiny_config(int d_model = 8) {
  ModelConfig c;
  c.d_model = d_model;
  c.n_layers = 2;
  c.n_heads = 2;
  c.lora_rank = 2;
  c.lora_alpha = 2.0;
  c.mlp_ratio = 2;
  c.image_height = 8;
  c.image_width = 8;
  c.patch_size = 4;
  c.max_seq = 32;
  return c;
}

inline CorpusSpec tiny_corpus(Perspective p = Perspective::alignment) {
  CorpusSpec s;
  s.perspective = p;
  s.height = 8;
  s.width = 8;
  return s;
}

inline std::vector<PairExample> tiny_pairs(std::uint64_t seed, int n, Perspective p = Perspective::alignment) {
  return gen_synthetic_corpus(seed, n, tiny_corpus(p)).pairs;
}

template <class T>
RewardModel<T> tiny_model(std::uint64_t seed, const HeadConfig& hc = {}, int d_model = 8) {
  auto m = RewardModel<T>::random(tiny_config(d_model), seed);
  m.add_perspective(Perspective::alignment, hc, seed + 1);
  return m;
}

inline HeadConfig head_for(Objective o) {
  HeadConfig hc;
  if (o == Objective::gpm) hc.output_dim = 2;
  return hc;
}

// Asymptotic two-sample Kolmogorov-Smirnov p-value with the usual
// small-sample correction of the statistic.
inline double ks_two_sample_p(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  const double lambda = (ne + 0.12 + 0.11 / ne) * d;
  if (lambda < 1e-3) return 1.0;
  double q = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    q += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(q, 0.0, 1.0);
}

// O(n^2) reference counts.
inline PairCounts brute_pair_counts(const std::vector<double>& m, const std::vector<double>& h) {
  PairCounts c;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = i + 1; j < m.size(); ++j) {
      ++c.total;
      const bool mt = m[i] == m[j];
      const bool ht = h[i] == h[j];
      c.model_ties += mt;
      c.human_ties += ht;
      c.joint_ties += mt && ht;
      if (!mt && !ht && ((m[i] < m[j]) != (h[i] < h[j]))) ++c.discordant;
    }
  return c;
}

inline double brute_tau_b(const std::vector<double>& m, const std::vector<double>& h) {
  double conc = 0, disc = 0, tm = 0, th = 0, n0 = 0;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = i + 1; j < m.size(); ++j) {
      ++n0;
      const double s = (m[i] - m[j]) * (h[i] - h[j]);
      if (s > 0) ++conc;
      if (s < 0) ++disc;
      if (m[i] == m[j]) ++tm;
      if (h[i] == h[j]) ++th;
    }
  return (conc - disc) / std::sqrt((n0 - tm) * (n0 - th));
}

inline double brute_pairwise_acc(const std::vector<double>& m, const std::vector<double>& h) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = i + 1; j < m.size(); ++j) {
      if (h[i] == h[j]) continue;
      ++den;
      if (m[i] == m[j])
        num += 0.5;
      else if ((m[i] < m[j]) == (h[i] < h[j]))
        num += 1.0;
    }
  return num / den;
}

inline double brute_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const long double n = static_cast<long double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const long double mx = sx / n, my = sy / n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

// Scores drawn from a small integer grid so ties are common.
inline std::vector<double> tie_heavy_scores(std::mt19937_64& rng, std::size_t n, int levels) {
  std::uniform_int_distribution<int> u(0, levels - 1);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

template <class T>
double max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.values()[i]) - static_cast<double>(b.values()[i])));
  return m;
}

template <class T>
PerspectiveAdapter<T> snapshot(const RewardModel<T>& m, Perspective p = Perspective::alignment) {
  return m.adapter(p);
}

// Bitwise image of every frozen tensor.
template <class T>
std::vector<std::vector<T>> frozen_snapshot(const RewardModel<T>& m) {
  std::vector<std::vector<T>> out;
  m.backbone().body().for_each([&out](const std::string&, const Matrix<T>& w) {
    out.emplace_back(w.values().begin(), w.values().end());
  });
  return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("skipreward_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testsupport
