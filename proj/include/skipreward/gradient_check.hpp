#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "training.hpp"

namespace skipreward {

struct GradCheckConfig {
  double epsilon = 1e-5;
  std::size_t n_samples = 64;
  std::uint64_t seed = 0;
  // Applied to the analytic gradients before comparison (negative control).
  std::function<void(PerspectiveAdapter<double>&)> corrupt;
};

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;
  std::vector<GradCheckEntry> entries;
};

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

// Fills every trainable tensor with N(0, stddev^2) so no factor sits at zero.
inline void randomize_adapter(PerspectiveAdapter<double>& a, std::mt19937_64& rng, double stddev = 0.3) {
  a.for_each([&](const std::string&, Matrix<double>& m) { detail::fill_normal(m, rng, stddev); });
}

// Central differences over a random subsample of trainable scalars.
template <class Example>
GradCheckResult gradient_check(RewardModel<double>& model, Perspective p, std::span<const Example> batch,
                               const TrainConfig& tc, const GradCheckConfig& gc) {
  if (!(gc.epsilon >= 1e-6 && gc.epsilon <= 1e-3)) throw ConfigError("epsilon must be in [1e-6, 1e-3]");
  if (gc.n_samples < 1) throw ConfigError("n_samples must be >= 1");
  PerspectiveAdapter<double> grads = zeros_like(model.adapter(p));
  batch_loss(model, p, batch, tc, &grads, 1.0);
  grads.for_each([](const std::string& name, const Matrix<double>& m) {
    for (double x : m.values())
      if (!std::isfinite(x)) throw NumericError("non-finite gradient in " + name);
  });
  if (gc.corrupt) gc.corrupt(grads);

  struct Slot {
    std::string name;
    Matrix<double>* param;
    const Matrix<double>* grad;
  };
  std::vector<Slot> slots;
  {
    std::vector<std::pair<std::string, Matrix<double>*>> ps;
    model.adapter(p).for_each([&ps](const std::string& n, Matrix<double>& m) { ps.emplace_back(n, &m); });
    std::vector<const Matrix<double>*> gs;
    grads.for_each([&gs](const std::string&, const Matrix<double>& m) { gs.push_back(&m); });
    for (std::size_t i = 0; i < ps.size(); ++i) slots.push_back({ps[i].first, ps[i].second, gs[i]});
  }
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t s = 0; s < slots.size(); ++s)
    for (std::size_t j = 0; j < slots[s].param->size(); ++j) all.emplace_back(s, j);
  std::mt19937_64 rng(gc.seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(all.size(), gc.n_samples));

  GradCheckResult res;
  for (const auto& [s, j] : all) {
    double& x = slots[s].param->data()[j];
    const double x0 = x;
    x = x0 + gc.epsilon;
    const double lp = batch_loss(model, p, batch, tc);
    x = x0 - gc.epsilon;
    const double lm = batch_loss(model, p, batch, tc);
    x = x0;
    GradCheckEntry e;
    e.name = slots[s].name;
    e.index = j;
    e.analytic = slots[s].grad->data()[j];
    e.numeric = (lp - lm) / (2.0 * gc.epsilon);
    if (!std::isfinite(e.numeric)) throw NumericError("non-finite numeric gradient in " + e.name);
    e.rel_error = relative_error(e.analytic, e.numeric);
    if (e.rel_error >= res.max_rel_error) {
      res.max_rel_error = e.rel_error;
      res.worst = e.name + "[" + std::to_string(j) + "]";
    }
    res.entries.push_back(std::move(e));
  }
  return res;
}

}  // namespace skipreward
