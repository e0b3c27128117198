#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"

namespace skipreward {

using State = std::vector<double>;
using RewardFn = std::function<double(std::span<const double>)>;

// Variance-exploding toy process whose clean distribution is an isotropic
// Gaussian mixture. Step t = 0 is pure noise, t = N is clean; sigmas[t] is the
// noise scale at step t with sigmas[N] = 0.
class ToyDiffusion {
 public:
  struct Component {
    double weight = 1.0;
    State mean;
    double stddev = 0.5;
  };

  ToyDiffusion(std::vector<Component> components, std::vector<double> sigmas, double eta = 1.0)
      : components_(std::move(components)), sigmas_(std::move(sigmas)), eta_(eta) {
    validate();
    double total = 0.0;
    for (const auto& c : components_) total += c.weight;
    for (auto& c : components_) c.weight /= total;
  }

  // Geometric schedule from sigma_max down to sigma_min over n_steps levels,
  // followed by the clean level 0.
  static std::vector<double> geometric_schedule(int n_steps, double sigma_max = 10.0, double sigma_min = 0.02) {
    if (n_steps < 1) throw ConfigError("step count must be >= 1");
    if (!(sigma_max > 0.0) || !(sigma_min > 0.0) || sigma_min > sigma_max)
      throw ConfigError("need 0 < sigma_min <= sigma_max");
    std::vector<double> s(static_cast<std::size_t>(n_steps) + 1, 0.0);
    if (n_steps == 1) {
      s[0] = sigma_max;
      return s;
    }
    const double ratio = std::pow(sigma_min / sigma_max, 1.0 / (n_steps - 1));
    for (int t = 0; t < n_steps; ++t) s[t] = sigma_max * std::pow(ratio, t);
    return s;
  }

  // Four modes at (±2, ±2), stddev 0.5.
  static ToyDiffusion four_modes(int n_steps = 30, double eta = 1.0) {
    std::vector<Component> comps;
    for (double a : {-2.0, 2.0})
      for (double b : {-2.0, 2.0}) comps.push_back({1.0, {a, b}, 0.5});
    return ToyDiffusion(std::move(comps), geometric_schedule(n_steps), eta);
  }

  int steps() const { return static_cast<int>(sigmas_.size()) - 1; }
  std::size_t dim() const { return components_.front().mean.size(); }
  double sigma(int t) const { return sigmas_.at(static_cast<std::size_t>(t)); }
  double eta() const { return eta_; }
  const std::vector<Component>& components() const { return components_; }

  // Exact draw from the noisy marginal at t = 0.
  State sample_prior(std::mt19937_64& rng) const { return sample_marginal(0, rng); }

  State sample_marginal(int t, std::mt19937_64& rng) const {
    const Component& c = components_[pick_component(prior_weights(), rng)];
    const double sd = std::sqrt(c.stddev * c.stddev + sigma(t) * sigma(t));
    std::normal_distribution<double> z(0.0, 1.0);
    State x(dim());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = c.mean[i] + sd * z(rng);
    return x;
  }

  // Closed-form sampler for the clean distribution.
  State sample_target(std::mt19937_64& rng) const { return sample_marginal(steps(), rng); }

  // Component responsibilities of x under the marginal at step t.
  std::vector<double> responsibilities(std::span<const double> x, int t) const {
    check_state(x);
    std::vector<double> logp(components_.size());
    const double s2 = sigma(t) * sigma(t);
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const auto& c = components_[k];
      const double v = c.stddev * c.stddev + s2;
      double d2 = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - c.mean[i]) * (x[i] - c.mean[i]);
      logp[k] = std::log(c.weight) - 0.5 * static_cast<double>(x.size()) * std::log(v) - 0.5 * d2 / v;
    }
    const double m = *std::max_element(logp.begin(), logp.end());
    double z = 0.0;
    for (double& l : logp) z += (l = std::exp(l - m));
    for (double& l : logp) l /= z;
    return logp;
  }

  // One ancestral step t -> t+1. With eta = 0 the step is the deterministic
  // posterior mean of the next state.
  State denoise_step(std::span<const double> x, int t, std::mt19937_64& rng) const {
    if (t < 0 || t >= steps()) throw IndexError("denoise step " + std::to_string(t) + " outside [0, N)");
    const std::vector<double> w = responsibilities(x, t);
    const double s2t = sigma(t) * sigma(t);
    const double s2n = sigma(t + 1) * sigma(t + 1);
    State out(x.size(), 0.0);
    if (eta_ == 0.0) {
      for (std::size_t k = 0; k < components_.size(); ++k) {
        const auto& c = components_[k];
        const double v = c.stddev * c.stddev;
        const double shrink = (v + s2n) / (v + s2t);
        for (std::size_t i = 0; i < x.size(); ++i) out[i] += w[k] * (c.mean[i] + shrink * (x[i] - c.mean[i]));
      }
      return out;
    }
    const auto& c = components_[pick_component(w, rng)];
    const double v = c.stddev * c.stddev;
    const double shrink = (v + s2n) / (v + s2t);
    const double sd = eta_ * std::sqrt((v + s2n) * (s2t - s2n) / (v + s2t));
    std::normal_distribution<double> z(0.0, 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = c.mean[i] + shrink * (x[i] - c.mean[i]) + sd * z(rng);
    return out;
  }

  // Posterior mean of the clean sample given x at step t.
  State predict_terminal(std::span<const double> x, int t) const {
    if (t < 0 || t > steps()) throw IndexError("step " + std::to_string(t) + " outside [0, N]");
    if (t == steps()) return State(x.begin(), x.end());
    const std::vector<double> w = responsibilities(x, t);
    const double s2t = sigma(t) * sigma(t);
    State out(x.size(), 0.0);
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const auto& c = components_[k];
      const double v = c.stddev * c.stddev;
      const double shrink = v / (v + s2t);
      for (std::size_t i = 0; i < x.size(); ++i) out[i] += w[k] * (c.mean[i] + shrink * (x[i] - c.mean[i]));
    }
    return out;
  }

 private:
  void validate() const {
    if (components_.empty()) throw ConfigError("toy process needs at least one component");
    const std::size_t d = components_.front().mean.size();
    if (d == 0) throw ConfigError("state dimension must be >= 1");
    for (const auto& c : components_) {
      if (c.mean.size() != d) throw ConfigError("component means differ in dimension");
      if (!(c.weight > 0.0) || !(c.stddev > 0.0)) throw ConfigError("component weight and stddev must be positive");
    }
    if (sigmas_.size() < 2) throw ConfigError("step count must be >= 1");
    if (sigmas_.back() != 0.0) throw ConfigError("noise scale at the final step must be 0");
    for (std::size_t t = 0; t + 1 < sigmas_.size(); ++t) {
      if (!(sigmas_[t] > 0.0)) throw ConfigError("noise scales must be positive before the final step");
      if (t > 0 && !(sigmas_[t] < sigmas_[t - 1])) throw ConfigError("noise scales must be decreasing");
    }
    if (!(eta_ >= 0.0 && eta_ <= 1.0)) throw ConfigError("eta must be in [0, 1]");
  }

  void check_state(std::span<const double> x) const {
    if (x.size() != dim()) throw ShapeError("state has dimension " + std::to_string(x.size()));
  }

  std::vector<double> prior_weights() const {
    std::vector<double> w;
    for (const auto& c : components_) w.push_back(c.weight);
    return w;
  }

  static std::size_t pick_component(const std::vector<double>& w, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double r = u(rng);
    for (std::size_t k = 0; k + 1 < w.size(); ++k) {
      if (r < w[k]) return k;
      r -= w[k];
    }
    return w.size() - 1;
  }

  std::vector<Component> components_;
  std::vector<double> sigmas_;
  double eta_;
};

// r(x) = -||x - target||^2
inline RewardFn distance_reward(State target) {
  return [target = std::move(target)](std::span<const double> x) {
    if (x.size() != target.size()) throw ShapeError("reward target dimension mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d += (x[i] - target[i]) * (x[i] - target[i]);
    return -d;
  };
}

enum class ResampleRule { every_step, ess_threshold };
enum class FinalSelection { argmax_reward, weighted_sample };

inline ResampleRule parse_resample_rule(std::string_view s) {
  if (s == "every_step") return ResampleRule::every_step;
  if (s == "ess_threshold") return ResampleRule::ess_threshold;
  throw ConfigError("unknown resample rule '" + std::string(s) + "'");
}

inline FinalSelection parse_final_selection(std::string_view s) {
  if (s == "argmax_reward") return FinalSelection::argmax_reward;
  if (s == "weighted_sample") return FinalSelection::weighted_sample;
  throw ConfigError("unknown final selection '" + std::string(s) + "'");
}

inline const char* to_string(ResampleRule r) { return r == ResampleRule::every_step ? "every_step" : "ess_threshold"; }
inline const char* to_string(FinalSelection f) {
  return f == FinalSelection::argmax_reward ? "argmax_reward" : "weighted_sample";
}

struct SteeringConfig {
  int k = 4;
  double lambda = 10.0;
  ResampleRule resample_rule = ResampleRule::every_step;
  double ess_fraction = 0.5;
  FinalSelection selection = FinalSelection::argmax_reward;

  void validate() const {
    if (k < 1) throw ConfigError("particle count must be >= 1");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
    if (!(ess_fraction > 0.0 && ess_fraction <= 1.0)) throw ConfigError("ess_fraction must be in (0, 1]");
  }
};

struct Particle {
  State state;
  double log_weight = 0.0;
  double last_reward = 0.0;
};

struct StepDiagnostics {
  int step = 0;
  double ess = 0.0;
  double mean_reward = 0.0;
  double max_reward = 0.0;
  bool resampled = false;
};

struct SteerResult {
  State sample;
  double reward = 0.0;
  std::size_t index = 0;
  std::vector<StepDiagnostics> steps;
  // Parent index of every particle at each resampling event.
  std::vector<std::vector<std::size_t>> ancestry;
};

// Self-normalized weights from log-weights; throws if they cannot be formed.
inline std::vector<double> normalized_weights(std::span<const double> log_w) {
  if (log_w.empty()) throw ConfigError("no particles");
  const double m = *std::max_element(log_w.begin(), log_w.end());
  if (!std::isfinite(m)) throw NumericError("particle log-weights are not finite");
  std::vector<double> w(log_w.size());
  double z = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) z += (w[i] = std::exp(log_w[i] - m));
  if (!(z > 0.0) || !std::isfinite(z)) throw NumericError("particle weights underflowed");
  for (double& x : w) x /= z;
  return w;
}

inline double effective_sample_size(std::span<const double> w) {
  double s = 0.0;
  for (double x : w) s += x * x;
  return 1.0 / s;
}

// K multinomial draws of parent indices.
inline std::vector<std::size_t> multinomial_resample(std::span<const double> w, std::mt19937_64& rng) {
  std::vector<double> cdf(w.size());
  std::partial_sum(w.begin(), w.end(), cdf.begin());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::size_t> parents(w.size());
  for (auto& p : parents) {
    const double r = u(rng) * cdf.back();
    p = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
    p = std::min(p, w.size() - 1);
  }
  return parents;
}

namespace detail {
inline std::mt19937_64 resample_stream(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}
}  // namespace detail

// Plain ancestral sampling; uses the same step stream as smc_steer so K = 1
// reproduces it exactly.
inline State ancestral_sample(const ToyDiffusion& process, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  State x = process.sample_prior(rng);
  for (int t = 0; t < process.steps(); ++t) x = process.denoise_step(x, t, rng);
  return x;
}

inline SteerResult smc_steer(const ToyDiffusion& process, const SteeringConfig& cfg, const RewardFn& reward,
                             std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 step_rng(seed);
  std::mt19937_64 resample_rng = detail::resample_stream(seed);
  const auto K = static_cast<std::size_t>(cfg.k);
  std::vector<Particle> ps(K);
  for (auto& p : ps) {
    p.state = process.sample_prior(step_rng);
    p.last_reward = reward(process.predict_terminal(p.state, 0));
  }
  SteerResult res;
  std::vector<double> log_w(K);
  for (int t = 0; t < process.steps(); ++t) {
    StepDiagnostics d;
    d.step = t + 1;
    d.max_reward = -std::numeric_limits<double>::infinity();
    for (auto& p : ps) {
      p.state = process.denoise_step(p.state, t, step_rng);
      const double r = reward(process.predict_terminal(p.state, t + 1));
      if (!std::isfinite(r)) throw NumericError("reward is not finite at step " + std::to_string(t + 1));
      p.log_weight += cfg.lambda * (r - p.last_reward);
      p.last_reward = r;
      d.mean_reward += r / static_cast<double>(K);
      d.max_reward = std::max(d.max_reward, r);
    }
    for (std::size_t i = 0; i < K; ++i) log_w[i] = ps[i].log_weight;
    const std::vector<double> w = normalized_weights(log_w);
    d.ess = effective_sample_size(w);
    const bool due = cfg.resample_rule == ResampleRule::every_step || d.ess < cfg.ess_fraction * static_cast<double>(K);
    if (due && K > 1) {
      const auto parents = multinomial_resample(w, resample_rng);
      std::vector<Particle> next(K);
      for (std::size_t i = 0; i < K; ++i) {
        next[i] = ps[parents[i]];
        next[i].log_weight = 0.0;
      }
      ps = std::move(next);
      res.ancestry.push_back(parents);
      d.resampled = true;
    }
    res.steps.push_back(d);
  }
  std::size_t pick = 0;
  if (cfg.selection == FinalSelection::argmax_reward) {
    for (std::size_t i = 1; i < K; ++i)
      if (ps[i].last_reward > ps[pick].last_reward) pick = i;
  } else if (K > 1) {
    for (std::size_t i = 0; i < K; ++i) log_w[i] = ps[i].log_weight;
    const std::vector<double> w = normalized_weights(log_w);
    std::discrete_distribution<std::size_t> dist(w.begin(), w.end());
    pick = dist(resample_rng);
  }
  res.index = pick;
  res.sample = ps[pick].state;
  res.reward = ps[pick].last_reward;
  return res;
}

}  // namespace skipreward
