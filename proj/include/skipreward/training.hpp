#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "objectives.hpp"
#include "reward_model.hpp"

namespace skipreward {

struct TrainConfig {
  double learning_rate = 2e-4;
  int batch_size = 8;
  int grad_accum = 4;
  int epochs = 1;
  Objective objective = Objective::bt;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (grad_accum < 1) throw ConfigError("grad_accum must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  }
};

struct TrainableSelection {
  std::vector<std::string> names;
  std::size_t trainable = 0;
  std::size_t total = 0;
  double fraction() const { return total == 0 ? 0.0 : static_cast<double>(trainable) / static_cast<double>(total); }
};

template <class T>
TrainableSelection trainable_params(const RewardModel<T>& model, Perspective p) {
  TrainableSelection s;
  model.adapter(p).for_each([&s](const std::string& name, const Matrix<T>& m) {
    s.names.push_back(name);
    s.trainable += m.size();
  });
  s.total = model.total_parameter_count(p);
  return s;
}

template <class T>
std::vector<Matrix<T>*> parameter_list(PerspectiveAdapter<T>& a) {
  std::vector<Matrix<T>*> out;
  a.for_each([&out](const std::string&, Matrix<T>& m) { out.push_back(&m); });
  return out;
}

struct LossRecord {
  std::size_t micro_step = 0;
  std::size_t optimizer_step = 0;
  double loss = 0.0;
};

template <class T>
struct TrainState {
  std::size_t step = 0;
  std::size_t micro_steps = 0;
  PerspectiveAdapter<T> grads;
  PerspectiveAdapter<T> m;
  PerspectiveAdapter<T> v;
  std::vector<LossRecord> history;

  static TrainState init(const RewardModel<T>& model, Perspective p) {
    TrainState s;
    s.grads = zeros_like(model.adapter(p));
    s.m = s.grads;
    s.v = s.grads;
    return s;
  }
};

inline void check_objective_mode(Objective obj, const HeadConfig& hc) {
  const bool embedding = hc.mode() == RewardMode::embedding;
  if (obj == Objective::gpm && !embedding)
    throw ConfigError("objective gpm needs an embedding head (output_dim >= 2)");
  if (obj != Objective::gpm && embedding)
    throw ConfigError(std::string("objective ") + to_string(obj) + " needs a scalar head (output_dim 1)");
}

template <class Example>
void check_batch(std::span<const Example> batch, Perspective p) {
  if (batch.empty()) throw ConfigError("empty batch");
  for (const auto& ex : batch)
    if (ex.perspective != p)
      throw ConfigError(std::string("batch mixes perspectives: expected ") + to_string(p) + ", got " +
                        to_string(ex.perspective));
}

// Mean objective over the batch. When `grads` is given, accumulates
// grad_scale * d(mean loss)/d(adapter) into it.
template <class T>
double pair_batch_loss(const RewardModel<T>& model, Perspective p, std::span<const PairExample> batch, Objective obj,
                       double temperature, PerspectiveAdapter<T>* grads = nullptr, double grad_scale = 1.0) {
  check_batch(batch, p);
  const HeadConfig& hc = model.adapter(p).head_config;
  check_objective_mode(obj, hc);
  const bool want = grads != nullptr;
  const double w = grad_scale / static_cast<double>(batch.size());
  std::optional<SkewOperator> R;
  if (obj == Objective::gpm) R.emplace(hc.output_dim);
  double total = 0.0;
  for (const auto& ex : batch) {
    const ScoreTrace<T> tc = model.forward(ex.prompt, ex.chosen, p, want);
    const ScoreTrace<T> tr = model.forward(ex.rejected_leg_prompt(), ex.rejected, p, want);
    std::vector<T> dc, dr;
    if (obj == Objective::gpm) {
      const std::vector<double> rc(tc.output.values.begin(), tc.output.values.end());
      const std::vector<double> rr(tr.output.values.begin(), tr.output.values.end());
      const double diff = gpm_score_diff(rc, rr, *R);
      total += bt_loss(diff, 0.0, temperature);
      if (want) {
        const double g = bt_loss_grad(diff, 0.0, temperature) * w;
        const auto [gc, gr] = gpm_score_diff_grad(rc, rr, *R);
        for (double x : gc) dc.push_back(static_cast<T>(g * x));
        for (double x : gr) dr.push_back(static_cast<T>(g * x));
      }
    } else {
      const double sc = static_cast<double>(tc.output.scalar());
      const double sr = static_cast<double>(tr.output.scalar());
      if (obj == Objective::bt) {
        total += bt_loss(sc, sr, temperature);
        if (want) {
          const double g = bt_loss_grad(sc, sr, temperature) * w;
          dc.push_back(static_cast<T>(g));
          dr.push_back(static_cast<T>(-g));
        }
      } else {
        total += ce_loss(sc, sr);
        if (want) {
          dc.push_back(static_cast<T>(0.5 * ce_term_grad(sc, true) * w));
          dr.push_back(static_cast<T>(0.5 * ce_term_grad(sr, false) * w));
        }
      }
    }
    if (want) {
      model.backward(tc, p, dc, *grads);
      model.backward(tr, p, dr, *grads);
    }
  }
  return total / static_cast<double>(batch.size());
}

// Cross-entropy on labeled single images.
template <class T>
double binary_batch_loss(const RewardModel<T>& model, Perspective p, std::span<const BinaryExample> batch,
                         PerspectiveAdapter<T>* grads = nullptr, double grad_scale = 1.0) {
  check_batch(batch, p);
  check_objective_mode(Objective::ce, model.adapter(p).head_config);
  const double w = grad_scale / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    const ScoreTrace<T> t = model.forward(ex.prompt, ex.image, p, grads != nullptr);
    const double s = static_cast<double>(t.output.scalar());
    total += ce_term(s, ex.label);
    if (grads) {
      const std::vector<T> d{static_cast<T>(ce_term_grad(s, ex.label) * w)};
      model.backward(t, p, d, *grads);
    }
  }
  return total / static_cast<double>(batch.size());
}

template <class T>
double batch_loss(const RewardModel<T>& model, Perspective p, std::span<const PairExample> batch, const TrainConfig& cfg,
                  PerspectiveAdapter<T>* grads = nullptr, double grad_scale = 1.0) {
  return pair_batch_loss(model, p, batch, cfg.objective, cfg.temperature, grads, grad_scale);
}

template <class T>
double batch_loss(const RewardModel<T>& model, Perspective p, std::span<const BinaryExample> batch,
                  const TrainConfig& cfg, PerspectiveAdapter<T>* grads = nullptr, double grad_scale = 1.0) {
  if (cfg.objective != Objective::ce) throw ConfigError("labeled single-image data needs the ce objective");
  return binary_batch_loss(model, p, batch, grads, grad_scale);
}

template <class T>
void adam_update(PerspectiveAdapter<T>& params, TrainState<T>& s, const TrainConfig& cfg) {
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto P = parameter_list(params);
  auto G = parameter_list(s.grads);
  auto M = parameter_list(s.m);
  auto V = parameter_list(s.v);
  if (P.size() != G.size()) throw ShapeError("optimizer state does not match the adapter");
  for (std::size_t i = 0; i < P.size(); ++i) {
    T* p = P[i]->data();
    T* g = G[i]->data();
    T* m = M[i]->data();
    T* v = V[i]->data();
    for (std::size_t j = 0; j < P[i]->size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = cfg.beta1 * static_cast<double>(m[j]) + (1.0 - cfg.beta1) * gj;
      const double vj = cfg.beta2 * static_cast<double>(v[j]) + (1.0 - cfg.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      p[j] = static_cast<T>(static_cast<double>(p[j]) - cfg.learning_rate * (mj / c1) / (std::sqrt(vj / c2) + cfg.adam_eps));
      g[j] = T{};
    }
  }
}

// One micro-batch: forward, backward, accumulate; Adam every grad_accum calls.
template <class T, class Example>
double train_step(RewardModel<T>& model, Perspective p, std::span<const Example> batch, TrainState<T>& state,
                  const TrainConfig& cfg) {
  const double loss = batch_loss(model, p, batch, cfg, &state.grads, 1.0 / cfg.grad_accum);
  if (!std::isfinite(loss)) throw NumericError("training loss is not finite at micro-step " + std::to_string(state.micro_steps));
  ++state.micro_steps;
  if (state.micro_steps % static_cast<std::size_t>(cfg.grad_accum) == 0) adam_update(model.adapter(p), state, cfg);
  state.history.push_back({state.micro_steps, state.step, loss});
  return loss;
}

// Shuffled passes over the data in micro-batches of batch_size.
template <class T, class Example>
TrainState<T> train(RewardModel<T>& model, Perspective p, const std::vector<Example>& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ConfigError("no training examples");
  check_objective_mode(cfg.objective, model.adapter(p).head_config);
  TrainState<T> state = TrainState<T>::init(model, p);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Example> batch;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      batch.clear();
      for (std::size_t j = i; j < std::min(order.size(), i + cfg.batch_size); ++j) batch.push_back(data[order[j]]);
      train_step(model, p, std::span<const Example>(batch), state, cfg);
    }
  }
  return state;
}

inline std::string loss_curve_csv(const std::vector<LossRecord>& history) {
  std::string out = "micro_step,optimizer_step,loss\n";
  char buf[96];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g\n", r.micro_step, r.optimizer_step, r.loss);
    out += buf;
  }
  return out;
}

}  // namespace skipreward
