#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "backbone.hpp"
#include "common.hpp"

namespace skipreward {

enum class HeadKind { skipca, linear, mlp };

inline const char* to_string(HeadKind k) {
  switch (k) {
    case HeadKind::skipca: return "skipca";
    case HeadKind::linear: return "linear";
    case HeadKind::mlp: return "mlp";
  }
  return "unknown";
}

inline HeadKind parse_head_kind(std::string_view s) {
  if (s == "skipca") return HeadKind::skipca;
  if (s == "linear") return HeadKind::linear;
  if (s == "mlp") return HeadKind::mlp;
  throw ConfigError("unknown head kind '" + std::string(s) + "'");
}

enum class RewardMode { scalar, embedding };

struct HeadConfig {
  HeadKind kind = HeadKind::skipca;
  // 1 for scalar rewards, an even number for preference embeddings.
  int output_dim = 1;
  // 0 means the backbone's head count.
  int n_heads = 0;
  // Hidden layer feeding the head; -1 means the last layer.
  int hidden_layer = -1;
  Pooling pooling = Pooling::eos;
  // Visual tokens for the cross-attention: 0 is the projector output, l >= 1
  // the visual rows of hidden layer l.
  int visual_layer = 0;
  int mlp_hidden = 64;

  RewardMode mode() const { return output_dim == 1 ? RewardMode::scalar : RewardMode::embedding; }
  bool output_bias() const { return mode() == RewardMode::scalar; }

  int resolved_heads(const ModelConfig& m) const { return n_heads > 0 ? n_heads : m.n_heads; }
  int resolved_hidden_layer(const ModelConfig& m) const { return hidden_layer < 0 ? m.n_layers : hidden_layer; }

  void validate(const ModelConfig& m) const {
    if (output_dim < 1) throw ConfigError("head output_dim must be >= 1");
    if (output_dim > 1 && output_dim % 2 != 0) throw ConfigError("embedding output_dim must be even");
    if (m.d_model % resolved_heads(m) != 0) throw ConfigError("d_model must be divisible by head n_heads");
    if (resolved_hidden_layer(m) > m.n_layers) throw ConfigError("hidden_layer out of range");
    if (visual_layer < 0 || visual_layer > m.n_layers) throw ConfigError("visual_layer out of range");
    if (kind == HeadKind::mlp && mlp_hidden < 1) throw ConfigError("mlp_hidden must be >= 1");
  }

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

template <class T>
struct RewardOutput {
  std::vector<T> values;
  RewardMode mode = RewardMode::scalar;

  T scalar() const {
    if (mode != RewardMode::scalar) throw ConfigError("embedding reward has no scalar value");
    return values.at(0);
  }
};

// Unused matrices stay empty. `g_w`/`g_b` are the final linear map g.
template <class T>
struct HeadParams {
  Matrix<T> wq, wk, wv;  // cross-attention projections, d x d
  Matrix<T> w1, b1;      // hidden layer of the MLP baseline
  Matrix<T> g_w, g_b;    // m x in, 1 x m

  template <class Fn>
  void for_each(Fn&& fn) {
    auto visit = [&fn](const char* name, Matrix<T>& m) {
      if (!m.empty()) fn(std::string("head.") + name, m);
    };
    visit("wq", wq);
    visit("wk", wk);
    visit("wv", wv);
    visit("w1", w1);
    visit("b1", b1);
    visit("g.w", g_w);
    visit("g.b", g_b);
  }
};

template <class T>
HeadParams<T> init_head(const HeadConfig& cfg, const ModelConfig& model, std::mt19937_64& rng) {
  cfg.validate(model);
  const std::size_t d = model.d_model;
  const double std_in = 1.0 / std::sqrt(static_cast<double>(d));
  HeadParams<T> p;
  std::size_t g_in = d;
  if (cfg.kind == HeadKind::skipca) {
    p.wq = Matrix<T>(d, d);
    p.wk = Matrix<T>(d, d);
    p.wv = Matrix<T>(d, d);
    detail::fill_normal(p.wq, rng, std_in);
    detail::fill_normal(p.wk, rng, std_in);
    detail::fill_normal(p.wv, rng, std_in);
  } else if (cfg.kind == HeadKind::mlp) {
    p.w1 = Matrix<T>(cfg.mlp_hidden, d);
    p.b1 = Matrix<T>(1, cfg.mlp_hidden);
    detail::fill_normal(p.w1, rng, std_in);
    g_in = cfg.mlp_hidden;
  }
  p.g_w = Matrix<T>(cfg.output_dim, g_in);
  // Scalar heads start at zero reward. A zero embedding head would sit on a
  // saddle of the bilinear preference, so it gets a small random start.
  if (cfg.mode() == RewardMode::embedding) detail::fill_normal(p.g_w, rng, 1.0 / std::sqrt(static_cast<double>(g_in)));
  if (cfg.output_bias()) p.g_b = Matrix<T>(1, cfg.output_dim);
  return p;
}

template <class T>
struct HeadCache {
  std::vector<T> e_h;
  Matrix<T> e_v;
  std::vector<T> q;
  Matrix<T> k, v;
  Matrix<T> probs;        // heads x n_v
  std::vector<T> pooled;  // input of g
  std::vector<T> z;       // MLP pre-activation
};

namespace detail {

template <class T>
void check_finite(std::span<const T> v, const char* what) {
  for (T x : v)
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in ") + what);
}

template <class T>
RewardOutput<T> apply_g(const HeadParams<T>& p, RewardMode mode, const std::vector<T>& in) {
  RewardOutput<T> out;
  out.mode = mode;
  out.values.assign(p.g_w.rows(), T{});
  for (std::size_t o = 0; o < p.g_w.rows(); ++o) {
    T s = p.g_b.empty() ? T{} : p.g_b(0, o);
    auto w = p.g_w.row(o);
    for (std::size_t j = 0; j < in.size(); ++j) s += w[j] * in[j];
    out.values[o] = s;
  }
  return out;
}

template <class T>
std::vector<T> g_backward(const HeadParams<T>& p, const std::vector<T>& in, std::span<const T> d_out,
                          HeadParams<T>& grads) {
  std::vector<T> d_in(in.size(), T{});
  for (std::size_t o = 0; o < p.g_w.rows(); ++o) {
    const T g = d_out[o];
    if (!grads.g_b.empty()) grads.g_b(0, o) += g;
    auto w = p.g_w.row(o);
    auto gw = grads.g_w.row(o);
    for (std::size_t j = 0; j < in.size(); ++j) {
      gw[j] += g * in[j];
      d_in[j] += g * w[j];
    }
  }
  return d_in;
}

}  // namespace detail

// Single-query multi-head cross-attention: the query comes from e_h, keys and
// values from the visual tokens, followed by the linear map g.
template <class T>
RewardOutput<T> skipca_forward(const HeadParams<T>& p, int n_heads, std::span<const T> e_h, const Matrix<T>& e_v,
                               HeadCache<T>* cache = nullptr) {
  if (e_v.rows() == 0) throw HeadError("cross-attention needs at least one visual token");
  const std::size_t d = p.wq.rows();
  if (e_h.size() != d || e_v.cols() != d) throw ShapeError("cross-attention input width mismatch");
  if (n_heads < 1 || d % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  detail::check_finite(e_h, "e_h");
  detail::check_finite(e_v.values(), "e_v");

  const std::size_t n = e_v.rows();
  const std::size_t dh = d / n_heads;
  const T inv_scale = T{1} / std::sqrt(static_cast<T>(dh));
  Matrix<T> eh_row(1, d);
  for (std::size_t j = 0; j < d; ++j) eh_row(0, j) = e_h[j];
  Matrix<T> q = matmul_nt(eh_row, p.wq);
  Matrix<T> k = matmul_nt(e_v, p.wk);
  Matrix<T> v = matmul_nt(e_v, p.wv);
  Matrix<T> probs(n_heads, n);
  std::vector<T> pooled(d, T{});
  for (int h = 0; h < n_heads; ++h) {
    const std::size_t off = h * dh;
    auto pr = probs.row(h);
    for (std::size_t j = 0; j < n; ++j) {
      T s{};
      for (std::size_t e = 0; e < dh; ++e) s += q(0, off + e) * k(j, off + e);
      pr[j] = s * inv_scale;
    }
    softmax_inplace(pr);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t e = 0; e < dh; ++e) pooled[off + e] += pr[j] * v(j, off + e);
  }
  RewardOutput<T> out =
      detail::apply_g(p, p.g_w.rows() == 1 ? RewardMode::scalar : RewardMode::embedding, pooled);
  if (cache) {
    cache->e_h.assign(e_h.begin(), e_h.end());
    cache->e_v = e_v;
    cache->q.assign(q.values().begin(), q.values().end());
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->pooled = std::move(pooled);
  }
  return out;
}

template <class T>
void skipca_backward(const HeadParams<T>& p, int n_heads, const HeadCache<T>& c, std::span<const T> d_out,
                     HeadParams<T>& grads, std::vector<T>& d_eh, Matrix<T>& d_ev) {
  const std::size_t d = p.wq.rows();
  const std::size_t n = c.e_v.rows();
  const std::size_t dh = d / n_heads;
  const T inv_scale = T{1} / std::sqrt(static_cast<T>(dh));
  std::vector<T> d_pooled = detail::g_backward(p, c.pooled, d_out, grads);

  std::vector<T> dq(d, T{});
  Matrix<T> dk(n, d), dv(n, d);
  std::vector<T> da(n);
  for (int h = 0; h < n_heads; ++h) {
    const std::size_t off = h * dh;
    auto pr = c.probs.row(h);
    T weighted{};
    for (std::size_t j = 0; j < n; ++j) {
      T s{};
      for (std::size_t e = 0; e < dh; ++e) {
        s += d_pooled[off + e] * c.v(j, off + e);
        dv(j, off + e) += pr[j] * d_pooled[off + e];
      }
      da[j] = s;
      weighted += pr[j] * s;
    }
    for (std::size_t j = 0; j < n; ++j) {
      const T ds = pr[j] * (da[j] - weighted) * inv_scale;
      for (std::size_t e = 0; e < dh; ++e) {
        dq[off + e] += ds * c.k(j, off + e);
        dk(j, off + e) += ds * c.q[off + e];
      }
    }
  }

  // q = Wq e_h
  if (d_eh.size() != d) d_eh.assign(d, T{});
  for (std::size_t o = 0; o < d; ++o) {
    auto w = p.wq.row(o);
    auto gw = grads.wq.row(o);
    for (std::size_t j = 0; j < d; ++j) {
      gw[j] += dq[o] * c.e_h[j];
      d_eh[j] += dq[o] * w[j];
    }
  }
  add_matmul_tn(grads.wk, dk, c.e_v);
  add_matmul_tn(grads.wv, dv, c.e_v);
  if (d_ev.empty()) d_ev = Matrix<T>(n, d);
  add_matmul_nn(d_ev, dk, p.wk);
  add_matmul_nn(d_ev, dv, p.wv);
}

// Baseline head reading e_h only: affine map, or one GELU hidden layer when
// `w1` is present.
template <class T>
RewardOutput<T> linear_forward(const HeadParams<T>& p, std::span<const T> e_h, HeadCache<T>* cache = nullptr) {
  detail::check_finite(e_h, "e_h");
  std::vector<T> in(e_h.begin(), e_h.end());
  std::vector<T> z;
  if (!p.w1.empty()) {
    if (p.w1.cols() != in.size()) throw ShapeError("MLP head input width mismatch");
    z.assign(p.w1.rows(), T{});
    std::vector<T> hidden(p.w1.rows());
    for (std::size_t o = 0; o < p.w1.rows(); ++o) {
      T s = p.b1(0, o);
      auto w = p.w1.row(o);
      for (std::size_t j = 0; j < in.size(); ++j) s += w[j] * in[j];
      z[o] = s;
      hidden[o] = gelu(s);
    }
    in = std::move(hidden);
  }
  if (p.g_w.cols() != in.size()) throw ShapeError("linear head input width mismatch");
  RewardOutput<T> out =
      detail::apply_g(p, p.g_w.rows() == 1 ? RewardMode::scalar : RewardMode::embedding, in);
  if (cache) {
    cache->e_h.assign(e_h.begin(), e_h.end());
    cache->pooled = std::move(in);
    cache->z = std::move(z);
  }
  return out;
}

template <class T>
void linear_backward(const HeadParams<T>& p, const HeadCache<T>& c, std::span<const T> d_out, HeadParams<T>& grads,
                     std::vector<T>& d_eh) {
  std::vector<T> d_in = detail::g_backward(p, c.pooled, d_out, grads);
  const std::size_t d = c.e_h.size();
  if (d_eh.size() != d) d_eh.assign(d, T{});
  if (p.w1.empty()) {
    for (std::size_t j = 0; j < d; ++j) d_eh[j] += d_in[j];
    return;
  }
  for (std::size_t o = 0; o < p.w1.rows(); ++o) {
    const T dz = d_in[o] * gelu_grad(c.z[o]);
    grads.b1(0, o) += dz;
    auto w = p.w1.row(o);
    auto gw = grads.w1.row(o);
    for (std::size_t j = 0; j < d; ++j) {
      gw[j] += dz * c.e_h[j];
      d_eh[j] += dz * w[j];
    }
  }
}

}  // namespace skipreward
