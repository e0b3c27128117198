#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "common.hpp"
#include "data.hpp"

namespace skipreward {

struct ModelConfig {
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 4;
  int vocab_size = 256;
  int patch_size = 4;
  int max_seq = 64;
  int lora_rank = 8;
  double lora_alpha = 8.0;
  int mlp_ratio = 4;
  int image_height = 16;
  int image_width = 16;
  int image_channels = 3;

  int n_visual_tokens() const { return (image_height / patch_size) * (image_width / patch_size); }
  int patch_dim() const { return patch_size * patch_size * image_channels; }
  int head_dim() const { return d_model / n_heads; }
  int mlp_hidden() const { return mlp_ratio * d_model; }
  int eos_token() const { return vocab_size - 1; }
  double lora_scaling() const { return lora_alpha / lora_rank; }

  void validate() const {
    if (d_model < 1 || n_layers < 1 || n_heads < 1) throw ConfigError("model dimensions must be positive");
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
    if (lora_rank < 1) throw ConfigError("lora_rank must be >= 1");
    if (!(lora_alpha > 0.0)) throw ConfigError("lora_alpha must be > 0");
    if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
    if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
    if (patch_size < 1 || image_height % patch_size != 0 || image_width % patch_size != 0)
      throw ConfigError("image dimensions must be divisible by patch_size");
    if (image_channels < 1) throw ConfigError("image_channels must be >= 1");
    if (max_seq < n_visual_tokens() + 2)
      throw ConfigError("max_seq must hold the visual tokens, one text token and EOS");
  }

  std::string canonical() const {
    std::string s;
    auto add = [&s](const char* k, auto v) {
      s += k;
      s += '=';
      s += std::to_string(v);
      s += ';';
    };
    add("d_model", d_model);
    add("n_layers", n_layers);
    add("n_heads", n_heads);
    add("vocab_size", vocab_size);
    add("patch_size", patch_size);
    add("max_seq", max_seq);
    add("lora_rank", lora_rank);
    add("lora_alpha", lora_alpha);
    add("mlp_ratio", mlp_ratio);
    add("image_height", image_height);
    add("image_width", image_width);
    add("image_channels", image_channels);
    return s;
  }

  std::uint64_t hash() const { return fnv1a64(canonical()); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <class T>
struct LayerWeights {
  Matrix<T> ln1_g, ln1_b;
  Matrix<T> wq, wk, wv, wo;
  Matrix<T> ln2_g, ln2_b;
  Matrix<T> w_up, b_up;
  Matrix<T> w_down, b_down;

  template <class Fn>
  void for_each(Fn&& fn, const std::string& prefix) {
    fn(prefix + "ln1.g", ln1_g);
    fn(prefix + "ln1.b", ln1_b);
    fn(prefix + "attn.wq", wq);
    fn(prefix + "attn.wk", wk);
    fn(prefix + "attn.wv", wv);
    fn(prefix + "attn.wo", wo);
    fn(prefix + "ln2.g", ln2_g);
    fn(prefix + "ln2.b", ln2_b);
    fn(prefix + "mlp.w_up", w_up);
    fn(prefix + "mlp.b_up", b_up);
    fn(prefix + "mlp.w_down", w_down);
    fn(prefix + "mlp.b_down", b_down);
  }
};

// Frozen parameters of the toy multimodal transformer.
template <class T>
struct BodyWeights {
  Matrix<T> tok_emb;      // vocab x d
  Matrix<T> pos_emb;      // max_seq x d
  Matrix<T> projector_w;  // d x patch_dim (base projector)
  Matrix<T> projector_b;  // 1 x d
  std::vector<LayerWeights<T>> layers;
  Matrix<T> lnf_g, lnf_b;
  bool merged = false;

  template <class Fn>
  void for_each(Fn&& fn) {
    fn("tok_emb", tok_emb);
    fn("pos_emb", pos_emb);
    fn("projector.w", projector_w);
    fn("projector.b", projector_b);
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l].for_each(fn, "layers." + std::to_string(l) + ".");
    fn("lnf.g", lnf_g);
    fn("lnf.b", lnf_b);
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    const_cast<BodyWeights*>(this)->for_each([&fn](const std::string& name, Matrix<T>& m) {
      fn(name, static_cast<const Matrix<T>&>(m));
    });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&n](const std::string&, const Matrix<T>& m) { n += m.size(); });
    return n;
  }
};

// ΔW = scaling * B * A with A: r x in, B: out x r.
template <class T>
struct LoraFactors {
  Matrix<T> a;
  Matrix<T> b;
};

template <class T>
struct LayerLora {
  LoraFactors<T> q, v, up;
};

// Per-perspective backbone parameters: projector copy plus low-rank adapters.
template <class T>
struct BackboneAdapter {
  Matrix<T> projector_w;
  Matrix<T> projector_b;
  std::vector<LayerLora<T>> lora;
  T scaling = T{1};

  template <class Fn>
  void for_each(Fn&& fn) {
    fn("projector.w", projector_w);
    fn("projector.b", projector_b);
    for (std::size_t l = 0; l < lora.size(); ++l) {
      const std::string p = "layers." + std::to_string(l) + ".lora.";
      fn(p + "q.a", lora[l].q.a);
      fn(p + "q.b", lora[l].q.b);
      fn(p + "v.a", lora[l].v.a);
      fn(p + "v.b", lora[l].v.b);
      fn(p + "up.a", lora[l].up.a);
      fn(p + "up.b", lora[l].up.b);
    }
  }
};

namespace detail {

template <class T>
void fill_normal(Matrix<T>& m, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (T& v : m.values()) v = static_cast<T>(dist(rng));
}

template <class T>
struct LayerNormCache {
  Matrix<T> xhat;
  std::vector<T> rstd;
};

template <class T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& g, const Matrix<T>& b, LayerNormCache<T>* cache) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  Matrix<T> y(n, d);
  if (cache) {
    cache->xhat = Matrix<T>(n, d);
    cache->rstd.assign(n, T{});
  }
  constexpr T eps = static_cast<T>(1e-5);
  for (std::size_t i = 0; i < n; ++i) {
    auto xr = x.row(i);
    T mean{};
    for (T v : xr) mean += v;
    mean /= static_cast<T>(d);
    T var{};
    for (T v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<T>(d);
    const T rstd = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = (xr[j] - mean) * rstd;
      y(i, j) = xh * g(0, j) + b(0, j);
      if (cache) cache->xhat(i, j) = xh;
    }
    if (cache) cache->rstd[i] = rstd;
  }
  return y;
}

// dx += d(layer_norm)/dx applied to dy.
template <class T>
void layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& g, const LayerNormCache<T>& cache, Matrix<T>& dx) {
  const std::size_t d = dy.cols();
  std::vector<T> dxhat(d);
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    T mean_dxhat{};
    T mean_dxhat_xhat{};
    for (std::size_t j = 0; j < d; ++j) {
      dxhat[j] = dy(i, j) * g(0, j);
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * cache.xhat(i, j);
    }
    mean_dxhat /= static_cast<T>(d);
    mean_dxhat_xhat /= static_cast<T>(d);
    for (std::size_t j = 0; j < d; ++j)
      dx(i, j) += cache.rstd[i] * (dxhat[j] - mean_dxhat - cache.xhat(i, j) * mean_dxhat_xhat);
  }
}

// y += scaling * (x A^T) B^T; returns x A^T for the backward pass.
template <class T>
Matrix<T> lora_apply(Matrix<T>& y, const Matrix<T>& x, const LoraFactors<T>& f, T scaling) {
  Matrix<T> t = matmul_nt(x, f.a);
  Matrix<T> delta = matmul_nt(t, f.b);
  add_inplace(y, delta, scaling);
  return t;
}

template <class T>
void lora_backward(const Matrix<T>& dy, const Matrix<T>& x, const Matrix<T>& t, const LoraFactors<T>& f, T scaling,
                   LoraFactors<T>* grads, Matrix<T>& dx) {
  Matrix<T> dt(dy.rows(), f.b.cols());
  add_matmul_nn(dt, dy, f.b);
  for (T& v : dt.values()) v *= scaling;
  if (grads) {
    Matrix<T> gb(f.b.rows(), f.b.cols());
    add_matmul_tn(gb, dy, t);
    add_inplace(grads->b, gb, scaling);
    add_matmul_tn(grads->a, dt, x);
  }
  add_matmul_nn(dx, dt, f.a);
}

template <class T>
void add_row_bias(Matrix<T>& y, const Matrix<T>& bias) {
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += bias(0, j);
}

}  // namespace detail

template <class T>
struct LayerCache {
  detail::LayerNormCache<T> ln1;
  Matrix<T> a;  // ln1 output
  Matrix<T> tq, tv;
  Matrix<T> q, k, v;
  std::vector<Matrix<T>> probs;  // per head, seq x seq (lower triangle used)
  detail::LayerNormCache<T> ln2;
  Matrix<T> b;  // ln2 output
  Matrix<T> tup;
  Matrix<T> u;  // MLP pre-activation
};

// Everything a forward pass produces: per-layer hidden states (layer 0 is the
// embedding layer, the last layer is final-normed), the projected visual tokens
// and the activations the backward pass needs.
template <class T>
struct BackboneTrace {
  std::vector<Matrix<T>> hidden;
  Matrix<T> visual_tokens;  // projector output, n_v x d
  Matrix<T> patches;
  std::size_t n_visual = 0;
  std::size_t valid_len = 0;  // visual + text + EOS
  std::size_t eos_pos = 0;
  std::vector<LayerCache<T>> layers;
  detail::LayerNormCache<T> lnf;
  Matrix<T> residual_out;

  const Matrix<T>& layer(std::size_t l) const { return hidden.at(l); }
};

template <class T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(ModelConfig config, BodyWeights<T> body) : config_(std::move(config)), body_(std::move(body)) {}

  // Frozen body with scaled-normal initialization.
  static Backbone random(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    const std::size_t d = config.d_model;
    const std::size_t h = config.mlp_hidden();
    BodyWeights<T> w;
    w.tok_emb = Matrix<T>(config.vocab_size, d);
    detail::fill_normal(w.tok_emb, rng, 1.0);
    w.pos_emb = Matrix<T>(config.max_seq, d);
    detail::fill_normal(w.pos_emb, rng, 0.5);
    w.projector_w = Matrix<T>(d, config.patch_dim());
    detail::fill_normal(w.projector_w, rng, 1.0 / std::sqrt(static_cast<double>(config.patch_dim())));
    w.projector_b = Matrix<T>(1, d);
    const double in_std = 1.0 / std::sqrt(static_cast<double>(d));
    const double resid_std = in_std / std::sqrt(2.0 * config.n_layers);
    for (int l = 0; l < config.n_layers; ++l) {
      LayerWeights<T> L;
      L.ln1_g = Matrix<T>(1, d, T{1});
      L.ln1_b = Matrix<T>(1, d);
      L.wq = Matrix<T>(d, d);
      L.wk = Matrix<T>(d, d);
      L.wv = Matrix<T>(d, d);
      L.wo = Matrix<T>(d, d);
      detail::fill_normal(L.wq, rng, in_std);
      detail::fill_normal(L.wk, rng, in_std);
      detail::fill_normal(L.wv, rng, in_std);
      detail::fill_normal(L.wo, rng, resid_std);
      L.ln2_g = Matrix<T>(1, d, T{1});
      L.ln2_b = Matrix<T>(1, d);
      L.w_up = Matrix<T>(h, d);
      detail::fill_normal(L.w_up, rng, in_std);
      L.b_up = Matrix<T>(1, h);
      L.w_down = Matrix<T>(d, h);
      detail::fill_normal(L.w_down, rng, resid_std * std::sqrt(static_cast<double>(d) / h));
      L.b_down = Matrix<T>(1, d);
      w.layers.push_back(std::move(L));
    }
    w.lnf_g = Matrix<T>(1, d, T{1});
    w.lnf_b = Matrix<T>(1, d);
    return Backbone(config, std::move(w));
  }

  const ModelConfig& config() const { return config_; }
  const BodyWeights<T>& body() const { return body_; }
  BodyWeights<T>& mutable_body() { return body_; }

  // Adapter with the base projector copied and LoRA B = 0, A small random.
  BackboneAdapter<T> new_adapter(std::mt19937_64& rng) const {
    BackboneAdapter<T> a;
    a.projector_w = body_.projector_w;
    a.projector_b = body_.projector_b;
    a.scaling = static_cast<T>(config_.lora_scaling());
    const std::size_t d = config_.d_model;
    const std::size_t r = config_.lora_rank;
    const std::size_t h = config_.mlp_hidden();
    const double a_std = 1.0 / std::sqrt(static_cast<double>(d));
    for (int l = 0; l < config_.n_layers; ++l) {
      LayerLora<T> L;
      L.q = {Matrix<T>(r, d), Matrix<T>(d, r)};
      L.v = {Matrix<T>(r, d), Matrix<T>(d, r)};
      L.up = {Matrix<T>(r, d), Matrix<T>(h, r)};
      detail::fill_normal(L.q.a, rng, a_std);
      detail::fill_normal(L.v.a, rng, a_std);
      detail::fill_normal(L.up.a, rng, a_std);
      a.lora.push_back(std::move(L));
    }
    return a;
  }

  Matrix<T> encode_image(const SyntheticImage& image, const BackboneAdapter<T>* adapter = nullptr) const {
    check_image(image);
    return project(image_patches<T>(image, config_.patch_size), adapter);
  }

  // Sequence layout: [visual tokens; prompt tokens; EOS; padding up to pad_to].
  BackboneTrace<T> forward(const TextPrompt& prompt, const SyntheticImage& image,
                           const BackboneAdapter<T>* adapter = nullptr, std::size_t pad_to = 0,
                           bool keep_cache = true) const {
    check_image(image);
    for (int t : prompt.tokens)
      if (t < 0 || t >= config_.vocab_size - 1) throw ConfigError("token id out of vocabulary");
    const std::size_t n_v = config_.n_visual_tokens();
    const std::size_t valid = n_v + prompt.tokens.size() + 1;
    const std::size_t seq = std::max(valid, pad_to);
    if (seq > static_cast<std::size_t>(config_.max_seq))
      throw LengthError("sequence of " + std::to_string(seq) + " tokens exceeds max_seq " +
                        std::to_string(config_.max_seq));
    if (adapter && body_.merged) throw ConfigError("dynamic adapter on merged weights");

    const std::size_t d = config_.d_model;
    BackboneTrace<T> tr;
    tr.n_visual = n_v;
    tr.valid_len = valid;
    tr.eos_pos = valid - 1;
    tr.patches = image_patches<T>(image, config_.patch_size);
    tr.visual_tokens = project(tr.patches, adapter);

    Matrix<T> x(seq, d);
    for (std::size_t i = 0; i < seq; ++i) {
      auto row = x.row(i);
      std::span<const T> src;
      if (i < n_v) {
        src = tr.visual_tokens.row(i);
      } else if (i < tr.eos_pos) {
        src = body_.tok_emb.row(prompt.tokens[i - n_v]);
      } else if (i == tr.eos_pos) {
        src = body_.tok_emb.row(config_.eos_token());
      } else {
        src = body_.tok_emb.row(0);  // padding
      }
      auto pos = body_.pos_emb.row(i);
      for (std::size_t j = 0; j < d; ++j) row[j] = src[j] + pos[j];
    }
    tr.hidden.push_back(x);

    const T scaling = adapter ? adapter->scaling : T{0};
    for (int l = 0; l < config_.n_layers; ++l) {
      const LayerWeights<T>& W = body_.layers[l];
      const LayerLora<T>* lora = adapter ? &adapter->lora[l] : nullptr;
      LayerCache<T> c;
      c.a = detail::layer_norm(x, W.ln1_g, W.ln1_b, &c.ln1);
      c.q = matmul_nt(c.a, W.wq);
      c.k = matmul_nt(c.a, W.wk);
      c.v = matmul_nt(c.a, W.wv);
      if (lora) {
        c.tq = detail::lora_apply(c.q, c.a, lora->q, scaling);
        c.tv = detail::lora_apply(c.v, c.a, lora->v, scaling);
      }
      Matrix<T> attn = attention(c);
      Matrix<T> attn_out = matmul_nt(attn, W.wo);
      add_inplace(x, attn_out);

      c.b = detail::layer_norm(x, W.ln2_g, W.ln2_b, &c.ln2);
      c.u = matmul_nt(c.b, W.w_up);
      if (lora) c.tup = detail::lora_apply(c.u, c.b, lora->up, scaling);
      detail::add_row_bias(c.u, W.b_up);
      Matrix<T> act(c.u.rows(), c.u.cols());
      for (std::size_t i = 0; i < act.size(); ++i) act.values()[i] = gelu(c.u.values()[i]);
      Matrix<T> mlp_out = matmul_nt(act, W.w_down);
      detail::add_row_bias(mlp_out, W.b_down);
      add_inplace(x, mlp_out);

      if (keep_cache) tr.layers.push_back(std::move(c));
      if (l + 1 < config_.n_layers) tr.hidden.push_back(x);
    }
    tr.residual_out = x;
    tr.hidden.push_back(detail::layer_norm(x, body_.lnf_g, body_.lnf_b, keep_cache ? &tr.lnf : nullptr));
    return tr;
  }

  // Backpropagates d(loss)/d(hidden[l]) (one matrix per layer; empty means
  // zero) and d(loss)/d(visual_tokens) into the adapter gradients. Frozen body
  // weights receive no gradient.
  void backward(const BackboneTrace<T>& tr, const std::vector<Matrix<T>>& d_hidden, const Matrix<T>& d_visual,
                const BackboneAdapter<T>* adapter, BackboneAdapter<T>* grads) const {
    if (tr.layers.size() != static_cast<std::size_t>(config_.n_layers))
      throw ConfigError("backward needs a trace recorded with keep_cache");
    const std::size_t seq = tr.hidden[0].rows();
    const std::size_t d = config_.d_model;
    const T scaling = adapter ? adapter->scaling : T{0};
    auto hidden_grad = [&](std::size_t l) -> const Matrix<T>* {
      return l < d_hidden.size() && !d_hidden[l].empty() ? &d_hidden[l] : nullptr;
    };

    Matrix<T> g(seq, d);
    if (const auto* top = hidden_grad(config_.n_layers))
      detail::layer_norm_backward(*top, body_.lnf_g, tr.lnf, g);

    for (int l = config_.n_layers - 1; l >= 0; --l) {
      const LayerWeights<T>& W = body_.layers[l];
      const LayerCache<T>& c = tr.layers[l];
      const LayerLora<T>* lora = adapter ? &adapter->lora[l] : nullptr;
      LayerLora<T>* lg = grads && adapter ? &grads->lora[l] : nullptr;

      // MLP branch
      Matrix<T> dact(seq, W.w_down.cols());
      add_matmul_nn(dact, g, W.w_down);
      for (std::size_t i = 0; i < dact.size(); ++i) dact.values()[i] *= gelu_grad(c.u.values()[i]);
      Matrix<T> db(seq, d);
      add_matmul_nn(db, dact, W.w_up);
      if (lora) detail::lora_backward(dact, c.b, c.tup, lora->up, scaling, lg ? &lg->up : nullptr, db);
      Matrix<T> dx1 = g;
      detail::layer_norm_backward(db, W.ln2_g, c.ln2, dx1);

      // attention branch
      Matrix<T> d_attn(seq, d);
      add_matmul_nn(d_attn, dx1, W.wo);
      Matrix<T> dq(seq, d), dk(seq, d), dv(seq, d);
      attention_backward(c, d_attn, dq, dk, dv);
      Matrix<T> da(seq, d);
      add_matmul_nn(da, dq, W.wq);
      add_matmul_nn(da, dk, W.wk);
      add_matmul_nn(da, dv, W.wv);
      if (lora) {
        detail::lora_backward(dq, c.a, c.tq, lora->q, scaling, lg ? &lg->q : nullptr, da);
        detail::lora_backward(dv, c.a, c.tv, lora->v, scaling, lg ? &lg->v : nullptr, da);
      }
      detail::layer_norm_backward(da, W.ln1_g, c.ln1, dx1);
      g = std::move(dx1);
      if (const auto* extra = hidden_grad(l)) add_inplace(g, *extra);
    }

    if (!grads || !adapter) return;
    // embedding layer: visual rows flow into the projector
    Matrix<T> dev(tr.n_visual, d);
    for (std::size_t i = 0; i < tr.n_visual; ++i)
      for (std::size_t j = 0; j < d; ++j) dev(i, j) = g(i, j);
    if (!d_visual.empty()) add_inplace(dev, d_visual);
    add_matmul_tn(grads->projector_w, dev, tr.patches);
    for (std::size_t i = 0; i < dev.rows(); ++i)
      for (std::size_t j = 0; j < d; ++j) grads->projector_b(0, j) += dev(i, j);
  }

 private:
  void check_image(const SyntheticImage& image) const {
    if (image.height != config_.image_height || image.width != config_.image_width ||
        image.channels != config_.image_channels)
      throw ShapeError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) + "x" +
                       std::to_string(image.channels) + " does not match model input");
  }

  Matrix<T> project(const Matrix<T>& patches, const BackboneAdapter<T>* adapter) const {
    const Matrix<T>& w = adapter ? adapter->projector_w : body_.projector_w;
    const Matrix<T>& b = adapter ? adapter->projector_b : body_.projector_b;
    Matrix<T> ev = matmul_nt(patches, w);
    detail::add_row_bias(ev, b);
    return ev;
  }

  Matrix<T> attention(LayerCache<T>& c) const {
    const std::size_t seq = c.q.rows();
    const std::size_t dh = config_.head_dim();
    const T inv_scale = T{1} / std::sqrt(static_cast<T>(dh));
    Matrix<T> out(seq, config_.d_model);
    c.probs.assign(config_.n_heads, Matrix<T>(seq, seq));
    for (int h = 0; h < config_.n_heads; ++h) {
      const std::size_t off = h * dh;
      Matrix<T>& P = c.probs[h];
      for (std::size_t i = 0; i < seq; ++i) {
        auto prow = P.row(i).subspan(0, i + 1);
        const T* qi = c.q.data() + i * config_.d_model + off;
        for (std::size_t j = 0; j <= i; ++j) {
          const T* kj = c.k.data() + j * config_.d_model + off;
          T s{};
          for (std::size_t e = 0; e < dh; ++e) s += qi[e] * kj[e];
          prow[j] = s * inv_scale;
        }
        softmax_inplace(prow);
        T* oi = out.data() + i * config_.d_model + off;
        for (std::size_t j = 0; j <= i; ++j) {
          const T p = prow[j];
          const T* vj = c.v.data() + j * config_.d_model + off;
          for (std::size_t e = 0; e < dh; ++e) oi[e] += p * vj[e];
        }
      }
    }
    return out;
  }

  void attention_backward(const LayerCache<T>& c, const Matrix<T>& d_out, Matrix<T>& dq, Matrix<T>& dk,
                          Matrix<T>& dv) const {
    const std::size_t seq = c.q.rows();
    const std::size_t dh = config_.head_dim();
    const std::size_t d = config_.d_model;
    const T inv_scale = T{1} / std::sqrt(static_cast<T>(dh));
    std::vector<T> dp(seq);
    for (int h = 0; h < config_.n_heads; ++h) {
      const std::size_t off = h * dh;
      const Matrix<T>& P = c.probs[h];
      for (std::size_t i = 0; i < seq; ++i) {
        const T* doi = d_out.data() + i * d + off;
        T weighted{};
        for (std::size_t j = 0; j <= i; ++j) {
          const T* vj = c.v.data() + j * d + off;
          T s{};
          for (std::size_t e = 0; e < dh; ++e) s += doi[e] * vj[e];
          dp[j] = s;
          weighted += P(i, j) * s;
          T* dvj = dv.data() + j * d + off;
          for (std::size_t e = 0; e < dh; ++e) dvj[e] += P(i, j) * doi[e];
        }
        const T* qi = c.q.data() + i * d + off;
        T* dqi = dq.data() + i * d + off;
        for (std::size_t j = 0; j <= i; ++j) {
          const T ds = P(i, j) * (dp[j] - weighted) * inv_scale;
          if (ds == T{}) continue;
          const T* kj = c.k.data() + j * d + off;
          T* dkj = dk.data() + j * d + off;
          for (std::size_t e = 0; e < dh; ++e) {
            dqi[e] += ds * kj[e];
            dkj[e] += ds * qi[e];
          }
        }
      }
    }
  }

  ModelConfig config_;
  BodyWeights<T> body_;
};

// Folds an adapter into a copy of the body weights (W += scaling * B * A and
// the adapter's projector replaces the base projector).
template <class T>
Backbone<T> merge_adapter(const Backbone<T>& base, const BackboneAdapter<T>& adapter) {
  if (base.body().merged) throw ConfigError("weights already carry a merged adapter");
  const ModelConfig& cfg = base.config();
  if (adapter.lora.size() != static_cast<std::size_t>(cfg.n_layers) ||
      !adapter.projector_w.same_shape(base.body().projector_w) ||
      !adapter.projector_b.same_shape(base.body().projector_b))
    throw ShapeError("adapter does not match model shape");
  BodyWeights<T> body = base.body();
  auto fold = [&adapter](Matrix<T>& w, const LoraFactors<T>& f) {
    if (f.b.rows() != w.rows() || f.a.cols() != w.cols() || f.b.cols() != f.a.rows())
      throw ShapeError("LoRA factors do not match target weight");
    for (std::size_t o = 0; o < w.rows(); ++o)
      for (std::size_t i = 0; i < w.cols(); ++i) {
        T s{};
        for (std::size_t k = 0; k < f.a.rows(); ++k) s += f.b(o, k) * f.a(k, i);
        w(o, i) += adapter.scaling * s;
      }
  };
  for (int l = 0; l < cfg.n_layers; ++l) {
    fold(body.layers[l].wq, adapter.lora[l].q);
    fold(body.layers[l].wv, adapter.lora[l].v);
    fold(body.layers[l].w_up, adapter.lora[l].up);
  }
  body.projector_w = adapter.projector_w;
  body.projector_b = adapter.projector_b;
  body.merged = true;
  return Backbone<T>(cfg, std::move(body));
}

enum class Pooling { eos, mean };

inline const char* to_string(Pooling p) { return p == Pooling::eos ? "eos" : "mean"; }

inline Pooling parse_pooling(std::string_view s) {
  if (s == "eos") return Pooling::eos;
  if (s == "mean") return Pooling::mean;
  throw ConfigError("unknown pooling '" + std::string(s) + "'");
}

// EOS row, or the mean over all non-padding rows, of hidden layer `layer`.
template <class T>
std::vector<T> extract_hidden(const BackboneTrace<T>& tr, int layer, Pooling pooling) {
  if (layer < 0 || static_cast<std::size_t>(layer) >= tr.hidden.size())
    throw IndexError("hidden layer " + std::to_string(layer) + " out of range [0, " +
                     std::to_string(tr.hidden.size() - 1) + "]");
  const Matrix<T>& H = tr.hidden[layer];
  if (pooling == Pooling::eos) {
    auto r = H.row(tr.eos_pos);
    return {r.begin(), r.end()};
  }
  std::vector<T> out(H.cols(), T{});
  for (std::size_t i = 0; i < tr.valid_len; ++i)
    for (std::size_t j = 0; j < H.cols(); ++j) out[j] += H(i, j);
  for (T& v : out) v /= static_cast<T>(tr.valid_len);
  return out;
}

// Gradient of extract_hidden written into a d_hidden slot.
template <class T>
void extract_hidden_backward(const BackboneTrace<T>& tr, int layer, Pooling pooling, std::span<const T> d_out,
                             std::vector<Matrix<T>>& d_hidden) {
  if (d_hidden.size() < tr.hidden.size()) d_hidden.resize(tr.hidden.size());
  Matrix<T>& D = d_hidden[layer];
  if (D.empty()) D = zeros_like(tr.hidden[layer]);
  if (pooling == Pooling::eos) {
    for (std::size_t j = 0; j < d_out.size(); ++j) D(tr.eos_pos, j) += d_out[j];
    return;
  }
  const T inv = T{1} / static_cast<T>(tr.valid_len);
  for (std::size_t i = 0; i < tr.valid_len; ++i)
    for (std::size_t j = 0; j < d_out.size(); ++j) D(i, j) += d_out[j] * inv;
}

}  // namespace skipreward
