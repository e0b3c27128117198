#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>

#include "backbone.hpp"
#include "reward_head.hpp"

namespace skipreward {

// Everything trained for one perspective: projector copy, LoRA factors and the
// reward head.
template <class T>
struct PerspectiveAdapter {
  HeadConfig head_config;
  BackboneAdapter<T> backbone;
  HeadParams<T> head;

  template <class Fn>
  void for_each(Fn&& fn) {
    backbone.for_each(fn);
    head.for_each(fn);
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    const_cast<PerspectiveAdapter*>(this)->for_each([&fn](const std::string& name, Matrix<T>& m) {
      fn(name, static_cast<const Matrix<T>&>(m));
    });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&n](const std::string&, const Matrix<T>& m) { n += m.size(); });
    return n;
  }
};

template <class T>
PerspectiveAdapter<T> zeros_like(const PerspectiveAdapter<T>& a) {
  PerspectiveAdapter<T> z = a;
  z.for_each([](const std::string&, Matrix<T>& m) { m.fill(T{}); });
  return z;
}

template <class T>
struct ScoreTrace {
  BackboneTrace<T> backbone;
  HeadCache<T> head;
  RewardOutput<T> output;
};

template <class T>
class RewardModel {
 public:
  RewardModel() = default;
  explicit RewardModel(Backbone<T> backbone) : backbone_(std::move(backbone)) {}

  static RewardModel random(const ModelConfig& config, std::uint64_t seed) {
    return RewardModel(Backbone<T>::random(config, seed));
  }

  const ModelConfig& config() const { return backbone_.config(); }
  const Backbone<T>& backbone() const { return backbone_; }
  Backbone<T>& mutable_backbone() { return backbone_; }

  // Registers a fresh adapter set for `p` (replacing any existing one).
  PerspectiveAdapter<T>& add_perspective(Perspective p, const HeadConfig& head, std::uint64_t seed) {
    head.validate(config());
    std::mt19937_64 rng(seed);
    PerspectiveAdapter<T> a;
    a.head_config = head;
    a.backbone = backbone_.new_adapter(rng);
    a.head = init_head<T>(head, config(), rng);
    adapters_[p] = std::move(a);
    return adapters_[p];
  }

  void set_adapter(Perspective p, PerspectiveAdapter<T> a) {
    a.head_config.validate(config());
    adapters_[p] = std::move(a);
  }

  bool has(Perspective p) const { return adapters_.count(p) != 0; }

  const PerspectiveAdapter<T>& adapter(Perspective p) const {
    auto it = adapters_.find(p);
    if (it == adapters_.end()) throw RegistryError(std::string("no adapter registered for '") + to_string(p) + "'");
    return it->second;
  }

  PerspectiveAdapter<T>& adapter(Perspective p) {
    return const_cast<PerspectiveAdapter<T>&>(static_cast<const RewardModel*>(this)->adapter(p));
  }

  const std::map<Perspective, PerspectiveAdapter<T>>& adapters() const { return adapters_; }

  // Selects the adapter used by the tag-less overloads. Base weights are never
  // touched.
  void activate(Perspective p) {
    adapter(p);
    active_ = p;
  }
  void deactivate() { active_.reset(); }
  std::optional<Perspective> active() const { return active_; }

  // Backbone pass through the active adapter (or the bare base model).
  BackboneTrace<T> forward_backbone(const TextPrompt& prompt, const SyntheticImage& image, std::size_t pad_to = 0,
                                    bool keep_cache = false) const {
    const BackboneAdapter<T>* a = active_ ? &adapter(*active_).backbone : nullptr;
    return backbone_.forward(prompt, image, a, pad_to, keep_cache);
  }

  ScoreTrace<T> forward(const TextPrompt& prompt, const SyntheticImage& image, Perspective p,
                        bool keep_cache = true) const {
    const PerspectiveAdapter<T>& a = adapter(p);
    const HeadConfig& hc = a.head_config;
    ScoreTrace<T> tr;
    tr.backbone = backbone_.forward(prompt, image, &a.backbone, 0, keep_cache);
    const std::vector<T> e_h = extract_hidden(tr.backbone, hc.resolved_hidden_layer(config()), hc.pooling);
    HeadCache<T>* cache = keep_cache ? &tr.head : nullptr;
    if (hc.kind == HeadKind::skipca) {
      const int heads = hc.resolved_heads(config());
      if (hc.visual_layer == 0) {
        tr.output = skipca_forward<T>(a.head, heads, e_h, tr.backbone.visual_tokens, cache);
      } else {
        tr.output = skipca_forward<T>(a.head, heads, e_h, visual_rows(tr.backbone, hc.visual_layer), cache);
      }
    } else {
      tr.output = linear_forward<T>(a.head, e_h, cache);
    }
    return tr;
  }

  RewardOutput<T> score(const TextPrompt& prompt, const SyntheticImage& image, Perspective p) const {
    return forward(prompt, image, p, false).output;
  }

  // Accumulates d(loss)/d(adapter parameters) given d(loss)/d(output).
  void backward(const ScoreTrace<T>& tr, Perspective p, std::span<const T> d_out, PerspectiveAdapter<T>& grads) const {
    const PerspectiveAdapter<T>& a = adapter(p);
    const HeadConfig& hc = a.head_config;
    std::vector<T> d_eh;
    Matrix<T> d_ev;
    if (hc.kind == HeadKind::skipca) {
      skipca_backward(a.head, hc.resolved_heads(config()), tr.head, d_out, grads.head, d_eh, d_ev);
    } else {
      linear_backward(a.head, tr.head, d_out, grads.head, d_eh);
    }
    std::vector<Matrix<T>> d_hidden(tr.backbone.hidden.size());
    extract_hidden_backward<T>(tr.backbone, hc.resolved_hidden_layer(config()), hc.pooling, d_eh, d_hidden);
    Matrix<T> d_visual;
    if (!d_ev.empty()) {
      if (hc.visual_layer == 0) {
        d_visual = std::move(d_ev);
      } else {
        Matrix<T>& D = d_hidden[hc.visual_layer];
        if (D.empty()) D = zeros_like(tr.backbone.hidden[hc.visual_layer]);
        for (std::size_t i = 0; i < d_ev.rows(); ++i)
          for (std::size_t j = 0; j < d_ev.cols(); ++j) D(i, j) += d_ev(i, j);
      }
    }
    backbone_.backward(tr.backbone, d_hidden, d_visual, &a.backbone, &grads.backbone);
  }

  std::size_t total_parameter_count(Perspective p) const {
    return backbone_.body().parameter_count() + adapter(p).parameter_count();
  }

 private:
  static Matrix<T> visual_rows(const BackboneTrace<T>& tr, int layer) {
    const Matrix<T>& H = tr.hidden.at(layer);
    Matrix<T> out(tr.n_visual, H.cols());
    for (std::size_t i = 0; i < tr.n_visual; ++i)
      for (std::size_t j = 0; j < H.cols(); ++j) out(i, j) = H(i, j);
    return out;
  }

  Backbone<T> backbone_;
  std::map<Perspective, PerspectiveAdapter<T>> adapters_;
  std::optional<Perspective> active_;
};

}  // namespace skipreward
