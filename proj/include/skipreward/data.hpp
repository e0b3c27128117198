#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"

namespace skipreward {

enum class Perspective { alignment, fidelity, safety, overall };

inline constexpr std::array<Perspective, 4> kAllPerspectives = {
    Perspective::alignment, Perspective::fidelity, Perspective::safety, Perspective::overall};

inline const char* to_string(Perspective p) {
  switch (p) {
    case Perspective::alignment: return "alignment";
    case Perspective::fidelity: return "fidelity";
    case Perspective::safety: return "safety";
    case Perspective::overall: return "overall";
  }
  return "unknown";
}

inline Perspective parse_perspective(std::string_view s) {
  for (Perspective p : kAllPerspectives)
    if (s == to_string(p)) return p;
  throw ConfigError("unknown perspective '" + std::string(s) + "'");
}

inline constexpr std::array<std::string_view, 6> kShapeNames = {"square", "triangle", "cross",
                                                                "bar",    "circle", "ring"};
inline constexpr std::array<std::string_view, 8> kColorNames = {
    "red", "green", "blue", "yellow", "magenta", "cyan", "white", "orange"};
inline constexpr std::array<std::array<double, 3>, 8> kColorRgb = {{{0.9, 0.1, 0.1},
                                                                   {0.1, 0.85, 0.15},
                                                                   {0.15, 0.2, 0.95},
                                                                   {0.95, 0.9, 0.1},
                                                                   {0.9, 0.1, 0.85},
                                                                   {0.1, 0.9, 0.9},
                                                                   {0.95, 0.95, 0.95},
                                                                   {0.95, 0.55, 0.05}}};
inline constexpr std::array<std::string_view, 4> kCountWords = {"a", "two", "three", "four"};

// Byte-level prompt. Token ids are the UTF-8 bytes of `raw`.
struct TextPrompt {
  std::string raw;
  std::vector<int> tokens;

  static TextPrompt from_text(std::string text, int vocab_size = 256) {
    if (text.empty()) throw ConfigError("prompt must be non-empty");
    TextPrompt p;
    p.tokens.reserve(text.size());
    for (unsigned char c : text) {
      // The last id is reserved for the end-of-sequence marker.
      if (static_cast<int>(c) >= vocab_size - 1)
        throw ConfigError("prompt byte " + std::to_string(c) + " outside vocabulary");
      p.tokens.push_back(c);
    }
    p.raw = std::move(text);
    return p;
  }

  friend bool operator==(const TextPrompt&, const TextPrompt&) = default;
};

struct ObjectAttributes {
  int shape = 0;
  int color = 0;
  friend bool operator==(const ObjectAttributes&, const ObjectAttributes&) = default;
};

struct PromptAttributes {
  int shape = 0;
  int color = 0;
  int count = 1;
  friend bool operator==(const PromptAttributes&, const PromptAttributes&) = default;
};

// Ground-truth attributes an image was rendered from. `shape`, `color` and
// `count` describe the main object group; distractors are extra single objects.
struct ImageAttributes {
  int shape = 0;
  int color = 0;
  int count = 1;
  int corruption = 0;
  bool unsafe = false;
  std::vector<ObjectAttributes> distractors;
  friend bool operator==(const ImageAttributes&, const ImageAttributes&) = default;
};

// Pixels are stored quantized (value = byte / 255) in H x W x C order so that
// serialization is exact.
struct SyntheticImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
  ImageAttributes attributes;

  double at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c] / 255.0;
  }

  friend bool operator==(const SyntheticImage&, const SyntheticImage&) = default;
};

struct PairExample {
  TextPrompt prompt;
  SyntheticImage chosen;
  SyntheticImage rejected;
  Perspective perspective = Perspective::alignment;
  // Set for mined negative-prompt pairs: the rejected leg is scored under this
  // prompt instead of `prompt`.
  std::optional<TextPrompt> rejected_prompt;

  const TextPrompt& rejected_leg_prompt() const { return rejected_prompt ? *rejected_prompt : prompt; }

  friend bool operator==(const PairExample&, const PairExample&) = default;
};

struct BinaryExample {
  TextPrompt prompt;
  SyntheticImage image;
  bool label = false;
  Perspective perspective = Perspective::alignment;
  friend bool operator==(const BinaryExample&, const BinaryExample&) = default;
};

struct ScoredExample {
  TextPrompt prompt;
  SyntheticImage image;
  double score = 0.0;
  Perspective perspective = Perspective::alignment;
  friend bool operator==(const ScoredExample&, const ScoredExample&) = default;
};

struct Dataset {
  std::vector<PairExample> pairs;
  std::vector<BinaryExample> binary;
  std::vector<ScoredExample> scored;

  bool empty() const { return pairs.empty() && binary.empty() && scored.empty(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// ---------------------------------------------------------------------------
// Corpus parameters
// ---------------------------------------------------------------------------

struct CorpusSpec {
  Perspective perspective = Perspective::alignment;
  int height = 16;
  int width = 16;
  int channels = 3;
  int n_shapes = 4;
  int n_colors = 4;
  int max_count = 1;
  int n_corruption_levels = 4;
  double unsafe_rate = 0.5;
  // Extra single objects drawn next to the main group.
  int n_distractors = 0;
  // Alignment only: chosen and rejected images carry the same multiset of
  // shapes and colors, differing only in which color is bound to which shape.
  bool binding = false;
  // Random placement inside each slot; off centers every object in its slot.
  bool position_jitter = true;

  int max_objects() const { return max_count + n_distractors; }

  void validate() const {
    if (n_shapes < 1 || n_shapes > static_cast<int>(kShapeNames.size()))
      throw ConfigError("n_shapes must be in [1, " + std::to_string(kShapeNames.size()) + "]");
    if (n_colors < 1 || n_colors > static_cast<int>(kColorNames.size()))
      throw ConfigError("n_colors must be in [1, " + std::to_string(kColorNames.size()) + "]");
    if (max_count < 1 || max_count > static_cast<int>(kCountWords.size()))
      throw ConfigError("max_count must be in [1, 4]");
    if (n_corruption_levels < 1) throw ConfigError("n_corruption_levels must be >= 1");
    if (height < 4 || width < 4 || channels != 3) throw ConfigError("image must be at least 4x4 with 3 channels");
    if (unsafe_rate < 0.0 || unsafe_rate > 1.0) throw ConfigError("unsafe_rate must be in [0,1]");
    if (n_distractors < 0) throw ConfigError("n_distractors must be >= 0");
    if (max_objects() > 4) throw ConfigError("at most 4 objects per image");
    if (perspective == Perspective::alignment && n_shapes * n_colors * max_count < 2)
      throw ConfigError("alignment needs at least two distinct attribute combinations");
    if (perspective == Perspective::fidelity && n_corruption_levels < 2)
      throw ConfigError("fidelity needs at least two corruption levels");
    if (binding) {
      if (perspective != Perspective::alignment) throw ConfigError("binding applies to alignment only");
      if (n_distractors < 1 || max_count != 1)
        throw ConfigError("binding requires n_distractors >= 1 and max_count = 1");
      if (n_shapes < 2 || n_colors < 2) throw ConfigError("binding requires >= 2 shapes and colors");
    }
    if (n_distractors > 0 && (n_shapes < 2 || n_colors < 2))
      throw ConfigError("distractors require >= 2 shapes and colors");
  }
};

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

inline std::string prompt_text(const PromptAttributes& a) {
  std::string s(kCountWords[a.count - 1]);
  s += ' ';
  s += kColorNames[a.color];
  s += ' ';
  s += kShapeNames[a.shape];
  if (a.count > 1) s += 's';
  return s;
}

// Inverse of prompt_text; nullopt for prompts outside the grammar.
inline std::optional<PromptAttributes> parse_prompt_attributes(std::string_view raw) {
  auto next_word = [&raw]() -> std::string_view {
    const auto sp = raw.find(' ');
    std::string_view w = raw.substr(0, sp);
    raw = sp == std::string_view::npos ? std::string_view{} : raw.substr(sp + 1);
    return w;
  };
  PromptAttributes a;
  const std::string_view count_word = next_word();
  const std::string_view color_word = next_word();
  std::string_view shape_word = next_word();
  if (!raw.empty()) return std::nullopt;
  auto find = [](const auto& names, std::string_view w) -> int {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == w) return static_cast<int>(i);
    return -1;
  };
  a.count = find(kCountWords, count_word) + 1;
  a.color = find(kColorNames, color_word);
  if (a.count > 1) {
    if (shape_word.empty() || shape_word.back() != 's') return std::nullopt;
    shape_word.remove_suffix(1);
  }
  a.shape = find(kShapeNames, shape_word);
  if (a.count < 1 || a.color < 0 || a.shape < 0) return std::nullopt;
  return a;
}

// ---------------------------------------------------------------------------
// Labeling rules
// ---------------------------------------------------------------------------

inline int alignment_score(const PromptAttributes& p, const ImageAttributes& img) {
  return (img.shape == p.shape) + (img.color == p.color) + (img.count == p.count);
}

// Higher is better; used to decide which image of a pair is preferred.
inline double perspective_score(Perspective perspective, const PromptAttributes& p, const ImageAttributes& img) {
  switch (perspective) {
    case Perspective::alignment: return alignment_score(p, img);
    case Perspective::fidelity: return -img.corruption;
    case Perspective::safety: return img.unsafe ? 0.0 : 1.0;
    case Perspective::overall: return 2.0 * alignment_score(p, img) - img.corruption - 4.0 * img.unsafe;
  }
  return 0.0;
}

inline bool preferred_by_rule(const PairExample& pair) {
  const auto p = parse_prompt_attributes(pair.prompt.raw);
  if (!p) return false;
  return perspective_score(pair.perspective, *p, pair.chosen.attributes) >
         perspective_score(pair.perspective, *p, pair.rejected.attributes);
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace detail {

inline bool shape_covers(int shape, int u, int v, int size) {
  const double c = (size - 1) / 2.0;
  const double du = u - c;
  const double dv = v - c;
  const double r = size / 2.0;
  const double dist2 = du * du + dv * dv;
  switch (shape) {
    case 0: return true;                                      // square
    case 1: return std::abs(du) <= (v + 1) / 2.0;             // triangle, apex up
    case 2: return std::abs(du) <= size / 6.0 + 0.01 || std::abs(dv) <= size / 6.0 + 0.01;  // cross
    case 3: return std::abs(dv) <= size / 5.0;                // horizontal bar
    case 4: return dist2 <= r * r;                            // circle
    case 5: return dist2 <= r * r && dist2 >= (r - 1.6) * (r - 1.6);  // ring
    default: return false;
  }
}

struct Canvas {
  int height;
  int width;
  std::vector<double> px;  // H x W x 3

  double& at(int y, int x, int c) { return px[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

inline void draw_object(Canvas& canvas, int shape, int color, int top, int left, int size) {
  for (int v = 0; v < size; ++v)
    for (int u = 0; u < size; ++u) {
      if (!shape_covers(shape, u, v, size)) continue;
      const int y = top + v;
      const int x = left + u;
      if (y < 0 || y >= canvas.height || x < 0 || x >= canvas.width) continue;
      for (int c = 0; c < 3; ++c) canvas.at(y, x, c) = kColorRgb[color][c];
    }
}

// Region (top, left, h, w) for object slot `slot` out of `n_slots`.
inline std::array<int, 4> slot_region(int slot, int n_slots, int height, int width) {
  if (n_slots == 1) return {0, 0, height, width};
  if (n_slots == 2) return {0, slot * (width / 2), height, width / 2};
  return {(slot / 2) * (height / 2), (slot % 2) * (width / 2), height / 2, width / 2};
}

}  // namespace detail

// Draws `attrs` with positions, background and corruption noise from `rng`.
inline SyntheticImage render_image(const ImageAttributes& attrs, const CorpusSpec& spec, std::mt19937_64& rng) {
  detail::Canvas canvas{spec.height, spec.width,
                        std::vector<double>(static_cast<std::size_t>(spec.height) * spec.width * 3)};
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double bg = 0.05 + 0.12 * unif(rng);
  std::fill(canvas.px.begin(), canvas.px.end(), bg);

  struct Obj {
    int shape, color;
  };
  std::vector<Obj> objects;
  for (int i = 0; i < attrs.count; ++i) objects.push_back({attrs.shape, attrs.color});
  for (const auto& d : attrs.distractors) objects.push_back({d.shape, d.color});
  const int n_slots = std::max<int>(spec.max_objects(), static_cast<int>(objects.size()));
  const int slot_count = n_slots <= 1 ? 1 : (n_slots == 2 ? 2 : 4);

  std::vector<int> slots(slot_count);
  for (int i = 0; i < slot_count; ++i) slots[i] = i;
  std::shuffle(slots.begin(), slots.end(), rng);

  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto [top, left, h, w] = detail::slot_region(slots[i], slot_count, spec.height, spec.width);
    const int size = slot_count == 1 ? std::max(3, std::min(h, w) / 2) : std::max(3, std::min(h, w) - 2);
    std::uniform_int_distribution<int> dy(0, h - size);
    std::uniform_int_distribution<int> dx(0, w - size);
    const int oy = spec.position_jitter ? dy(rng) : (h - size) / 2;
    const int ox = spec.position_jitter ? dx(rng) : (w - size) / 2;
    detail::draw_object(canvas, objects[i].shape, objects[i].color, top + oy, left + ox, size);
  }

  if (attrs.unsafe) {
    // Marker: a 4x4 magenta/white checkerboard in a random corner.
    std::uniform_int_distribution<int> corner(0, 3);
    const int k = corner(rng);
    const int top = (k / 2) ? spec.height - 4 : 0;
    const int left = (k % 2) ? spec.width - 4 : 0;
    for (int v = 0; v < 4; ++v)
      for (int u = 0; u < 4; ++u) {
        const bool white = ((u + v) % 2) == 0;
        canvas.at(top + v, left + u, 0) = white ? 1.0 : 0.9;
        canvas.at(top + v, left + u, 1) = white ? 1.0 : 0.0;
        canvas.at(top + v, left + u, 2) = white ? 1.0 : 0.9;
      }
  }

  if (attrs.corruption > 0) {
    std::normal_distribution<double> noise(0.0, 0.09 * attrs.corruption);
    const double flip_rate = 0.03 * attrs.corruption;
    for (double& v : canvas.px) {
      v += noise(rng);
      if (unif(rng) < flip_rate) v = unif(rng) < 0.5 ? 0.0 : 1.0;
    }
  }

  SyntheticImage img;
  img.height = spec.height;
  img.width = spec.width;
  img.channels = 3;
  img.attributes = attrs;
  img.pixels.resize(canvas.px.size());
  for (std::size_t i = 0; i < canvas.px.size(); ++i) {
    const double v = std::clamp(canvas.px[i], 0.0, 1.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

struct Corpus {
  std::vector<PairExample> pairs;
  std::vector<BinaryExample> binary;
};

namespace detail {

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline int other_than(std::mt19937_64& rng, int n, int avoid) {
  int v = uniform_int(rng, 0, n - 2);
  return v >= avoid ? v + 1 : v;
}

inline PromptAttributes sample_prompt(const CorpusSpec& spec, std::mt19937_64& rng) {
  PromptAttributes p;
  p.shape = uniform_int(rng, 0, spec.n_shapes - 1);
  p.color = uniform_int(rng, 0, spec.n_colors - 1);
  p.count = uniform_int(rng, 1, spec.max_count);
  return p;
}

// Distractor objects that never reproduce the prompted (shape, color) binding.
inline std::vector<ObjectAttributes> sample_distractors(const CorpusSpec& spec, const PromptAttributes& p,
                                                        std::mt19937_64& rng) {
  std::vector<ObjectAttributes> out;
  for (int i = 0; i < spec.n_distractors; ++i)
    out.push_back({other_than(rng, spec.n_shapes, p.shape), other_than(rng, spec.n_colors, p.color)});
  return out;
}

inline ImageAttributes matching_image(const CorpusSpec& spec, const PromptAttributes& p, std::mt19937_64& rng) {
  ImageAttributes a;
  a.shape = p.shape;
  a.color = p.color;
  a.count = p.count;
  a.corruption = uniform_int(rng, 0, spec.n_corruption_levels - 1);
  a.distractors = sample_distractors(spec, p, rng);
  return a;
}

inline ImageAttributes random_image(const CorpusSpec& spec, const PromptAttributes& p, std::mt19937_64& rng) {
  ImageAttributes a;
  a.shape = uniform_int(rng, 0, spec.n_shapes - 1);
  a.color = uniform_int(rng, 0, spec.n_colors - 1);
  a.count = uniform_int(rng, 1, spec.max_count);
  a.corruption = uniform_int(rng, 0, spec.n_corruption_levels - 1);
  a.unsafe = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < spec.unsafe_rate;
  a.distractors = sample_distractors(spec, p, rng);
  return a;
}

inline std::pair<ImageAttributes, ImageAttributes> sample_leg_attributes(const CorpusSpec& spec,
                                                                         const PromptAttributes& p,
                                                                         std::mt19937_64& rng) {
  switch (spec.perspective) {
    case Perspective::alignment: {
      ImageAttributes chosen = matching_image(spec, p, rng);
      ImageAttributes rejected = chosen;
      if (spec.binding) {
        // chosen: (S_p, C_p) + (S_x, C_x); rejected: (S_p, C_x) + (S_x, C_p).
        const ObjectAttributes d = chosen.distractors.at(0);
        rejected.color = d.color;
        rejected.distractors[0] = {d.shape, p.color};
      } else {
        std::vector<int> kinds = {0, 1};
        if (spec.max_count > 1) kinds.push_back(2);
        std::shuffle(kinds.begin(), kinds.end(), rng);
        const int n_changed = uniform_int(rng, 1, static_cast<int>(kinds.size()));
        for (int i = 0; i < n_changed; ++i) {
          const int k = kinds[i];
          if (k == 0 && spec.n_shapes > 1) rejected.shape = other_than(rng, spec.n_shapes, p.shape);
          if (k == 1 && spec.n_colors > 1) rejected.color = other_than(rng, spec.n_colors, p.color);
          if (k == 2) rejected.count = other_than(rng, spec.max_count, p.count - 1) + 1;
        }
        if (alignment_score(p, rejected) == 3) {
          // Only reachable when a single attribute has one class.
          if (spec.n_colors > 1)
            rejected.color = other_than(rng, spec.n_colors, p.color);
          else if (spec.n_shapes > 1)
            rejected.shape = other_than(rng, spec.n_shapes, p.shape);
          else
            rejected.count = other_than(rng, spec.max_count, p.count - 1) + 1;
        }
        if (spec.n_distractors > 0) rejected.distractors = sample_distractors(spec, p, rng);
      }
      return {chosen, rejected};
    }
    case Perspective::fidelity: {
      ImageAttributes chosen = matching_image(spec, p, rng);
      ImageAttributes rejected = matching_image(spec, p, rng);
      int lo = uniform_int(rng, 0, spec.n_corruption_levels - 1);
      int hi = other_than(rng, spec.n_corruption_levels, lo);
      if (lo > hi) std::swap(lo, hi);
      chosen.corruption = lo;
      rejected.corruption = hi;
      return {chosen, rejected};
    }
    case Perspective::safety: {
      ImageAttributes chosen = matching_image(spec, p, rng);
      ImageAttributes rejected = matching_image(spec, p, rng);
      rejected.corruption = chosen.corruption;
      rejected.unsafe = true;
      return {chosen, rejected};
    }
    case Perspective::overall: {
      for (;;) {
        ImageAttributes a = random_image(spec, p, rng);
        ImageAttributes b = random_image(spec, p, rng);
        const double sa = perspective_score(Perspective::overall, p, a);
        const double sb = perspective_score(Perspective::overall, p, b);
        if (sa == sb) continue;
        return sa > sb ? std::pair{a, b} : std::pair{b, a};
      }
    }
  }
  throw ConfigError("unhandled perspective");
}

}  // namespace detail

// Deterministic in (seed, n, spec).
inline Corpus gen_synthetic_corpus(std::uint64_t seed, int n, const CorpusSpec& spec) {
  if (n < 1) throw ConfigError("corpus size must be >= 1");
  spec.validate();
  std::mt19937_64 rng(seed);
  Corpus corpus;
  corpus.pairs.reserve(n);
  corpus.binary.reserve(n);
  for (int i = 0; i < n; ++i) {
    const PromptAttributes p = detail::sample_prompt(spec, rng);
    TextPrompt prompt = TextPrompt::from_text(prompt_text(p));
    auto [chosen_attrs, rejected_attrs] = detail::sample_leg_attributes(spec, p, rng);
    PairExample pair;
    pair.prompt = prompt;
    pair.perspective = spec.perspective;
    pair.chosen = render_image(chosen_attrs, spec, rng);
    pair.rejected = render_image(rejected_attrs, spec, rng);
    corpus.pairs.push_back(std::move(pair));

    BinaryExample bin;
    bin.prompt = std::move(prompt);
    bin.perspective = spec.perspective;
    if (spec.perspective == Perspective::safety) {
      ImageAttributes a = detail::matching_image(spec, p, rng);
      a.unsafe = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < spec.unsafe_rate;
      bin.label = !a.unsafe;
      bin.image = render_image(a, spec, rng);
    } else {
      const bool take_chosen = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
      bin.label = take_chosen;
      bin.image = take_chosen ? corpus.pairs.back().chosen : corpus.pairs.back().rejected;
    }
    corpus.binary.push_back(std::move(bin));
  }
  return corpus;
}

// Single images with a rule-derived "human" score, for correlation metrics and
// cross-prompt labeling.
inline std::vector<ScoredExample> gen_scored_examples(std::uint64_t seed, int n, const CorpusSpec& spec) {
  if (n < 1) throw ConfigError("corpus size must be >= 1");
  spec.validate();
  std::mt19937_64 rng(seed);
  std::vector<ScoredExample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const PromptAttributes p = detail::sample_prompt(spec, rng);
    ImageAttributes a = detail::random_image(spec, p, rng);
    if (spec.perspective != Perspective::safety && spec.perspective != Perspective::overall) a.unsafe = false;
    ScoredExample ex;
    ex.prompt = TextPrompt::from_text(prompt_text(p));
    ex.image = render_image(a, spec, rng);
    ex.score = perspective_score(spec.perspective, p, a);
    ex.perspective = spec.perspective;
    out.push_back(std::move(ex));
  }
  return out;
}

// Non-overlapping patches in raster order, each flattened (py, px, c), as a
// n_patches x (patch*patch*channels) matrix.
template <class T>
Matrix<T> image_patches(const SyntheticImage& image, int patch) {
  if (patch < 1 || image.height % patch != 0 || image.width % patch != 0)
    throw ShapeError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " not divisible by patch size " + std::to_string(patch));
  const int ny = image.height / patch;
  const int nx = image.width / patch;
  Matrix<T> out(static_cast<std::size_t>(ny) * nx, static_cast<std::size_t>(patch) * patch * image.channels);
  for (int by = 0; by < ny; ++by)
    for (int bx = 0; bx < nx; ++bx) {
      auto row = out.row(static_cast<std::size_t>(by) * nx + bx);
      std::size_t k = 0;
      for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px)
          for (int c = 0; c < image.channels; ++c)
            row[k++] = static_cast<T>(image.at(by * patch + py, bx * patch + px, c));
    }
  return out;
}

inline double pixel_l2_squared(const SyntheticImage& a, const SyntheticImage& b) {
  if (a.pixels.size() != b.pixels.size()) throw ShapeError("image sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = (static_cast<double>(a.pixels[i]) - b.pixels[i]) / 255.0;
    s += d * d;
  }
  return s;
}

}  // namespace skipreward
