#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "dataset_io.hpp"
#include "fk_steering.hpp"
#include "reward_head.hpp"
#include "training.hpp"

namespace skipreward {

using json = nlohmann::json;

inline constexpr int kConfigSchemaVersion = 1;

namespace detail {

// Reads keys from one JSON object and rejects any key nobody asked for.
class KeyReader {
 public:
  KeyReader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError("section '" + section_ + "' must be an object");
  }

  template <class V>
  void get(const char* key, V& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<V>();
    } catch (const json::exception&) {
      throw ConfigError(section_ + "." + key + ": wrong type");
    }
  }

  template <class E, class Parse>
  void get_enum(const char* key, E& out, Parse parse) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_string()) throw ConfigError(section_ + "." + key + ": expected a string");
    out = parse(it->get<std::string>());
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + section_ + "." + it.key() + "'");
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  detail::KeyReader r(j, "model");
  r.get("d_model", c.d_model);
  r.get("n_layers", c.n_layers);
  r.get("n_heads", c.n_heads);
  r.get("vocab_size", c.vocab_size);
  r.get("patch_size", c.patch_size);
  r.get("max_seq", c.max_seq);
  r.get("lora_rank", c.lora_rank);
  r.get("lora_alpha", c.lora_alpha);
  r.get("mlp_ratio", c.mlp_ratio);
  r.get("image_height", c.image_height);
  r.get("image_width", c.image_width);
  r.get("image_channels", c.image_channels);
  r.finish();
  c.validate();
  return c;
}

inline json to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},       {"n_layers", c.n_layers},         {"n_heads", c.n_heads},
          {"vocab_size", c.vocab_size}, {"patch_size", c.patch_size},     {"max_seq", c.max_seq},
          {"lora_rank", c.lora_rank},   {"lora_alpha", c.lora_alpha},     {"mlp_ratio", c.mlp_ratio},
          {"image_height", c.image_height}, {"image_width", c.image_width}, {"image_channels", c.image_channels}};
}

inline HeadConfig head_config_from_json(const json& j) {
  HeadConfig c;
  detail::KeyReader r(j, "head");
  r.get_enum("kind", c.kind, parse_head_kind);
  r.get("output_dim", c.output_dim);
  r.get("n_heads", c.n_heads);
  r.get("hidden_layer", c.hidden_layer);
  r.get_enum("pooling", c.pooling, parse_pooling);
  r.get("visual_layer", c.visual_layer);
  r.get("mlp_hidden", c.mlp_hidden);
  r.finish();
  return c;
}

inline json to_json(const HeadConfig& c) {
  return {{"kind", to_string(c.kind)},        {"output_dim", c.output_dim},     {"n_heads", c.n_heads},
          {"hidden_layer", c.hidden_layer},   {"pooling", to_string(c.pooling)}, {"visual_layer", c.visual_layer},
          {"mlp_hidden", c.mlp_hidden}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  detail::KeyReader r(j, "train");
  r.get("learning_rate", c.learning_rate);
  r.get("batch_size", c.batch_size);
  r.get("grad_accum", c.grad_accum);
  r.get("epochs", c.epochs);
  r.get_enum("objective", c.objective, parse_objective);
  r.get("seed", c.seed);
  r.get("temperature", c.temperature);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("adam_eps", c.adam_eps);
  r.finish();
  c.validate();
  return c;
}

inline json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"grad_accum", c.grad_accum},
          {"epochs", c.epochs},               {"objective", to_string(c.objective)}, {"seed", c.seed},
          {"temperature", c.temperature},     {"beta1", c.beta1},           {"beta2", c.beta2},
          {"adam_eps", c.adam_eps}};
}

inline CorpusSpec corpus_spec_from_json(const json& j) {
  CorpusSpec c;
  detail::KeyReader r(j, "corpus");
  r.get_enum("perspective", c.perspective, parse_perspective);
  r.get("height", c.height);
  r.get("width", c.width);
  r.get("channels", c.channels);
  r.get("n_shapes", c.n_shapes);
  r.get("n_colors", c.n_colors);
  r.get("max_count", c.max_count);
  r.get("n_corruption_levels", c.n_corruption_levels);
  r.get("unsafe_rate", c.unsafe_rate);
  r.get("n_distractors", c.n_distractors);
  r.get("binding", c.binding);
  r.get("position_jitter", c.position_jitter);
  r.finish();
  c.validate();
  return c;
}

inline json to_json(const CorpusSpec& c) {
  return {{"perspective", to_string(c.perspective)},
          {"height", c.height},
          {"width", c.width},
          {"channels", c.channels},
          {"n_shapes", c.n_shapes},
          {"n_colors", c.n_colors},
          {"max_count", c.max_count},
          {"n_corruption_levels", c.n_corruption_levels},
          {"unsafe_rate", c.unsafe_rate},
          {"n_distractors", c.n_distractors},
          {"binding", c.binding},
          {"position_jitter", c.position_jitter}};
}

struct ToyProcessConfig {
  int steps = 30;
  double eta = 1.0;
  State target = {2.0, 2.0};

  void validate() const {
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (target.size() != 2) throw ConfigError("target must be a 2-D point");
  }
};

struct SteerSettings {
  SteeringConfig smc;
  ToyProcessConfig process;
  std::string prompt = "a red square";
};

inline SteerSettings steer_settings_from_json(const json& j) {
  SteerSettings s;
  detail::KeyReader r(j, "steer");
  r.get("k", s.smc.k);
  r.get("lambda", s.smc.lambda);
  r.get_enum("resample_rule", s.smc.resample_rule, parse_resample_rule);
  r.get("ess_fraction", s.smc.ess_fraction);
  r.get_enum("selection", s.smc.selection, parse_final_selection);
  r.get("steps", s.process.steps);
  r.get("eta", s.process.eta);
  r.get("target", s.process.target);
  r.get("prompt", s.prompt);
  r.finish();
  s.smc.validate();
  s.process.validate();
  return s;
}

inline json to_json(const SteerSettings& s) {
  return {{"k", s.smc.k},
          {"lambda", s.smc.lambda},
          {"resample_rule", to_string(s.smc.resample_rule)},
          {"ess_fraction", s.smc.ess_fraction},
          {"selection", to_string(s.smc.selection)},
          {"steps", s.process.steps},
          {"eta", s.process.eta},
          {"target", s.process.target},
          {"prompt", s.prompt}};
}

struct EvalSettings {
  double tie_eps = 0.05;
};

// Everything a config file may set. Sections are optional and default.
struct RunConfig {
  ModelConfig model;
  HeadConfig head;
  TrainConfig train;
  CorpusSpec corpus;
  SteerSettings steer;
  EvalSettings eval;
};

inline RunConfig run_config_from_json(const json& j) {
  detail::KeyReader r(j, "config");
  int version = -1;
  r.get("schema_version", version);
  if (version != kConfigSchemaVersion)
    throw ConfigError("schema_version must be " + std::to_string(kConfigSchemaVersion));
  RunConfig c;
  if (const json* s = r.child("model")) c.model = model_config_from_json(*s);
  if (const json* s = r.child("head")) c.head = head_config_from_json(*s);
  if (const json* s = r.child("train")) c.train = train_config_from_json(*s);
  if (const json* s = r.child("corpus")) c.corpus = corpus_spec_from_json(*s);
  if (const json* s = r.child("steer")) c.steer = steer_settings_from_json(*s);
  if (const json* s = r.child("eval")) {
    detail::KeyReader e(*s, "eval");
    e.get("tie_eps", c.eval.tie_eps);
    e.finish();
    if (!(c.eval.tie_eps >= 0.0)) throw ConfigError("eval.tie_eps must be >= 0");
  }
  r.finish();
  c.head.validate(c.model);
  return c;
}

inline json to_json(const RunConfig& c) {
  return {{"schema_version", kConfigSchemaVersion},
          {"model", to_json(c.model)},
          {"head", to_json(c.head)},
          {"train", to_json(c.train)},
          {"corpus", to_json(c.corpus)},
          {"steer", to_json(c.steer)},
          {"eval", {{"tie_eps", c.eval.tie_eps}}}};
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace skipreward
