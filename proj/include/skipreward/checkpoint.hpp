#pragma once

#include <cstdio>
#include <filesystem>
#include <string>

#include "config.hpp"
#include "reward_model.hpp"

namespace skipreward {

inline constexpr const char* kCheckpointFormat = "skipreward-checkpoint";

namespace detail {

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template <class T>
json matrix_to_json(const Matrix<T>& m) {
  json data = json::array();
  for (T v : m.values()) data.push_back(static_cast<double>(v));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

template <class T>
void matrix_from_json(const json& j, Matrix<T>& m, const std::string& name) {
  if (j.at("rows").get<std::size_t>() != m.rows() || j.at("cols").get<std::size_t>() != m.cols())
    throw ShapeError("checkpoint tensor '" + name + "' has the wrong shape");
  const json& data = j.at("data");
  if (!data.is_array() || data.size() != m.size()) throw ParseError("checkpoint tensor '" + name + "' is truncated");
  std::size_t i = 0;
  for (const auto& v : data) m.data()[i++] = static_cast<T>(v.get<double>());
}

template <class Params>
json params_to_json(const Params& p) {
  json out = json::object();
  p.for_each([&out](const std::string& name, const auto& m) { out[name] = matrix_to_json(m); });
  return out;
}

template <class Params>
void params_from_json(const json& j, Params& p) {
  std::size_t n = 0;
  p.for_each([&](const std::string& name, auto& m) {
    auto it = j.find(name);
    if (it == j.end()) throw ParseError("checkpoint is missing tensor '" + name + "'");
    matrix_from_json(*it, m, name);
    ++n;
  });
  if (n != j.size()) throw ParseError("checkpoint has unexpected tensors");
}

}  // namespace detail

template <class T>
std::string serialize_checkpoint(const RewardModel<T>& model) {
  using detail::json;
  json j;
  j["format"] = kCheckpointFormat;
  j["model_config"] = to_json(model.config());
  j["config_hash"] = detail::hash_hex(model.config().hash());
  j["merged"] = model.backbone().body().merged;
  j["body"] = detail::params_to_json(model.backbone().body());
  json adapters = json::object();
  for (const auto& [p, a] : model.adapters()) {
    adapters[to_string(p)] = {{"head_config", to_json(a.head_config)},
                              {"scaling", static_cast<double>(a.backbone.scaling)},
                              {"params", detail::params_to_json(a)}};
  }
  j["adapters"] = std::move(adapters);
  return j.dump() + "\n";
}

template <class T>
RewardModel<T> parse_checkpoint(const std::string& text) {
  using detail::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  try {
    if (j.value("format", "") != kCheckpointFormat) throw ParseError("not a checkpoint file");
    const ModelConfig cfg = model_config_from_json(j.at("model_config"));
    if (j.at("config_hash").get<std::string>() != detail::hash_hex(cfg.hash()))
      throw ConfigError("checkpoint config hash mismatch");
    RewardModel<T> model = RewardModel<T>::random(cfg, 0);
    auto& body = model.mutable_backbone().mutable_body();
    detail::params_from_json(j.at("body"), body);
    body.merged = j.at("merged").get<bool>();
    for (auto it = j.at("adapters").begin(); it != j.at("adapters").end(); ++it) {
      const Perspective p = parse_perspective(it.key());
      const HeadConfig hc = head_config_from_json(it->at("head_config"));
      PerspectiveAdapter<T>& a = model.add_perspective(p, hc, 0);
      detail::params_from_json(it->at("params"), a);
      a.backbone.scaling = static_cast<T>(it->at("scaling").get<double>());
    }
    return model;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const RewardModel<T>& model) {
  write_file_atomic(path, serialize_checkpoint(model));
}

template <class T>
RewardModel<T> load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint<T>(read_file(path));
}

// Rejects a checkpoint whose model config differs from the expected one.
inline void check_config_hash(const ModelConfig& expected, const ModelConfig& actual) {
  if (expected.hash() != actual.hash())
    throw ConfigError("config hash mismatch: expected " + detail::hash_hex(expected.hash()) + ", checkpoint has " +
                      detail::hash_hex(actual.hash()));
}

}  // namespace skipreward
