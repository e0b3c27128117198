#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "data.hpp"

namespace skipreward {

// Writes through a sibling temp file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  namespace fs = std::filesystem;
  if (path.has_parent_path() && !path.parent_path().empty()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("rename to " + path.string() + " failed: " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

inline std::string hex_encode(const std::vector<std::uint8_t>& bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

inline std::vector<std::uint8_t> hex_decode(const std::string& s) {
  if (s.size() % 2 != 0) throw ParseError("odd-length hex string");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw ParseError(std::string("invalid hex digit '") + c + "'");
  };
  std::vector<std::uint8_t> out(s.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(nibble(s[2 * i]) << 4 | nibble(s[2 * i + 1]));
  return out;
}

using nlohmann::json;

inline json image_to_json(const SyntheticImage& img) {
  const auto& a = img.attributes;
  json distractors = json::array();
  for (const auto& d : a.distractors) distractors.push_back({d.shape, d.color});
  return {{"h", img.height},
          {"w", img.width},
          {"c", img.channels},
          {"attrs",
           {{"shape", a.shape},
            {"color", a.color},
            {"count", a.count},
            {"corruption", a.corruption},
            {"unsafe", a.unsafe},
            {"distractors", distractors}}},
          {"pixels", hex_encode(img.pixels)}};
}

inline SyntheticImage image_from_json(const json& j) {
  SyntheticImage img;
  img.height = j.at("h").get<int>();
  img.width = j.at("w").get<int>();
  img.channels = j.at("c").get<int>();
  const json& a = j.at("attrs");
  img.attributes.shape = a.at("shape").get<int>();
  img.attributes.color = a.at("color").get<int>();
  img.attributes.count = a.at("count").get<int>();
  img.attributes.corruption = a.at("corruption").get<int>();
  img.attributes.unsafe = a.at("unsafe").get<bool>();
  for (const auto& d : a.at("distractors")) img.attributes.distractors.push_back({d.at(0), d.at(1)});
  img.pixels = hex_decode(j.at("pixels").get<std::string>());
  if (img.height <= 0 || img.width <= 0 || img.channels <= 0 ||
      img.pixels.size() != static_cast<std::size_t>(img.height) * img.width * img.channels)
    throw ParseError("pixel payload does not match image dimensions");
  return img;
}

inline TextPrompt prompt_from_json(const json& j) { return TextPrompt::from_text(j.get<std::string>()); }

}  // namespace detail

// One JSON object per line; "type" is one of pair, binary, scored.
inline std::string serialize_dataset(const Dataset& d) {
  using detail::json;
  std::string out;
  for (const auto& p : d.pairs) {
    json j = {{"type", "pair"},
              {"perspective", to_string(p.perspective)},
              {"prompt", p.prompt.raw},
              {"chosen", detail::image_to_json(p.chosen)},
              {"rejected", detail::image_to_json(p.rejected)}};
    if (p.rejected_prompt) j["rejected_prompt"] = p.rejected_prompt->raw;
    out += j.dump();
    out += '\n';
  }
  for (const auto& b : d.binary) {
    json j = {{"type", "binary"},
              {"perspective", to_string(b.perspective)},
              {"prompt", b.prompt.raw},
              {"image", detail::image_to_json(b.image)},
              {"label", b.label}};
    out += j.dump();
    out += '\n';
  }
  for (const auto& s : d.scored) {
    json j = {{"type", "scored"},
              {"perspective", to_string(s.perspective)},
              {"prompt", s.prompt.raw},
              {"image", detail::image_to_json(s.image)},
              {"score", s.score}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline Dataset parse_dataset(const std::string& text) {
  using detail::json;
  Dataset d;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      const Perspective perspective = parse_perspective(j.at("perspective").get<std::string>());
      if (type == "pair") {
        PairExample p;
        p.perspective = perspective;
        p.prompt = detail::prompt_from_json(j.at("prompt"));
        p.chosen = detail::image_from_json(j.at("chosen"));
        p.rejected = detail::image_from_json(j.at("rejected"));
        if (j.contains("rejected_prompt")) p.rejected_prompt = detail::prompt_from_json(j.at("rejected_prompt"));
        d.pairs.push_back(std::move(p));
      } else if (type == "binary") {
        BinaryExample b;
        b.perspective = perspective;
        b.prompt = detail::prompt_from_json(j.at("prompt"));
        b.image = detail::image_from_json(j.at("image"));
        b.label = j.at("label").get<bool>();
        d.binary.push_back(std::move(b));
      } else if (type == "scored") {
        ScoredExample s;
        s.perspective = perspective;
        s.prompt = detail::prompt_from_json(j.at("prompt"));
        s.image = detail::image_from_json(j.at("image"));
        s.score = j.at("score").get<double>();
        d.scored.push_back(std::move(s));
      } else {
        throw ParseError("unknown record type '" + type + "'");
      }
    } catch (const std::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return d;
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& d) {
  write_file_atomic(path, serialize_dataset(d));
}

inline Dataset load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

}  // namespace skipreward
