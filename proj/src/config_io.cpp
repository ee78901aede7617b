// Copyright 2026 The GPViT-cpp Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "gpvit/config.hpp"
#include "gpvit/error.hpp"

namespace gpvit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& v) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (v.empty() || r.ec != std::errc() || r.ptr != end) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& v) {
  std::istringstream in(v);
  double out = 0.0;
  in >> out;
  if (v.empty() || in.fail() || !in.eof()) throw ConfigError("expected a number, got '" + v + "'");
  return out;
}

std::vector<std::size_t> to_list(const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty()) return out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(to_size(trim(item)));
  return out;
}

std::string list_str(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

// Shortest text that parses back to the same double.
std::string num_str(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

using Setter = std::function<void(ModelConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> s = {
      {"name", [](ModelConfig& c, const std::string& v) { c.name = v; }},
      {"family", [](ModelConfig& c, const std::string& v) { c.family = parse_family(v); }},
      {"patch_size", [](ModelConfig& c, const std::string& v) { c.patch_size = to_size(v); }},
      {"channels", [](ModelConfig& c, const std::string& v) { c.channels = to_size(v); }},
      {"depth", [](ModelConfig& c, const std::string& v) { c.depth = to_size(v); }},
      {"attention", [](ModelConfig& c, const std::string& v) { c.attention = parse_attention(v); }},
      {"heads", [](ModelConfig& c, const std::string& v) { c.heads = to_size(v); }},
      {"ffn_expansion", [](ModelConfig& c, const std::string& v) { c.ffn_expansion = to_size(v); }},
      {"gp_positions", [](ModelConfig& c, const std::string& v) { c.gp_positions = to_list(v); }},
      {"gp_group_counts", [](ModelConfig& c, const std::string& v) { c.gp_group_counts = to_list(v); }},
      {"propagation", [](ModelConfig& c, const std::string& v) { c.propagation = parse_propagation(v); }},
      {"block_override", [](ModelConfig& c, const std::string& v) { c.block_override = parse_override(v); }},
      {"drop_path", [](ModelConfig& c, const std::string& v) { c.drop_path = to_double(v); }},
      {"num_classes", [](ModelConfig& c, const std::string& v) { c.num_classes = to_size(v); }},
      {"input_size", [](ModelConfig& c, const std::string& v) { c.input_size = to_size(v); }},
      {"window_size", [](ModelConfig& c, const std::string& v) { c.window_size = to_size(v); }},
      {"strip_size", [](ModelConfig& c, const std::string& v) { c.strip_size = to_size(v); }},
      {"grouping_heads", [](ModelConfig& c, const std::string& v) { c.grouping_heads = to_size(v); }},
      {"ungrouping_heads", [](ModelConfig& c, const std::string& v) { c.ungrouping_heads = to_size(v); }},
      {"mixer_token_expansion", [](ModelConfig& c, const std::string& v) { c.mixer_token_expansion = to_double(v); }},
      {"mixer_channel_expansion",
       [](ModelConfig& c, const std::string& v) { c.mixer_channel_expansion = to_size(v); }},
  };
  return s;
}

}  // namespace

ModelConfig parse_config(const std::string& text, const std::string& source) {
  ModelConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    std::string line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + key + ": unknown key");
    if (seen.count(key)) {
      throw ConfigError(where + key + ": duplicate key (first set on line " + std::to_string(seen[key]) + ")");
    }
    seen[key] = line_no;
    try {
      it->second(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    // validate() messages start with the field name.
    const std::string msg = e.what();
    const std::string field = msg.substr(0, msg.find(':'));
    const auto line = seen.count(field) ? std::to_string(seen[field]) : std::string("0");
    throw ConfigError(source + ":" + line + ": " + msg);
  }
  return cfg;
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

std::string serialize_config(const ModelConfig& c) {
  std::ostringstream out;
  out << "name = " << c.name << "\n"
      << "family = " << family_name(c.family) << "\n"
      << "patch_size = " << c.patch_size << "\n"
      << "channels = " << c.channels << "\n"
      << "depth = " << c.depth << "\n"
      << "attention = " << attention_name(c.attention) << "\n"
      << "heads = " << c.heads << "\n"
      << "ffn_expansion = " << c.ffn_expansion << "\n"
      << "gp_positions = " << list_str(c.gp_positions) << "\n"
      << "gp_group_counts = " << list_str(c.gp_group_counts) << "\n"
      << "propagation = " << propagation_name(c.propagation) << "\n"
      << "block_override = " << override_name(c.block_override) << "\n"
      << "drop_path = " << num_str(c.drop_path) << "\n"
      << "num_classes = " << c.num_classes << "\n"
      << "input_size = " << c.input_size << "\n"
      << "window_size = " << c.window_size << "\n"
      << "strip_size = " << c.strip_size << "\n"
      << "grouping_heads = " << c.grouping_heads << "\n"
      << "ungrouping_heads = " << c.ungrouping_heads << "\n"
      << "mixer_token_expansion = " << num_str(c.mixer_token_expansion) << "\n"
      << "mixer_channel_expansion = " << c.mixer_channel_expansion << "\n";
  return out.str();
}

std::uint64_t config_digest(const ModelConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  // The name is a label only and does not affect the architecture.
  const std::string text = serialize_config(cfg);
  for (unsigned char ch : text.substr(text.find('\n') + 1)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace gpvit
