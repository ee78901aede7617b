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

#include "gpvit/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "gpvit/error.hpp"

namespace gpvit {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
constexpr std::uint8_t precision_tag() {
  return sizeof(T) == 4 ? 0 : 1;
}

template <typename V>
void put(std::ofstream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::ifstream& in, const std::string& path) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw IoError("checkpoint '" + path + "' is truncated");
  return v;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  const ParameterList<T> params = model.parameters();
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put(out, kCheckpointVersion);
  put(out, config_digest(model.config()));
  put(out, precision_tag<T>());
  put(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Shape& s = p.tensor.shape();
    put(out, static_cast<std::uint32_t>(s.size()));
    for (std::size_t d : s) put(out, static_cast<std::uint64_t>(d));
    const auto data = p.tensor.data();
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
  }
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

template <typename T>
void load_checkpoint(const std::string& path, Model<T>& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw IoError("'" + path + "' is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) throw IoError("checkpoint '" + path + "' has unsupported version " + std::to_string(version));
  if (get<std::uint64_t>(in, path) != config_digest(model.config())) {
    throw ConfigError("checkpoint '" + path + "' was written for a different configuration");
  }
  if (get<std::uint8_t>(in, path) != precision_tag<T>()) {
    throw ConfigError("checkpoint '" + path + "' precision does not match the model");
  }
  const ParameterList<T> params = model.parameters();
  if (get<std::uint32_t>(in, path) != params.size()) throw ConfigError("checkpoint '" + path + "' tensor count mismatch");
  // Read everything before touching the model so a bad file leaves it intact.
  std::vector<std::vector<T>> staged;
  staged.reserve(params.size());
  for (const auto& p : params) {
    const auto len = get<std::uint32_t>(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw IoError("checkpoint '" + path + "' is truncated");
    if (name != p.name) throw ConfigError("checkpoint '" + path + "': expected tensor " + p.name + ", found " + name);
    const auto rank = get<std::uint32_t>(in, path);
    Shape s(rank);
    for (auto& d : s) d = static_cast<std::size_t>(get<std::uint64_t>(in, path));
    if (s != p.tensor.shape()) {
      throw ConfigError("checkpoint '" + path + "': " + name + " has shape " + shape_str(s) + ", model expects " +
                        shape_str(p.tensor.shape()));
    }
    std::vector<T>& values = staged.emplace_back(p.tensor.numel());
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(T)));
    if (!in) throw IoError("checkpoint '" + path + "' is truncated");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> t = params[i].tensor;
    std::copy(staged[i].begin(), staged[i].end(), t.mutable_data().begin());
  }
}

template void save_checkpoint(const std::string&, const Model<float>&);
template void save_checkpoint(const std::string&, const Model<double>&);
template void load_checkpoint(const std::string&, Model<float>&);
template void load_checkpoint(const std::string&, Model<double>&);

}  // namespace gpvit
