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

#include "gpvit/harness/export_groups.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gpvit/error.hpp"

namespace gpvit {

namespace {

void check_map(const std::vector<std::size_t>& argmax, GridShape grid, std::size_t groups) {
  if (groups == 0 || argmax.size() != grid.tokens()) throw UsageError("group map: argmax does not match the grid");
}

}  // namespace

Image group_map_pgm(const std::vector<std::size_t>& argmax, GridShape grid, std::size_t groups) {
  check_map(argmax, grid, groups);
  Image img{grid.width, grid.height, 1, {}};
  img.pixels.reserve(argmax.size());
  for (std::size_t g : argmax) img.pixels.push_back(groups == 1 ? 0 : static_cast<std::uint8_t>(g * 255 / (groups - 1)));
  return img;
}

Image group_map_ppm(const std::vector<std::size_t>& argmax, GridShape grid, std::size_t groups) {
  check_map(argmax, grid, groups);
  Image img{grid.width, grid.height, 3, {}};
  img.pixels.reserve(argmax.size() * 3);
  for (std::size_t g : argmax) {
    // Golden-ratio hue spacing, full saturation and value.
    const double hue = std::fmod(static_cast<double>(g) * 0.618033988749895, 1.0) * 6.0;
    const double f = hue - std::floor(hue);
    const int sector = static_cast<int>(hue) % 6;
    double rgb[3];
    switch (sector) {
      case 0: rgb[0] = 1, rgb[1] = f, rgb[2] = 0; break;
      case 1: rgb[0] = 1 - f, rgb[1] = 1, rgb[2] = 0; break;
      case 2: rgb[0] = 0, rgb[1] = 1, rgb[2] = f; break;
      case 3: rgb[0] = 0, rgb[1] = 1 - f, rgb[2] = 1; break;
      case 4: rgb[0] = f, rgb[1] = 0, rgb[2] = 1; break;
      default: rgb[0] = 1, rgb[1] = 0, rgb[2] = 1 - f; break;
    }
    for (double c : rgb) img.pixels.push_back(static_cast<std::uint8_t>(std::lround(c * 255.0)));
  }
  return img;
}

template <typename T>
std::vector<std::string> export_groups(const Model<T>& model, const Image& image, const std::string& out_dir) {
  const std::size_t size = model.config().input_size;
  if (image.width != size || image.height != size) {
    throw ConfigError("export-groups: image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                      ", model expects " + std::to_string(size) + "x" + std::to_string(size));
  }
  std::filesystem::create_directories(out_dir);
  std::vector<GroupAssignment<T>> assignments;
  {
    NoGradGuard no_grad;
    ForwardContext ctx;
    model.forward_classify(image_to_tensor<T>(image), ctx, &assignments);
  }
  std::vector<std::size_t> layer_index;
  for (std::size_t i = 0; i < model.schedule().size(); ++i) {
    if (model.schedule()[i].kind == LayerKind::gp) layer_index.push_back(i);
  }
  std::vector<std::string> files;
  for (std::size_t b = 0; b < assignments.size(); ++b) {
    const GroupAssignment<T>& a = assignments[b];
    const std::string stem = (std::filesystem::path(out_dir) / ("groups_layer" + std::to_string(layer_index[b]))).string();
    write_pnm(stem + ".pgm", group_map_pgm(a.argmax, a.grid, a.groups));
    write_pnm(stem + ".ppm", group_map_ppm(a.argmax, a.grid, a.groups));

    std::ofstream csv(stem + "_weights.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write '" + stem + "_weights.csv'");
    const std::size_t n = a.grid.tokens(), m = a.groups, heads = a.weights.dim(0);
    csv << "head,group";
    for (std::size_t t = 0; t < n; ++t) csv << ",t" << t;
    csv << '\n';
    const auto w = a.weights.data();
    char buf[32];
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t g = 0; g < m; ++g) {
        csv << h << ',' << g;
        for (std::size_t t = 0; t < n; ++t) {
          std::snprintf(buf, sizeof(buf), ",%.9g", static_cast<double>(w[(h * m + g) * n + t]));
          csv << buf;
        }
        csv << '\n';
      }
    }
    if (!csv) throw IoError("failed writing '" + stem + "_weights.csv'");
    files.push_back(stem + ".pgm");
    files.push_back(stem + ".ppm");
    files.push_back(stem + "_weights.csv");
  }
  return files;
}

template std::vector<std::string> export_groups(const Model<float>&, const Image&, const std::string&);
template std::vector<std::string> export_groups(const Model<double>&, const Image&, const std::string&);

}  // namespace gpvit
