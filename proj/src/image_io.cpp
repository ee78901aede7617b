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

#include "gpvit/image_io.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "gpvit/error.hpp"

namespace gpvit {

std::string encode_pnm(const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw UsageError("pnm: images must have 1 or 3 channels");
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw UsageError("pnm: pixel buffer does not match " + std::to_string(image.width) + "x" +
                     std::to_string(image.height));
  }
  std::string out = (image.channels == 1 ? "P5\n" : "P6\n") + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

Image decode_pnm(const std::string& bytes, const std::string& source) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      return;
    }
  };
  auto number = [&]() -> std::size_t {
    skip_space();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) throw IoError(source + ": malformed pnm header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw IoError(source + ": not a binary PGM/PPM file");
  }
  pos = 2;
  Image img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  img.width = number();
  img.height = number();
  const std::size_t maxval = number();
  if (maxval != 255) throw IoError(source + ": only maxval 255 is supported");
  if (img.width == 0 || img.height == 0) throw IoError(source + ": empty image");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw IoError(source + ": malformed pnm header");
  }
  ++pos;
  const std::size_t n = img.width * img.height * img.channels;
  if (bytes.size() - pos < n) throw IoError(source + ": truncated pixel data");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return decode_pnm(buf.str(), path);
}

void write_pnm(const std::string& path, const Image& image) {
  const std::string bytes = encode_pnm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing image '" + path + "'");
}

template <typename T>
Tensor<T> image_to_tensor(const Image& image) {
  std::vector<T> data(image.width * image.height * 3);
  for (std::size_t p = 0; p < image.width * image.height; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::uint8_t v = image.pixels[p * image.channels + (image.channels == 1 ? 0 : c)];
      data[p * 3 + c] = static_cast<T>(v) / T(255);
    }
  }
  return Tensor<T>::from_data({image.height, image.width, 3}, std::move(data));
}

template Tensor<float> image_to_tensor(const Image&);
template Tensor<double> image_to_tensor(const Image&);

}  // namespace gpvit
