// Copyright 2026 The darklight Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "darklight/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace darklight {

Tensor read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw std::runtime_error("read_png: " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw std::runtime_error("read_png: " + path.string() + ": " + image.message);
  }
  const std::size_t h = image.height, w = image.width;
  std::vector<double> values(3 * h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t c = 0; c < 3; ++c) values[c * h * w + i] = buffer[3 * i + c] / 255.0;
  }
  return Tensor({3, h, w}, std::move(values));
}

void write_png(const std::filesystem::path& path, const Tensor& img) {
  if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3)) {
    throw std::invalid_argument("write_png: expected [1|3, H, W], got " + shape_to_string(img.shape()));
  }
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  std::vector<png_byte> buffer(c * h * w);
  auto v = img.data();
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      buffer[c * i + k] = static_cast<png_byte>(std::lround(std::clamp(v[k * h * w + i], 0.0, 1.0) * 255.0));
    }
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw std::runtime_error("write_png: " + path.string() + ": " + image.message);
  }
}

}  // namespace darklight
