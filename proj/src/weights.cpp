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

#include "darklight/weights.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace darklight {

namespace {

constexpr const char* kFormat = "darklight-weights";
constexpr const char* kDtype = "float64";

std::array<unsigned char, 8> to_le(double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  std::array<unsigned char, 8> out{};
  for (int i = 0; i < 8; ++i) out[i] = static_cast<unsigned char>(bits >> (8 * i));
  return out;
}

double from_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

const Tensor& WeightArchive::at(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw std::out_of_range("weight archive has no tensor named '" + name + "'");
}

std::filesystem::path manifest_path(const std::filesystem::path& payload) {
  auto p = payload;
  p += ".json";
  return p;
}

void save_weights(const std::filesystem::path& payload, const WeightArchive& archive) {
  std::ofstream bin(payload, std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot open " + payload.string() + " for writing");
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : archive.tensors) {
    for (double v : tensor.data()) {
      const auto bytes = to_le(v);
      bin.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    }
    const std::uint64_t nbytes = tensor.numel() * 8;
    entries.push_back({{"name", name},
                       {"shape", tensor.shape()},
                       {"dtype", kDtype},
                       {"offset", offset},
                       {"bytes", nbytes}});
    offset += nbytes;
  }
  if (!bin) throw std::runtime_error("write failed for " + payload.string());
  nlohmann::json manifest = {{"format", kFormat},
                             {"version", 1},
                             {"tensors", entries},
                             {"metadata", archive.metadata}};
  std::ofstream js(manifest_path(payload), std::ios::trunc);
  if (!js) throw std::runtime_error("cannot open " + manifest_path(payload).string());
  js << manifest.dump(2) << '\n';
}

WeightArchive load_weights(const std::filesystem::path& payload) {
  std::ifstream js(manifest_path(payload));
  if (!js) throw std::runtime_error("missing weight manifest " + manifest_path(payload).string());
  const auto manifest = nlohmann::json::parse(js);
  if (manifest.value("format", "") != kFormat) {
    throw std::runtime_error(manifest_path(payload).string() + " is not a darklight weight manifest");
  }
  std::ifstream bin(payload, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + payload.string());
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  WeightArchive archive;
  archive.metadata = manifest.value("metadata", nlohmann::json::object());
  for (const auto& e : manifest.at("tensors")) {
    if (e.at("dtype").get<std::string>() != kDtype) {
      throw std::runtime_error("unsupported dtype " + e.at("dtype").get<std::string>());
    }
    auto shape = e.at("shape").get<Shape>();
    const auto offset = e.at("offset").get<std::uint64_t>();
    const auto nbytes = e.at("bytes").get<std::uint64_t>();
    if (nbytes != shape_numel(shape) * 8 || offset + nbytes > blob.size()) {
      throw std::runtime_error("corrupt entry '" + e.at("name").get<std::string>() + "' in " +
                               payload.string());
    }
    std::vector<double> values(shape_numel(shape));
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = from_le(blob.data() + offset + 8 * i);
    archive.tensors.push_back({e.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values))});
  }
  return archive;
}

}  // namespace darklight
