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

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "darklight/tensor.hpp"
#include "json.hpp"

namespace darklight {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Weight archive on disk: `<path>` holds the concatenated little-endian
// float64 payloads, `<path>.json` the manifest
// {"tensors": [{name, shape, dtype, offset, bytes}], "metadata": {...}}.
struct WeightArchive {
  std::vector<NamedTensor> tensors;
  nlohmann::json metadata = nlohmann::json::object();

  const Tensor& at(const std::string& name) const;
};

std::filesystem::path manifest_path(const std::filesystem::path& payload);
void save_weights(const std::filesystem::path& payload, const WeightArchive& archive);
WeightArchive load_weights(const std::filesystem::path& payload);

}  // namespace darklight
