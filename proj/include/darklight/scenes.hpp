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

#include <cstdint>
#include <vector>

#include "darklight/sample.hpp"
#include "json.hpp"

namespace darklight {

enum class ShapeKind { kCircle, kRectangle, kTriangle };

// Synthetic well-lit scenes: filled shapes over a smooth background.
struct SceneSpec {
  std::size_t height = 96;
  std::size_t width = 96;
  int min_objects = 1;
  int max_objects = 5;
  int min_side = 8;
  int max_side = 32;
  double max_pair_iou = 0.3;
  double fill_lo = 0.3, fill_hi = 1.0;
  double background_lo = 0.4, background_hi = 0.9;

  void validate() const;
  nlohmann::json to_json() const;
  static SceneSpec from_json(const nlohmann::json& j);
};

// Scene `index` depends only on (spec, seed, index).
Scene generate_scene(const SceneSpec& spec, std::uint64_t seed, std::size_t index);
std::vector<Scene> generate_corpus(std::size_t n, std::uint64_t seed, const SceneSpec& spec = {});

// Pairs each scene with synthesize_low_light(image, sample_params(s_i)), where
// s_i = derive_seed(seed, param_offset + i). Disjoint offsets give disjoint
// degradation draws.
std::vector<PairedSample> build_pairs(const std::vector<Scene>& corpus, std::uint64_t seed,
                                      std::uint64_t param_offset = 0);

}  // namespace darklight
