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

#include "darklight/tensor.hpp"

namespace darklight {

// Any 8/16-bit PNG, converted to an RGB [3, H, W] tensor in [0, 1].
Tensor read_png(const std::filesystem::path& path);
// Writes an 8-bit PNG from a [1, H, W] (gray) or [3, H, W] tensor; values
// are clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const Tensor& img);

}  // namespace darklight
