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

#include <vector>

#include "darklight/dark_isp.hpp"
#include "darklight/tensor.hpp"

namespace darklight {

// Axis-aligned box in pixel coordinates, [x0, x1) x [y0, y1).
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);

struct Scene {
  Tensor image;  // [3, H, W]
  std::vector<Box> boxes;
};

// A well-lit image, its synthetic low-light twin and shared boxes.
struct PairedSample {
  Tensor well_lit;
  Tensor low_light;
  std::vector<Box> boxes;
  DarkIspParams isp;
};

}  // namespace darklight
