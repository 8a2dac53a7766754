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

#include "darklight/scenes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace darklight {

double iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double ih = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

void SceneSpec::validate() const {
  if (height < 16 || width < 16) throw std::invalid_argument("SceneSpec: canvas must be at least 16x16");
  if (min_objects < 1 || max_objects < min_objects) throw std::invalid_argument("SceneSpec: bad object count range");
  if (min_side < 1 || max_side < min_side || static_cast<std::size_t>(max_side) > std::min(height, width)) {
    throw std::invalid_argument("SceneSpec: bad side range");
  }
  if (!(max_pair_iou >= 0 && max_pair_iou <= 1)) throw std::invalid_argument("SceneSpec: max_pair_iou outside [0,1]");
  if (!(0 <= fill_lo && fill_lo <= fill_hi && fill_hi <= 1)) throw std::invalid_argument("SceneSpec: bad fill range");
  if (!(0 <= background_lo && background_lo <= background_hi && background_hi <= 1)) {
    throw std::invalid_argument("SceneSpec: bad background range");
  }
}

nlohmann::json SceneSpec::to_json() const {
  return {{"height", height},       {"width", width},       {"min_objects", min_objects},
          {"max_objects", max_objects}, {"min_side", min_side}, {"max_side", max_side},
          {"max_pair_iou", max_pair_iou}, {"fill", {fill_lo, fill_hi}},
          {"background", {background_lo, background_hi}}};
}

SceneSpec SceneSpec::from_json(const nlohmann::json& j) {
  SceneSpec s;
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.min_objects = j.value("min_objects", s.min_objects);
  s.max_objects = j.value("max_objects", s.max_objects);
  s.min_side = j.value("min_side", s.min_side);
  s.max_side = j.value("max_side", s.max_side);
  s.max_pair_iou = j.value("max_pair_iou", s.max_pair_iou);
  if (j.contains("fill")) {
    s.fill_lo = j["fill"].at(0);
    s.fill_hi = j["fill"].at(1);
  }
  if (j.contains("background")) {
    s.background_lo = j["background"].at(0);
    s.background_hi = j["background"].at(1);
  }
  s.validate();
  return s;
}

namespace {

struct Placed {
  std::vector<std::size_t> pixels;  // y * W + x
  Box box;
};

// Rasterizes a shape inside the candidate frame; the box is the tight extent
// of the painted pixel squares.
Placed rasterize(ShapeKind kind, double fx, double fy, double fw, double fh, double apex, std::size_t h,
                 std::size_t w) {
  Placed p;
  std::size_t xmin = w, xmax = 0, ymin = h, ymax = 0;
  const auto y_lo = static_cast<std::size_t>(std::max(0.0, std::floor(fy)));
  const auto y_hi = std::min(h, static_cast<std::size_t>(std::ceil(fy + fh)));
  const auto x_lo = static_cast<std::size_t>(std::max(0.0, std::floor(fx)));
  const auto x_hi = std::min(w, static_cast<std::size_t>(std::ceil(fx + fw)));
  for (std::size_t y = y_lo; y < y_hi; ++y) {
    for (std::size_t x = x_lo; x < x_hi; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      bool inside = false;
      switch (kind) {
        case ShapeKind::kRectangle:
          inside = px >= fx && px < fx + fw && py >= fy && py < fy + fh;
          break;
        case ShapeKind::kCircle: {
          const double r = 0.5 * std::min(fw, fh);
          const double dx = px - (fx + 0.5 * fw), dy = py - (fy + 0.5 * fh);
          inside = dx * dx + dy * dy <= r * r;
          break;
        }
        case ShapeKind::kTriangle: {
          // apex on the top edge, base on the bottom edge
          const double t = (py - fy) / fh;
          if (t < 0 || t > 1) break;
          const double ax = fx + apex * fw;
          const double left = ax + (fx - ax) * t, right = ax + (fx + fw - ax) * t;
          inside = px >= left && px <= right;
          break;
        }
      }
      if (!inside) continue;
      p.pixels.push_back(y * w + x);
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!p.pixels.empty()) p.box = {double(xmin), double(ymin), double(xmax + 1), double(ymax + 1)};
  return p;
}

}  // namespace

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed, std::size_t index) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(seed, index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t h = spec.height, w = spec.width;

  std::vector<double> img(3 * h * w);
  for (std::size_t c = 0; c < 3; ++c) {
    std::array<double, 4> amp, fx, fy, phase;
    double norm = 0;
    for (int k = 0; k < 4; ++k) {
      amp[k] = 0.2 + unit(rng);
      fx[k] = std::uniform_int_distribution<int>(0, 2)(rng);
      fy[k] = std::uniform_int_distribution<int>(0, 2)(rng);
      phase[k] = 2 * std::numbers::pi * unit(rng);
      norm += amp[k];
    }
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double f = 0;
        for (int k = 0; k < 4; ++k) {
          f += amp[k] * std::cos(2 * std::numbers::pi * (fx[k] * x / double(w) + fy[k] * y / double(h)) + phase[k]);
        }
        const double t = 0.5 * (f / norm + 1.0);  // [0, 1]
        img[(c * h + y) * w + x] = spec.background_lo + (spec.background_hi - spec.background_lo) * t;
      }
    }
  }

  Scene scene;
  const int count = std::uniform_int_distribution<int>(spec.min_objects, spec.max_objects)(rng);
  std::uniform_int_distribution<int> side(spec.min_side, spec.max_side);
  for (int obj = 0; obj < count; ++obj) {
    const auto kind = static_cast<ShapeKind>(std::uniform_int_distribution<int>(0, 2)(rng));
    std::array<double, 3> fill;
    for (auto& f : fill) f = spec.fill_lo + (spec.fill_hi - spec.fill_lo) * unit(rng);
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      double fw = side(rng), fh = side(rng);
      if (kind == ShapeKind::kCircle) fh = fw;
      const double fx = unit(rng) * (double(w) - fw), fy = unit(rng) * (double(h) - fh);
      const Placed p = rasterize(kind, fx, fy, fw, fh, unit(rng), h, w);
      if (p.pixels.empty() || p.box.width() < spec.min_side || p.box.height() < spec.min_side) continue;
      const bool clear = std::all_of(scene.boxes.begin(), scene.boxes.end(),
                                     [&](const Box& b) { return iou(b, p.box) <= spec.max_pair_iou; });
      if (!clear) continue;
      for (std::size_t px : p.pixels)
        for (std::size_t c = 0; c < 3; ++c) img[c * h * w + px] = fill[c];
      scene.boxes.push_back(p.box);
      placed = true;
    }
    if (!placed) throw std::runtime_error("generate_scene: could not place object; canvas too crowded");
  }
  scene.image = Tensor({3, h, w}, std::move(img));
  return scene;
}

std::vector<Scene> generate_corpus(std::size_t n, std::uint64_t seed, const SceneSpec& spec) {
  if (n == 0) throw std::invalid_argument("generate_corpus: n must be >= 1");
  std::vector<Scene> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_scene(spec, seed, i));
  return out;
}

std::vector<PairedSample> build_pairs(const std::vector<Scene>& corpus, std::uint64_t seed, std::uint64_t param_offset) {
  if (corpus.empty()) throw std::invalid_argument("build_pairs: empty corpus");
  std::vector<PairedSample> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    PairedSample s;
    s.well_lit = corpus[i].image;
    s.isp = sample_params(derive_seed(seed, param_offset + i));
    s.low_light = synthesize_low_light(s.well_lit, s.isp);
    s.boxes = corpus[i].boxes;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace darklight
