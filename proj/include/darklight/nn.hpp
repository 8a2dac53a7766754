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
#include <random>
#include <string>
#include <vector>

#include "darklight/tensor.hpp"
#include "darklight/weights.hpp"

namespace darklight::nn {

// Square-kernel convolution with a per-channel bias and same padding.
struct Conv {
  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out, 1, 1]

  Tensor operator()(const Tensor& x) const;
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
};

// Weights ~ U(-b, b) with b = sqrt(6 / fan_in); bias zero.
Conv make_conv(std::size_t in, std::size_t out, std::size_t kernel, std::mt19937_64& rng);

// Ordered, named parameter list. Tensors are shared handles, so updates made
// through the list are seen by the owning model.
class Parameters {
 public:
  void add(std::string name, Tensor t);
  void add_conv(const std::string& prefix, const Conv& conv);

  const std::vector<NamedTensor>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  WeightArchive to_archive(nlohmann::json metadata = nlohmann::json::object()) const;
  // Copies values by name; every parameter must be present with its shape.
  void assign(const WeightArchive& archive);

 private:
  std::vector<NamedTensor> items_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const Parameters& params, AdamConfig cfg);

  // Applies one update from the accumulated grads, then zeroes them.
  // Parameters without a grad are left unchanged.
  void step();
  long steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamConfig cfg_;
  long t_ = 0;
};

}  // namespace darklight::nn
