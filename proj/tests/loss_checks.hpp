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

// Loss-level checks shared by the unit and acceptance suites.

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "darklight/harness.hpp"
#include "gradcheck.hpp"

namespace darklight::testing {

inline double sym_kl_oracle(const std::vector<double>& p, const std::vector<double>& q) {
  double a = 0, b = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    a += p[i] * std::log(p[i] / q[i]);
    b += q[i] * std::log(q[i] / p[i]);
  }
  return a + b;
}

// |total_loss - hand-weighted sum| over random component values.
inline double weighted_sum_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 5);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double det = u(rng), mfa = u(rng), rc = u(rng), ref = u(rng), recon = u(rng), smooth = u(rng),
                 ir = u(rng);
    LossComponents c;
    c.det = Tensor::scalar(det);
    c.mfa = Tensor::scalar(mfa);
    c.rc = Tensor::scalar(rc);
    c.ref = Tensor::scalar(ref);
    c.recon = Tensor::scalar(recon);
    c.smooth = Tensor::scalar(smooth);
    c.ir = Tensor::scalar(ir);
    const double hand = det + 0.1 * mfa + 0.001 * rc + ref + (recon + 0.5 * smooth + 0.01 * ir);
    worst = std::max(worst, std::abs(total_loss(c, LossWeights{}).item() - hand));
  }
  return worst;
}

inline std::vector<std::pair<std::string, double>> loss_gradient_errors(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::pair<std::string, double>> out;
  auto img = [&](const Shape& s) { return random_tensor(s, rng, 0.05, 0.95); };
  auto add = [&](std::string name, const GradCheckResult& r) { out.emplace_back(std::move(name), r.max_rel_error); };
  // The losses contain |x| terms; random neighbours can sit within 1e-6 of
  // each other, so probe with a step well below that.
  const auto grad_check = [](const auto& fn, std::vector<Tensor> leaves) {
    return testing::grad_check(fn, std::move(leaves), 1e-7);
  };

  for (auto d : {MfaDistance::kKL, MfaDistance::kL1, MfaDistance::kL2}) {
    add("mfa_loss " + to_string(d),
        grad_check([d](auto& l) { return mfa_loss({l[0], l[1]}, d); }, {img({6, 4, 4}), img({6, 4, 4})}));
  }
  add("ref_loss", grad_check([](auto& l) { return ref_loss(l[0], l[1]); }, {img({3, 12, 12}), img({3, 12, 12})}));
  add("rc_loss", grad_check([](auto& l) {
        InterchangeState s;
        s.r1_n = l[0];
        s.r1_l = l[1];
        s.r2_n = l[2];
        s.r2_l = l[3];
        return rc_loss(s);
      }, {img({3, 4, 4}), img({3, 4, 4}), img({3, 4, 4}), img({3, 4, 4})}));
  const Tensor il = img({3, 5, 5}).detach(), in = img({3, 5, 5}).detach();
  add("penalty_loss", grad_check([&](auto& l) {
        const auto i2 = interchange_reconstruct(l[0], l[1], l[2], l[3]);
        return penalty_loss(i2.i2_l, i2.i2_n, il, in);
      }, {img({3, 5, 5}), img({3, 5, 5}), img({1, 5, 5}), img({1, 5, 5})}));
  const Tensor dn = img({3, 12, 12}).detach(), dl = img({3, 12, 12}).detach();
  add("decomposition_loss", grad_check([&](auto& l) {
        return decomposition_loss({l[0], l[1]}, {l[2], l[3]}, dn, dl).total;
      }, {img({3, 12, 12}), img({1, 12, 12}), img({3, 12, 12}), img({1, 12, 12})}));
  const std::vector<Box> boxes{{3, 5, 20, 17}, {26, 30, 40, 46}};
  add("detection_loss", grad_check([&](auto& l) { return detection_loss(l[0], boxes, 8); },
                                   {random_tensor({5, 6, 6}, rng, -2, 2)}));
  add("total_loss", grad_check([&](auto& l) {
        LossComponents c;
        c.det = detection_loss(l[0], boxes, 8);
        c.mfa = mfa_loss({l[1], l[2]});
        c.ref = ref_loss(l[3], l[4]);
        const auto d = decomposition_loss({l[3], l[5]}, {l[4], l[6]}, dn, dl);
        c.recon = d.recon;
        c.smooth = d.smooth;
        c.ir = d.ir;
        InterchangeState s;
        s.r1_n = l[3];
        s.r1_l = l[4];
        s.r2_l = l[4] * 0.9;
        s.r2_n = l[3] * 1.1;
        c.rc = rc_loss(s);
        return total_loss(c, LossWeights{});
      }, {random_tensor({5, 6, 6}, rng, -2, 2), img({4, 3, 3}), img({4, 3, 3}), img({3, 12, 12}),
          img({3, 12, 12}), img({1, 12, 12}), img({1, 12, 12})}));
  return out;
}

// Full objective, two 16x16 pairs, 20 random weight coordinates.
inline double end_to_end_gradient_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TrainConfig cfg;
  cfg.ablation = ladder_config("full");
  cfg.seed = seed;
  DaiNet net(cfg.backbone, {}, seed);
  std::vector<PairedSample> pairs;
  std::vector<PseudoTruth> pseudo;
  for (int i = 0; i < 2; ++i) {
    PairedSample p;
    p.well_lit = random_tensor({3, 16, 16}, rng, 0.05, 0.95, false);
    p.low_light = p.well_lit * 0.3;
    p.boxes = {{2, 2, 12, 11}};
    pairs.push_back(p);
    pseudo.push_back({{random_tensor({3, 16, 16}, rng, 0.05, 0.95, false), random_tensor({1, 16, 16}, rng, 0.05, 0.95, false)},
                      {random_tensor({3, 16, 16}, rng, 0.05, 0.95, false), random_tensor({1, 16, 16}, rng, 0.05, 0.95, false)}});
  }
  const auto& items = net.parameters().items();
  std::vector<Tensor> leaves;
  for (const auto& it : items) leaves.push_back(it.tensor);
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  while (coords.size() < 20) {
    const std::size_t li = rng() % leaves.size();
    coords.emplace_back(li, rng() % leaves[li].numel());
  }
  const auto r = grad_check([&](std::vector<Tensor>&) {
        Tensor loss = Tensor::scalar(0.0);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
          loss = loss + total_loss(pair_components(net, cfg, pairs[i], &pseudo[i]), cfg.weights);
        }
        return loss * 0.5;
      }, leaves, 1e-5, coords);
  return r.max_rel_error;
}

}  // namespace darklight::testing
