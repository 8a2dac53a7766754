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

#include <cmath>
#include <random>

#include "darklight/dai_net.hpp"
#include "darklight/harness.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "loss_checks.hpp"

using namespace darklight;
using testing::random_tensor;

namespace {

bool same(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

double logit(double p) { return std::log(p / (1 - p)); }

}  // namespace

TEST_CASE("forward_split: shapes and determinism") {
  const DaiNet net({}, {}, 3);
  CHECK(net.backbone().stride() == 8);
  CHECK(net.backbone().feature_stride() == 2);
  std::mt19937_64 rng(1);
  const Tensor img = random_tensor({3, 96, 96}, rng, 0, 1, false);
  const auto a = net.forward_split(img), b = net.forward_split(img);
  CHECK(a.features.shape() == Shape{16, 48, 48});
  CHECK(a.raw.shape() == Shape{5, 12, 12});
  CHECK(same(a.features, b.features));
  CHECK(same(a.raw, b.raw));
  CHECK(same(net.features(img), a.features));
  CHECK_THROWS_AS(net.forward_split(Tensor::zeros({3, 20, 20})), std::invalid_argument);
  CHECK_THROWS_AS(net.forward_split(Tensor::zeros({1, 16, 16})), std::invalid_argument);

  BackboneConfig bad;
  bad.split_index = 6;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.split_index = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("forward_split: input gradient matches finite differences") {
  const DaiNet net({}, {}, 4);
  std::mt19937_64 rng(2);
  const Tensor img = random_tensor({3, 16, 16}, rng, 0, 1);
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (int i = 0; i < 40; ++i) coords.emplace_back(0, rng() % img.numel());
  const auto r = testing::grad_check(
      [&](std::vector<Tensor>& v) {
        const auto out = net.forward_split(v[0]);
        return sum(square(out.raw)) + mean(out.features);
      },
      {img}, 1e-5, coords);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("reflectance_decode: range and resolution") {
  for (auto target : {DecoderTarget::kReflectance, DecoderTarget::kIllumination, DecoderTarget::kBoth}) {
    ReflectanceDecoderConfig dc;
    dc.target = target;
    const DaiNet net({}, dc, 5);
    std::mt19937_64 rng(3);
    const Tensor img = random_tensor({3, 32, 24}, rng, 0, 1, false);
    const Tensor r = net.reflectance_decode(net.features(img));
    CHECK(r.shape() == Shape{dc.out_channels(), 32, 24});
    for (double v : r.data()) CHECK((v > 0 && v < 1));
  }
}

TEST_CASE("mfa_loss: identities and the two-channel example") {
  std::mt19937_64 rng(4);
  const Tensor f = random_tensor({8, 6, 6}, rng, 0, 2, false), g = random_tensor({8, 6, 6}, rng, 0, 2, false);
  for (auto d : {MfaDistance::kKL, MfaDistance::kL1, MfaDistance::kL2}) {
    CHECK(mfa_loss({f, f}, d).item() == 0.0);
    CHECK(mfa_loss({f, g}, d).item() == mfa_loss({g, f}, d).item());
    CHECK(mfa_loss({f, g}, d).item() > 0.0);
  }
  // spatial means [1, 1] and [1, 1 + ln 3] give p = [1/2, 1/2], q = [1/4, 3/4]
  const Tensor fn = Tensor::full({2, 3, 3}, 1.0);
  std::vector<double> v(18, 1.0);
  std::fill(v.begin() + 9, v.end(), 1.0 + std::log(3.0));
  const Tensor fl({2, 3, 3}, v);
  const Tensor p = channel_distribution(fn), q = channel_distribution(fl);
  CHECK(p.data()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(q.data()[1] == doctest::Approx(0.75).epsilon(1e-12));
  const double expected = testing::sym_kl_oracle({0.5, 0.5}, {0.25, 0.75});
  CHECK(std::abs(expected - (0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0) + 0.25 * std::log(0.5) +
                             0.75 * std::log(1.5))) <= 1e-15);
  CHECK(std::abs(mfa_loss({fn, fl}).item() - expected) <= 1e-12);
  CHECK(std::abs(expected - 0.27465) <= 1e-5);
  CHECK_THROWS_AS(mfa_loss({Tensor::zeros({0, 2, 2}), Tensor::zeros({0, 2, 2})}), std::invalid_argument);
  CHECK_THROWS_AS(mfa_loss({fn, Tensor::zeros({3, 3, 3})}), std::invalid_argument);
}

TEST_CASE("ref_loss: identities and the constant-image case") {
  std::mt19937_64 rng(5);
  const Tensor r = random_tensor({3, 16, 16}, rng, 0, 1, false);
  CHECK(ref_loss(r, r).item() == 0.0);
  const Tensor a = Tensor::full({3, 12, 12}, 0.2), b = Tensor::full({3, 12, 12}, 0.8);
  const double c1 = 1e-4;
  const double lum = (2 * 0.2 * 0.8 + c1) / (0.04 + 0.64 + c1);
  CHECK(std::abs(ref_loss(a, b).item() - (0.6 + 1 - lum)) <= 1e-12);
  CHECK_THROWS_AS(ref_loss(a, Tensor::zeros({3, 12, 13})), std::invalid_argument);
}

TEST_CASE("interchange_reconstruct: identities and loop oracle") {
  std::mt19937_64 rng(6);
  const Tensor rn = random_tensor({3, 4, 4}, rng, 0, 1, false), rl = random_tensor({3, 4, 4}, rng, 0, 1, false);
  const auto ones = interchange_reconstruct(rn, rl, Tensor::ones({1, 4, 4}), Tensor::ones({1, 4, 4}));
  CHECK(same(ones.i2_l, rn));
  CHECK(same(ones.i2_n, rl));
  const auto zeros = interchange_reconstruct(rn, rl, Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 4, 4}));
  for (double v : zeros.i2_l.data()) CHECK(v == 0.0);

  const Tensor big = random_tensor({3, 4, 4}, rng, 0, 3, false);
  const Tensor ln = random_tensor({1, 4, 4}, rng, 0, 1, false), ll = random_tensor({1, 4, 4}, rng, 0, 1, false);
  const auto out = interchange_reconstruct(big, rl, ln, ll);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(out.i2_l.data()[c * 16 + i] == std::clamp(big.data()[c * 16 + i] * ll.data()[i], 0.0, 1.0));
      CHECK(out.i2_n.data()[c * 16 + i] == std::clamp(rl.data()[c * 16 + i] * ln.data()[i], 0.0, 1.0));
    }
  }
  // straight-through: d sum(i2_l) / d r1_n = l_hat_l even where clipped
  Tensor leaf = big.detach();
  leaf.set_requires_grad(true);
  {
    Tape tape;
    tape.backward(sum(interchange_reconstruct(leaf, rl, ln, ll).i2_l));
  }
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 16; ++i) CHECK(leaf.grad()[c * 16 + i] == ll.data()[i]);
  CHECK_THROWS_AS(interchange_reconstruct(rn, rl, Tensor::ones({1, 4, 5}), ll), std::invalid_argument);
}

TEST_CASE("rc_loss and penalty_loss") {
  InterchangeState s;
  s.r1_n = Tensor({1, 2, 2}, {0.1, 0.2, 0.3, 0.4});
  s.r1_l = Tensor({1, 2, 2}, {0.5, 0.5, 0.5, 0.5});
  CHECK_THROWS_AS(rc_loss(s), std::invalid_argument);
  s.r2_l = s.r1_n;
  s.r2_n = s.r1_l;
  CHECK(rc_loss(s).item() == 0.0);
  s.r2_l = Tensor({1, 2, 2}, {0.2, 0.2, 0.1, 0.4});  // |diffs| 0.1 0 0.2 0
  s.r2_n = Tensor({1, 2, 2}, {0.9, 0.5, 0.5, 0.1});  // 0.4 0 0 0.4
  CHECK(std::abs(rc_loss(s).item() - ((0.1 + 0.2) / 4 + (0.4 + 0.4) / 4)) <= 1e-15);

  std::mt19937_64 rng(7);
  const Tensor img = random_tensor({3, 5, 5}, rng, 0, 1, false);
  CHECK(penalty_loss(img, img, img, img).item() == 0.0);
  CHECK(penalty_loss(Tensor::zeros({3, 5, 5}), Tensor::zeros({3, 5, 5}), Tensor::ones({3, 5, 5}),
                     Tensor::ones({3, 5, 5}))
            .item() == 2.0);
  const Tensor a = random_tensor({3, 5, 5}, rng, 0, 1, false), b = random_tensor({3, 5, 5}, rng, 0, 1, false);
  double acc_l = 0, acc_n = 0;
  for (std::size_t i = 0; i < 75; ++i) {
    acc_l += std::abs(a.data()[i] - img.data()[i]);
    acc_n += std::abs(b.data()[i] - img.data()[i]);
  }
  CHECK(std::abs(penalty_loss(a, b, img, img).item() - (acc_l / 75 + acc_n / 75)) <= 1e-15);
}

TEST_CASE("assign_targets: center-in-cell, larger box wins") {
  const std::vector<Box> boxes{{0, 0, 10, 10}, {0, 1, 12, 12}, {40, 8, 56, 40}};
  const auto t = assign_targets(boxes, 6, 8, 8);
  CHECK(t.positives == 2);
  const std::size_t cells = 48;
  // box 1 (area 132) beats box 0 (area 100) in cell (0, 0)
  CHECK(t.objectness.data()[0] == 1.0);
  CHECK(t.offsets.data()[0] == doctest::Approx(0.75));             // cx = 6
  CHECK(t.offsets.data()[cells] == doctest::Approx(6.5 / 8));      // cy = 6.5
  CHECK(t.offsets.data()[2 * cells] == doctest::Approx(std::log(12.0 / 8)));
  CHECK(t.offsets.data()[3 * cells] == doctest::Approx(std::log(11.0 / 8)));
  const std::size_t i = 3 * 8 + 6;  // center (48, 24)
  CHECK(t.objectness.data()[i] == 1.0);
  CHECK(t.offsets.data()[3 * cells + i] == doctest::Approx(std::log(32.0 / 8)));
  CHECK_THROWS_AS(assign_targets({{3, 3, 3, 9}}, 2, 2, 8), std::invalid_argument);
}

TEST_CASE("detection_loss: saturated, empty and gradient") {
  const std::vector<Box> boxes{{4, 4, 20, 14}, {30, 18, 46, 30}};
  const auto t = assign_targets(boxes, 6, 6, 8);
  std::vector<double> raw(5 * 36);
  for (std::size_t i = 0; i < 36; ++i) {
    const bool pos = t.objectness.data()[i] == 1.0;
    raw[i] = pos ? 20.0 : -20.0;
    raw[36 + i] = pos ? logit(t.offsets.data()[i]) : 0.0;
    raw[72 + i] = pos ? logit(t.offsets.data()[36 + i]) : 0.0;
    raw[108 + i] = t.offsets.data()[72 + i];
    raw[144 + i] = t.offsets.data()[108 + i];
  }
  const Tensor perfect({5, 6, 6}, raw);
  const double floor = -std::log(1 - kObjectnessClamp);
  CHECK(std::abs(detection_loss(perfect, boxes, 8).item() - floor) <= 1e-12);
  CHECK(detection_loss(perfect, boxes, 8).item() <= 1e-3);

  const auto dets = decode_detections(perfect, 8);
  REQUIRE(dets.size() == 2);
  CHECK(iou(dets[0].box, boxes[0]) > 0.999);

  const Tensor empty = Tensor::full({5, 6, 6}, -10.0);
  const double s = 1.0 / (1.0 + std::exp(10.0));
  CHECK(std::abs(detection_loss(empty, {}, 8).item() + std::log(1 - std::max(s, kObjectnessClamp))) <= 1e-15);

  std::mt19937_64 rng(8);
  const auto r = testing::grad_check([&](std::vector<Tensor>& v) { return detection_loss(v[0], boxes, 8); },
                                     {random_tensor({5, 6, 6}, rng, -2, 2)});
  CHECK(r.max_rel_error <= 1e-4);
  CHECK_THROWS_AS(detection_loss(Tensor::zeros({5, 6, 5}), t), std::invalid_argument);
}

TEST_CASE("total_loss: weighted sum, linearity and NaN diagnostics") {
  LossComponents c;
  c.det = Tensor::scalar(0.7);
  LossWeights w;
  CHECK(total_loss(c, w).item() == 0.7);
  CHECK(testing::weighted_sum_error(42) <= 1e-9);

  c.rc = Tensor::scalar(3.0);
  c.mfa = Tensor::scalar(0.4);
  const double base = total_loss(c, w).item();
  LossWeights w2 = w;
  w2.lambda_rc *= 2;
  CHECK(std::abs((total_loss(c, w2).item() - base) - w.lambda_rc * 3.0) <= 1e-15);
  CHECK(component_values(c).at("L_rc") == 3.0);

  c.ref = Tensor::scalar(std::nan(""));
  CHECK_THROWS_WITH_AS(total_loss(c, w), doctest::Contains("L_ref"), std::runtime_error);
  w.lambda_mfa = -1;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}

TEST_CASE("loss gradients against finite differences") {
  for (const auto& [name, err] : testing::loss_gradient_errors(9)) {
    INFO(name);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("end-to-end gradient of the full objective on a 2-sample batch") {
  CHECK(testing::end_to_end_gradient_error(10) <= 1e-3);
}
