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

#include "darklight/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace darklight {

// ---- configurations ---------------------------------------------------------

void AblationConfig::validate() const {
  const auto fail = [&](const std::string& why) {
    throw std::invalid_argument("ablation config '" + name + "': " + why);
  };
  if (rd && !disp) fail("the decoder needs paired low-light images (disp)");
  if (mfa && !disp) fail("feature alignment needs paired low-light images (disp)");
  if ((lp || lrc) && rd != DecoderTarget::kReflectance) fail("lp / lrc need the reflectance decoder");
}

nlohmann::json AblationConfig::to_json() const {
  nlohmann::json j = {{"name", name}, {"disp", disp}, {"lp", lp}, {"lrc", lrc}};
  j["rd"] = rd ? nlohmann::json(to_string(*rd)) : nlohmann::json(nullptr);
  j["mfa"] = mfa ? nlohmann::json(to_string(*mfa)) : nlohmann::json(nullptr);
  return j;
}

AblationConfig AblationConfig::from_json(const nlohmann::json& j) {
  AblationConfig c;
  c.name = j.value("name", c.name);
  c.disp = j.value("disp", false);
  c.lp = j.value("lp", false);
  c.lrc = j.value("lrc", false);
  if (j.contains("rd") && !j["rd"].is_null()) c.rd = decoder_target_from_string(j["rd"]);
  if (j.contains("mfa") && !j["mfa"].is_null()) c.mfa = mfa_distance_from_string(j["mfa"]);
  c.validate();
  return c;
}

const std::vector<AblationConfig>& ladder_configs() {
  using D = DecoderTarget;
  using M = MfaDistance;
  static const std::vector<AblationConfig> rows = {
      {"baseline", false, std::nullopt, false, false, std::nullopt},
      {"disp", true, std::nullopt, false, false, std::nullopt},
      {"rd_r", true, D::kReflectance, false, false, std::nullopt},
      {"rd_l", true, D::kIllumination, false, false, std::nullopt},
      {"rd_rl", true, D::kBoth, false, false, std::nullopt},
      {"rd_r_lp", true, D::kReflectance, true, false, std::nullopt},
      {"rd_r_lrc", true, D::kReflectance, false, true, std::nullopt},
      {"rd_r_lp_lrc", true, D::kReflectance, true, true, std::nullopt},
      {"full", true, D::kReflectance, false, true, M::kKL},
      {"full_l1", true, D::kReflectance, false, true, M::kL1},
      {"full_l2", true, D::kReflectance, false, true, M::kL2},
  };
  return rows;
}

const AblationConfig& ladder_config(const std::string& name) {
  for (const auto& c : ladder_configs()) {
    if (c.name == name) return c;
  }
  throw std::invalid_argument("unknown ablation configuration '" + name + "'");
}

void TrainConfig::validate() const {
  ablation.validate();
  backbone.validate();
  weights.validate();
  ssim.validate();
  if (decoder_depth < 1) throw std::invalid_argument("TrainConfig: decoder_depth must be >= 1");
  if (steps < 0 || batch < 1 || !(lr > 0)) throw std::invalid_argument("TrainConfig: invalid steps/batch/lr");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"ablation", ablation.to_json()},
          {"backbone", backbone.to_json()},
          {"decoder_depth", decoder_depth},
          {"weights", weights.to_json()},
          {"ssim", {{"window", ssim.window}, {"sigma", ssim.sigma}, {"k1", ssim.k1}, {"k2", ssim.k2}}},
          {"steps", steps},
          {"batch", batch},
          {"lr", lr},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("ablation")) {
    c.ablation = j["ablation"].is_string() ? ladder_config(j["ablation"]) : AblationConfig::from_json(j["ablation"]);
  }
  if (j.contains("backbone")) c.backbone = BackboneConfig::from_json(j["backbone"]);
  c.decoder_depth = j.value("decoder_depth", c.decoder_depth);
  if (j.contains("weights")) c.weights = LossWeights::from_json(j["weights"]);
  if (j.contains("ssim")) {
    const auto& s = j["ssim"];
    c.ssim.window = s.value("window", c.ssim.window);
    c.ssim.sigma = s.value("sigma", c.ssim.sigma);
    c.ssim.k1 = s.value("k1", c.ssim.k1);
    c.ssim.k2 = s.value("k2", c.ssim.k2);
  }
  c.steps = j.value("steps", c.steps);
  c.batch = j.value("batch", c.batch);
  c.lr = j.value("lr", c.lr);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

// ---- training -----------------------------------------------------------------

std::vector<PseudoTruth> compute_pseudo_truth(const DecompNet& net, const std::vector<PairedSample>& pairs) {
  std::vector<PseudoTruth> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({net.decompose(p.well_lit), net.decompose(p.low_light)});
  return out;
}

nlohmann::json StepLog::to_json() const {
  nlohmann::json j = {{"step", step}};
  for (const auto& [k, v] : components) j[k] = v;
  j["total"] = total;
  return j;
}

LossComponents pair_components(const DaiNet& net, const TrainConfig& cfg, const PairedSample& pair,
                               const PseudoTruth* pseudo) {
  const AblationConfig& ab = cfg.ablation;
  const std::size_t stride = net.backbone().stride();
  LossComponents c;
  const SplitOutput out_n = net.forward_split(pair.well_lit);
  c.det = detection_loss(out_n.raw, pair.boxes, stride);
  if (!ab.disp) return c;

  const SplitOutput out_l = net.forward_split(pair.low_light);
  c.det = c.det + detection_loss(out_l.raw, pair.boxes, stride);
  if (ab.mfa) c.mfa = mfa_loss({out_n.features, out_l.features}, *ab.mfa);
  if (!ab.rd) return c;
  if (pseudo == nullptr) throw std::invalid_argument("pair_components: decoder configuration needs pseudo ground truth");

  const Tensor d_n = net.reflectance_decode(out_n.features);
  const Tensor d_l = net.reflectance_decode(out_l.features);
  DecompositionPair pn = pseudo->n, pl = pseudo->l;  // predicted parts replace pseudo truth below
  Tensor ref = Tensor::scalar(0.0);
  const bool has_r = *ab.rd != DecoderTarget::kIllumination;
  const bool has_l = *ab.rd != DecoderTarget::kReflectance;
  if (has_r) {
    pn.reflectance = *ab.rd == DecoderTarget::kBoth ? slice_leading(d_n, 0, 3) : d_n;
    pl.reflectance = *ab.rd == DecoderTarget::kBoth ? slice_leading(d_l, 0, 3) : d_l;
    ref = ref + ref_loss(pn.reflectance, pseudo->n.reflectance, cfg.ssim) +
          ref_loss(pl.reflectance, pseudo->l.reflectance, cfg.ssim);
  }
  if (has_l) {
    pn.illumination = *ab.rd == DecoderTarget::kBoth ? slice_leading(d_n, 3, 4) : d_n;
    pl.illumination = *ab.rd == DecoderTarget::kBoth ? slice_leading(d_l, 3, 4) : d_l;
    ref = ref + ref_loss(pn.illumination, pseudo->n.illumination, cfg.ssim) +
          ref_loss(pl.illumination, pseudo->l.illumination, cfg.ssim);
  }
  c.ref = ref;
  DecompLossWeights dw;
  dw.lambda_smooth = cfg.weights.lambda_smooth;
  dw.lambda_ir = cfg.weights.lambda_ir;
  dw.ssim = cfg.ssim;
  const DecompLossTerms dt = decomposition_loss(pn, pl, pair.well_lit, pair.low_light, dw);
  c.recon = dt.recon;
  c.smooth = dt.smooth;
  c.ir = dt.ir;

  if (ab.lp || ab.lrc) {
    InterchangeState s;
    s.r1_n = pn.reflectance;
    s.r1_l = pl.reflectance;
    s.l_hat_n = pseudo->n.illumination;
    s.l_hat_l = pseudo->l.illumination;
    const Interchanged i2 = interchange_reconstruct(s.r1_n, s.r1_l, s.l_hat_n, s.l_hat_l);
    s.i2_l = i2.i2_l;
    s.i2_n = i2.i2_n;
    if (ab.lp) c.p = penalty_loss(s.i2_l, s.i2_n, pair.low_light, pair.well_lit);
    if (ab.lrc) {
      s.r2_l = net.reflectance_decode(net.features(s.i2_l));
      s.r2_n = net.reflectance_decode(net.features(s.i2_n));
      c.rc = rc_loss(s);
    }
  }
  return c;
}

TrainResult train(const TrainConfig& cfg, const std::vector<PairedSample>& pairs,
                  const std::vector<PseudoTruth>* pseudo, std::ostream* log_jsonl) {
  cfg.validate();
  if (pairs.empty()) throw std::invalid_argument("train: no training pairs");
  if (cfg.ablation.rd && (pseudo == nullptr || pseudo->size() != pairs.size())) {
    throw std::invalid_argument("train: configuration '" + cfg.ablation.name +
                                "' needs pseudo ground truth for every pair");
  }
  ReflectanceDecoderConfig dec;
  dec.depth = cfg.decoder_depth;
  dec.target = cfg.ablation.rd.value_or(DecoderTarget::kReflectance);
  TrainResult res{DaiNet(cfg.backbone, dec, cfg.seed), {}};
  nn::Adam adam(res.net.parameters(), {.lr = cfg.lr});

  std::mt19937_64 rng(derive_seed(cfg.seed, 3));
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  for (int step = 0; step < cfg.steps; ++step) {
    Tape tape;
    Tensor loss = Tensor::scalar(0.0);
    std::map<std::string, double> comps;
    for (int b = 0; b < cfg.batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      const LossComponents c = pair_components(res.net, cfg, pairs[idx], pseudo ? &(*pseudo)[idx] : nullptr);
      Tensor t;
      try {
        t = total_loss(c, cfg.weights);
      } catch (const std::runtime_error& e) {
        throw TrainingDiverged(std::string(e.what()) + " at step " + std::to_string(step), step,
                               res.net.archive({{"step", step}}));
      }
      loss = loss + t;
      for (const auto& [k, v] : component_values(c)) comps[k] += v / cfg.batch;
    }
    loss = loss * (1.0 / cfg.batch);
    StepLog entry{step, std::move(comps), loss.item()};
    tape.backward(loss);
    adam.step();
    if (log_jsonl) *log_jsonl << entry.to_json().dump() << '\n';
    res.log.push_back(std::move(entry));
  }
  return res;
}

// ---- evaluation -----------------------------------------------------------------

nlohmann::json EvalReport::to_json() const {
  nlohmann::json curve_j = nlohmann::json::array();
  for (const auto& p : curve) curve_j.push_back({p.score, p.precision, p.recall});
  return {{"map_50", map_50},   {"images", images},         {"ground_truth", ground_truth},
          {"detections", detections}, {"true_positives", true_positives}, {"curve", curve_j}};
}

EvalReport average_precision(const std::vector<std::vector<Detection>>& detections,
                             const std::vector<std::vector<Box>>& ground_truth, double iou_threshold) {
  if (detections.size() != ground_truth.size()) {
    throw std::invalid_argument("average_precision: detections and ground truth cover different image counts");
  }
  if (ground_truth.empty()) throw std::invalid_argument("average_precision: empty dataset");
  EvalReport r;
  r.images = ground_truth.size();
  for (const auto& g : ground_truth) r.ground_truth += g.size();
  if (r.ground_truth == 0) throw std::invalid_argument("average_precision: dataset has no ground-truth boxes");

  struct Ranked {
    double score;
    std::size_t img, idx;
  };
  std::vector<Ranked> ranked;
  for (std::size_t i = 0; i < detections.size(); ++i)
    for (std::size_t k = 0; k < detections[i].size(); ++k) ranked.push_back({detections[i][k].score, i, k});
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.img != b.img ? a.img < b.img : a.idx < b.idx;
  });
  r.detections = ranked.size();

  std::vector<std::vector<bool>> used(ground_truth.size());
  for (std::size_t i = 0; i < ground_truth.size(); ++i) used[i].assign(ground_truth[i].size(), false);
  std::size_t tp = 0;
  for (std::size_t n = 0; n < ranked.size(); ++n) {
    const auto& d = ranked[n];
    const Box& box = detections[d.img][d.idx].box;
    double best = iou_threshold;
    std::ptrdiff_t hit = -1;
    for (std::size_t g = 0; g < ground_truth[d.img].size(); ++g) {
      if (used[d.img][g]) continue;
      const double v = iou(box, ground_truth[d.img][g]);
      if (v > best || (hit < 0 && v >= best)) {
        best = v;
        hit = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (hit >= 0) {
      used[d.img][static_cast<std::size_t>(hit)] = true;
      ++tp;
    }
    r.curve.push_back({d.score, double(tp) / double(n + 1), double(tp) / double(r.ground_truth)});
  }
  r.true_positives = tp;

  std::vector<double> interp(r.curve.size());
  double run = 0;
  for (std::size_t i = r.curve.size(); i-- > 0;) interp[i] = run = std::max(run, r.curve[i].precision);
  double prev = 0, ap = 0;
  for (std::size_t i = 0; i < r.curve.size(); ++i) {
    if (r.curve[i].recall > prev) {
      ap += (r.curve[i].recall - prev) * interp[i];
      prev = r.curve[i].recall;
    }
  }
  r.map_50 = ap;
  return r;
}

EvalReport evaluate_map(const DaiNet& net, const std::vector<Scene>& dataset, double iou_threshold) {
  if (dataset.empty()) throw std::invalid_argument("evaluate_map: empty dataset");
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<Box>> gts;
  for (const auto& s : dataset) {
    dets.push_back(decode_detections(net.forward_split(s.image).raw, net.backbone().stride()));
    gts.push_back(s.boxes);
  }
  return average_precision(dets, gts, iou_threshold);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: need equal lengths >= 2");
  const double n = double(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return saa == sbb && a == b ? 1.0 : 0.0;
  return sab / std::sqrt(saa * sbb);
}

namespace {

std::vector<double> channel_magnitude(const DaiNet& net, const std::vector<Tensor>& images) {
  std::vector<double> acc;
  for (const auto& img : images) {
    const Tensor f = net.features(img);
    const std::size_t c = f.dim(0), hw = f.numel() / c;
    if (acc.empty()) acc.assign(c, 0.0);
    for (std::size_t k = 0; k < c; ++k) {
      double s = 0;
      for (std::size_t i = 0; i < hw; ++i) s += std::abs(f.data()[k * hw + i]);
      acc[k] += s / double(hw);
    }
  }
  for (double& v : acc) v /= double(images.size());
  return acc;
}

}  // namespace

ChannelStats channel_stats(const DaiNet& net, const std::vector<Tensor>& welllit, const std::vector<Tensor>& dark) {
  if (welllit.size() < kMinStatsImages || dark.size() < kMinStatsImages) {
    throw std::invalid_argument("channel_stats: need at least " + std::to_string(kMinStatsImages) +
                                " images per set, got " + std::to_string(welllit.size()) + " and " +
                                std::to_string(dark.size()));
  }
  ChannelStats s;
  s.welllit = channel_magnitude(net, welllit);
  s.dark = channel_magnitude(net, dark);
  s.correlation = pearson(s.welllit, s.dark);
  return s;
}

// ---- benchmark ---------------------------------------------------------------------

nlohmann::json BenchmarkConfig::to_json() const {
  return {{"scenes", scenes.to_json()},
          {"train_scenes", train_scenes},
          {"test_scenes", test_scenes},
          {"stats_images", stats_images},
          {"train", train.to_json()}};
}

BenchmarkConfig BenchmarkConfig::from_json(const nlohmann::json& j) {
  BenchmarkConfig b;
  if (j.contains("scenes")) b.scenes = SceneSpec::from_json(j["scenes"]);
  b.train_scenes = j.value("train_scenes", b.train_scenes);
  b.test_scenes = j.value("test_scenes", b.test_scenes);
  b.stats_images = j.value("stats_images", b.stats_images);
  if (j.contains("train")) b.train = TrainConfig::from_json(j["train"]);
  if (b.train_scenes == 0 || b.test_scenes == 0) throw std::invalid_argument("BenchmarkConfig: empty split");
  return b;
}

namespace {
constexpr std::uint64_t kTestParamOffset = std::uint64_t{1} << 32;
}

SeedData make_seed_data(const BenchmarkConfig& cfg, std::uint64_t seed, const DecompNet* decomposer) {
  SeedData d;
  d.seed = seed;
  const std::uint64_t isp_seed = derive_seed(seed, 101);
  d.train = build_pairs(generate_corpus(cfg.train_scenes, derive_seed(seed, 100), cfg.scenes), isp_seed);
  const auto test = generate_corpus(cfg.test_scenes, derive_seed(seed, 200), cfg.scenes);
  const auto test_pairs = build_pairs(test, isp_seed, kTestParamOffset);
  for (const auto& p : test_pairs) {
    d.dark_test.push_back({p.low_light, p.boxes});
    d.welllit_test.push_back({p.well_lit, p.boxes});
  }
  if (decomposer) d.pseudo = compute_pseudo_truth(*decomposer, d.train);
  return d;
}

std::vector<LadderRow> run_ablation(const AblationOptions& opt, const DecompNet& decomposer) {
  if (opt.seeds.size() < 3) throw std::invalid_argument("run_ablation: need at least 3 seeds");
  std::vector<AblationConfig> configs;
  if (opt.configs.empty()) {
    configs = ladder_configs();
  } else {
    for (const auto& n : opt.configs) configs.push_back(ladder_config(n));
  }
  const bool any_rd = std::any_of(configs.begin(), configs.end(), [](const auto& c) { return c.rd.has_value(); });

  std::vector<LadderRow> rows(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) rows[i].config = configs[i].name;
  for (std::uint64_t seed : opt.seeds) {
    if (opt.progress) opt.progress("seed " + std::to_string(seed) + ": building data");
    const SeedData data = make_seed_data(opt.bench, seed, any_rd ? &decomposer : nullptr);
    const std::size_t k = std::min(opt.bench.stats_images, data.dark_test.size());
    std::vector<Tensor> stats_n, stats_l;
    for (std::size_t i = 0; i < k; ++i) {
      stats_n.push_back(data.welllit_test[i].image);
      stats_l.push_back(data.dark_test[i].image);
    }
    for (std::size_t i = 0; i < configs.size(); ++i) {
      RunResult run;
      run.config = configs[i].name;
      run.seed = seed;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        TrainConfig tc = opt.bench.train;
        tc.ablation = configs[i];
        tc.seed = seed;
        const TrainResult tr = train(tc, data.train, configs[i].rd ? &data.pseudo : nullptr);
        const std::size_t w = std::min<std::size_t>(kTrendWindow, tr.log.size());
        for (std::size_t j = 0; j < w; ++j) {
          run.first_window_loss += tr.log[j].total / double(w);
          run.last_window_loss += tr.log[tr.log.size() - w + j].total / double(w);
        }
        run.map_50 = evaluate_map(tr.net, data.dark_test).map_50;
        run.correlation = channel_stats(tr.net, stats_n, stats_l).correlation;
        run.ok = true;
      } catch (const std::exception& e) {
        run.error = e.what();
      }
      run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (opt.on_run) opt.on_run(run);
      rows[i].runs.push_back(std::move(run));
    }
  }
  for (auto& row : rows) {
    std::vector<double> v;
    for (const auto& r : row.runs) {
      if (r.ok) v.push_back(r.map_50);
    }
    row.failures = row.runs.size() - v.size();
    if (v.empty()) continue;
    row.mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    double ss = 0;
    for (double x : v) ss += (x - row.mean) * (x - row.mean);
    row.stddev = v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0;
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<LadderRow>& rows) {
  out << "config,disp,rd,lp,lrc,mfa,runs,failures,mean_map50,std_map50,mean_correlation,per_seed_map50\n";
  out << std::setprecision(6) << std::fixed;
  for (const auto& row : rows) {
    const AblationConfig& c = ladder_config(row.config);
    double corr = 0;
    std::size_t ok = 0;
    std::ostringstream seeds;
    for (const auto& r : row.runs) {
      if (!seeds.str().empty()) seeds << ';';
      if (r.ok) {
        seeds << r.seed << ':' << std::setprecision(6) << std::fixed << r.map_50;
        corr += r.correlation;
        ++ok;
      } else {
        seeds << r.seed << ":failed";
      }
    }
    out << row.config << ',' << (c.disp ? 1 : 0) << ',' << (c.rd ? to_string(*c.rd) : "-") << ','
        << (c.lp ? 1 : 0) << ',' << (c.lrc ? 1 : 0) << ',' << (c.mfa ? to_string(*c.mfa) : "-") << ','
        << row.runs.size() << ',' << row.failures << ',' << row.mean << ',' << row.stddev << ','
        << (ok ? corr / double(ok) : 0.0) << ',' << seeds.str() << '\n';
  }
}

}  // namespace darklight
