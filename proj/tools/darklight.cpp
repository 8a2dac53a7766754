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

// darklight: synthesize low-light pairs, pretrain the decomposer, train and
// evaluate the detector, run the component ladder and dump diagnostics.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "darklight/dark_isp.hpp"
#include "darklight/harness.hpp"
#include "darklight/image_io.hpp"
#include "darklight/retinex.hpp"
#include "darklight/scenes.hpp"
#include "darklight/weights.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace darklight;
using nlohmann::json;

namespace {

// The config file holds the benchmark (scenes, splits, training) at the top
// level plus "decomp" and "pretrain" sections. Missing keys keep defaults.
struct Config {
  BenchmarkConfig bench;
  DecompNetConfig decomp;
  PretrainOptions pretrain;

  json to_json() const {
    json j = bench.to_json();
    j["decomp"] = decomp.to_json();
    j["pretrain"] = {{"epochs", pretrain.epochs},
                     {"lr", pretrain.lr},
                     {"batch", pretrain.batch},
                     {"crop", pretrain.crop}};
    return j;
  }
};

Config load_config(const std::string& path) {
  Config c;
  if (path.empty()) return c;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  const json j = json::parse(in);
  c.bench = BenchmarkConfig::from_json(j);
  if (j.contains("decomp")) c.decomp = DecompNetConfig::from_json(j["decomp"]);
  if (j.contains("pretrain")) {
    const auto& p = j["pretrain"];
    c.pretrain.epochs = p.value("epochs", c.pretrain.epochs);
    c.pretrain.lr = p.value("lr", c.pretrain.lr);
    c.pretrain.batch = p.value("batch", c.pretrain.batch);
    c.pretrain.crop = p.value("crop", c.pretrain.crop);
  }
  return c;
}

std::vector<fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .png files in " + dir.string());
  return files;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

DecompNet require_decomposer(const std::string& path) {
  if (path.empty()) throw std::runtime_error("--decomp weights are required");
  return DecompNet::load(path);
}

// Test splits only; the training corpus is not needed.
SeedData test_data(BenchmarkConfig bench, std::uint64_t seed) {
  bench.train_scenes = 1;
  return make_seed_data(bench, seed, nullptr);
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Per-channel |f| tiled into a square grid, each channel scaled to its own max.
Tensor feature_grid(const Tensor& f) {
  const std::size_t c = f.dim(0), h = f.dim(1), w = f.dim(2);
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(c))));
  const std::size_t gh = side * (h + 1) - 1, gw = side * (w + 1) - 1;
  std::vector<double> out(gh * gw, 1.0);
  auto v = f.data();
  for (std::size_t k = 0; k < c; ++k) {
    double peak = 0;
    for (std::size_t i = 0; i < h * w; ++i) peak = std::max(peak, std::abs(v[k * h * w + i]));
    const std::size_t oy = (k / side) * (h + 1), ox = (k % side) * (w + 1);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double a = std::abs(v[(k * h + y) * w + x]);
        out[(oy + y) * gw + ox + x] = peak > 0 ? a / peak : 0.0;
      }
    }
  }
  return Tensor({1, gh, gw}, std::move(out));
}

// ---- subcommands -------------------------------------------------------------

int cmd_config(const std::string& cfg_path) {
  std::cout << load_config(cfg_path).to_json().dump(2) << '\n';
  return 0;
}

int cmd_synth(const fs::path& in, const fs::path& out, std::uint64_t seed) {
  const auto files = png_files(in);
  fs::create_directories(out);
  for (std::size_t i = 0; i < files.size(); ++i) {
    const Tensor img = read_png(files[i]);
    const DarkIspParams p = sample_params(derive_seed(seed, i));
    write_png(out / files[i].filename(), synthesize_low_light(img, p));
    json side = p.to_json();
    side["source"] = files[i].filename().string();
    side["index"] = i;
    write_json(out / (files[i].stem().string() + ".json"), side);
  }
  std::cerr << "synthesized " << files.size() << " images into " << out << '\n';
  return 0;
}

int cmd_pretrain(const Config& cfg, const std::string& data, std::size_t scenes, const fs::path& out,
                 std::uint64_t seed) {
  std::vector<PairedSample> pairs;
  if (!data.empty()) {
    std::vector<Scene> corpus;
    for (const auto& f : png_files(data)) corpus.push_back({read_png(f), {}});
    pairs = build_pairs(corpus, derive_seed(seed, 101));
  } else {
    pairs = build_pairs(generate_corpus(scenes, derive_seed(seed, 100), cfg.bench.scenes), derive_seed(seed, 101));
  }
  PretrainOptions opt = cfg.pretrain;
  opt.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  opt.on_epoch = [&](int epoch, double loss) {
    std::cerr << "epoch " << epoch << " loss " << loss << " (" << std::fixed << std::setprecision(1) << elapsed(t0)
              << " s)\n"
              << std::defaultfloat;
  };
  const PretrainResult r = pretrain(pairs, cfg.decomp, opt);
  r.net.save(out);
  std::cerr << "wrote " << out << '\n';
  return 0;
}

int cmd_train(Config cfg, const std::string& decomp_path, const fs::path& out, const std::string& log_path,
              const std::string& ablation, std::uint64_t seed) {
  if (!ablation.empty()) cfg.bench.train.ablation = ladder_config(ablation);
  cfg.bench.train.seed = seed;
  std::unique_ptr<DecompNet> decomposer;
  if (cfg.bench.train.ablation.rd) decomposer = std::make_unique<DecompNet>(require_decomposer(decomp_path));
  const SeedData data = make_seed_data(cfg.bench, seed, decomposer.get());

  std::ofstream log_file;
  std::ostream* log = nullptr;
  if (!log_path.empty()) {
    log_file.open(log_path);
    if (!log_file) throw std::runtime_error("cannot write " + log_path);
    log = &log_file;
  }
  try {
    const TrainResult r = train(cfg.bench.train, data.train, decomposer ? &data.pseudo : nullptr, log);
    r.net.save(out, {{"train", cfg.bench.train.to_json()}});
    std::cerr << "wrote " << out << '\n';
    return 0;
  } catch (const TrainingDiverged& e) {
    save_weights(out, e.last_good());
    std::cerr << "error: " << e.what() << "\nlast good weights (before step " << e.step() << ") saved to " << out
              << '\n';
    return 2;
  }
}

int cmd_eval(const Config& cfg, const fs::path& weights, const std::string& split, std::uint64_t seed,
             const std::string& json_out) {
  const DaiNet net = DaiNet::load(weights);
  const SeedData data = test_data(cfg.bench, seed);
  if (split != "dark" && split != "welllit") throw std::runtime_error("--split must be dark or welllit");
  const EvalReport r = evaluate_map(net, split == "dark" ? data.dark_test : data.welllit_test);
  std::cout << "mAP@0.5 " << std::setprecision(6) << std::fixed << r.map_50 << " (" << r.true_positives << "/"
            << r.ground_truth << " matched, " << r.detections << " detections, " << r.images << " images)\n";
  if (!json_out.empty()) write_json(json_out, r.to_json());
  return 0;
}

int cmd_ablate(const Config& cfg, const std::string& decomp_path, const std::vector<std::uint64_t>& seeds,
               const std::vector<std::string>& configs, const fs::path& out, bool sweep) {
  const DecompNet decomposer = require_decomposer(decomp_path);
  AblationOptions opt;
  opt.bench = cfg.bench;
  opt.seeds = seeds;
  opt.configs = configs;
  opt.progress = [](const std::string& msg) { std::cerr << msg << '\n'; };
  opt.on_run = [](const RunResult& r) {
    std::cerr << r.config << " seed " << r.seed << ": "
              << (r.ok ? "mAP " + std::to_string(r.map_50) : "FAILED " + r.error) << " (" << std::fixed
              << std::setprecision(1) << r.seconds << " s)\n"
              << std::defaultfloat;
  };

  std::ofstream file(out);
  if (!file) throw std::runtime_error("cannot write " + out.string());
  if (!sweep) {
    write_ablation_csv(file, run_ablation(opt, decomposer));
  } else {
    bool header = true;
    for (double lrc : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
      opt.bench.train.weights.lambda_rc = lrc;
      std::ostringstream table;
      write_ablation_csv(table, run_ablation(opt, decomposer));
      std::istringstream lines(table.str());
      std::string line;
      std::getline(lines, line);
      if (header) file << "lambda_rc," << line << '\n';
      header = false;
      while (std::getline(lines, line)) file << lrc << ',' << line << '\n';
      file.flush();
    }
  }
  std::cerr << "wrote " << out << '\n';
  return 0;
}

int cmd_stats(const Config& cfg, const fs::path& weights, std::uint64_t seed, const std::string& json_out) {
  const DaiNet net = DaiNet::load(weights);
  const SeedData data = test_data(cfg.bench, seed);
  const std::size_t n = std::min(cfg.bench.stats_images, data.welllit_test.size());
  std::vector<Tensor> welllit, dark;
  for (std::size_t i = 0; i < n; ++i) {
    welllit.push_back(data.welllit_test[i].image);
    dark.push_back(data.dark_test[i].image);
  }
  const ChannelStats s = channel_stats(net, welllit, dark);
  json j = {{"images", n}, {"welllit", s.welllit}, {"dark", s.dark}, {"correlation", s.correlation}};
  std::cout << j.dump(2) << '\n';
  if (!json_out.empty()) write_json(json_out, j);
  return 0;
}

int cmd_viz(const Config& cfg, const fs::path& weights, const std::string& decomp_path, std::uint64_t seed,
            std::size_t index, const fs::path& out) {
  const DaiNet net = DaiNet::load(weights);
  BenchmarkConfig bench = cfg.bench;
  bench.test_scenes = std::max(bench.test_scenes, index + 1);
  const SeedData data = test_data(bench, seed);
  std::unique_ptr<DecompNet> decomposer;
  if (!decomp_path.empty()) decomposer = std::make_unique<DecompNet>(require_decomposer(decomp_path));
  fs::create_directories(out);
  const std::pair<const char*, const Tensor*> inputs[] = {{"welllit", &data.welllit_test[index].image},
                                                          {"dark", &data.dark_test[index].image}};
  for (const auto& [tag, img] : inputs) {
    const std::string t = tag;
    write_png(out / (t + "_input.png"), *img);
    const Tensor f = net.features(*img);
    write_png(out / (t + "_features.png"), feature_grid(f));
    const Tensor d = net.reflectance_decode(f);
    if (d.dim(0) == 3 || d.dim(0) == 1) {
      write_png(out / (t + "_decoded.png"), d);
    } else {
      write_png(out / (t + "_decoded_r.png"), slice_leading(d, 0, 3));
      write_png(out / (t + "_decoded_l.png"), slice_leading(d, 3, 4));
    }
    if (decomposer) {
      const DecompositionPair p = decomposer->decompose(*img);
      write_png(out / (t + "_retinex_r.png"), p.reflectance);
      write_png(out / (t + "_retinex_l.png"), p.illumination);
    }
  }
  std::cerr << "wrote visualizations for test image " << index << " to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"darklight: zero-shot day-to-night detection on synthetic scenes"};
  app.require_subcommand(1);

  std::string cfg_path;
  std::uint64_t seed = 0;
  auto with_config = [&](CLI::App* sub) {
    sub->add_option("--config", cfg_path, "JSON config file (see `darklight config`)")->check(CLI::ExistingFile);
  };

  auto* config = app.add_subcommand("config", "Print the effective configuration as JSON");
  with_config(config);

  std::string in_dir, out_path, data_dir, decomp_path, log_path, ablation, split = "dark", json_out;
  auto* synth = app.add_subcommand("synth", "Darken every PNG in a directory");
  synth->add_option("--in", in_dir, "Input directory of PNGs")->required();
  synth->add_option("--out", out_path, "Output directory")->required();
  synth->add_option("--seed", seed, "Global seed");

  int epochs = -1;
  double lr = -1;
  std::size_t scenes = 2000;
  auto* pre = app.add_subcommand("pretrain-decomp", "Pretrain the Retinex decomposition net");
  with_config(pre);
  pre->add_option("--data", data_dir, "Directory of well-lit PNGs (default: generated scenes)");
  pre->add_option("--scenes", scenes, "Number of generated scenes when --data is absent");
  pre->add_option("--out", out_path, "Weight archive to write")->required();
  pre->add_option("--epochs", epochs, "Epochs");
  pre->add_option("--lr", lr, "Adam learning rate");
  pre->add_option("--seed", seed, "Seed");

  auto* tr = app.add_subcommand("train", "Train one detector configuration");
  with_config(tr);
  tr->add_option("--decomp", decomp_path, "Pretrained decomposition weights");
  tr->add_option("--ablation", ablation, "Ladder row name (overrides the config)");
  tr->add_option("--out", out_path, "Detector weights to write")->required();
  tr->add_option("--log", log_path, "JSON-lines loss log");
  tr->add_option("--seed", seed, "Seed");

  std::string weights;
  auto* ev = app.add_subcommand("eval", "mAP@0.5 on a generated test split");
  with_config(ev);
  ev->add_option("--weights", weights, "Detector weights")->required();
  ev->add_option("--split", split, "dark or welllit");
  ev->add_option("--seed", seed, "Seed of the test split");
  ev->add_option("--json", json_out, "Write the full report here");

  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<std::string> configs;
  bool sweep = false;
  auto* ab = app.add_subcommand("ablate", "Run the component ladder over seeds");
  with_config(ab);
  ab->add_option("--decomp", decomp_path, "Pretrained decomposition weights")->required();
  ab->add_option("--seeds", seeds, "Seeds (at least 3)")->delimiter(',');
  ab->add_option("--configs", configs, "Ladder rows (default: all)")->delimiter(',');
  ab->add_option("--out", out_path, "CSV table to write")->required();
  ab->add_flag("--lambda-rc-sweep", sweep, "Repeat for lambda_rc in {1e-4, 1e-3, 1e-2, 1e-1, 1}");

  auto* st = app.add_subcommand("stats", "Per-channel feature magnitudes on well-lit vs dark test images");
  with_config(st);
  st->add_option("--weights", weights, "Detector weights")->required();
  st->add_option("--seed", seed, "Seed of the test split");
  st->add_option("--json", json_out, "Also write the result here");

  std::size_t index = 0;
  auto* viz = app.add_subcommand("viz", "Write feature maps and decoded images as PNG");
  with_config(viz);
  viz->add_option("--weights", weights, "Detector weights")->required();
  viz->add_option("--decomp", decomp_path, "Also write the decomposer's R and L");
  viz->add_option("--seed", seed, "Seed of the test split");
  viz->add_option("--index", index, "Test image index");
  viz->add_option("--out", out_path, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    Config cfg = load_config(cfg_path);
    if (*config) return cmd_config(cfg_path);
    if (*synth) return cmd_synth(in_dir, out_path, seed);
    if (*pre) {
      if (epochs >= 0) cfg.pretrain.epochs = epochs;
      if (lr > 0) cfg.pretrain.lr = lr;
      return cmd_pretrain(cfg, data_dir, scenes, out_path, seed);
    }
    if (*tr) return cmd_train(cfg, decomp_path, out_path, log_path, ablation, seed);
    if (*ev) return cmd_eval(cfg, weights, split, seed, json_out);
    if (*ab) return cmd_ablate(cfg, decomp_path, seeds, configs, out_path, sweep);
    if (*st) return cmd_stats(cfg, weights, seed, json_out);
    if (*viz) return cmd_viz(cfg, weights, decomp_path, seed, index, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
