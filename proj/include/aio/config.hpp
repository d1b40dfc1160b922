#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aio/degrade.hpp"
#include "aio/losses.hpp"
#include "aio/restorer.hpp"

namespace aio::cfg {

struct DatasetSection {
  std::vector<std::string> kinds{"noise", "haze", "rain"};
  int size = 12;
  int image_size = 128;
  std::optional<std::string> clean_dir;
  std::vector<double> noise_sigmas{15.0, 25.0, 50.0};
};

struct Stage1Section {
  std::string init_mode = "partial_random";
  int tokens = 16;
  int iters = 100000;
  double lr = 4e-5;
  int batch = 32;
};

struct BackendsSection {
  std::string mode = "toy";
  std::optional<std::string> vision_language_weights;
  std::optional<std::string> semantic_weights;
  std::optional<std::string> perceptual_weights;
};

struct Stage2Section {
  int iters = 400000;
  double lr = 2e-4;
  int batch = 6;
  int patch = 128;
  int base_channels = 48;
  std::array<int, 4> blocks{4, 6, 6, 8};
  std::array<int, 4> heads{1, 2, 4, 8};
  double ffn_expansion = 2.66;
  double width_scale = 1.0;
  double lambda_cl = 0.1;
  double lambda_clip = 0.05;
  double lambda_dpl = 0.1;
  double tau = 0.07;
  double gamma = 0.25;
  double easy_weight = 2.0;
  bool use_cl = true;
  bool use_clip = true;
  bool use_dpl = true;
  std::vector<double> dial_ratios{0.2, 0.5, 0.8};
  int monitor_size = 16;
  int checkpoint_every = 500;
  BackendsSection backends;
};

struct ProxySection {
  int iters = 400;
  double lr = 1e-3;
  double width_scale = 1.0 / 6.0;
  std::array<int, 4> blocks{1, 1, 1, 1};
};

struct PathsSection {
  std::string checkpoint_dir = "runs/checkpoints";
  std::string log_dir = "runs/logs";
};

struct RunConfig {
  std::uint64_t seed = 7;
  DatasetSection dataset;
  Stage1Section stage1;
  Stage2Section stage2;
  ProxySection proxy;
  PathsSection paths;

  // Small sizes and short schedules for CPU-scale runs; model constants and
  // loss weights keep their defaults.
  static RunConfig desk_preset();

  degrade::DatasetConfig dataset_config() const;
  restore::RestorerConfig restorer_config() const;
  restore::RestorerConfig proxy_restorer_config() const;
  loss::LossWeights loss_weights() const;
};

nlohmann::json to_json(const RunConfig& c);
// Unknown keys anywhere in the document are rejected.
RunConfig from_json(const nlohmann::json& j);

// File + `--set a.b.c=value` overrides; `preset` is "paper" or "desk".
RunConfig load(const std::optional<std::string>& path,
               const std::vector<std::string>& overrides,
               const std::string& preset = "paper");

std::uint64_t config_hash(const RunConfig& c);

}  // namespace aio::cfg
