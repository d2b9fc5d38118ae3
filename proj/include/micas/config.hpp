#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "micas/nn.hpp"
#include "micas/ranker.hpp"
#include "micas/sampler.hpp"
#include "micas/surrogate.hpp"
#include "micas/tasks.hpp"

namespace micas {

/// Every knob of a run. Text form is flat "key = value" lines; `profile`
/// selects the defaults that the remaining keys override.
struct RunConfig {
  std::string profile = "desk";

  // geometry
  Index points = 256;       // S
  Index centers = 16;       // N
  Index patch_size = 16;    // M
  Index candidates = 8;     // K
  double mask_ratio = 0.6;

  // networks
  Index d1 = 64;
  Index d2 = 64;
  Index hidden = 64;

  ad::OptimizerKind optimizer = ad::OptimizerKind::Adam;

  // sampler training
  double alpha = 0.5;
  double tau_start = 1.0;
  double tau_end = 0.1;
  double tau_infer = 0.1;
  double sampler_lr0 = 3e-3;
  double sampler_lr_min = 1e-5;
  Index sampler_epochs = 30;
  Index sampler_batch = 4;

  // ranker training
  double ranker_lr0 = 3e-3;
  double ranker_lr_min = 1e-5;
  Index ranker_epochs = 10;
  Index ranker_batch = 9;

  // data
  std::uint64_t seed = 0;
  Index train_per_level = 4;
  Index test_per_level = 2;
  Index bank_per_task = 16;
  std::vector<TaskKind> tasks{kAllTasks.begin(), kAllTasks.end()};
  std::vector<int> levels{1, 2, 3, 4, 5};

  static RunConfig desk();
  static RunConfig paper();
  static RunConfig for_profile(std::string_view profile);

  /// Reads a config file; an optional `profile` key picks the base defaults.
  static RunConfig load(const std::filesystem::path& path);
  static RunConfig parse(std::string_view text);

  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  std::string serialize() const;
  std::uint64_t hash() const;  // FNV-1a of serialize()
  void validate() const;

  SamplerConfig sampler() const;
  SurrogateConfig surrogate() const;
  RankerConfig ranker() const;
};

std::string hash_hex(std::uint64_t h);

}  // namespace micas
