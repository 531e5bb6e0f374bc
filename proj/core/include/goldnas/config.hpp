#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "goldnas/dataset.hpp"
#include "goldnas/discrete_net.hpp"
#include "goldnas/scheduler.hpp"
#include "goldnas/search_space.hpp"

namespace goldnas {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | cifar10
  std::size_t samples_per_class = 500;
  std::size_t eval_samples_per_class = 100;
  double noise = kSyntheticNoise;
  std::string cifar_dir;
};

struct RandomSearchConfig {
  std::size_t samples = 24;
  std::uint64_t budget = 0;  // 0 means scheduler.flops_min
  std::size_t proxy_epochs = 3;
  std::size_t validation_examples = 400;  // held out of the training split
};

/// Everything a run needs besides the seed. Loaded from an INI document with
/// sections [shape] [optimizer] [scheduler] [data] [augment] [retrain]
/// [random_search] [run]; every field has a key of the same name.
struct ExperimentConfig {
  NetworkShapeConfig shape;
  OptimizerConfig optimizer;
  SchedulerConfig scheduler;
  SigmaBarScope sigma_bar_scope = SigmaBarScope::Edge;
  bool bn_affine = true;
  DataConfig data;
  AugmentationConfig augment;
  RetrainSchedule retrain;
  RandomSearchConfig random_search;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Throws ParseError for syntax errors, unknown sections or keys and values
/// of the wrong type; ValidationError for values outside their domain.
ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_ini(const ExperimentConfig& cfg);

std::string scope_name(SigmaBarScope s);
SigmaBarScope parse_scope(std::string_view s);

struct ExperimentData {
  DatasetSplit train;
  DatasetSplit eval;
};

/// Training and evaluation splits described by cfg.data; synthetic data is
/// drawn from the "data" stream of `seed`.
ExperimentData load_experiment_data(const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace goldnas
