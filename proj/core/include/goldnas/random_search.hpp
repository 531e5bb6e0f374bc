#pragma once

#include <cstdint>
#include <vector>

#include "goldnas/dataset.hpp"
#include "goldnas/discrete_net.hpp"
#include "goldnas/search_space.hpp"

namespace goldnas {

struct RandomSearchSettings {
  std::size_t proxy_epochs = 3;
  std::size_t validation_examples = 400;  // held out of the training split
  RetrainSchedule proxy;                  // epochs are overridden by proxy_epochs
};

struct RandomSample {
  std::size_t index = 0;
  ArchitectureEncoding architecture;
  std::uint64_t flops = 0;
  double proxy_train_accuracy = 0.0;
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;
};

struct RandomSearchResult {
  std::vector<RandomSample> samples;
  std::size_t best = 0;  // highest validation accuracy, first on ties

  const RandomSample& best_sample() const { return samples.at(best); }
};

/// Draws k architectures with random_sample_under_flops (seeded from the
/// "sampler" stream), trains each briefly on the training part of `data` and
/// scores it on a held-out part. Throws ValidationError for k == 0 and lets
/// sampler errors through.
RandomSearchResult random_search_baseline(const NetworkShapeConfig& shape, const DatasetSplit& data,
                                          std::uint64_t budget, std::size_t k, std::uint64_t seed,
                                          const RandomSearchSettings& settings = {});

}  // namespace goldnas
