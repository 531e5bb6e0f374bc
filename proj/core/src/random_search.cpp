#include "goldnas/random_search.hpp"

#include "goldnas/error.hpp"
#include "goldnas/flops_model.hpp"
#include "goldnas/rng.hpp"

namespace goldnas {

RandomSearchResult random_search_baseline(const NetworkShapeConfig& shape, const DatasetSplit& data,
                                          std::uint64_t budget, std::size_t k, std::uint64_t seed,
                                          const RandomSearchSettings& settings) {
  if (k == 0) throw ValidationError("random search needs at least one sample");
  if (settings.validation_examples == 0 || settings.validation_examples >= data.size()) {
    throw ValidationError("validation_examples must be between 1 and " + std::to_string(data.size() - 1));
  }
  RetrainSchedule proxy = settings.proxy;
  proxy.epochs = settings.proxy_epochs;
  proxy.validate();

  auto [train, held_out] = split_dataset(data, data.size() - settings.validation_examples, SplitRole::Train,
                                         SplitRole::Eval, stream_seed(seed, "random-search-split"));
  RandomSearchResult result;
  for (std::size_t i = 0; i < k; ++i) {
    RandomSample s;
    s.index = i;
    s.architecture = random_sample_under_flops(shape, budget, make_stream(seed, "sampler", i)());
    s.flops = discrete_flops(s.architecture);
    RetrainResult r = retrain(s.architecture, train, &held_out, proxy, make_stream(seed, "proxy-init", i)());
    s.proxy_train_accuracy = r.metrics.final_train_accuracy;
    s.validation_loss = r.metrics.eval_loss;
    s.validation_accuracy = r.metrics.eval_accuracy;
    result.samples.push_back(std::move(s));
    if (result.samples.back().validation_accuracy > result.samples[result.best].validation_accuracy) {
      result.best = i;
    }
  }
  return result;
}

}  // namespace goldnas
