#include "goldnas/experiment.hpp"

#include "goldnas/checkpoint.hpp"
#include "goldnas/io.hpp"
#include "goldnas/rng.hpp"

namespace goldnas {

SearchSettings search_settings(const ExperimentConfig& cfg) {
  SearchSettings s;
  s.scheduler = cfg.scheduler;
  s.optimizer = cfg.optimizer;
  s.augment = cfg.augment;
  return s;
}

SuperNetwork build_supernet(const ExperimentConfig& cfg, std::uint64_t seed) {
  SupernetOptions opt;
  opt.bn_affine = cfg.bn_affine;
  opt.sigma_scope = cfg.sigma_bar_scope;
  return SuperNetwork::build(cfg.shape, stream_seed(seed, "init"), opt);
}

void write_search_outputs(GoldSearch& search, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / SearchArtifacts::kTrace, trace_csv(search.trace()));
  write_pareto_set(dir, search.pareto(), cfg.scheduler.mu, cfg.seed);
  write_text_file(dir / SearchArtifacts::kRounds, prune_rounds_json(search.rounds()));
  write_text_file(dir / SearchArtifacts::kConfig, config_to_ini(cfg));
  save_checkpoint(search, dir / SearchArtifacts::kCheckpoint);
}

}  // namespace goldnas
