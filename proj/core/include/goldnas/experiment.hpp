#pragma once

#include <cstdint>
#include <filesystem>

#include "goldnas/config.hpp"
#include "goldnas/scheduler.hpp"

namespace goldnas {

SearchSettings search_settings(const ExperimentConfig& cfg);

/// Supernet for cfg.shape with weights drawn from the "init" stream of `seed`.
SuperNetwork build_supernet(const ExperimentConfig& cfg, std::uint64_t seed);

/// File names inside a search output directory.
struct SearchArtifacts {
  static constexpr const char* kTrace = "trace.csv";
  static constexpr const char* kManifest = "pareto_manifest.json";
  static constexpr const char* kRounds = "prune_rounds.json";
  static constexpr const char* kCheckpoint = "checkpoint.bin";
  static constexpr const char* kConfig = "config.ini";
};

/// Writes the trace, Pareto documents and manifest, prune rounds, the
/// effective configuration and a checkpoint into `dir`.
void write_search_outputs(GoldSearch& search, const ExperimentConfig& cfg, const std::filesystem::path& dir);

}  // namespace goldnas
