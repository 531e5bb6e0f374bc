#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "goldnas/scheduler.hpp"

namespace goldnas {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text, const std::string& context);
std::uint64_t parse_uint(std::string_view text, const std::string& context);

std::string read_text_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_text_file(const std::filesystem::path& path, std::string_view content);

inline constexpr std::string_view kTraceHeader =
    "epoch,lambda,delta_lambda,n_pruned,active_gates,expected_flops,discrete_flops,train_loss,train_acc,patience_t";

std::string trace_csv(const TraceLog& log);
/// Throws ParseError naming the line and column of the first bad field.
TraceLog parse_trace_csv(std::string_view text);

struct ManifestEntry {
  std::size_t index = 0;
  std::string file;
  std::uint64_t flops = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::size_t active_gates = 0;
};

struct ParetoManifest {
  double mu = 0.0;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> records;
};

/// pareto_<index>_<flops>.json
std::string pareto_file_name(std::size_t index, std::uint64_t flops);

std::string manifest_json(const ParetoManifest& manifest);
ParetoManifest parse_manifest(std::string_view text);

/// Writes one architecture document per record plus pareto_manifest.json.
ParetoManifest write_pareto_set(const std::filesystem::path& dir, const ParetoSet& set, double mu, std::uint64_t seed);
/// Reads the manifest and every architecture it references.
ParetoSet read_pareto_set(const std::filesystem::path& dir, ParetoManifest* manifest = nullptr);

std::string prune_rounds_json(const std::vector<PruneRoundReport>& rounds);
std::vector<PruneRoundReport> parse_prune_rounds(std::string_view text);

}  // namespace goldnas
