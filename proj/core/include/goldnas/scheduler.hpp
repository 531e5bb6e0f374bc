#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "goldnas/dataset.hpp"
#include "goldnas/flops_model.hpp"
#include "goldnas/search_space.hpp"
#include "goldnas/supernet.hpp"

namespace goldnas {

struct SchedulerConfig {
  std::size_t n0 = 4;
  double lambda0 = 1e-5;
  double c0 = 2.0;
  double xi_max = 0.05;
  double xi_min = 0.01;
  std::size_t t0 = 3;
  std::uint64_t flops_min = 0;
  double mu = 0.0;
  /// Guard against searches that can no longer reach flops_min.
  std::size_t max_epochs = 1000;

  void validate() const;
};

struct SchedulerState {
  double lambda = 0.0;
  double delta_lambda = 0.0;
  std::size_t t = 0;
  std::size_t epoch = 0;  // completed epochs

  static SchedulerState initial(const SchedulerConfig& cfg) { return {0.0, cfg.lambda0, 0, 0}; }
  friend bool operator==(const SchedulerState&, const SchedulerState&) = default;
};

struct PruneRoundReport {
  std::size_t epoch = 0;
  std::size_t active_before = 0;
  std::vector<std::pair<GateId, double>> e_min;   // gate and sigma, ascending
  std::vector<std::pair<GateId, double>> pruned;  // canonical order
  std::size_t n_pruned() const { return pruned.size(); }
};

/// The gates one round removes: the n0 smallest-sigma active gates (ties by
/// canonical order) that fall below xi_max, plus every active gate below
/// xi_min. Pure; does not touch the network.
PruneRoundReport select_prunes(const GateParams& params, const std::vector<GateId>& gates,
                               const SchedulerConfig& cfg);

/// select_prunes on the network's current gates, then hard removal.
PruneRoundReport prune_round(SuperNetwork& net, const SchedulerConfig& cfg);

/// n_pruned < n0: delta <- c0 * delta, lambda <- lambda + delta.
/// otherwise:     delta <- lambda0,    lambda <- lambda / c0.
SchedulerState lambda_update(SchedulerState state, std::size_t n_pruned, const SchedulerConfig& cfg);

struct ParetoRecord {
  ArchitectureEncoding architecture;
  std::uint64_t flops = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::size_t epoch = 0;
};

/// Recorded architectures in order of strictly decreasing discrete FLOPs.
struct ParetoSet {
  std::vector<ParetoRecord> records;

  /// Appends unless the record is not strictly cheaper than the last one
  /// (which also covers an unchanged active set). Returns whether appended.
  bool offer(ParetoRecord record);
  std::size_t size() const { return records.size(); }
};

/// t <- t + 1 when nothing was pruned, else 0. When t reaches t0 the current
/// architecture is offered to the set and t resets. Returns whether a record
/// was appended.
bool patience_update(SchedulerState& state, std::size_t n_pruned, const SchedulerConfig& cfg,
                     ParetoSet& pareto, const std::function<ParetoRecord()>& current);

struct TraceRow {
  std::size_t epoch = 0;
  double lambda = 0.0;
  double delta_lambda = 0.0;
  std::size_t n_pruned = 0;
  std::size_t active_gates = 0;
  double expected_flops = 0.0;
  std::uint64_t discrete_flops = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::size_t patience_t = 0;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};
using TraceLog = std::vector<TraceRow>;

/// Re-derives every lambda, delta_lambda and t transition of a log from its
/// n_pruned column. Returns a description of the first mismatch, if any.
std::optional<std::string> check_trace_transitions(const TraceLog& log, const SchedulerConfig& cfg);

/// Checks every pruned gate of every round against the prune predicate.
std::optional<std::string> check_prune_predicate(const std::vector<PruneRoundReport>& rounds,
                                                 const SchedulerConfig& cfg);

struct SearchSettings {
  SchedulerConfig scheduler;
  OptimizerConfig optimizer;
  AugmentationConfig augment;
};

/// Algorithm state of one search; owns the supernet. Each call to
/// run_epoch() trains one epoch with one-level updates and then applies the
/// prune, lambda and patience steps.
class GoldSearch {
 public:
  GoldSearch(SuperNetwork net, const DatasetSplit& train, SearchSettings settings, std::uint64_t seed);

  bool finished() const { return finished_; }
  /// Runs one epoch; returns the trace row it appended.
  const TraceRow& run_epoch();
  /// Runs until the FLOPs target is reached. Throws RuntimeAbort when the
  /// epoch guard is exceeded or the loss diverges.
  void run(const std::function<void(const TraceRow&)>& on_epoch = {});

  std::uint64_t current_flops() const;

  SuperNetwork& network() { return net_; }
  const SuperNetwork& network() const { return net_; }
  const SearchSettings& settings() const { return settings_; }
  const SchedulerState& state() const { return state_; }
  const ParetoSet& pareto() const { return pareto_; }
  const TraceLog& trace() const { return trace_; }
  const std::vector<PruneRoundReport>& rounds() const { return rounds_; }
  std::mt19937_64& train_rng() { return train_rng_; }
  std::mt19937_64& augment_rng() { return augment_rng_; }

  // Checkpoint restoration.
  void restore(SchedulerState state, ParetoSet pareto, TraceLog trace, std::vector<PruneRoundReport> rounds,
               bool finished);

 private:
  void finish();

  SuperNetwork net_;
  const DatasetSplit* train_;
  SearchSettings settings_;
  SchedulerState state_;
  ParetoSet pareto_;
  TraceLog trace_;
  std::vector<PruneRoundReport> rounds_;
  std::mt19937_64 train_rng_;
  std::mt19937_64 augment_rng_;
  bool finished_ = false;
};

}  // namespace goldnas
