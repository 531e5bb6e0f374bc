#include "goldnas/scheduler.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "goldnas/error.hpp"
#include "goldnas/rng.hpp"

namespace goldnas {

void SchedulerConfig::validate() const {
  if (!(xi_min >= 0 && xi_min <= xi_max && xi_max < 1)) {
    throw ValidationError("scheduler: need 0 <= xi_min <= xi_max < 1");
  }
  if (!(c0 > 1)) throw ValidationError("scheduler: c0 must be > 1");
  if (n0 < 1) throw ValidationError("scheduler: n0 must be >= 1");
  if (t0 < 1) throw ValidationError("scheduler: t0 must be >= 1");
  if (!(lambda0 > 0)) throw ValidationError("scheduler: lambda0 must be > 0");
  if (mu < 0) throw ValidationError("scheduler: mu must be >= 0");
  if (max_epochs < 1) throw ValidationError("scheduler: max_epochs must be >= 1");
}

PruneRoundReport select_prunes(const GateParams& params, const std::vector<GateId>& gates,
                               const SchedulerConfig& cfg) {
  if (gates.size() != params.size()) {
    throw ShapeError("select_prunes: " + std::to_string(gates.size()) + " gates for " +
                     std::to_string(params.size()) + " parameters");
  }
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.active[i]) active.push_back(i);
  }
  PruneRoundReport report;
  report.active_before = active.size();
  std::vector<double> sigma(params.size());
  for (std::size_t i : active) sigma[i] = params.weight(i);
  std::stable_sort(active.begin(), active.end(), [&](std::size_t a, std::size_t b) { return sigma[a] < sigma[b]; });

  const std::size_t m = std::min(cfg.n0, active.size());
  std::vector<std::size_t> chosen;
  for (std::size_t k = 0; k < active.size(); ++k) {
    const std::size_t i = active[k];
    if (k < m) report.e_min.emplace_back(gates[i], sigma[i]);
    if ((k < m && sigma[i] < cfg.xi_max) || sigma[i] < cfg.xi_min) chosen.push_back(i);
  }
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t i : chosen) report.pruned.emplace_back(gates[i], sigma[i]);
  return report;
}

PruneRoundReport prune_round(SuperNetwork& net, const SchedulerConfig& cfg) {
  PruneRoundReport report = select_prunes(net.gate_params(), net.gates(), cfg);
  std::vector<GateId> ids;
  for (const auto& [g, s] : report.pruned) ids.push_back(g);
  discretize(net, ids);
  return report;
}

SchedulerState lambda_update(SchedulerState state, std::size_t n_pruned, const SchedulerConfig& cfg) {
  if (n_pruned < cfg.n0) {
    state.delta_lambda = cfg.c0 * state.delta_lambda;
    state.lambda = state.lambda + state.delta_lambda;
  } else {
    state.delta_lambda = cfg.lambda0;
    state.lambda = state.lambda / cfg.c0;
  }
  return state;
}

bool ParetoSet::offer(ParetoRecord record) {
  if (!records.empty() && record.flops >= records.back().flops) return false;
  records.push_back(std::move(record));
  return true;
}

bool patience_update(SchedulerState& state, std::size_t n_pruned, const SchedulerConfig& cfg,
                     ParetoSet& pareto, const std::function<ParetoRecord()>& current) {
  state.t = n_pruned == 0 ? state.t + 1 : 0;
  if (state.t < cfg.t0) return false;
  state.t = 0;
  return pareto.offer(current());
}

std::optional<std::string> check_trace_transitions(const TraceLog& log, const SchedulerConfig& cfg) {
  SchedulerState s = SchedulerState::initial(cfg);
  for (std::size_t k = 0; k < log.size(); ++k) {
    const TraceRow& row = log[k];
    std::ostringstream msg;
    msg.precision(17);
    if (row.epoch != k + 1) {
      msg << "row " << k << ": epoch " << row.epoch << ", expected " << k + 1;
      return msg.str();
    }
    s = lambda_update(s, row.n_pruned, cfg);
    s.t = row.n_pruned == 0 ? s.t + 1 : 0;
    if (s.t >= cfg.t0) s.t = 0;
    if (row.lambda != s.lambda || row.delta_lambda != s.delta_lambda || row.patience_t != s.t) {
      msg << "epoch " << row.epoch << ": logged (lambda=" << row.lambda << ", delta=" << row.delta_lambda
          << ", t=" << row.patience_t << "), replay gives (" << s.lambda << ", " << s.delta_lambda << ", "
          << s.t << ")";
      return msg.str();
    }
    if (row.lambda < 0) return "epoch " + std::to_string(row.epoch) + ": negative lambda";
  }
  return std::nullopt;
}

std::optional<std::string> check_prune_predicate(const std::vector<PruneRoundReport>& rounds,
                                                 const SchedulerConfig& cfg) {
  for (const PruneRoundReport& r : rounds) {
    if (r.e_min.size() != std::min(cfg.n0, r.active_before)) {
      return "epoch " + std::to_string(r.epoch) + ": E_min has " + std::to_string(r.e_min.size()) + " members";
    }
    if (r.pruned.size() > r.active_before) {
      return "epoch " + std::to_string(r.epoch) + ": more gates pruned than were active";
    }
    for (const auto& [g, s] : r.pruned) {
      const bool in_min = std::any_of(r.e_min.begin(), r.e_min.end(), [&](const auto& e) { return e.first == g; });
      if (!((in_min && s < cfg.xi_max) || s < cfg.xi_min)) {
        std::ostringstream msg;
        msg << "epoch " << r.epoch << ": gate " << to_string(g) << " pruned at sigma " << s
            << " without satisfying the prune predicate";
        return msg.str();
      }
    }
  }
  return std::nullopt;
}

GoldSearch::GoldSearch(SuperNetwork net, const DatasetSplit& train, SearchSettings settings, std::uint64_t seed)
    : net_(std::move(net)),
      train_(&train),
      settings_(settings),
      state_(SchedulerState::initial(settings.scheduler)),
      train_rng_(make_stream(seed, "train")),
      augment_rng_(make_stream(seed, "augment")) {
  settings_.scheduler.validate();
  settings_.optimizer.validate();
  settings_.augment.validate(train.height, train.width);
  train.validate();
  if (train.size() == 0) throw ValidationError("search: empty training split");
  if (train.num_classes != net_.shape().num_classes) {
    throw ValidationError("search: data has " + std::to_string(train.num_classes) + " classes, network " +
                          std::to_string(net_.shape().num_classes));
  }
  if (settings_.scheduler.flops_min < net_.flops().fixed()) {
    throw ValidationError("search: flops_min " + std::to_string(settings_.scheduler.flops_min) +
                          " is below the fixed stem, preprocessing and classifier cost " +
                          std::to_string(net_.flops().fixed()) + "; the target is unreachable");
  }
}

std::uint64_t GoldSearch::current_flops() const {
  std::uint64_t total = net_.flops().fixed();
  for (std::size_t i = 0; i < net_.active().size(); ++i) {
    if (net_.active()[i]) total += net_.flops().gate_costs[i];
  }
  return total;
}

const TraceRow& GoldSearch::run_epoch() {
  if (finished_) throw Error("search: run_epoch after termination");
  const SchedulerConfig& cfg = settings_.scheduler;
  const LossSpec loss{state_.lambda, cfg.mu};
  double ce_sum = 0.0;
  std::size_t correct = 0, count = 0;
  for (const auto& idx : epoch_batches(train_->size(), settings_.optimizer.batch_size, train_rng_)) {
    const Batch batch = make_batch(*train_, idx, settings_.augment, augment_rng_);
    const StepReport r = one_level_step(net_, batch, settings_.optimizer, loss);
    ce_sum += r.cross_entropy * static_cast<double>(r.count);
    correct += r.correct;
    count += r.count;
  }
  const double train_loss = ce_sum / static_cast<double>(count);
  const double train_acc = static_cast<double>(correct) / static_cast<double>(count);
  const std::size_t epoch = state_.epoch + 1;

  PruneRoundReport round = prune_round(net_, cfg);
  round.epoch = epoch;
  const std::size_t n_pruned = round.n_pruned();
  rounds_.push_back(std::move(round));

  state_ = lambda_update(state_, n_pruned, cfg);
  const std::uint64_t flops = current_flops();
  auto snapshot = [&] { return ParetoRecord{export_architecture(net_), flops, train_loss, train_acc, epoch}; };
  patience_update(state_, n_pruned, cfg, pareto_, snapshot);
  state_.epoch = epoch;

  const GateParams gp = net_.gate_params();
  trace_.push_back(TraceRow{epoch, state_.lambda, state_.delta_lambda, n_pruned, gp.active_count(),
                            net_.regularizer().expected(gp), flops, train_loss, train_acc, state_.t});
  if (flops <= cfg.flops_min) {
    pareto_.offer(snapshot());
    finished_ = true;
  }
  return trace_.back();
}

void GoldSearch::run(const std::function<void(const TraceRow&)>& on_epoch) {
  while (!finished_) {
    if (state_.epoch >= settings_.scheduler.max_epochs) {
      std::size_t sole = 0, shared = 0;
      const auto& gates = net_.gates();
      for (std::size_t i = 0; i < gates.size(); ++i) {
        if (!net_.active()[i] || net_.flops().gate_costs[i] == 0) continue;
        const bool alone = std::none_of(gates.begin(), gates.end(), [&](const GateId& o) {
          const std::size_t j = net_.gate_index(o);
          return j != i && net_.active()[j] && o.cell == gates[i].cell && o.from == gates[i].from &&
                 o.to == gates[i].to;
        });
        (alone ? sole : shared) += 1;
      }
      std::ostringstream msg;
      msg << "search: FLOPs target " << settings_.scheduler.flops_min << " not reached after "
          << state_.epoch << " epochs (current " << current_flops() << ", lambda " << state_.lambda
          << "; " << sole << " costly gates alone on their edge, " << shared << " sharing an edge)";
      throw RuntimeAbort(msg.str());
    }
    const TraceRow& row = run_epoch();
    if (on_epoch) on_epoch(row);
  }
}

void GoldSearch::restore(SchedulerState state, ParetoSet pareto, TraceLog trace,
                         std::vector<PruneRoundReport> rounds, bool finished) {
  state_ = state;
  pareto_ = std::move(pareto);
  trace_ = std::move(trace);
  rounds_ = std::move(rounds);
  finished_ = finished;
}

}  // namespace goldnas
