// goldnas: command-line driver for searches, re-training and architecture tools.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid input or usage.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "goldnas/checkpoint.hpp"
#include "goldnas/config.hpp"
#include "goldnas/error.hpp"
#include "goldnas/experiment.hpp"
#include "goldnas/flops_model.hpp"
#include "goldnas/io.hpp"
#include "goldnas/random_search.hpp"
#include "goldnas/rng.hpp"
#include "goldnas/search_space.hpp"

namespace fs = std::filesystem;
using namespace goldnas;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitInput = 2;

fs::path default_out(const std::string& leaf) {
  const char* env = std::getenv("GOLDNAS_OUT_DIR");
  return fs::path(env && *env ? env : "runs") / leaf;
}

std::string node_list(const std::vector<NodeRef>& nodes) {
  std::string out;
  for (const NodeRef& n : nodes) {
    if (!out.empty()) out += ';';
    out += "c" + std::to_string(n.cell) + "n" + std::to_string(n.node);
  }
  return out.empty() ? "-" : out;
}

// Flag values that override the configuration file when given.
struct Overrides {
  std::optional<double> mu;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> flops_min;
  std::optional<std::size_t> max_epochs;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> samples;

  ExperimentConfig apply(ExperimentConfig cfg) const {
    if (mu) cfg.scheduler.mu = *mu;
    if (seed) cfg.seed = *seed;
    if (flops_min) cfg.scheduler.flops_min = *flops_min;
    if (max_epochs) cfg.scheduler.max_epochs = *max_epochs;
    if (epochs) cfg.retrain.epochs = *epochs;
    if (samples) cfg.random_search.samples = *samples;
    cfg.validate();
    return cfg;
  }
};

int cmd_search(const fs::path& config, const Overrides& ov, fs::path out, const std::string& resume, bool quiet) {
  const ExperimentConfig cfg = ov.apply(load_config(config));
  if (out.empty()) out = default_out("search");
  const ExperimentData data = load_experiment_data(cfg, cfg.seed);
  GoldSearch search(build_supernet(cfg, cfg.seed), data.train, search_settings(cfg), cfg.seed);
  if (!resume.empty()) {
    load_checkpoint(search, resume);
    std::cerr << "resumed from " << resume << " at epoch " << search.state().epoch << "\n";
  }
  try {
    search.run([&](const TraceRow& r) {
      if (quiet) return;
      std::fprintf(stderr, "epoch %zu lambda=%.4g pruned=%zu active=%zu flops=%llu loss=%.4f acc=%.4f t=%zu\n",
                   r.epoch, r.lambda, r.n_pruned, r.active_gates, static_cast<unsigned long long>(r.discrete_flops),
                   r.train_loss, r.train_acc, r.patience_t);
    });
  } catch (const RuntimeAbort& e) {
    write_search_outputs(search, cfg, out);
    std::cerr << "search aborted: " << e.what() << "\n"
              << "checkpoint: " << (out / SearchArtifacts::kCheckpoint).string() << "\n";
    return kExitRuntime;
  }
  write_search_outputs(search, cfg, out);
  std::cout << "search status=ok mu=" << format_double(cfg.scheduler.mu) << " seed=" << cfg.seed
            << " epochs=" << search.state().epoch << " records=" << search.pareto().size()
            << " final_flops=" << search.current_flops() << " out=" << out.string() << "\n";
  return 0;
}

int cmd_retrain(const fs::path& config, const Overrides& ov, const fs::path& arch_path) {
  const ExperimentConfig cfg = ov.apply(load_config(config));
  const ArchitectureEncoding arch = load_architecture(arch_path.string());
  const ExperimentData data = load_experiment_data(cfg, cfg.seed);
  const RetrainResult r = retrain(arch, data.train, &data.eval, cfg.retrain, stream_seed(cfg.seed, "retrain"));
  for (std::size_t e = 0; e < r.metrics.train_loss.size(); ++e) {
    std::fprintf(stderr, "epoch %zu loss=%.4f acc=%.4f\n", e + 1, r.metrics.train_loss[e], r.metrics.train_accuracy[e]);
  }
  std::cout << "retrain status=ok flops=" << discrete_flops(arch) << " macs=" << r.metrics.macs
            << " params=" << r.metrics.parameters << " train_loss=" << format_double(r.metrics.final_train_loss)
            << " train_acc=" << format_double(r.metrics.final_train_accuracy)
            << " eval_loss=" << format_double(r.metrics.eval_loss)
            << " eval_acc=" << format_double(r.metrics.eval_accuracy) << "\n";
  return 0;
}

int cmd_random_search(const fs::path& config, const Overrides& ov, std::optional<std::uint64_t> budget_flag,
                      fs::path out) {
  const ExperimentConfig cfg = ov.apply(load_config(config));
  if (out.empty()) out = default_out("random_search");
  std::uint64_t budget = cfg.random_search.budget ? cfg.random_search.budget : cfg.scheduler.flops_min;
  if (budget_flag) budget = *budget_flag;
  const ExperimentData data = load_experiment_data(cfg, cfg.seed);
  RandomSearchSettings rs;
  rs.proxy_epochs = cfg.random_search.proxy_epochs;
  rs.validation_examples = cfg.random_search.validation_examples;
  rs.proxy = cfg.retrain;
  const RandomSearchResult result =
      random_search_baseline(cfg.shape, data.train, budget, cfg.random_search.samples, cfg.seed, rs);
  for (const RandomSample& s : result.samples) {
    const std::string file = "random_" + std::to_string(s.index) + "_" + std::to_string(s.flops) + ".json";
    write_text_file(out / file, serialize(s.architecture));
    std::cout << "sample index=" << s.index << " flops=" << s.flops << " val_acc=" << format_double(s.validation_accuracy)
              << " val_loss=" << format_double(s.validation_loss) << " file=" << file << "\n";
  }
  const RandomSample& best = result.best_sample();
  write_text_file(out / "random_best.json", serialize(best.architecture));
  std::cout << "random-search status=ok samples=" << result.samples.size() << " budget=" << budget
            << " best=" << best.index << " flops=" << best.flops
            << " val_acc=" << format_double(best.validation_accuracy)
            << " file=" << (out / "random_best.json").string() << "\n";
  return 0;
}

int cmd_count_space(std::size_t cells, std::size_t nodes) {
  NetworkShapeConfig shape;
  shape.num_cells = cells;
  shape.nodes_per_cell = nodes;
  shape.reduction_cells = NetworkShapeConfig::default_reductions(cells);
  shape.validate();
  const SpaceCardinality c = count_space(shape);
  std::cout << "count-space cells=" << cells << " nodes=" << nodes << " per_cell=" << c.per_cell.str()
            << " total=" << c.exact.str() << " approx=" << scientific(c.exact) << "\n";
  return 0;
}

int cmd_flops(const fs::path& arch_path) {
  const ArchitectureEncoding arch = load_architecture(arch_path.string());
  const FlopsBreakdown b = flops_breakdown(arch.shape);
  for (const GateId& g : arch.active) {
    std::cout << "gate cell=" << g.cell << " from=" << g.from << " to=" << g.to << " op=" << op_name(g.op)
              << " flops=" << b.cost_of(g) << "\n";
  }
  std::cout << "flops status=ok stem=" << b.stem << " preprocess=" << b.preprocess << " classifier=" << b.classifier
            << " gates=" << arch.active.size() << " total=" << discrete_flops(arch) << "\n";
  return 0;
}

int cmd_export_dot(const fs::path& arch_path, const fs::path& out) {
  const std::string dot = export_dot(load_architecture(arch_path.string()));
  if (out.empty()) {
    std::cout << dot;
    return 0;
  }
  write_text_file(out, dot);
  std::cout << "export-dot status=ok file=" << out.string() << "\n";
  return 0;
}

int cmd_validate(const fs::path& arch_path) {
  const ArchitectureEncoding arch = load_architecture(arch_path.string());
  const ValidityReport r = validate(arch);
  const bool warn = !r.valid() || !r.consistent();
  if (!r.unannotated_dead.empty()) std::cerr << "warning: unannotated dead nodes " << node_list(r.unannotated_dead) << "\n";
  if (!r.stale_annotations.empty()) std::cerr << "warning: stale dead-node annotations " << node_list(r.stale_annotations) << "\n";
  std::cout << "validate status=" << (warn ? "warning" : "ok") << " gates=" << arch.active.size()
            << " dead_nodes=" << node_list(r.dead_nodes) << " flops=" << discrete_flops(arch) << "\n";
  return 0;
}

int cmd_trace_replay(const fs::path& dir, const fs::path& out) {
  const ExperimentConfig cfg = load_config(dir / SearchArtifacts::kConfig);
  const TraceLog log = parse_trace_csv(read_text_file(dir / SearchArtifacts::kTrace));
  const auto rounds = parse_prune_rounds(read_text_file(dir / SearchArtifacts::kRounds));
  ParetoManifest manifest;
  const ParetoSet set = read_pareto_set(dir, &manifest);
  for (const ParetoRecord& r : set.records) {
    if (discrete_flops(r.architecture) != r.flops) {
      throw ValidationError("manifest FLOPs disagree with the architecture recorded at epoch " + std::to_string(r.epoch));
    }
  }
  if (auto bad = check_trace_transitions(log, cfg.scheduler)) throw ValidationError("trace: " + *bad);
  if (auto bad = check_prune_predicate(rounds, cfg.scheduler)) throw ValidationError("prune rounds: " + *bad);
  const std::string csv = trace_csv(log);
  std::ostream& summary = out.empty() ? std::cerr : std::cout;
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_text_file(out, csv);
  }
  summary << "trace-replay status=ok epochs=" << log.size() << " records=" << set.size()
          << " rounds=" << rounds.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradual one-level differentiable architecture search"};
  app.require_subcommand(1);

  std::string config, arch, out, resume, dir;
  Overrides ov;
  bool quiet = false;
  std::size_t cells = 0, nodes = 0;
  std::optional<std::uint64_t> budget;

  auto* search = app.add_subcommand("search", "Run a pruning search and write its outputs");
  search->add_option("--config", config, "Experiment configuration (INI)")->required();
  search->add_option("--mu", ov.mu, "Override scheduler.mu");
  search->add_option("--seed", ov.seed, "Override run.seed");
  search->add_option("--flops-min", ov.flops_min, "Override scheduler.flops_min");
  search->add_option("--max-epochs", ov.max_epochs, "Override scheduler.max_epochs");
  search->add_option("--out", out, "Output directory (default $GOLDNAS_OUT_DIR/search, else runs/search)");
  search->add_option("--resume", resume, "Continue from a checkpoint written by an earlier run");
  search->add_flag("--quiet", quiet, "No per-epoch progress on stderr");

  auto* re = app.add_subcommand("retrain", "Train a discrete architecture from scratch");
  re->add_option("--config", config, "Experiment configuration (INI)")->required();
  re->add_option("--arch", arch, "Architecture document")->required();
  re->add_option("--seed", ov.seed, "Override run.seed");
  re->add_option("--epochs", ov.epochs, "Override retrain.epochs");

  auto* rs = app.add_subcommand("random-search", "Random pruning baseline under a FLOPs budget");
  rs->add_option("--config", config, "Experiment configuration (INI)")->required();
  rs->add_option("--seed", ov.seed, "Override run.seed");
  rs->add_option("--samples", ov.samples, "Override random_search.samples");
  rs->add_option("--budget", budget, "FLOPs budget (default random_search.budget, else scheduler.flops_min)");
  rs->add_option("--out", out, "Output directory (default $GOLDNAS_OUT_DIR/random_search, else runs/random_search)");

  auto* cs = app.add_subcommand("count-space", "Exact size of the search space");
  cs->add_option("--cells", cells, "Number of cells")->required();
  cs->add_option("--nodes", nodes, "Nodes per cell, inputs included")->required();

  auto* fl = app.add_subcommand("flops", "FLOPs breakdown of an architecture");
  fl->add_option("--arch", arch, "Architecture document")->required();

  auto* dot = app.add_subcommand("export-dot", "Render an architecture as Graphviz DOT");
  dot->add_option("--arch", arch, "Architecture document")->required();
  dot->add_option("--out", out, "Output file (default stdout)");

  auto* val = app.add_subcommand("validate", "Check an architecture document");
  val->add_option("--arch", arch, "Architecture document")->required();

  auto* tr = app.add_subcommand("trace-replay", "Re-check and re-emit the trace of a search directory");
  tr->add_option("--dir", dir, "Search output directory")->required();
  tr->add_option("--out", out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    if (*search) return cmd_search(config, ov, out, resume, quiet);
    if (*re) return cmd_retrain(config, ov, arch);
    if (*rs) return cmd_random_search(config, ov, budget, out);
    if (*cs) return cmd_count_space(cells, nodes);
    if (*fl) return cmd_flops(arch);
    if (*dot) return cmd_export_dot(arch, out);
    if (*val) return cmd_validate(arch);
    if (*tr) return cmd_trace_replay(dir, out);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitInput;
}
