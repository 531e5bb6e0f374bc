// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Usage: goldnas_acceptance <work-dir>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "goldnas/config.hpp"
#include "goldnas/dataset.hpp"
#include "goldnas/error.hpp"
#include "goldnas/experiment.hpp"
#include "goldnas/flops_model.hpp"
#include "goldnas/io.hpp"
#include "goldnas/layers.hpp"
#include "goldnas/search_space.hpp"
#include "goldnas/supernet.hpp"
#include "gradcheck.hpp"

using namespace goldnas;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct CliRun {
  int code = -1;
  std::string out, err;
  double seconds = 0.0;
};

fs::path g_work;

CliRun cli(const std::string& args) {
  const fs::path out = g_work / "cli_stdout.txt", err = g_work / "cli_stderr.txt";
  const std::string cmd =
      std::string("'") + GOLDNAS_CLI_PATH + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  const auto t0 = Clock::now();
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.seconds = seconds_since(t0);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text_file(out);
  r.err = read_text_file(err);
  return r;
}

// Value of `key=` in a line of key=value pairs.
std::string field(const std::string& line, const std::string& key) {
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    if (tok.rfind(key + "=", 0) == 0) return tok.substr(key.size() + 1);
  }
  return {};
}

std::string last_line_with(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::string line, found;
  while (std::getline(in, line)) {
    if (line.rfind(prefix, 0) == 0) found = line;
  }
  return found;
}

NetworkShapeConfig shape_of(std::size_t cells, std::size_t nodes) {
  NetworkShapeConfig s;
  s.num_cells = cells;
  s.nodes_per_cell = nodes;
  s.reduction_cells = NetworkShapeConfig::default_reductions(cells);
  return s;
}

const fs::path kDesk = fs::path(GOLDNAS_PROFILE_DIR) / "desk.ini";

// ---------------------------------------------------------------------------

Outcome criterion1() {
  Outcome o;
  const auto t0 = Clock::now();
  const SpaceCardinality n6 = count_space(shape_of(1, 6));
  o.require(n6.per_cell.str() == "246517425", "per-cell count " + n6.per_cell.str());
  const std::string a14 = scientific(count_space(shape_of(14, 6)).exact);
  const std::string a20 = scientific(count_space(shape_of(20, 6)).exact);
  o.require(a14 == "3.1e+117", "14 cells gives " + a14);
  o.require(a20 == "6.9e+167", "20 cells gives " + a20);
  const double s = seconds_since(t0);
  o.require(s < 1.0, "runtime " + fixed(s, 3) + " s");
  o.note("per_cell=" + n6.per_cell.str() + " L14=" + a14 + " L20=" + a20 + " in " + fixed(s, 3) + " s");
  return o;
}

std::uint64_t enumerate_valid(std::size_t cells, std::size_t nodes) {
  std::vector<std::size_t> target;  // cell * nodes + to, per candidate gate
  for (std::size_t c = 0; c < cells; ++c)
    for (std::size_t j = 2; j < nodes; ++j)
      for (std::size_t i = 0; i < j; ++i)
        for (int op = 0; op < 2; ++op) target.push_back(c * nodes + j);
  std::uint64_t valid = 0;
  std::vector<char> fed(cells * nodes);
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << target.size()); ++m) {
    std::fill(fed.begin(), fed.end(), 0);
    for (std::size_t g = 0; g < target.size(); ++g)
      if (m >> g & 1) fed[target[g]] = 1;
    bool ok = true;
    for (std::size_t c = 0; c < cells; ++c)
      for (std::size_t j = 2; j < nodes; ++j) ok = ok && fed[c * nodes + j];
    valid += ok;
  }
  return valid;
}

Outcome criterion2() {
  Outcome o;
  const auto t0 = Clock::now();
  for (std::size_t cells = 1; cells <= 2; ++cells) {
    for (std::size_t nodes = 3; nodes <= 4; ++nodes) {
      const std::uint64_t brute = enumerate_valid(cells, nodes);
      const BigInt counted = count_space(shape_of(cells, nodes)).exact;
      o.require(counted == brute, "L=" + std::to_string(cells) + " N=" + std::to_string(nodes) + ": " +
                                      counted.str() + " vs " + std::to_string(brute));
      o.note("L" + std::to_string(cells) + "N" + std::to_string(nodes) + "=" + std::to_string(brute));
    }
  }
  const double s = seconds_since(t0);
  o.require(s < 60.0, "runtime " + fixed(s) + " s");
  o.note("in " + fixed(s) + " s");
  return o;
}

std::uint64_t executed_macs(OpKind op, std::size_t c, std::size_t out_hw, std::size_t stride) {
  std::mt19937_64 rng(1);
  std::unique_ptr<Layer> layer;
  if (op == OpKind::SepConv3x3) {
    layer = std::make_unique<SepConv3x3>(c, stride, true, rng);
  } else if (stride == 2) {
    layer = std::make_unique<FactorizedReduce>(c, c, true, rng);
  } else {
    layer = std::make_unique<Identity>();
  }
  MacCounter counter;
  Tape tape;
  const std::size_t in = out_hw * stride;
  (void)layer->forward(tape, tape.constant(Tensor({1, c, in, in}, 0.25)), ForwardOptions::probe());
  return counter.per_sample();
}

Outcome criterion3() {
  Outcome o;
  const auto t0 = Clock::now();
  std::size_t cases = 0;
  for (std::size_t c : {8, 16, 36})
    for (std::size_t hw : {4, 8, 16, 32})
      for (std::size_t stride : {1, 2})
        for (OpKind op : kAllOps) {
          const std::uint64_t closed = op_flops({op, c, hw, hw, stride});
          const std::uint64_t counted = executed_macs(op, c, hw, stride);
          o.require(closed == counted, std::string(op_name(op)) + " C=" + std::to_string(c) + " H=" + std::to_string(hw) +
                                           " s=" + std::to_string(stride) + ": " + std::to_string(closed) +
                                           " vs " + std::to_string(counted));
          ++cases;
        }
  // additivity: removing any gate lowers discrete FLOPs by exactly its cost
  NetworkShapeConfig desk;
  desk.reduction_cells = {1};
  desk.num_classes = 4;
  const FlopsBreakdown b = flops_breakdown(desk);
  const ArchitectureEncoding full = ArchitectureEncoding::full(desk);
  const std::uint64_t total = discrete_flops(full);
  std::uint64_t sum = b.stem + b.preprocess + b.classifier;
  for (std::size_t g = 0; g < b.gates.size(); ++g) {
    ArchitectureEncoding less = full;
    less.active.erase(b.gates[g]);
    o.require(total - discrete_flops(less) == b.gate_costs[g], "delta of " + to_string(b.gates[g]));
    sum += b.gate_costs[g];
  }
  o.require(sum == total, "fixed + gates = " + std::to_string(sum) + " vs " + std::to_string(total));
  const double s = seconds_since(t0);
  o.require(s < 1.0, "runtime " + fixed(s, 3) + " s");
  o.note(std::to_string(cases) + " grid cases vs executed layers, " + std::to_string(b.gates.size()) +
         " pruning deltas, in " + fixed(s, 3) + " s");
  return o;
}

Outcome criterion4() {
  Outcome o;
  const auto t0 = Clock::now();
  std::size_t checked = 0, nets = 0, max_params = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    NetworkShapeConfig s;
    s.num_cells = 2;
    s.nodes_per_cell = 3 + seed % 2;
    s.initial_channels = 2 + 2 * (seed % 2);
    s.input_height = s.input_width = 6;
    s.reduction_cells = seed % 3 == 0 ? std::vector<std::size_t>{1} : std::vector<std::size_t>{};
    s.num_classes = 3;
    const SigmaBarScope scope = seed % 4 < 2 ? SigmaBarScope::Edge : SigmaBarScope::Global;
    SuperNetwork net = SuperNetwork::build(s, seed, {true, scope});
    std::normal_distribution<double> n(0.0, 1.0);
    for (Parameter* p : net.weights())
      for (double& v : p->value.data()) v += 0.2 * n(rng);
    for (double& a : net.alpha().value.data()) a = n(rng);
    if (seed % 5 == 2) net.deactivate(1);

    std::size_t params = net.alpha().value.size();
    for (Parameter* p : net.weights()) params += p->value.size();
    max_params = std::max(max_params, params);
    o.require(params <= 5000, "net " + std::to_string(seed) + " has " + std::to_string(params) + " parameters");

    Batch batch;
    batch.images = testing::random_tensor({3, 3, 6, 6}, rng);
    batch.labels = {0, 2, 1};
    const double mu = static_cast<double>(seed % 2);
    const testing::GradCheckResult r = testing::check_supernet_gradients(net, batch, {1e-3, mu}, 0.05, seed);
    o.require(r.failed == 0, "net " + std::to_string(seed) + ": " + std::to_string(r.failed) + " mismatches, worst " +
                                 r.worst_entry);
    checked += r.checked;
    worst = std::max(worst, r.worst_relative);
    ++nets;
  }
  const double s = seconds_since(t0);
  o.require(s < 300.0, "runtime " + fixed(s) + " s");
  std::ostringstream w;
  w << worst;
  o.note(std::to_string(nets) + " nets, " + std::to_string(checked) + " entries, max " +
         std::to_string(max_params) + " parameters, worst relative error " + w.str() + ", in " + fixed(s) + " s");
  return o;
}

Outcome criterion5() {
  Outcome o;
  const auto t0 = Clock::now();
  NetworkShapeConfig desk;
  desk.reduction_cells = {1};
  desk.num_classes = 4;
  for (SigmaBarScope scope : {SigmaBarScope::Edge, SigmaBarScope::Global}) {
    for (const NetworkShapeConfig& shape : {desk, shape_of(14, 6)}) {
      const FlopsBreakdown b = flops_breakdown(shape);
      GateParams high;
      high.alpha.assign(b.gates.size(), 40.0);
      high.active.assign(b.gates.size(), true);
      double sum = 0.0;
      for (std::uint64_t c : b.gate_costs) sum += static_cast<double>(c);
      const double e = expected_flops(high, b, scope);
      const double rel = std::abs(e - std::log(2.0) * sum) / (std::log(2.0) * sum);
      o.require(rel <= 1e-6, "all +40: relative error " + std::to_string(rel));

      // one costly gate at -40; all other costs zeroed to isolate its term
      GateParams one = high;
      std::size_t g = 0;
      while (b.gate_costs[g] == 0) ++g;
      one.alpha[g] = -40.0;
      FlopsBreakdown only = b;
      std::fill(only.gate_costs.begin(), only.gate_costs.end(), 0);
      only.gate_costs[g] = b.gate_costs[g];
      const double part = expected_flops(one, only, scope);
      o.require(part < 1e-6 * static_cast<double>(b.gate_costs[g]),
                "-40 contribution " + std::to_string(part) + " of cost " + std::to_string(b.gate_costs[g]));
    }
  }
  const double s = seconds_since(t0);
  o.require(s < 1.0, "runtime " + fixed(s, 3) + " s");
  o.note("desk and 14-cell shapes, both sigma-bar scopes, in " + fixed(s, 3) + " s");
  return o;
}

struct SearchRun {
  std::string name;
  fs::path dir;
  CliRun cli;
};

Outcome criterion6(const std::vector<SearchRun>& runs) {
  Outcome o;
  for (const SearchRun& r : runs) {
    if (r.cli.code != 0) {
      o.require(false, r.name + " exited with " + std::to_string(r.cli.code));
      continue;
    }
    const ExperimentConfig cfg = load_config(r.dir / SearchArtifacts::kConfig);
    const SchedulerConfig sc = search_settings(cfg).scheduler;
    const TraceLog log = parse_trace_csv(read_text_file(r.dir / SearchArtifacts::kTrace));
    const auto rounds = parse_prune_rounds(read_text_file(r.dir / SearchArtifacts::kRounds));
    const auto t = check_trace_transitions(log, sc);
    const auto p = check_prune_predicate(rounds, sc);
    o.require(!t, r.name + " trace: " + t.value_or(""));
    o.require(!p, r.name + " prune rounds: " + p.value_or(""));
    std::size_t rises = 0, drops = 0, pruned = 0;
    for (const TraceRow& row : log) (row.n_pruned < sc.n0 ? rises : drops)++;
    for (const auto& round : rounds) pruned += round.n_pruned();
    o.require(rounds.size() == log.size(), r.name + " has one prune round per epoch");
    o.note(r.name + ": " + std::to_string(log.size()) + " transitions (" + std::to_string(rises) + " increase, " +
           std::to_string(drops) + " decrease), " + std::to_string(pruned) + " pruned gates");
  }
  return o;
}

Outcome criterion7(const std::vector<SearchRun>& runs) {
  Outcome o;
  for (const SearchRun& r : runs) {
    o.require(r.cli.code == 0, r.name + " exited with " + std::to_string(r.cli.code) + ": " + r.cli.err);
    if (r.cli.code != 0) continue;
    o.require(r.cli.seconds < 1800.0, r.name + " took " + fixed(r.cli.seconds) + " s");
    const ExperimentConfig cfg = load_config(r.dir / SearchArtifacts::kConfig);
    const TraceLog log = parse_trace_csv(read_text_file(r.dir / SearchArtifacts::kTrace));
    o.require(!log.empty() && log.back().discrete_flops <= cfg.scheduler.flops_min, r.name + " reached the target");
    ParetoManifest m;
    const ParetoSet set = read_pareto_set(r.dir, &m);
    o.require(set.size() >= 3, r.name + " has " + std::to_string(set.size()) + " records");
    for (std::size_t i = 1; i < set.size(); ++i)
      o.require(set.records[i].flops < set.records[i - 1].flops, r.name + " record " + std::to_string(i) + " FLOPs");
    for (const ParetoRecord& rec : set.records) {
      o.require(rec.flops == discrete_flops(rec.architecture), r.name + " manifest FLOPs match documents");
      const ValidityReport v = validate(rec.architecture);
      o.require(v.valid() || v.consistent(), r.name + " record validity");
    }
    if (!set.records.empty()) {
      o.require(set.records[0].train_accuracy > 0.85,
                r.name + " first-record accuracy " + fixed(set.records[0].train_accuracy, 4));
    }
    std::ostringstream f;
    for (std::size_t i = 0; i < set.size(); ++i) f << (i ? "/" : "") << set.records[i].flops;
    o.note(r.name + ": " + std::to_string(log.size()) + " epochs in " + fixed(r.cli.seconds, 0) + " s, " +
           std::to_string(set.size()) + " records (" + f.str() + "), first-record accuracy " +
           (set.records.empty() ? std::string("n/a") : fixed(set.records[0].train_accuracy, 4)));
  }
  return o;
}

Outcome criterion8(const SearchRun& a, const SearchRun& b) {
  Outcome o;
  o.require(a.cli.code == 0 && b.cli.code == 0, "both runs succeed");
  if (!o.pass) return o;
  std::vector<std::string> files{SearchArtifacts::kTrace, SearchArtifacts::kManifest};
  for (const auto& e : fs::directory_iterator(a.dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("pareto_", 0) == 0 && name != SearchArtifacts::kManifest) files.push_back(name);
  }
  std::size_t bytes = 0;
  for (const std::string& f : files) {
    o.require(fs::exists(b.dir / f), f + " missing from the second run");
    if (!fs::exists(b.dir / f)) continue;
    const std::string x = read_text_file(a.dir / f), y = read_text_file(b.dir / f);
    o.require(x == y, f + " differs");
    bytes += x.size();
  }
  o.note(std::to_string(files.size()) + " files, " + std::to_string(bytes) + " bytes identical");
  return o;
}

Outcome criterion9(const SearchRun& pareto_run) {
  Outcome o;
  const fs::path dir = g_work / "random_search";
  fs::remove_all(dir);
  const CliRun rs = cli("random-search --config '" + kDesk.string() + "' --out '" + dir.string() + "'");
  o.require(rs.code == 0, "random-search exited with " + std::to_string(rs.code) + ": " + rs.err);
  if (rs.code != 0) return o;
  const std::string summary = last_line_with(rs.out, "random-search status=ok");
  const std::uint64_t budget = std::stoull(field(summary, "budget"));
  const std::size_t samples = std::stoul(field(summary, "samples"));
  o.require(samples == 24, "sample count " + std::to_string(samples));
  std::size_t checked = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("random_", 0) != 0 || name == "random_best.json") continue;
    const ArchitectureEncoding arch = deserialize(read_text_file(e.path()));
    o.require(validate(arch).valid(), name + " is valid");
    o.require(discrete_flops(arch) <= budget, name + " within budget");
    ++checked;
  }
  o.require(checked == 24, std::to_string(checked) + " sample documents");

  const ArchitectureEncoding best = deserialize(read_text_file(dir / "random_best.json"));
  const std::uint64_t best_flops = discrete_flops(best);
  const CliRun rb = cli("retrain --config '" + kDesk.string() + "' --arch '" + (dir / "random_best.json").string() + "'");
  o.require(rb.code == 0, "retrain of the random best: " + rb.err);

  ParetoManifest m;
  const ParetoSet set = read_pareto_set(pareto_run.dir, &m);
  std::size_t nearest = 0;
  for (std::size_t i = 1; i < set.size(); ++i) {
    auto gap = [&](std::size_t k) {
      return set.records[k].flops > best_flops ? set.records[k].flops - best_flops : best_flops - set.records[k].flops;
    };
    if (gap(i) < gap(nearest)) nearest = i;
  }
  CliRun rp;
  if (!set.records.empty()) {
    rp = cli("retrain --config '" + kDesk.string() + "' --arch '" + (pareto_run.dir / m.records[nearest].file).string() +
             "'");
    o.require(rp.code == 0, "retrain of the Pareto record: " + rp.err);
  }
  const std::string lb = last_line_with(rb.out, "retrain status=ok"), lp = last_line_with(rp.out, "retrain status=ok");
  o.note("budget " + std::to_string(budget) + ", 24 samples valid; random best #" + field(summary, "best") + " " +
         std::to_string(best_flops) + " FLOPs retrain eval_acc=" + field(lb, "eval_acc") +
         " train_acc=" + field(lb, "train_acc") + "; nearest Pareto record (" + pareto_run.name + ", " +
         (set.records.empty() ? std::string("none") : m.records[nearest].file) + ") eval_acc=" +
         field(lp, "eval_acc") + " train_acc=" + field(lp, "train_acc"));
  return o;
}

template <typename E>
bool throws(const std::function<void()>& f) {
  try {
    f();
  } catch (const E&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

Outcome criterion10(const SearchRun& run) {
  Outcome o;
  // architecture documents
  std::size_t docs = 0;
  for (const NetworkShapeConfig& shape : {shape_of(2, 4), shape_of(14, 6)}) {
    NetworkShapeConfig s = shape;
    const ArchitectureEncoding full = ArchitectureEncoding::full(s);
    const std::uint64_t budget = (discrete_flops(full) + minimal_valid_flops(s)) / 2;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      ArchitectureEncoding a = random_sample_under_flops(s, budget, seed);
      const std::string doc = serialize(a);
      o.require(deserialize(doc) == a && serialize(deserialize(doc)) == doc, "architecture round-trip");
      ++docs;
    }
    ArchitectureEncoding dead = full;
    for (std::size_t from : {0, 1})
      for (OpKind op : kAllOps) dead.active.erase(GateId{0, from, 2, op});
    annotate_dead_nodes(dead);
    o.require(deserialize(serialize(dead)) == dead, "dead-node annotations round-trip");
  }

  // trace CSV: the search output and an adversarial log
  if (run.cli.code == 0) {
    const std::string csv = read_text_file(run.dir / SearchArtifacts::kTrace);
    o.require(trace_csv(parse_trace_csv(csv)) == csv, "search trace re-emits byte-identically");
  }
  TraceLog log;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t e = 1; e <= 50; ++e) {
    log.push_back({e, std::abs(u(rng)) * std::pow(10.0, -static_cast<double>(e % 17)), 1.0 / static_cast<double>(e),
                   e % 5, 100 - e, std::abs(u(rng)) * 1e9, 1000000 - e, std::abs(u(rng)), std::abs(u(rng)), e % 3});
  }
  log.front().lambda = 0.0;
  log.back().expected_flops = 5e-324;
  o.require(parse_trace_csv(trace_csv(log)) == log, "synthetic trace round-trip");
  o.require(parse_trace_csv(trace_csv({})).empty(), "header-only trace");

  // CIFAR-10 fixture with known bytes
  std::vector<unsigned char> bytes;
  for (std::size_t i = 0; i < 5; ++i) {
    bytes.push_back(static_cast<unsigned char>(9 - i));
    for (std::size_t k = 0; k < 3072; ++k) bytes.push_back(static_cast<unsigned char>((k * 13 + i * 101) % 256));
  }
  const DatasetSplit d = parse_cifar10_binary(bytes);
  o.require(d.size() == 5, "fixture record count");
  bool exact = true;
  for (std::size_t i = 0; i < d.size(); ++i) {
    exact = exact && d.labels[i] == static_cast<int>(9 - i);
    for (std::size_t k = 0; k < 3072; ++k) {
      const std::size_t c = k / 1024;
      const double byte = (static_cast<double>(d.image(i)[k]) * kCifarStd[c] + kCifarMean[c]) * 255.0;
      exact = exact && std::lround(byte) == static_cast<long>((k * 13 + i * 101) % 256);
    }
  }
  o.require(exact, "fixture bytes recovered exactly");

  // malformed inputs
  std::vector<unsigned char> short_file(bytes.begin(), bytes.end() - 1);
  o.require(throws<ParseError>([&] { parse_cifar10_binary(short_file); }), "truncated CIFAR file");
  std::vector<unsigned char> bad_label = bytes;
  bad_label[kCifarRecordBytes] = 200;
  o.require(throws<ParseError>([&] { parse_cifar10_binary(bad_label); }), "CIFAR label >= 10");
  const std::string good = serialize(ArchitectureEncoding::full(shape_of(2, 4)));
  std::string bad_op = good;
  bad_op.replace(bad_op.find("sep_conv_3x3"), 12, "avg_pool_3x3");
  o.require(throws<ParseError>([&] { deserialize(bad_op); }), "unknown operator");
  o.require(throws<ParseError>([&] { deserialize(good.substr(0, 40)); }), "truncated document");
  std::string excluded = good;
  excluded.replace(excluded.find("\"to\": 2"), 7, "\"to\": 1");
  o.require(throws<ValidationError>([&] { deserialize(excluded); }), "(0,1) edge rejected");
  o.require(throws<ParseError>([&] { parse_trace_csv("epoch\n"); }), "bad trace header");

  const fs::path bad = g_work / "malformed.json";
  write_text_file(bad, bad_op);
  o.require(cli("validate --arch '" + bad.string() + "'").code == 2, "CLI exit 2 on a malformed document");
  o.require(cli("search --config '" + (g_work / "missing.ini").string() + "'").code == 2, "CLI exit 2 on a missing config");
  o.require(cli("frobnicate").code == 2, "CLI exit 2 on an unknown command");
  o.note(std::to_string(docs) + " documents, 51-row trace, 5-record CIFAR fixture, 9 malformed inputs");
  return o;
}

bool report(int n, const std::function<Outcome()>& f) {
  Outcome o;
  try {
    o = f();
  } catch (const std::exception& e) {
    o.pass = false;
    o.notes.push_back(std::string("exception: ") + e.what());
  }
  std::string detail;
  for (const std::string& s : o.notes) detail += (detail.empty() ? "" : "; ") + s;
  std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << " (" << detail << ")" << std::endl;
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  g_work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_runs");
  fs::create_directories(g_work);
  bool ok = true;
  ok &= report(1, criterion1);
  ok &= report(2, criterion2);
  ok &= report(3, criterion3);
  ok &= report(4, criterion4);
  ok &= report(5, criterion5);

  std::vector<SearchRun> runs;
  for (const auto& [name, mu] : std::vector<std::pair<std::string, std::string>>{
           {"mu1", "1"}, {"mu1_repeat", "1"}, {"mu0", "0"}}) {
    SearchRun r{name, g_work / ("search_" + name), {}};
    fs::remove_all(r.dir);
    r.cli = cli("search --config '" + kDesk.string() + "' --mu " + mu + " --seed 1 --quiet --out '" + r.dir.string() + "'");
    std::cerr << name << ": exit " << r.cli.code << " after " << fixed(r.cli.seconds, 0) << " s" << std::endl;
    runs.push_back(std::move(r));
  }
  const std::vector<SearchRun> distinct{runs[0], runs[2]};
  ok &= report(6, [&] { return criterion6(distinct); });
  ok &= report(7, [&] { return criterion7(distinct); });
  ok &= report(8, [&] { return criterion8(runs[0], runs[1]); });
  ok &= report(9, [&] { return criterion9(runs[0]); });
  ok &= report(10, [&] { return criterion10(runs[0]); });
  return ok ? 0 : 1;
}
