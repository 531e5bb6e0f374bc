#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "goldnas/flops_model.hpp"
#include "goldnas/io.hpp"
#include "goldnas/search_space.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "goldnas_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run run(const std::string& args) {
  const fs::path out = work_dir() / "stdout.txt", err = work_dir() / "stderr.txt";
  const std::string cmd = std::string("'") + GOLDNAS_CLI_PATH + "' " + args + " >'" + out.string() + "' 2>'" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = goldnas::read_text_file(out);
  r.err = goldnas::read_text_file(err);
  return r;
}

fs::path write_file(const std::string& name, const std::string& text) {
  const fs::path p = work_dir() / name;
  std::ofstream(p) << text;
  return p;
}

// Small enough that a full search takes a few seconds.
constexpr const char* kTinyConfig = R"([shape]
num_cells = 1
nodes_per_cell = 4
initial_channels = 4
input_height = 8
input_width = 8
num_classes = 2
reduction_cells =

[optimizer]
batch_size = 16

[scheduler]
n0 = 1
lambda0 = 1e-6
t0 = 2
flops_min = 30000
mu = 1
max_epochs = 60

[data]
samples_per_class = 16
eval_samples_per_class = 8

[retrain]
epochs = 1
batch_size = 16

[random_search]
samples = 3
budget = 35000
proxy_epochs = 1
validation_examples = 8

[run]
seed = 3
)";

goldnas::NetworkShapeConfig desk_shape() {
  goldnas::NetworkShapeConfig s;
  s.num_classes = 4;
  s.reduction_cells = {1};
  return s;
}

}  // namespace

TEST_CASE("count-space prints exact and approximate sizes") {
  const Run r = run("count-space --cells 14 --nodes 6");
  CHECK(r.code == 0);
  CHECK(r.out.find("per_cell=246517425") != std::string::npos);
  CHECK(r.out.find("approx=3.1e+117") != std::string::npos);
  CHECK(run("count-space --cells 20 --nodes 6").out.find("approx=6.9e+167") != std::string::npos);
  CHECK(run("count-space --cells 1 --nodes 2").code == 2);
}

TEST_CASE("usage errors exit with status 2") {
  CHECK(run("").code == 2);
  CHECK(run("bogus").code == 2);
  CHECK(run("search").code == 2);
  CHECK(run("count-space --cells 2 --nodes 4 --frobnicate").code == 2);
  CHECK(run("search --config /nonexistent/x.ini").code == 2);
  const fs::path bad_cfg = write_file("bad.ini", "[scheduler]\nc0 = 0.5\n");
  CHECK(run("search --config '" + bad_cfg.string() + "'").code == 2);
}

TEST_CASE("architecture commands") {
  using namespace goldnas;
  ArchitectureEncoding full = ArchitectureEncoding::full(desk_shape());
  const fs::path full_path = write_file("full.json", serialize(full));

  Run r = run("flops --arch '" + full_path.string() + "'");
  CHECK(r.code == 0);
  CHECK(r.out.find("total=" + std::to_string(discrete_flops(full))) != std::string::npos);
  CHECK(r.out.find("total=856192") != std::string::npos);

  r = run("validate --arch '" + full_path.string() + "'");
  CHECK(r.code == 0);
  CHECK(r.out.find("validate status=ok") != std::string::npos);

  ArchitectureEncoding dead = full;
  for (std::size_t from : {0, 1})
    for (OpKind op : kAllOps) dead.active.erase(GateId{0, from, 2, op});
  annotate_dead_nodes(dead);
  const fs::path dead_path = write_file("dead.json", serialize(dead));
  r = run("validate --arch '" + dead_path.string() + "'");
  CHECK(r.code == 0);
  CHECK(r.out.find("status=warning") != std::string::npos);
  CHECK(r.out.find("dead_nodes=c0n2") != std::string::npos);

  ArchitectureEncoding empty{desk_shape(), {}, {}};
  const fs::path empty_path = write_file("empty.json", serialize(empty));
  r = run("flops --arch '" + empty_path.string() + "'");
  CHECK(r.code == 0);
  const FlopsBreakdown b = flops_breakdown(desk_shape());
  CHECK(r.out.find("total=" + std::to_string(b.stem + b.preprocess + b.classifier)) != std::string::npos);

  const fs::path dot = work_dir() / "full.dot";
  r = run("export-dot --arch '" + full_path.string() + "' --out '" + dot.string() + "'");
  CHECK(r.code == 0);
  CHECK(read_text_file(dot).find("digraph cell_1") != std::string::npos);
  CHECK(run("export-dot --arch '" + empty_path.string() + "' --out '" + dot.string() + "'").code == 2);

  const fs::path broken = write_file("broken.json", "{\"format_version\": 1, \"shape\": ");
  r = run("validate --arch '" + broken.string() + "'");
  CHECK(r.code == 2);
  CHECK(r.err.find("byte") != std::string::npos);
  std::string unknown = serialize(full);
  unknown.replace(unknown.find("sep_conv_3x3"), 12, "dil_conv_5x5");
  CHECK(run("flops --arch '" + write_file("unknown.json", unknown).string() + "'").code == 2);
}

TEST_CASE("search, replay, resume, retrain and random search on a tiny profile") {
  const fs::path cfg = write_file("tiny.ini", kTinyConfig);
  const std::string c = " --config '" + cfg.string() + "'";
  const fs::path full_dir = work_dir() / "full";
  Run r = run("search" + c + " --quiet --out '" + full_dir.string() + "'");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("search status=ok mu=1 seed=3") != std::string::npos);
  for (const char* f : {"trace.csv", "pareto_manifest.json", "prune_rounds.json", "checkpoint.bin", "config.ini"})
    CHECK(fs::exists(full_dir / f));
  const std::string trace = goldnas::read_text_file(full_dir / "trace.csv");
  const auto log = goldnas::parse_trace_csv(trace);
  REQUIRE(log.size() > 2);

  r = run("trace-replay --dir '" + full_dir.string() + "' --out '" + (work_dir() / "replay.csv").string() + "'");
  CHECK(r.code == 0);
  CHECK(goldnas::read_text_file(work_dir() / "replay.csv") == trace);

  // stop early through the epoch guard, then continue from the checkpoint
  const fs::path part = work_dir() / "part";
  r = run("search" + c + " --quiet --max-epochs 2 --out '" + part.string() + "'");
  CHECK(r.code == 1);
  CHECK(r.err.find("checkpoint:") != std::string::npos);
  const fs::path resumed = work_dir() / "resumed";
  r = run("search" + c + " --quiet --resume '" + (part / "checkpoint.bin").string() + "' --out '" +
          resumed.string() + "'");
  REQUIRE(r.code == 0);
  CHECK(goldnas::read_text_file(resumed / "trace.csv") == trace);
  CHECK(goldnas::read_text_file(resumed / "pareto_manifest.json") ==
        goldnas::read_text_file(full_dir / "pareto_manifest.json"));
  CHECK(run("search" + c + " --mu 0 --resume '" + (part / "checkpoint.bin").string() + "' --out '" +
            (work_dir() / "mismatch").string() + "'")
            .code == 2);

  const goldnas::ParetoManifest m =
      goldnas::parse_manifest(goldnas::read_text_file(full_dir / "pareto_manifest.json"));
  const fs::path member = full_dir / m.records.back().file;
  r = run("retrain" + c + " --arch '" + member.string() + "'");
  CHECK(r.code == 0);
  CHECK(r.out.find("flops=" + std::to_string(m.records.back().flops)) != std::string::npos);

  const fs::path rs_dir = work_dir() / "random";
  r = run("random-search" + c + " --out '" + rs_dir.string() + "'");
  CHECK(r.code == 0);
  CHECK(r.out.find("random-search status=ok samples=3 budget=35000") != std::string::npos);
  CHECK(fs::exists(rs_dir / "random_best.json"));
  CHECK(run("random-search" + c + " --budget 10 --out '" + rs_dir.string() + "'").code == 2);
}
