#include <doctest.h>

#include <algorithm>
#include <set>

#include "goldnas/error.hpp"
#include "goldnas/flops_model.hpp"
#include "goldnas/search_space.hpp"

using namespace goldnas;

namespace {

NetworkShapeConfig shape_of(std::size_t cells, std::size_t nodes) {
  NetworkShapeConfig s;
  s.num_cells = cells;
  s.nodes_per_cell = nodes;
  s.reduction_cells = NetworkShapeConfig::default_reductions(cells);
  return s;
}

NetworkShapeConfig desk_shape() {
  NetworkShapeConfig s;
  s.num_classes = 4;
  s.reduction_cells = {1};
  return s;
}

// Counts gate subsets in which every inner node of every cell has an
// incoming gate, by visiting all 2^G subsets.
std::uint64_t brute_force_count(std::size_t cells, std::size_t nodes) {
  struct G {
    std::size_t cell, to;
  };
  std::vector<G> gates;
  for (std::size_t c = 0; c < cells; ++c)
    for (std::size_t j = 2; j < nodes; ++j)
      for (std::size_t i = 0; i < j; ++i)
        for (int op = 0; op < 2; ++op) gates.push_back({c, j});
  std::uint64_t count = 0;
  const std::uint64_t subsets = std::uint64_t{1} << gates.size();
  std::vector<int> fed(cells * nodes);
  for (std::uint64_t m = 0; m < subsets; ++m) {
    std::fill(fed.begin(), fed.end(), 0);
    for (std::size_t g = 0; g < gates.size(); ++g)
      if (m >> g & 1) fed[gates[g].cell * nodes + gates[g].to] = 1;
    bool ok = true;
    for (std::size_t c = 0; c < cells && ok; ++c)
      for (std::size_t j = 2; j < nodes && ok; ++j) ok = fed[c * nodes + j];
    count += ok;
  }
  return count;
}

}  // namespace

TEST_CASE("gate universe sizes") {
  CHECK(enumerate_gates(shape_of(1, 6)).size() == 28);
  CHECK(enumerate_gates(shape_of(1, 3)).size() == 4);
  CHECK(enumerate_gates(shape_of(14, 6)).size() == 392);
  const auto gates = enumerate_gates(shape_of(2, 4));
  CHECK(std::is_sorted(gates.begin(), gates.end()));
  for (const GateId& g : gates) CHECK_FALSE((g.from == 0 && g.to == 1));
}

TEST_CASE("space cardinality") {
  const SpaceCardinality n6 = count_space(shape_of(1, 6));
  CHECK(n6.per_cell == BigInt(15) * 63 * 255 * 1023);
  CHECK(n6.per_cell.str() == "246517425");
  CHECK(scientific(n6.per_cell) == "2.5e+8");
  CHECK(scientific(count_space(shape_of(14, 6)).exact) == "3.1e+117");
  CHECK(scientific(count_space(shape_of(20, 6)).exact) == "6.9e+167");
  CHECK(count_space(shape_of(1, 3)).exact == 15);
  CHECK(count_space(shape_of(20, 6)).exact == pow(BigInt(246517425), 20));
}

TEST_CASE("cardinality equals exhaustive enumeration for N <= 4, L <= 2") {
  for (std::size_t cells = 1; cells <= 2; ++cells) {
    for (std::size_t nodes = 3; nodes <= 4; ++nodes) {
      INFO("L=", cells, " N=", nodes);
      CHECK(count_space(shape_of(cells, nodes)).exact == brute_force_count(cells, nodes));
    }
  }
}

TEST_CASE("validity and dead-node reporting") {
  ArchitectureEncoding full = ArchitectureEncoding::full(desk_shape());
  CHECK(validate(full).valid());
  CHECK(validate(full).consistent());

  ArchitectureEncoding arch = full;
  for (std::size_t from : {0, 1})
    for (OpKind op : kAllOps) arch.active.erase(GateId{0, from, 2, op});
  const ValidityReport r = validate(arch);
  CHECK_FALSE(r.valid());
  REQUIRE(r.dead_nodes.size() == 1);
  CHECK(r.dead_nodes[0] == NodeRef{0, 2});
  CHECK(r.unannotated_dead.size() == 1);
  annotate_dead_nodes(arch);
  CHECK(validate(arch).consistent());

  ArchitectureEncoding outside = full;
  outside.active.insert(GateId{5, 0, 2, OpKind::SkipConnect});
  CHECK_THROWS_AS(validate(outside), ValidationError);
}

TEST_CASE("architecture documents round-trip") {
  ArchitectureEncoding arch = ArchitectureEncoding::full(desk_shape());
  arch.active.erase(GateId{0, 0, 2, OpKind::SepConv3x3});
  arch.active.erase(GateId{1, 1, 3, OpKind::SkipConnect});
  CHECK(deserialize(serialize(arch)) == arch);
  CHECK(serialize(deserialize(serialize(arch))) == serialize(arch));

  for (std::size_t from : {0, 1, 2})
    for (OpKind op : kAllOps) arch.active.erase(GateId{1, from, 3, op});
  annotate_dead_nodes(arch);
  CHECK(deserialize(serialize(arch)) == arch);
  CHECK(serialize(arch).find("dead_nodes") != std::string::npos);
}

TEST_CASE("malformed architecture documents") {
  const std::string good = serialize(ArchitectureEncoding::full(desk_shape()));
  std::string unknown_op = good;
  unknown_op.replace(unknown_op.find("skip_connect"), 12, "max_pool_3x3");
  CHECK_THROWS_AS(deserialize(unknown_op), ParseError);

  std::string excluded = good;
  const auto pos = excluded.find("\"to\": 2");
  excluded.replace(pos, 7, "\"to\": 1");
  CHECK_THROWS_AS(deserialize(excluded), ValidationError);

  CHECK_THROWS_AS(deserialize(good.substr(0, good.size() / 2)), ParseError);
  CHECK_THROWS_AS(deserialize("{\"format_version\": 1}"), ParseError);
  try {
    deserialize("{\"format_version\": 1, \"shape\": 3}");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("$.shape") != std::string::npos);
  }
}

TEST_CASE("DOT export") {
  NetworkShapeConfig one = shape_of(1, 3);
  ArchitectureEncoding single{one, {GateId{0, 1, 2, OpKind::SepConv3x3}}, {}};
  const std::string dot = export_dot(single);
  auto count = [](const std::string& s, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
    return n;
  };
  CHECK(count(dot, "digraph") == 1);
  CHECK(count(dot, "->") == 2);  // one operator edge, one concatenation arc
  CHECK(count(dot, "color=blue") == 1);
  CHECK(count(dot, "{") == count(dot, "}"));

  const ArchitectureEncoding full = ArchitectureEncoding::full(desk_shape());
  const std::string fdot = export_dot(full);
  CHECK(count(fdot, "digraph") == 2);
  CHECK(count(fdot, "->") == full.active.size() + 2 * 2);
  CHECK(count(fdot, "style=dashed") == 4);
  CHECK(count(fdot, "color=red") == full.active.size() / 2);

  CHECK_THROWS_AS(export_dot(ArchitectureEncoding{one, {}, {}}), ValidationError);
}

TEST_CASE("random sampling under a FLOPs budget") {
  const NetworkShapeConfig shape = desk_shape();
  const ArchitectureEncoding full = ArchitectureEncoding::full(shape);
  const std::uint64_t full_flops = discrete_flops(full);
  CHECK(random_sample_under_flops(shape, full_flops, 7) == full);
  CHECK_THROWS_AS(random_sample_under_flops(shape, minimal_valid_flops(shape) - 1, 7), ValidationError);

  for (std::uint64_t budget : {std::uint64_t{400000}, minimal_valid_flops(shape), full_flops - 1}) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const ArchitectureEncoding a = random_sample_under_flops(shape, budget, seed);
      CHECK(validate(a).valid());
      CHECK(discrete_flops(a) <= budget);
    }
  }
  CHECK(random_sample_under_flops(shape, 400000, 3) == random_sample_under_flops(shape, 400000, 3));
}

TEST_CASE("shape validation") {
  NetworkShapeConfig s = desk_shape();
  s.nodes_per_cell = 2;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = desk_shape();
  s.reduction_cells = {2};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  CHECK(NetworkShapeConfig::default_reductions(14) == std::vector<std::size_t>{4, 9});
}
