#include <random>

#include "goldnas/error.hpp"
#include "goldnas/flops_model.hpp"
#include "goldnas/rng.hpp"
#include "goldnas/search_space.hpp"

namespace goldnas {

ArchitectureEncoding random_sample_under_flops(const NetworkShapeConfig& shape,
                                               std::uint64_t flops_budget, std::uint64_t seed,
                                               std::size_t max_restarts) {
  const FlopsBreakdown fb = flops_breakdown(shape);
  const std::uint64_t floor = minimal_valid_flops(shape);
  if (flops_budget < floor) {
    throw ValidationError("random_sample_under_flops: budget " + std::to_string(flops_budget) +
                          " is below the cheapest valid architecture (" + std::to_string(floor) + ")");
  }
  std::mt19937_64 rng(seed);
  const std::size_t n_gates = fb.gates.size();
  const std::size_t nodes = shape.nodes_per_cell;

  for (std::size_t attempt = 0; attempt < max_restarts; ++attempt) {
    std::vector<bool> active(n_gates, true);
    std::vector<std::size_t> incoming(shape.num_cells * nodes, 0);
    std::uint64_t flops = fb.fixed();
    for (std::size_t i = 0; i < n_gates; ++i) {
      ++incoming[fb.gates[i].cell * nodes + fb.gates[i].to];
      flops += fb.gate_costs[i];
    }
    std::vector<std::size_t> removable;
    while (flops > flops_budget) {
      removable.clear();
      for (std::size_t i = 0; i < n_gates; ++i) {
        if (active[i] && incoming[fb.gates[i].cell * nodes + fb.gates[i].to] > 1) removable.push_back(i);
      }
      if (removable.empty()) break;
      const std::size_t g = removable[uniform_below(rng, removable.size())];
      active[g] = false;
      --incoming[fb.gates[g].cell * nodes + fb.gates[g].to];
      flops -= fb.gate_costs[g];
    }
    if (flops <= flops_budget) {
      ArchitectureEncoding arch;
      arch.shape = shape;
      for (std::size_t i = 0; i < n_gates; ++i) {
        if (active[i]) arch.active.insert(fb.gates[i]);
      }
      return arch;
    }
  }
  throw RuntimeAbort("random_sample_under_flops: no valid architecture under budget " +
                     std::to_string(flops_budget) + " after " + std::to_string(max_restarts) +
                     " attempts");
}

}  // namespace goldnas
