#include "goldnas/flops_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "goldnas/error.hpp"

namespace goldnas {

std::uint64_t op_flops(const OpCostContext& ctx) {
  if (ctx.channels == 0 || ctx.height == 0 || ctx.width == 0) {
    throw ValidationError("op_flops: channels and output size must be positive");
  }
  if (ctx.stride != 1 && ctx.stride != 2) {
    throw ValidationError("op_flops: stride must be 1 or 2, got " + std::to_string(ctx.stride));
  }
  const std::uint64_t c = ctx.channels;
  const std::uint64_t hw = static_cast<std::uint64_t>(ctx.height) * ctx.width;
  switch (ctx.op) {
    case OpKind::SkipConnect:
      return ctx.stride == 1 ? 0 : c * c * hw;
    case OpKind::SepConv3x3:
      return 2 * (c * c * hw + 9 * c * hw);
  }
  return 0;
}

OpCostContext op_context(const NetworkLayout& layout, const GateId& gate) {
  const CellLayout& cell = layout.cells.at(gate.cell);
  return OpCostContext{gate.op, cell.channels, cell.out_height, cell.out_width, cell.stride(gate.from)};
}

std::uint64_t FlopsBreakdown::cost_of(const GateId& g) const { return gate_costs[index_of(g)]; }

std::size_t FlopsBreakdown::index_of(const GateId& g) const {
  auto it = std::lower_bound(gates.begin(), gates.end(), g);
  if (it == gates.end() || *it != g) throw ValidationError("gate outside the search space: " + to_string(g));
  return static_cast<std::size_t>(it - gates.begin());
}

std::uint64_t FlopsBreakdown::total(const std::set<GateId>& active) const {
  std::uint64_t t = fixed();
  for (const GateId& g : active) t += cost_of(g);
  return t;
}

FlopsBreakdown flops_breakdown(const NetworkShapeConfig& shape) {
  const NetworkLayout layout = network_layout(shape);
  FlopsBreakdown out;
  out.gates = enumerate_gates(shape);
  out.gate_costs.reserve(out.gates.size());
  for (const GateId& g : out.gates) out.gate_costs.push_back(op_flops(op_context(layout, g)));

  const std::uint64_t hw = static_cast<std::uint64_t>(shape.input_height) * shape.input_width;
  out.stem = static_cast<std::uint64_t>(shape.input_channels) * 9 * layout.stem_channels * hw;
  for (const CellLayout& cell : layout.cells) {
    const std::uint64_t in_hw = static_cast<std::uint64_t>(cell.in_height) * cell.in_width;
    // s0: 1x1 conv, or factorized reduce producing the same MACs at the reduced size.
    out.preprocess += static_cast<std::uint64_t>(cell.prev_prev_channels) * cell.channels * in_hw;
    out.preprocess += static_cast<std::uint64_t>(cell.prev_channels) * cell.channels * in_hw;
  }
  out.classifier = static_cast<std::uint64_t>(layout.classifier_in) * shape.num_classes;
  return out;
}

std::uint64_t discrete_flops(const ArchitectureEncoding& arch) {
  return flops_breakdown(arch.shape).total(arch.active);
}

std::uint64_t minimal_valid_flops(const NetworkShapeConfig& shape) {
  const FlopsBreakdown fb = flops_breakdown(shape);
  std::map<NodeRef, std::uint64_t> cheapest;
  for (std::size_t i = 0; i < fb.gates.size(); ++i) {
    const NodeRef n{fb.gates[i].cell, fb.gates[i].to};
    auto [it, inserted] = cheapest.emplace(n, fb.gate_costs[i]);
    if (!inserted) it->second = std::min(it->second, fb.gate_costs[i]);
  }
  std::uint64_t total = fb.fixed();
  for (const auto& [node, cost] : cheapest) total += cost;
  return total;
}

std::size_t GateParams::active_count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
}

FlopsRegularizer::FlopsRegularizer(const FlopsBreakdown& costs, SigmaBarScope scope) : scope_(scope) {
  costs_.reserve(costs.gate_costs.size());
  for (std::uint64_t c : costs.gate_costs) costs_.push_back(static_cast<double>(c));
  group_.resize(costs.gates.size(), 0);
  if (scope == SigmaBarScope::Global) {
    num_groups_ = costs.gates.empty() ? 0 : 1;
    return;
  }
  // Gates are canonical-sorted, so gates of one edge are adjacent.
  for (std::size_t i = 0; i < costs.gates.size(); ++i) {
    const GateId& g = costs.gates[i];
    if (i > 0) {
      const GateId& p = costs.gates[i - 1];
      const bool same_edge = p.cell == g.cell && p.from == g.from && p.to == g.to;
      group_[i] = same_edge ? group_[i - 1] : group_[i - 1] + 1;
    }
  }
  num_groups_ = costs.gates.empty() ? 0 : group_.back() + 1;
}

double FlopsRegularizer::kappa(const std::vector<bool>& active) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < costs_.size(); ++i) {
    if (active[i]) {
      sum += costs_[i];
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double FlopsRegularizer::evaluate(std::span<const double> alpha, const std::vector<bool>& active,
                                  std::span<const double> weights,
                                  std::vector<double>* grad_alpha) const {
  const std::size_t g = costs_.size();
  if (alpha.size() != g || active.size() != g) {
    throw ShapeError("flops regularizer: expected " + std::to_string(g) + " gates, got alpha of " +
                     std::to_string(alpha.size()) + " and mask of " + std::to_string(active.size()));
  }
  std::vector<double> s(g, 0.0);
  std::vector<double> group_sum(num_groups_, 0.0);
  std::vector<std::size_t> group_n(num_groups_, 0);
  for (std::size_t i = 0; i < g; ++i) {
    if (!active[i]) continue;
    s[i] = sigmoid_value(alpha[i]);
    group_sum[group_[i]] += s[i];
    ++group_n[group_[i]];
  }
  std::vector<double> mean(num_groups_, 0.0);
  for (std::size_t k = 0; k < num_groups_; ++k) {
    if (group_n[k]) mean[k] = group_sum[k] / static_cast<double>(group_n[k]);
  }

  double value = 0.0;
  // shared[k] = (1/n_k) * sum_{o in k} w_o (1/(m+s_o) - 1/m): the derivative
  // of the group's terms through the mean.
  std::vector<double> shared(num_groups_, 0.0);
  for (std::size_t i = 0; i < g; ++i) {
    if (!active[i]) continue;
    const double m = mean[group_[i]];
    value += weights[i] * std::log1p(s[i] / m);
    shared[group_[i]] += weights[i] * (1.0 / (m + s[i]) - 1.0 / m);
  }
  if (grad_alpha) {
    grad_alpha->assign(g, 0.0);
    for (std::size_t i = 0; i < g; ++i) {
      if (!active[i]) continue;
      const std::size_t k = group_[i];
      const double m = mean[k];
      const double ds = weights[i] / (m + s[i]) + shared[k] / static_cast<double>(group_n[k]);
      (*grad_alpha)[i] = ds * s[i] * (1.0 - s[i]);
    }
  }
  return value;
}

double FlopsRegularizer::expected(const GateParams& gates, std::vector<double>* grad_alpha) const {
  return evaluate(gates.alpha, gates.active, costs_, grad_alpha);
}

double FlopsRegularizer::uniform(const GateParams& gates, std::vector<double>* grad_alpha) const {
  std::vector<double> w(costs_.size(), kappa(gates.active));
  return evaluate(gates.alpha, gates.active, w, grad_alpha);
}

Var FlopsRegularizer::node(Var alpha, const std::vector<bool>& active, std::vector<double> weights) const {
  const Tensor& a = alpha.value();
  std::vector<double> grad;
  const double value = evaluate(a.data(), active, weights, &grad);
  const std::size_t ai = alpha.id();
  return alpha.tape().record(Tensor(Shape{1}, value), {ai},
                             [ai, grad = std::move(grad)](Tape& tape, std::size_t self) {
                               const double gy = tape.upstream(self)[0];
                               Tensor& ga = tape.grad_buffer(ai);
                               for (std::size_t i = 0; i < grad.size(); ++i) ga[i] += gy * grad[i];
                             });
}

Var FlopsRegularizer::expected(Var alpha, const std::vector<bool>& active) const {
  return node(alpha, active, costs_);
}

Var FlopsRegularizer::uniform(Var alpha, const std::vector<bool>& active) const {
  return node(alpha, active, std::vector<double>(costs_.size(), kappa(active)));
}

double expected_flops(const GateParams& gates, const FlopsBreakdown& costs, SigmaBarScope scope) {
  return FlopsRegularizer(costs, scope).expected(gates);
}

double uniform_flops(const GateParams& gates, const FlopsBreakdown& costs, SigmaBarScope scope) {
  return FlopsRegularizer(costs, scope).uniform(gates);
}

}  // namespace goldnas
