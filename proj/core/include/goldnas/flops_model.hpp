#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "goldnas/search_space.hpp"
#include "goldnas/tape.hpp"

namespace goldnas {

/// Geometry of one operator instance. H and W are the output size.
struct OpCostContext {
  OpKind op = OpKind::SkipConnect;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t stride = 1;
};

/// Multiply-accumulate count of one operator:
///   skip-connect, stride 1:  0
///   skip-connect, stride 2:  C^2 H W   (factorized reduce)
///   sep-conv-3x3:            2 (C^2 H W + 9 C H W)
std::uint64_t op_flops(const OpCostContext& ctx);

OpCostContext op_context(const NetworkLayout& layout, const GateId& gate);

/// Exact per-gate and fixed costs of a shape. `gate_costs[i]` belongs to
/// `gates[i]` (canonical order). Fixed costs are the stem convolution, the
/// per-cell input preprocessing convolutions and the classifier.
struct FlopsBreakdown {
  std::vector<GateId> gates;
  std::vector<std::uint64_t> gate_costs;
  std::uint64_t stem = 0;
  std::uint64_t preprocess = 0;
  std::uint64_t classifier = 0;

  std::uint64_t fixed() const { return stem + preprocess + classifier; }
  std::uint64_t cost_of(const GateId& g) const;
  /// fixed() + sum of costs over `active`.
  std::uint64_t total(const std::set<GateId>& active) const;
  std::size_t index_of(const GateId& g) const;
};

FlopsBreakdown flops_breakdown(const NetworkShapeConfig& shape);

/// Exact FLOPs of a discrete architecture. Dead nodes cost nothing extra and
/// leave the channel bookkeeping unchanged. Throws ValidationError for gates
/// outside the shape.
std::uint64_t discrete_flops(const ArchitectureEncoding& arch);

/// Cheapest FLOPs over architectures without dead nodes.
std::uint64_t minimal_valid_flops(const NetworkShapeConfig& shape);

/// Architecture parameters indexed by canonical gate index.
struct GateParams {
  std::vector<double> alpha;
  std::vector<bool> active;

  std::size_t size() const { return alpha.size(); }
  std::size_t active_count() const;
  double weight(std::size_t i) const { return sigmoid_value(alpha[i]); }
};

/// Which gates share the mean sigma in the expected-FLOPs denominator.
enum class SigmaBarScope { Edge, Global };

/// Differentiable FLOPs surrogates
///   expected(a) = sum_o ln(1 + s(a_o) / mean_s) * FLOPs(o)
///   uniform(a)  = same with every FLOPs(o) replaced by kappa,
/// where kappa is the mean cost of the active gates and mean_s is the mean
/// sigma over the active gates of o's edge (or of the whole network with
/// SigmaBarScope::Global). Inactive gates contribute nothing and receive zero
/// gradient; the mean is differentiated through.
class FlopsRegularizer {
 public:
  FlopsRegularizer(const FlopsBreakdown& costs, SigmaBarScope scope = SigmaBarScope::Edge);

  double expected(const GateParams& gates, std::vector<double>* grad_alpha = nullptr) const;
  double uniform(const GateParams& gates, std::vector<double>* grad_alpha = nullptr) const;
  /// Mean cost of active gates; 0 with no active gate.
  double kappa(const std::vector<bool>& active) const;

  /// Tape nodes over an alpha leaf of shape {G}. The active mask is captured
  /// at call time.
  Var expected(Var alpha, const std::vector<bool>& active) const;
  Var uniform(Var alpha, const std::vector<bool>& active) const;

  SigmaBarScope scope() const { return scope_; }
  std::span<const double> costs() const { return costs_; }

 private:
  double evaluate(std::span<const double> alpha, const std::vector<bool>& active,
                  std::span<const double> weights, std::vector<double>* grad_alpha) const;
  Var node(Var alpha, const std::vector<bool>& active, std::vector<double> weights) const;

  std::vector<double> costs_;
  std::vector<std::size_t> group_;  // edge id (or 0 for global) per gate
  std::size_t num_groups_ = 0;
  SigmaBarScope scope_;
};

double expected_flops(const GateParams& gates, const FlopsBreakdown& costs,
                      SigmaBarScope scope = SigmaBarScope::Edge);
double uniform_flops(const GateParams& gates, const FlopsBreakdown& costs,
                     SigmaBarScope scope = SigmaBarScope::Edge);

}  // namespace goldnas
