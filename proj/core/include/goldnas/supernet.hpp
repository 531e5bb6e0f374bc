#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "goldnas/flops_model.hpp"
#include "goldnas/layers.hpp"
#include "goldnas/optimizer.hpp"
#include "goldnas/search_space.hpp"

namespace goldnas {

struct Batch {
  Tensor images;            // [N, C, H, W]
  std::vector<int> labels;  // N entries
  std::size_t size() const { return labels.size(); }
};

struct OptimizerConfig {
  double eta_omega = 0.01;
  double eta_alpha = 1.0;
  double momentum_omega = 0.9;
  double momentum_alpha = 0.9;
  double weight_decay_omega = 3e-4;
  std::size_t batch_size = 96;

  void validate() const;
};

/// total = cross_entropy + lambda * (uniform_flops + mu * expected_flops)
struct LossSpec {
  double lambda = 0.0;
  double mu = 0.0;
};

struct SupernetOptions {
  bool bn_affine = true;  // batch-norm affine parameters are part of omega
  SigmaBarScope sigma_scope = SigmaBarScope::Edge;
};

/// Sigmoid-gated super-network over the full gate universe of a shape.
/// Every gate g on edge (i, j) contributes sigmoid(alpha_g) * op_g(x_i) to
/// node j; inner nodes without an active incoming gate are all-zero maps.
/// Cell 0 receives the stem output as both inputs. Each cell output is the
/// channel concatenation of its inner nodes.
class SuperNetwork {
 public:
  static SuperNetwork build(const NetworkShapeConfig& shape, std::uint64_t seed,
                            SupernetOptions options = {});

  SuperNetwork(SuperNetwork&&) noexcept;
  SuperNetwork& operator=(SuperNetwork&&) noexcept;
  ~SuperNetwork();

  const NetworkShapeConfig& shape() const { return shape_; }
  const SupernetOptions& options() const { return options_; }
  const NetworkLayout& layout() const { return layout_; }
  const std::vector<GateId>& gates() const { return flops_.gates; }
  std::size_t gate_index(const GateId& g) const { return flops_.index_of(g); }

  Parameter& alpha() { return alpha_; }
  const Parameter& alpha() const { return alpha_; }
  const std::vector<bool>& active() const { return active_; }
  GateParams gate_params() const;

  const FlopsBreakdown& flops() const { return flops_; }
  const FlopsRegularizer& regularizer() const { return *regularizer_; }

  /// Network weights (omega) in a fixed order.
  std::vector<Parameter*> weights();
  /// Batch-norm running statistics in a fixed order.
  std::vector<Tensor*> buffers();
  /// Parameters belonging to one gate's operator.
  std::vector<Parameter*> gate_weights(std::size_t gate);

  Sgd& omega_optimizer() { return omega_opt_; }
  Sgd& alpha_optimizer() { return alpha_opt_; }

  struct Output {
    Var logits;
    Var alpha;  // leaf bound to alpha()
  };
  Output forward(Tape& tape, const Tensor& images, const ForwardOptions& opt);

  /// Un-gated operator output of one gate for a given source tensor; used to
  /// inspect mixed-edge semantics.
  Var gate_operator(Tape& tape, std::size_t gate, Var source, const ForwardOptions& opt);

  /// Marks a gate inactive, freezes its operator weights and clears its alpha
  /// momentum so nothing about it changes afterwards.
  void deactivate(std::size_t gate);

  /// Restores the active mask (checkpoint loading); refreezes pruned gates.
  void set_active(const std::vector<bool>& active);

 private:
  SuperNetwork();
  struct Cell;

  NetworkShapeConfig shape_;
  SupernetOptions options_;
  NetworkLayout layout_;
  FlopsBreakdown flops_;
  std::unique_ptr<FlopsRegularizer> regularizer_;
  Parameter alpha_;
  std::vector<bool> active_;
  std::unique_ptr<Stem> stem_;
  std::vector<std::unique_ptr<Cell>> cells_;
  std::unique_ptr<Classifier> classifier_;
  Sgd omega_opt_;
  Sgd alpha_opt_;
};

struct StepReport {
  double loss = 0.0;           // total objective
  double cross_entropy = 0.0;
  double regularizer = 0.0;    // uniform + mu * expected (before lambda)
  std::size_t correct = 0;
  std::size_t count = 0;
  double grad_norm_omega = 0.0;
  double grad_norm_alpha = 0.0;
};

/// Forward + backward without updating anything. Zeroes and then fills the
/// gradients of alpha and every weight.
StepReport compute_gradients(SuperNetwork& net, const Batch& batch, const LossSpec& loss,
                             const ForwardOptions& opt = {});

/// Loss on a batch without gradients or running-stat updates.
StepReport evaluate_loss(SuperNetwork& net, const Batch& batch, const LossSpec& loss,
                         const ForwardOptions& opt = ForwardOptions::probe());

/// One-level update: alpha and omega move together on gradients from the same
/// minibatch. Throws RuntimeAbort on a non-finite loss.
StepReport one_level_step(SuperNetwork& net, const Batch& batch, const OptimizerConfig& opt,
                          const LossSpec& loss);

/// First-order alternating update: omega on `d2`, then alpha on `d1` with the
/// updated omega.
StepReport bilevel_step(SuperNetwork& net, const Batch& d1, const Batch& d2,
                        const OptimizerConfig& opt, const LossSpec& loss = {});

struct DiscretizationReport {
  std::vector<std::pair<GateId, double>> pruned;  // gate and its sigma when removed
  bool measured = false;
  double probe_loss_before = 0.0;
  double probe_loss_after = 0.0;
  double loss_change() const { return probe_loss_after - probe_loss_before; }
};

/// Hard-removes gates. With a probe batch, records the cross-entropy before
/// and after removal. Throws ValidationError if a gate is already inactive.
DiscretizationReport discretize(SuperNetwork& net, const std::vector<GateId>& gates_to_prune,
                                const Batch* probe = nullptr);

/// Currently active gates with dead nodes annotated.
ArchitectureEncoding export_architecture(const SuperNetwork& net);

}  // namespace goldnas
