#include "goldnas/supernet.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "goldnas/error.hpp"

namespace goldnas {

struct SuperNetwork::Cell {
  std::unique_ptr<Layer> pre0;
  std::unique_ptr<Layer> pre1;
  // Operator of every gate in this cell, keyed by global gate index.
  std::vector<std::pair<std::size_t, std::unique_ptr<Layer>>> ops;
  // node_gates[j] = global gate indices feeding node j, canonical order.
  std::vector<std::vector<std::size_t>> node_gates;
  // position in `ops` of each gate of node_gates
  std::vector<std::vector<std::size_t>> node_slots;
};

void OptimizerConfig::validate() const {
  if (!(eta_omega >= 0) || !(eta_alpha >= 0)) {
    throw ValidationError("optimizer: eta_omega and eta_alpha must be non-negative");
  }
  if (momentum_omega < 0 || momentum_omega >= 1 || momentum_alpha < 0 || momentum_alpha >= 1) {
    throw ValidationError("optimizer: momentum must lie in [0, 1)");
  }
  if (weight_decay_omega < 0) throw ValidationError("optimizer: weight_decay_omega must be >= 0");
  if (batch_size == 0) throw ValidationError("optimizer: batch_size must be positive");
}

SuperNetwork::SuperNetwork() = default;
SuperNetwork::SuperNetwork(SuperNetwork&&) noexcept = default;
SuperNetwork& SuperNetwork::operator=(SuperNetwork&&) noexcept = default;
SuperNetwork::~SuperNetwork() = default;

SuperNetwork SuperNetwork::build(const NetworkShapeConfig& shape, std::uint64_t seed,
                                 SupernetOptions options) {
  SuperNetwork net;
  net.shape_ = shape;
  net.options_ = options;
  net.layout_ = network_layout(shape);
  net.flops_ = flops_breakdown(shape);
  net.regularizer_ = std::make_unique<FlopsRegularizer>(net.flops_, options.sigma_scope);
  const std::size_t g = net.flops_.gates.size();
  net.alpha_ = Parameter("alpha", Tensor(Shape{g}, 0.0));
  net.active_.assign(g, true);

  std::mt19937_64 rng(seed);
  const bool affine = options.bn_affine;
  net.stem_ = std::make_unique<Stem>(shape.input_channels, net.layout_.stem_channels, affine, rng);
  std::size_t gate = 0;
  for (std::size_t k = 0; k < shape.num_cells; ++k) {
    const CellLayout& cl = net.layout_.cells[k];
    auto cell = std::make_unique<Cell>();
    if (cl.prev_reduction) {
      cell->pre0 = std::make_unique<FactorizedReduce>(cl.prev_prev_channels, cl.channels, affine, rng);
    } else {
      cell->pre0 = std::make_unique<ReluConvBn>(cl.prev_prev_channels, cl.channels, 1, 1, 0, affine, rng);
    }
    cell->pre1 = std::make_unique<ReluConvBn>(cl.prev_channels, cl.channels, 1, 1, 0, affine, rng);
    cell->node_gates.resize(shape.nodes_per_cell);
    cell->node_slots.resize(shape.nodes_per_cell);
    for (; gate < g && net.flops_.gates[gate].cell == k; ++gate) {
      const GateId& id = net.flops_.gates[gate];
      const std::size_t stride = cl.stride(id.from);
      std::unique_ptr<Layer> op;
      if (id.op == OpKind::SepConv3x3) {
        op = std::make_unique<SepConv3x3>(cl.channels, stride, affine, rng);
      } else if (stride == 2) {
        op = std::make_unique<FactorizedReduce>(cl.channels, cl.channels, affine, rng);
      } else {
        op = std::make_unique<Identity>();
      }
      cell->node_gates[id.to].push_back(gate);
      cell->node_slots[id.to].push_back(cell->ops.size());
      cell->ops.emplace_back(gate, std::move(op));
    }
    net.cells_.push_back(std::move(cell));
  }
  net.classifier_ = std::make_unique<Classifier>(net.layout_.classifier_in, shape.num_classes, rng);
  return net;
}

GateParams SuperNetwork::gate_params() const {
  GateParams p;
  p.alpha.assign(alpha_.value.data().begin(), alpha_.value.data().end());
  p.active = active_;
  return p;
}

std::vector<Parameter*> SuperNetwork::weights() {
  std::vector<Parameter*> out;
  stem_->collect_parameters(out);
  for (auto& cell : cells_) {
    cell->pre0->collect_parameters(out);
    cell->pre1->collect_parameters(out);
    for (auto& [gate, op] : cell->ops) op->collect_parameters(out);
  }
  classifier_->collect_parameters(out);
  return out;
}

std::vector<Tensor*> SuperNetwork::buffers() {
  std::vector<Tensor*> out;
  stem_->collect_buffers(out);
  for (auto& cell : cells_) {
    cell->pre0->collect_buffers(out);
    cell->pre1->collect_buffers(out);
    for (auto& [gate, op] : cell->ops) op->collect_buffers(out);
  }
  return out;
}

std::vector<Parameter*> SuperNetwork::gate_weights(std::size_t gate) {
  const GateId& id = flops_.gates.at(gate);
  std::vector<Parameter*> out;
  for (auto& [g, op] : cells_[id.cell]->ops) {
    if (g == gate) op->collect_parameters(out);
  }
  return out;
}

Var SuperNetwork::gate_operator(Tape& tape, std::size_t gate, Var source, const ForwardOptions& opt) {
  const GateId& id = flops_.gates.at(gate);
  for (auto& [g, op] : cells_[id.cell]->ops) {
    if (g == gate) return op->forward(tape, source, opt);
  }
  throw Error("gate_operator: unknown gate index " + std::to_string(gate));
}

SuperNetwork::Output SuperNetwork::forward(Tape& tape, const Tensor& images, const ForwardOptions& opt) {
  if (images.rank() != 4 || images.dim(1) != shape_.input_channels ||
      images.dim(2) != shape_.input_height || images.dim(3) != shape_.input_width) {
    throw ShapeError("supernet forward: expected input [N, " + std::to_string(shape_.input_channels) +
                     ", " + std::to_string(shape_.input_height) + ", " +
                     std::to_string(shape_.input_width) + "], got " + shape_str(images.shape()));
  }
  const std::size_t batch = images.dim(0);
  Output out;
  out.alpha = tape.leaf(alpha_);
  Var x = tape.constant(images);
  Var s0 = stem_->forward(tape, x, opt);
  Var s1 = s0;
  for (std::size_t k = 0; k < cells_.size(); ++k) {
    Cell& cell = *cells_[k];
    const CellLayout& cl = layout_.cells[k];
    std::vector<Var> states{cell.pre0->forward(tape, s0, opt), cell.pre1->forward(tape, s1, opt)};
    for (std::size_t j = 2; j < shape_.nodes_per_cell; ++j) {
      Var acc;
      for (std::size_t t = 0; t < cell.node_gates[j].size(); ++t) {
        const std::size_t gate = cell.node_gates[j][t];
        if (!active_[gate]) continue;
        Layer& op = *cell.ops[cell.node_slots[j][t]].second;
        Var branch = op.forward(tape, states[flops_.gates[gate].from], opt);
        Var scaled = scale_by(branch, sigmoid(select(out.alpha, gate)));
        acc = acc.valid() ? add(acc, scaled) : scaled;
      }
      if (!acc.valid()) {
        acc = tape.constant(Tensor(Shape{batch, cl.channels, cl.out_height, cl.out_width}));
      }
      states.push_back(acc);
    }
    std::vector<Var> inner(states.begin() + 2, states.end());
    s0 = s1;
    s1 = inner.size() == 1 ? inner.front() : channel_concat(inner);
  }
  out.logits = classifier_->forward(tape, s1);
  return out;
}

void SuperNetwork::deactivate(std::size_t gate) {
  active_.at(gate) = false;
  for (Parameter* p : gate_weights(gate)) p->frozen = true;
  auto& bufs = alpha_opt_.buffers();
  if (!bufs.empty() && bufs[0].size() == active_.size()) bufs[0][gate] = 0.0;
}

void SuperNetwork::set_active(const std::vector<bool>& active) {
  if (active.size() != active_.size()) {
    throw ShapeError("set_active: mask of " + std::to_string(active.size()) + " for " +
                     std::to_string(active_.size()) + " gates");
  }
  active_ = active;
  for (std::size_t g = 0; g < active_.size(); ++g) {
    for (Parameter* p : gate_weights(g)) p->frozen = !active_[g];
  }
}

namespace {

double norm(std::span<Parameter* const> params) {
  double s = 0.0;
  for (const Parameter* p : params) {
    for (double v : p->grad.data()) s += v * v;
  }
  return std::sqrt(s);
}

struct LossGraph {
  Var total;
  StepReport report;
};

LossGraph build_loss(Tape& tape, SuperNetwork& net, const Batch& batch, const LossSpec& loss,
                     const ForwardOptions& opt) {
  if (batch.images.rank() != 4 || batch.images.dim(0) != batch.labels.size()) {
    throw ShapeError("batch: " + std::to_string(batch.labels.size()) + " labels for images " +
                     shape_str(batch.images.shape()));
  }
  auto out = net.forward(tape, batch.images, opt);
  Var ce = softmax_cross_entropy(out.logits, batch.labels);
  LossGraph g;
  g.total = ce;
  g.report.cross_entropy = ce.value()[0];
  if (loss.lambda != 0.0) {
    const FlopsRegularizer& reg = net.regularizer();
    Var r = reg.uniform(out.alpha, net.active());
    if (loss.mu != 0.0) r = add(r, scale(reg.expected(out.alpha, net.active()), loss.mu));
    g.report.regularizer = r.value()[0];
    g.total = add(ce, scale(r, loss.lambda));
  } else {
    // reported for tracing even when it does not enter the objective
    const GateParams gp = net.gate_params();
    g.report.regularizer = net.regularizer().uniform(gp) + loss.mu * net.regularizer().expected(gp);
  }
  g.report.loss = g.total.value()[0];
  const Tensor& z = out.logits.value();
  const std::size_t k = z.dim(1);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (z[r * k + j] > z[r * k + best]) best = j;
    }
    if (static_cast<int>(best) == batch.labels[r]) ++g.report.correct;
  }
  g.report.count = batch.size();
  return g;
}

void check_finite(const StepReport& r, const LossSpec& loss) {
  if (std::isfinite(r.loss)) return;
  std::ostringstream msg;
  msg << "non-finite loss: total=" << r.loss << " cross_entropy=" << r.cross_entropy
      << " regularizer=" << r.regularizer << " lambda=" << loss.lambda << " mu=" << loss.mu;
  throw RuntimeAbort(msg.str());
}

void zero_all(SuperNetwork& net) {
  net.alpha().zero_grad();
  for (Parameter* p : net.weights()) p->zero_grad();
}

}  // namespace

StepReport compute_gradients(SuperNetwork& net, const Batch& batch, const LossSpec& loss,
                             const ForwardOptions& opt) {
  zero_all(net);
  Tape tape;
  LossGraph g = build_loss(tape, net, batch, loss, opt);
  check_finite(g.report, loss);
  tape.backward(g.total);
  const auto w = net.weights();
  g.report.grad_norm_omega = norm(w);
  Parameter* a = &net.alpha();
  g.report.grad_norm_alpha = norm(std::span<Parameter* const>(&a, 1));
  return g.report;
}

StepReport evaluate_loss(SuperNetwork& net, const Batch& batch, const LossSpec& loss,
                         const ForwardOptions& opt) {
  Tape tape;
  return build_loss(tape, net, batch, loss, opt).report;
}

StepReport one_level_step(SuperNetwork& net, const Batch& batch, const OptimizerConfig& opt,
                          const LossSpec& loss) {
  StepReport report = compute_gradients(net, batch, loss);
  net.omega_optimizer().config() = {opt.eta_omega, opt.momentum_omega, opt.weight_decay_omega};
  net.alpha_optimizer().config() = {opt.eta_alpha, opt.momentum_alpha, 0.0};
  const auto w = net.weights();
  net.omega_optimizer().step(w);
  Parameter* a = &net.alpha();
  net.alpha_optimizer().step(std::span<Parameter* const>(&a, 1));
  return report;
}

StepReport bilevel_step(SuperNetwork& net, const Batch& d1, const Batch& d2,
                        const OptimizerConfig& opt, const LossSpec& loss) {
  net.omega_optimizer().config() = {opt.eta_omega, opt.momentum_omega, opt.weight_decay_omega};
  net.alpha_optimizer().config() = {opt.eta_alpha, opt.momentum_alpha, 0.0};
  // omega on D2
  StepReport w_report = compute_gradients(net, d2, loss);
  const auto w = net.weights();
  net.omega_optimizer().step(w);
  // alpha on D1 with the updated omega
  StepReport a_report = compute_gradients(net, d1, loss);
  Parameter* a = &net.alpha();
  net.alpha_optimizer().step(std::span<Parameter* const>(&a, 1));
  a_report.grad_norm_omega = w_report.grad_norm_omega;
  return a_report;
}

DiscretizationReport discretize(SuperNetwork& net, const std::vector<GateId>& gates_to_prune,
                                const Batch* probe) {
  std::vector<std::size_t> idx;
  for (const GateId& g : gates_to_prune) {
    const std::size_t i = net.gate_index(g);
    if (!net.active()[i]) throw ValidationError("discretize: gate already inactive: " + to_string(g));
    idx.push_back(i);
  }
  DiscretizationReport report;
  if (probe) {
    report.measured = true;
    report.probe_loss_before = evaluate_loss(net, *probe, {}).cross_entropy;
  }
  for (std::size_t i : idx) {
    report.pruned.emplace_back(net.gates()[i], sigmoid_value(net.alpha().value[i]));
    net.deactivate(i);
  }
  if (probe) report.probe_loss_after = evaluate_loss(net, *probe, {}).cross_entropy;
  return report;
}

ArchitectureEncoding export_architecture(const SuperNetwork& net) {
  ArchitectureEncoding arch;
  arch.shape = net.shape();
  for (std::size_t i = 0; i < net.gates().size(); ++i) {
    if (net.active()[i]) arch.active.insert(net.gates()[i]);
  }
  annotate_dead_nodes(arch);
  return arch;
}

}  // namespace goldnas
