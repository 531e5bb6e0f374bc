#include "goldnas/discrete_net.hpp"

#include <cmath>
#include <numbers>

#include "goldnas/error.hpp"
#include "goldnas/rng.hpp"

namespace goldnas {

struct DiscreteNetwork::Cell {
  std::unique_ptr<Layer> pre0, pre1;
  struct Edge {
    std::size_t from, to;
    std::unique_ptr<Layer> op;
  };
  std::vector<Edge> edges;       // in canonical order
  std::vector<bool> live;        // per node
  std::size_t channels = 0;      // per node
  std::size_t out_h = 0, out_w = 0;
};

DiscreteNetwork::DiscreteNetwork() = default;
DiscreteNetwork::DiscreteNetwork(DiscreteNetwork&&) noexcept = default;
DiscreteNetwork& DiscreteNetwork::operator=(DiscreteNetwork&&) noexcept = default;
DiscreteNetwork::~DiscreteNetwork() = default;

DiscreteNetwork DiscreteNetwork::build(const ArchitectureEncoding& arch, std::uint64_t seed, bool bn_affine) {
  const NetworkShapeConfig& shape = arch.shape;
  shape.validate();
  for (const GateId& g : arch.active) {
    if (!in_universe(shape, g)) throw ValidationError("discrete network: gate outside the shape: " + to_string(g));
  }
  const NetworkLayout layout = network_layout(shape);
  DiscreteNetwork net;
  net.shape_ = shape;
  std::mt19937_64 rng(seed);
  net.stem_ = std::make_unique<Stem>(shape.input_channels, layout.stem_channels, bn_affine, rng);

  std::size_t pp = layout.stem_channels, p = layout.stem_channels;
  bool prev_reduction = false;
  for (std::size_t k = 0; k < shape.num_cells; ++k) {
    const CellLayout& cl = layout.cells[k];
    auto cell = std::make_unique<Cell>();
    cell->channels = cl.channels;
    cell->out_h = cl.out_height;
    cell->out_w = cl.out_width;
    if (prev_reduction) {
      cell->pre0 = std::make_unique<FactorizedReduce>(pp, cl.channels, bn_affine, rng);
    } else {
      cell->pre0 = std::make_unique<ReluConvBn>(pp, cl.channels, 1, 1, 0, bn_affine, rng);
    }
    cell->pre1 = std::make_unique<ReluConvBn>(p, cl.channels, 1, 1, 0, bn_affine, rng);

    cell->live.assign(shape.nodes_per_cell, false);
    cell->live[0] = cell->live[1] = true;
    for (std::size_t j = 2; j < shape.nodes_per_cell; ++j) {
      for (const GateId& g : arch.active) {
        if (g.cell == k && g.to == j && cell->live[g.from]) cell->live[j] = true;
      }
    }
    std::size_t live_inner = 0;
    for (std::size_t j = 2; j < shape.nodes_per_cell; ++j) live_inner += cell->live[j] ? 1 : 0;
    if (live_inner == 0) {
      throw ValidationError("discrete network: cell " + std::to_string(k) + " has no live inner node");
    }
    for (const GateId& g : arch.active) {
      if (g.cell != k || !cell->live[g.from]) continue;
      const std::size_t stride = cl.stride(g.from);
      std::unique_ptr<Layer> op;
      if (g.op == OpKind::SepConv3x3) {
        op = std::make_unique<SepConv3x3>(cl.channels, stride, bn_affine, rng);
      } else if (stride == 2) {
        op = std::make_unique<FactorizedReduce>(cl.channels, cl.channels, bn_affine, rng);
      } else {
        op = std::make_unique<Identity>();
      }
      cell->edges.push_back({g.from, g.to, std::move(op)});
      net.built_.push_back(g);
    }
    pp = p;
    p = live_inner * cl.channels;
    net.cell_channels_.push_back(p);
    prev_reduction = cl.reduction;
    net.cells_.push_back(std::move(cell));
  }
  net.classifier_ = std::make_unique<Classifier>(p, shape.num_classes, rng);
  return net;
}

Var DiscreteNetwork::forward(Tape& tape, const Tensor& images, const ForwardOptions& opt) {
  if (images.rank() != 4 || images.dim(1) != shape_.input_channels || images.dim(2) != shape_.input_height ||
      images.dim(3) != shape_.input_width) {
    throw ShapeError("discrete network: unexpected input " + shape_str(images.shape()));
  }
  Var s0 = stem_->forward(tape, tape.constant(images), opt);
  Var s1 = s0;
  for (auto& cell : cells_) {
    std::vector<Var> states(shape_.nodes_per_cell);
    states[0] = cell->pre0->forward(tape, s0, opt);
    states[1] = cell->pre1->forward(tape, s1, opt);
    for (auto& e : cell->edges) {
      Var y = e.op->forward(tape, states[e.from], opt);
      states[e.to] = states[e.to].valid() ? add(states[e.to], y) : y;
    }
    std::vector<Var> inner;
    for (std::size_t j = 2; j < shape_.nodes_per_cell; ++j) {
      if (cell->live[j]) inner.push_back(states[j]);
    }
    s0 = s1;
    s1 = inner.size() == 1 ? inner.front() : channel_concat(inner);
  }
  return classifier_->forward(tape, s1);
}

std::vector<Parameter*> DiscreteNetwork::weights() {
  std::vector<Parameter*> out;
  stem_->collect_parameters(out);
  for (auto& cell : cells_) {
    cell->pre0->collect_parameters(out);
    cell->pre1->collect_parameters(out);
    for (auto& e : cell->edges) e.op->collect_parameters(out);
  }
  classifier_->collect_parameters(out);
  return out;
}

std::vector<Tensor*> DiscreteNetwork::buffers() {
  std::vector<Tensor*> out;
  stem_->collect_buffers(out);
  for (auto& cell : cells_) {
    cell->pre0->collect_buffers(out);
    cell->pre1->collect_buffers(out);
    for (auto& e : cell->edges) e.op->collect_buffers(out);
  }
  return out;
}

std::size_t DiscreteNetwork::parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : weights()) n += p->value.size();
  return n;
}

std::uint64_t DiscreteNetwork::measure_macs() {
  // Running statistics must not move, so batch statistics are used without
  // updates; the MAC count does not depend on the normalization mode.
  Tensor probe(Shape{2, shape_.input_channels, shape_.input_height, shape_.input_width}, 0.5);
  probe[0] = 1.0;
  MacCounter counter;
  Tape tape;
  forward(tape, probe, ForwardOptions::probe());
  return counter.per_sample();
}

void RetrainSchedule::validate() const {
  if (!(learning_rate >= 0)) throw ValidationError("retrain: learning_rate must be >= 0");
  if (momentum < 0 || momentum >= 1) throw ValidationError("retrain: momentum must lie in [0, 1)");
  if (weight_decay < 0) throw ValidationError("retrain: weight_decay must be >= 0");
  if (batch_size == 0) throw ValidationError("retrain: batch_size must be positive");
}

double cosine_lr(double base, std::size_t e, std::size_t epochs) {
  if (epochs == 0) return base;
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * static_cast<double>(e) / static_cast<double>(epochs)));
}

namespace {

std::size_t count_correct(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t k = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (logits[r * k + j] > logits[r * k + best]) best = j;
    }
    correct += static_cast<int>(best) == labels[r] ? 1 : 0;
  }
  return correct;
}

}  // namespace

EvalResult evaluate(DiscreteNetwork& net, const DatasetSplit& data, const ForwardOptions& opt, std::size_t batch_size) {
  EvalResult r;
  if (data.size() == 0) return r;
  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t lo = 0; lo < data.size(); lo += batch_size) {
    idx.clear();
    for (std::size_t i = lo; i < std::min(data.size(), lo + batch_size); ++i) idx.push_back(i);
    const Batch b = data.gather(idx);
    Tape tape;
    Var logits = net.forward(tape, b.images, opt);
    loss += softmax_cross_entropy(logits, b.labels).value()[0] * static_cast<double>(b.size());
    correct += count_correct(logits.value(), b.labels);
  }
  r.loss = loss / static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

RetrainResult retrain(const ArchitectureEncoding& arch, const DatasetSplit& train, const DatasetSplit* eval,
                      const RetrainSchedule& schedule, std::uint64_t seed) {
  schedule.validate();
  schedule.augment.validate(train.height, train.width);
  train.validate();
  if (train.num_classes != arch.shape.num_classes) {
    throw ValidationError("retrain: data has " + std::to_string(train.num_classes) + " classes, architecture " +
                          std::to_string(arch.shape.num_classes));
  }
  RetrainResult out{DiscreteNetwork::build(arch, stream_seed(seed, "init")), {}};
  DiscreteNetwork& net = out.network;
  RetrainMetrics& m = out.metrics;
  m.macs = net.measure_macs();
  m.parameters = net.parameter_count();

  const EvalResult initial = evaluate(net, train, ForwardOptions::probe(), schedule.batch_size);
  m.initial_train_loss = m.final_train_loss = initial.loss;
  m.initial_train_accuracy = m.final_train_accuracy = initial.accuracy;

  Sgd sgd(SgdConfig{schedule.learning_rate, schedule.momentum, schedule.weight_decay});
  std::mt19937_64 order = make_stream(seed, "train");
  std::mt19937_64 aug = make_stream(seed, "augment");
  const std::vector<Parameter*> params = net.weights();
  for (std::size_t e = 0; e < schedule.epochs; ++e) {
    sgd.config().lr = cosine_lr(schedule.learning_rate, e, schedule.epochs);
    double loss = 0.0;
    std::size_t correct = 0, count = 0;
    for (const auto& idx : epoch_batches(train.size(), schedule.batch_size, order)) {
      const Batch b = make_batch(train, idx, schedule.augment, aug);
      for (Parameter* p : params) p->zero_grad();
      Tape tape;
      Var logits = net.forward(tape, b.images, ForwardOptions{});
      Var ce = softmax_cross_entropy(logits, b.labels);
      const double v = ce.value()[0];
      if (!std::isfinite(v)) {
        throw RuntimeAbort("retrain: non-finite loss in epoch " + std::to_string(e + 1));
      }
      tape.backward(ce);
      sgd.step(params);
      loss += v * static_cast<double>(b.size());
      correct += count_correct(logits.value(), b.labels);
      count += b.size();
    }
    m.train_loss.push_back(loss / static_cast<double>(count));
    m.train_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(count));
  }
  if (schedule.epochs > 0) {
    m.final_train_loss = m.train_loss.back();
    m.final_train_accuracy = m.train_accuracy.back();
  }
  if (eval) {
    const EvalResult r = evaluate(net, *eval, schedule.epochs > 0 ? ForwardOptions::eval() : ForwardOptions::probe(),
                                  schedule.batch_size);
    m.has_eval = true;
    m.eval_loss = r.loss;
    m.eval_accuracy = r.accuracy;
  }
  return out;
}

}  // namespace goldnas
