#include "goldnas/tape.hpp"

#include "goldnas/error.hpp"

namespace goldnas {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (std::size_t in : inputs) {
    if (nodes_[in].requires_grad) n.requires_grad = true;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.shape() != n.value.shape()) return Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw Error("backward: loss belongs to a different tape");
  if (nodes_[loss.id()].value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_str(nodes_[loss.id()].value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id())[0] = 1.0;

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      Parameter& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
      for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] += n.grad[k];
    }
  }
}

namespace {
thread_local MacCounter* active_counter = nullptr;
}

MacCounter::MacCounter() : previous_(active_counter) { active_counter = this; }

MacCounter::~MacCounter() { active_counter = previous_; }

void MacCounter::add(std::uint64_t per_sample, std::uint64_t batch) {
  for (MacCounter* c = active_counter; c != nullptr; c = c->previous_) {
    c->per_sample_ += per_sample;
    c->total_ += per_sample * batch;
  }
}

}  // namespace goldnas
