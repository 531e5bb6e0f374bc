#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "goldnas/tensor.hpp"

namespace goldnas {

/// A trainable leaf: value, accumulated gradient, and a freeze flag that
/// optimizers honour (frozen parameters are never updated).
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad = Tensor(value.shape()); }
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in creation order, so walking the
/// node list backwards is a reverse topological order; backward() therefore
/// visits each node once and accumulates gradients in a fixed order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter; backward() adds into `p.grad`.
  Var leaf(Parameter& p);

  /// Record an operation node. `fn` receives the node id and must push the
  /// node's gradient into its inputs via accumulate().
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

  /// Runs reverse accumulation from a scalar node. Gradients of leaves bound to
  /// parameters are added to Parameter::grad; all node gradients stay readable
  /// through grad() until the tape is destroyed.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of the last backward() w.r.t. node `v` (zeros if unreached).
  Tensor grad(Var v) const;

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }
  /// Gradient buffer of node `id`, allocated as zeros on first use.
  Tensor& grad_buffer(std::size_t id);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

/// Counts multiply-accumulates executed by conv2d and linear while alive.
/// Convolution: Cout * Hout * Wout * (Cin / groups) * k * k per sample.
/// Linear: in_features * out_features per sample.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;

  std::uint64_t total() const { return total_; }
  /// MACs per sample, i.e. total divided by the batch size of each op.
  std::uint64_t per_sample() const { return per_sample_; }

  static void add(std::uint64_t per_sample, std::uint64_t batch);

 private:
  std::uint64_t total_ = 0;
  std::uint64_t per_sample_ = 0;
  MacCounter* previous_ = nullptr;
};

// ---------------------------------------------------------------------------
// Primitive operations
// ---------------------------------------------------------------------------

struct Conv2dSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// Cross-correlation. input [N, Cin, H, W], kernel [Cout, Cin/groups, K, K].
Var conv2d(Var input, Var kernel, Conv2dSpec spec);

Var relu(Var x);
Var sigmoid(Var x);
Var add(Var a, Var b);
/// Elementwise product of equal shapes.
Var mul(Var a, Var b);
Var scale(Var x, double factor);
/// x * s where s is a one-element node.
Var scale_by(Var x, Var s);
/// Sum of all elements, shape {1}.
Var sum(Var x);
/// One element of a tensor as a {1} node.
Var select(Var x, std::size_t index);
/// Concatenate NCHW tensors along channels.
Var channel_concat(const std::vector<Var>& parts);
/// Drops the first `offset` rows and columns: x[:, :, offset:, offset:].
Var crop_leading(Var x, std::size_t offset);
/// [N, C, H, W] -> [N, C]
Var global_average_pool(Var x);
/// x [N, F], weight [O, F], bias [O] -> [N, O]
Var linear(Var x, Var weight, Var bias);
/// Mean cross-entropy over the batch; logits [N, K].
Var softmax_cross_entropy(Var logits, const std::vector<int>& labels);

struct RunningStats {
  Tensor mean;
  Tensor var;
  explicit RunningStats(std::size_t channels = 0)
      : mean(Shape{channels}, 0.0), var(Shape{channels}, 1.0) {}
};

struct BatchNormOptions {
  bool training = true;
  bool update_running_stats = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel batch normalization of NCHW input. `gamma`/`beta` may be
/// invalid Vars (no affine). Training mode normalizes with batch moments and
/// optionally folds them into `stats` (unbiased variance); eval mode uses the
/// frozen running statistics.
Var batch_norm(Var x, Var gamma, Var beta, RunningStats& stats, const BatchNormOptions& opt);

double sigmoid_value(double x);

}  // namespace goldnas
