#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "goldnas/tape.hpp"

namespace goldnas {

struct ForwardOptions {
  bool training = true;
  bool update_running_stats = true;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  BatchNormOptions bn() const { return {training, update_running_stats, bn_momentum, bn_eps}; }
  static ForwardOptions probe() { return {true, false}; }
  static ForwardOptions eval() { return {false, false}; }
};

/// Base for network building blocks. Parameters and buffers are reported in a
/// fixed order so optimizers and checkpoints can address them positionally.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Var forward(Tape& tape, Var x, const ForwardOptions& opt) = 0;
  virtual void collect_parameters(std::vector<Parameter*>& out) = 0;
  virtual void collect_buffers(std::vector<Tensor*>& out) = 0;
};

/// Uniform fan-in initialization: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
Tensor init_conv_kernel(std::size_t cout, std::size_t cin_per_group, std::size_t k, std::mt19937_64& rng);

class BatchNorm2d {
 public:
  BatchNorm2d(std::size_t channels, bool affine);
  Var forward(Tape& tape, Var x, const ForwardOptions& opt);
  void collect_parameters(std::vector<Parameter*>& out);
  void collect_buffers(std::vector<Tensor*>& out);

 private:
  bool affine_;
  Parameter gamma_, beta_;
  RunningStats stats_;
};

/// relu -> conv (k x k) -> batch-norm
class ReluConvBn final : public Layer {
 public:
  ReluConvBn(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, std::size_t pad,
             bool affine, std::mt19937_64& rng);
  Var forward(Tape& tape, Var x, const ForwardOptions& opt) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_buffers(std::vector<Tensor*>& out) override;

 private:
  Parameter kernel_;
  Conv2dSpec spec_;
  BatchNorm2d bn_;
};

/// relu -> two stride-2 1x1 convolutions (the second on the input shifted by
/// one pixel), each producing cout/2 channels -> concat -> batch-norm.
class FactorizedReduce final : public Layer {
 public:
  FactorizedReduce(std::size_t cin, std::size_t cout, bool affine, std::mt19937_64& rng);
  Var forward(Tape& tape, Var x, const ForwardOptions& opt) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_buffers(std::vector<Tensor*>& out) override;

 private:
  Parameter kernel_a_, kernel_b_;
  BatchNorm2d bn_;
};

/// Two stacks of relu -> depthwise 3x3 -> pointwise 1x1 -> batch-norm. The
/// stride applies to the first depthwise convolution only.
class SepConv3x3 final : public Layer {
 public:
  SepConv3x3(std::size_t channels, std::size_t stride, bool affine, std::mt19937_64& rng);
  Var forward(Tape& tape, Var x, const ForwardOptions& opt) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_buffers(std::vector<Tensor*>& out) override;

 private:
  std::size_t stride_;
  Parameter dw1_, pw1_, dw2_, pw2_;
  BatchNorm2d bn1_, bn2_;
};

class Identity final : public Layer {
 public:
  Var forward(Tape&, Var x, const ForwardOptions&) override { return x; }
  void collect_parameters(std::vector<Parameter*>&) override {}
  void collect_buffers(std::vector<Tensor*>&) override {}
};

/// conv 3x3 (padding 1) -> batch-norm
class Stem final : public Layer {
 public:
  Stem(std::size_t cin, std::size_t cout, bool affine, std::mt19937_64& rng);
  Var forward(Tape& tape, Var x, const ForwardOptions& opt) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_buffers(std::vector<Tensor*>& out) override;

 private:
  Parameter kernel_;
  BatchNorm2d bn_;
};

/// global average pool -> linear
class Classifier {
 public:
  Classifier(std::size_t in_features, std::size_t num_classes, std::mt19937_64& rng);
  Var forward(Tape& tape, Var x);
  void collect_parameters(std::vector<Parameter*>& out);

 private:
  Parameter weight_, bias_;
};

}  // namespace goldnas
