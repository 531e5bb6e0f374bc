#pragma once

#include <span>
#include <vector>

#include "goldnas/tape.hpp"

namespace goldnas {

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

/// Momentum SGD with coupled weight decay:
///   g = grad + wd * w;  buf = m * buf + g;  w -= lr * buf.
/// Momentum buffers are matched to parameters by position. Frozen parameters
/// are skipped and keep their buffers untouched.
class Sgd {
 public:
  Sgd() = default;
  explicit Sgd(SgdConfig cfg) : cfg_(cfg) {}

  void step(std::span<Parameter* const> params);

  SgdConfig& config() { return cfg_; }
  const SgdConfig& config() const { return cfg_; }
  std::vector<Tensor>& buffers() { return buffers_; }
  const std::vector<Tensor>& buffers() const { return buffers_; }

 private:
  SgdConfig cfg_;
  std::vector<Tensor> buffers_;
};

}  // namespace goldnas
