#include "goldnas/optimizer.hpp"

#include "goldnas/error.hpp"

namespace goldnas {

void Sgd::step(std::span<Parameter* const> params) {
  if (buffers_.size() < params.size()) buffers_.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (p.frozen) continue;
    if (p.grad.shape() != p.value.shape()) {
      throw ShapeError("sgd: gradient of '" + p.name + "' has shape " + shape_str(p.grad.shape()) +
                       ", value has " + shape_str(p.value.shape()));
    }
    Tensor& buf = buffers_[i];
    if (buf.shape() != p.value.shape()) buf = Tensor(p.value.shape());
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k] + cfg_.weight_decay * p.value[k];
      buf[k] = cfg_.momentum * buf[k] + g;
      p.value[k] -= cfg_.lr * buf[k];
    }
  }
}

}  // namespace goldnas
