#include "goldnas/layers.hpp"

#include <cmath>

#include "goldnas/rng.hpp"

namespace goldnas {

Tensor init_conv_kernel(std::size_t cout, std::size_t cin_per_group, std::size_t k, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(cin_per_group * k * k));
  Tensor t(Shape{cout, cin_per_group, k, k});
  for (double& v : t.data()) v = bound * (2.0 * uniform01(rng) - 1.0);
  return t;
}

BatchNorm2d::BatchNorm2d(std::size_t channels, bool affine)
    : affine_(affine),
      gamma_("bn.gamma", Tensor(Shape{channels}, 1.0)),
      beta_("bn.beta", Tensor(Shape{channels}, 0.0)),
      stats_(channels) {}

Var BatchNorm2d::forward(Tape& tape, Var x, const ForwardOptions& opt) {
  if (!affine_) return batch_norm(x, Var(), Var(), stats_, opt.bn());
  return batch_norm(x, tape.leaf(gamma_), tape.leaf(beta_), stats_, opt.bn());
}

void BatchNorm2d::collect_parameters(std::vector<Parameter*>& out) {
  if (affine_) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
}

void BatchNorm2d::collect_buffers(std::vector<Tensor*>& out) {
  out.push_back(&stats_.mean);
  out.push_back(&stats_.var);
}

ReluConvBn::ReluConvBn(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
                       std::size_t pad, bool affine, std::mt19937_64& rng)
    : kernel_("relu_conv_bn.kernel", init_conv_kernel(cout, cin, k, rng)),
      spec_{stride, pad, 1},
      bn_(cout, affine) {}

Var ReluConvBn::forward(Tape& tape, Var x, const ForwardOptions& opt) {
  return bn_.forward(tape, conv2d(relu(x), tape.leaf(kernel_), spec_), opt);
}

void ReluConvBn::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&kernel_);
  bn_.collect_parameters(out);
}

void ReluConvBn::collect_buffers(std::vector<Tensor*>& out) { bn_.collect_buffers(out); }

FactorizedReduce::FactorizedReduce(std::size_t cin, std::size_t cout, bool affine, std::mt19937_64& rng)
    : kernel_a_("factorized_reduce.kernel_a", init_conv_kernel(cout / 2, cin, 1, rng)),
      kernel_b_("factorized_reduce.kernel_b", init_conv_kernel(cout - cout / 2, cin, 1, rng)),
      bn_(cout, affine) {}

Var FactorizedReduce::forward(Tape& tape, Var x, const ForwardOptions& opt) {
  Var r = relu(x);
  Var a = conv2d(r, tape.leaf(kernel_a_), {2, 0, 1});
  Var b = conv2d(crop_leading(r, 1), tape.leaf(kernel_b_), {2, 0, 1});
  return bn_.forward(tape, channel_concat({a, b}), opt);
}

void FactorizedReduce::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&kernel_a_);
  out.push_back(&kernel_b_);
  bn_.collect_parameters(out);
}

void FactorizedReduce::collect_buffers(std::vector<Tensor*>& out) { bn_.collect_buffers(out); }

SepConv3x3::SepConv3x3(std::size_t channels, std::size_t stride, bool affine, std::mt19937_64& rng)
    : stride_(stride),
      dw1_("sep_conv.dw1", init_conv_kernel(channels, 1, 3, rng)),
      pw1_("sep_conv.pw1", init_conv_kernel(channels, channels, 1, rng)),
      dw2_("sep_conv.dw2", init_conv_kernel(channels, 1, 3, rng)),
      pw2_("sep_conv.pw2", init_conv_kernel(channels, channels, 1, rng)),
      bn1_(channels, affine),
      bn2_(channels, affine) {}

Var SepConv3x3::forward(Tape& tape, Var x, const ForwardOptions& opt) {
  const std::size_t c = dw1_.value.dim(0);
  Var h = conv2d(relu(x), tape.leaf(dw1_), {stride_, 1, c});
  h = bn1_.forward(tape, conv2d(h, tape.leaf(pw1_), {1, 0, 1}), opt);
  h = conv2d(relu(h), tape.leaf(dw2_), {1, 1, c});
  return bn2_.forward(tape, conv2d(h, tape.leaf(pw2_), {1, 0, 1}), opt);
}

void SepConv3x3::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&dw1_);
  out.push_back(&pw1_);
  bn1_.collect_parameters(out);
  out.push_back(&dw2_);
  out.push_back(&pw2_);
  bn2_.collect_parameters(out);
}

void SepConv3x3::collect_buffers(std::vector<Tensor*>& out) {
  bn1_.collect_buffers(out);
  bn2_.collect_buffers(out);
}

Stem::Stem(std::size_t cin, std::size_t cout, bool affine, std::mt19937_64& rng)
    : kernel_("stem.kernel", init_conv_kernel(cout, cin, 3, rng)), bn_(cout, affine) {}

Var Stem::forward(Tape& tape, Var x, const ForwardOptions& opt) {
  return bn_.forward(tape, conv2d(x, tape.leaf(kernel_), {1, 1, 1}), opt);
}

void Stem::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&kernel_);
  bn_.collect_parameters(out);
}

void Stem::collect_buffers(std::vector<Tensor*>& out) { bn_.collect_buffers(out); }

Classifier::Classifier(std::size_t in_features, std::size_t num_classes, std::mt19937_64& rng)
    : weight_("classifier.weight", Tensor(Shape{num_classes, in_features})),
      bias_("classifier.bias", Tensor(Shape{num_classes})) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  for (double& v : weight_.value.data()) v = bound * (2.0 * uniform01(rng) - 1.0);
  for (double& v : bias_.value.data()) v = bound * (2.0 * uniform01(rng) - 1.0);
}

Var Classifier::forward(Tape& tape, Var x) {
  return linear(global_average_pool(x), tape.leaf(weight_), tape.leaf(bias_));
}

void Classifier::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

}  // namespace goldnas
