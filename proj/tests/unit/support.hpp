#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "goldnas/tape.hpp"
#include "goldnas/tensor.hpp"

namespace testing {

inline goldnas::Tensor random_tensor(goldnas::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  goldnas::Tensor t(std::move(shape));
  for (double& v : t.data()) v = n(rng);
  return t;
}

// Direct sliding-window cross-correlation with zero padding.
inline goldnas::Tensor naive_conv(const goldnas::Tensor& x, const goldnas::Tensor& k, std::size_t stride,
                                  std::size_t pad, std::size_t groups) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = k.dim(0), kh = k.dim(2);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kh) / stride + 1;
  const std::size_t cin_g = cin / groups, cout_g = cout / groups;
  goldnas::Tensor y({n, cout, oh, ow});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = 0.0;
          const std::size_t g = co / cout_g;
          for (std::size_t ci = 0; ci < cin_g; ++ci)
            for (std::size_t a = 0; a < kh; ++a)
              for (std::size_t c = 0; c < kh; ++c) {
                const long r = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                const long s = static_cast<long>(j * stride + c) - static_cast<long>(pad);
                if (r < 0 || s < 0 || r >= static_cast<long>(h) || s >= static_cast<long>(w)) continue;
                acc += x.at(b, g * cin_g + ci, r, s) * k.at(co, ci, a, c);
              }
          y.at(b, co, i, j) = acc;
        }
  return y;
}

// |analytic - numeric| <= rel * max(|analytic|, |numeric|) + floor. The floor
// only matters for gradients that are numerically zero.
inline bool close_relative(double analytic, double numeric, double rel = 1e-4, double floor = 1e-8) {
  return std::abs(analytic - numeric) <= rel * std::max(std::abs(analytic), std::abs(numeric)) + floor;
}

// Central difference of `f` with respect to `x`.
inline double central_difference(double& x, const std::function<double()>& f, double h = 1e-5) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2 * h);
}

}  // namespace testing
