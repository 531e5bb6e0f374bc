#include <algorithm>
#include <cmath>

#include "goldnas/error.hpp"
#include "goldnas/tape.hpp"

namespace goldnas {

namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw Error(std::string(op) + ": operands live on different tapes");
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, cin, h, w;
  std::size_t cout, k, cin_per_group, cout_per_group;
  std::size_t ho, wo;
  std::size_t stride, pad, groups;

  // Output column range [lo, hi) for which the input column ow*stride+kw-pad
  // lies in [0, w).
  std::pair<std::size_t, std::size_t> col_range(std::size_t kw) const {
    return axis_range(kw, w, wo);
  }
  std::pair<std::size_t, std::size_t> row_range(std::size_t kh) const {
    return axis_range(kh, h, ho);
  }

 private:
  std::pair<std::size_t, std::size_t> axis_range(std::size_t kk, std::size_t in,
                                                 std::size_t out) const {
    const long s = static_cast<long>(stride);
    const long off = static_cast<long>(kk) - static_cast<long>(pad);
    // smallest o with o*s + off >= 0
    long lo = off >= 0 ? 0 : (-off + s - 1) / s;
    // largest o with o*s + off <= in - 1
    long hi_incl = (static_cast<long>(in) - 1 - off);
    hi_incl = hi_incl < 0 ? -1 : hi_incl / s;
    long hi = std::min<long>(hi_incl + 1, static_cast<long>(out));
    if (hi < lo) hi = lo;
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
  }
};

ConvGeometry conv_geometry(const Tensor& in, const Tensor& kernel, const Conv2dSpec& spec) {
  require_rank(in, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  if (spec.stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (spec.groups == 0) throw ShapeError("conv2d: groups must be positive");
  ConvGeometry g{};
  g.n = in.dim(0);
  g.cin = in.dim(1);
  g.h = in.dim(2);
  g.w = in.dim(3);
  g.cout = kernel.dim(0);
  g.k = kernel.dim(2);
  g.stride = spec.stride;
  g.pad = spec.padding;
  g.groups = spec.groups;
  if (kernel.dim(3) != g.k) {
    throw ShapeError("conv2d: kernel must be square, got " + shape_str(kernel.shape()));
  }
  if (g.cin % g.groups != 0) {
    throw ShapeError("conv2d: input channels " + std::to_string(g.cin) +
                     " not divisible by groups " + std::to_string(g.groups));
  }
  if (g.cout % g.groups != 0) {
    throw ShapeError("conv2d: output channels " + std::to_string(g.cout) +
                     " not divisible by groups " + std::to_string(g.groups));
  }
  g.cin_per_group = g.cin / g.groups;
  g.cout_per_group = g.cout / g.groups;
  if (kernel.dim(1) != g.cin_per_group) {
    throw ShapeError("conv2d: kernel dim 1 is " + std::to_string(kernel.dim(1)) +
                     " but input channels / groups = " + std::to_string(g.cin_per_group));
  }
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) {
    throw ShapeError("conv2d: kernel " + std::to_string(g.k) + " larger than padded input " +
                     shape_str(in.shape()));
  }
  g.ho = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  return g;
}

}  // namespace

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var conv2d(Var input, Var kernel, Conv2dSpec spec) {
  require_same_tape(input, kernel, "conv2d");
  const Tensor& x = input.value();
  const Tensor& wt = kernel.value();
  const ConvGeometry g = conv_geometry(x, wt, spec);

  Tensor out(Shape{g.n, g.cout, g.ho, g.wo});
  const std::size_t in_plane = g.h * g.w;
  const std::size_t out_plane = g.ho * g.wo;
  const std::size_t kk = g.k * g.k;

  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oc = 0; oc < g.cout; ++oc) {
      const std::size_t grp = oc / g.cout_per_group;
      double* o = out.raw() + (n * g.cout + oc) * out_plane;
      for (std::size_t icg = 0; icg < g.cin_per_group; ++icg) {
        const std::size_t ic = grp * g.cin_per_group + icg;
        const double* in = x.raw() + (n * g.cin + ic) * in_plane;
        const double* kw_base = wt.raw() + (oc * g.cin_per_group + icg) * kk;
        for (std::size_t kh = 0; kh < g.k; ++kh) {
          const auto [oh0, oh1] = g.row_range(kh);
          for (std::size_t kw = 0; kw < g.k; ++kw) {
            const double wv = kw_base[kh * g.k + kw];
            const auto [ow0, ow1] = g.col_range(kw);
            for (std::size_t oh = oh0; oh < oh1; ++oh) {
              const std::size_t ih = oh * g.stride + kh - g.pad;
              const std::ptrdiff_t col0 = static_cast<std::ptrdiff_t>(ih * g.w + kw) -
                                          static_cast<std::ptrdiff_t>(g.pad);
              double* o_row = o + oh * g.wo;
              if (g.stride == 1) {
                for (std::size_t ow = ow0; ow < ow1; ++ow) o_row[ow] += wv * in[col0 + ow];
              } else {
                for (std::size_t ow = ow0; ow < ow1; ++ow) o_row[ow] += wv * in[col0 + ow * g.stride];
              }
            }
          }
        }
      }
    }
  }
  MacCounter::add(static_cast<std::uint64_t>(g.cout) * out_plane * g.cin_per_group * kk, g.n);

  const std::size_t xi = input.id(), ki = kernel.id();
  return input.tape().record(std::move(out), {xi, ki}, [g, xi, ki](Tape& tape, std::size_t self) {
    const Tensor& gy = tape.upstream(self);
    const Tensor& x = tape.value(xi);
    const Tensor& wt = tape.value(ki);
    const std::size_t in_plane = g.h * g.w;
    const std::size_t out_plane = g.ho * g.wo;
    const std::size_t kk = g.k * g.k;
    const bool need_x = tape.requires_grad(xi);
    const bool need_k = tape.requires_grad(ki);
    Tensor* gx = need_x ? &tape.grad_buffer(xi) : nullptr;
    Tensor* gk = need_k ? &tape.grad_buffer(ki) : nullptr;
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t oc = 0; oc < g.cout; ++oc) {
        const std::size_t grp = oc / g.cout_per_group;
        const double* go = gy.raw() + (n * g.cout + oc) * out_plane;
        for (std::size_t icg = 0; icg < g.cin_per_group; ++icg) {
          const std::size_t ic = grp * g.cin_per_group + icg;
          const double* in = x.raw() + (n * g.cin + ic) * in_plane;
          double* gin = need_x ? gx->raw() + (n * g.cin + ic) * in_plane : nullptr;
          const std::size_t kbase = (oc * g.cin_per_group + icg) * kk;
          for (std::size_t kh = 0; kh < g.k; ++kh) {
            const auto [oh0, oh1] = g.row_range(kh);
            for (std::size_t kw = 0; kw < g.k; ++kw) {
              const auto [ow0, ow1] = g.col_range(kw);
              const double wv = wt[kbase + kh * g.k + kw];
              double acc = 0.0;
              for (std::size_t oh = oh0; oh < oh1; ++oh) {
                const std::size_t ih = oh * g.stride + kh - g.pad;
                const std::ptrdiff_t col0 = static_cast<std::ptrdiff_t>(ih * g.w + kw) -
                                            static_cast<std::ptrdiff_t>(g.pad);
                const double* go_row = go + oh * g.wo;
                if (need_k) {
                  for (std::size_t ow = ow0; ow < ow1; ++ow) acc += go_row[ow] * in[col0 + ow * g.stride];
                }
                if (need_x) {
                  for (std::size_t ow = ow0; ow < ow1; ++ow) gin[col0 + ow * g.stride] += wv * go_row[ow];
                }
              }
              if (need_k) (*gk)[kbase + kh * g.k + kw] += acc;
            }
          }
        }
      }
    }
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v > 0 ? v : 0.0;
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi](Tape& tape, std::size_t self) {
    const Tensor& gy = tape.upstream(self);
    const Tensor& in = tape.value(xi);
    Tensor& gx = tape.grad_buffer(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (in[i] > 0) gx[i] += gy[i];
    }
  });
}

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = sigmoid_value(v);
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi](Tape& tape, std::size_t self) {
    const Tensor& gy = tape.upstream(self);
    const Tensor& y = tape.value(self);
    Tensor& gx = tape.grad_buffer(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * y[i] * (1.0 - y[i]);
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi](Tape& tape, std::size_t self) {
    const Tensor& gy = tape.upstream(self);
    for (std::size_t id : {ai, bi}) {
      if (!tape.requires_grad(id)) continue;
      Tensor& g = tape.grad_buffer(id);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi](Tape& tape, std::size_t self) {
    const Tensor& gy = tape.upstream(self);
    const Tensor& av = tape.value(ai);
    const Tensor& bv = tape.value(bi);
    if (tape.requires_grad(ai)) {
      Tensor& g = tape.grad_buffer(ai);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * bv[i];
    }
    if (tape.requires_grad(bi)) {
      Tensor& g = tape.grad_buffer(bi);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * av[i];
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= factor;
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi, factor](Tape& tape, std::size_t self) {
    const Tensor& gy = tape.upstream(self);
    Tensor& gx = tape.grad_buffer(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += factor * gy[i];
  });
}

Var scale_by(Var x, Var s) {
  require_same_tape(x, s, "scale_by");
  if (s.value().size() != 1) {
    throw ShapeError("scale_by: scale must have one element, got " + shape_str(s.shape()));
  }
  const double sv = s.value()[0];
  Tensor out = x.value();
  for (double& v : out.data()) v *= sv;
  const std::size_t xi = x.id(), si = s.id();
  return x.tape().record(std::move(out), {xi, si}, [xi, si](Tape& tape, std::size_t self) {
    const Tensor& gy = tape.upstream(self);
    const Tensor& xv = tape.value(xi);
    const double sv = tape.value(si)[0];
    if (tape.requires_grad(xi)) {
      Tensor& g = tape.grad_buffer(xi);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += sv * gy[i];
    }
    if (tape.requires_grad(si)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < gy.size(); ++i) acc += gy[i] * xv[i];
      tape.grad_buffer(si)[0] += acc;
    }
  });
}

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const std::size_t xi = x.id();
  return x.tape().record(Tensor(Shape{1}, acc), {xi}, [xi](Tape& tape, std::size_t self) {
    const double gy = tape.upstream(self)[0];
    Tensor& gx = tape.grad_buffer(xi);
    for (double& v : gx.data()) v += gy;
  });
}

Var select(Var x, std::size_t index) {
  if (index >= x.value().size()) {
    throw ShapeError("select: index " + std::to_string(index) + " out of range for shape " +
                     shape_str(x.shape()));
  }
  const std::size_t xi = x.id();
  return x.tape().record(Tensor(Shape{1}, x.value()[index]), {xi},
                         [xi, index](Tape& tape, std::size_t self) {
                           tape.grad_buffer(xi)[index] += tape.upstream(self)[0];
                         });
}

Var channel_concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("channel_concat: no inputs");
  const Tensor& first = parts.front().value();
  require_rank(first, 4, "channel_concat", "input");
  const std::size_t n = first.dim(0), h = first.dim(2), w = first.dim(3);
  std::size_t channels = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p, "channel_concat");
    const Tensor& t = p.value();
    require_rank(t, 4, "channel_concat", "input");
    if (t.dim(0) != n || t.dim(2) != h || t.dim(3) != w) {
      throw ShapeError("channel_concat: incompatible parts " + shape_str(first.shape()) + " and " +
                       shape_str(t.shape()));
    }
    channels += t.dim(1);
  }
  Tensor out(Shape{n, channels, h, w});
  const std::size_t plane = h * w;
  std::vector<std::size_t> ids, offsets, widths;
  std::size_t c0 = 0;
  for (const Var& p : parts) {
    const Tensor& t = p.value();
    const std::size_t c = t.dim(1);
    for (std::size_t b = 0; b < n; ++b) {
      std::copy_n(t.raw() + b * c * plane, c * plane, out.raw() + (b * channels + c0) * plane);
    }
    ids.push_back(p.id());
    offsets.push_back(c0);
    widths.push_back(c);
    c0 += c;
  }
  return parts.front().tape().record(
      std::move(out), ids, [ids, offsets, widths, n, channels, plane](Tape& tape, std::size_t self) {
        const Tensor& gy = tape.upstream(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!tape.requires_grad(ids[k])) continue;
          Tensor& g = tape.grad_buffer(ids[k]);
          const std::size_t c = widths[k];
          for (std::size_t b = 0; b < n; ++b) {
            const double* src = gy.raw() + (b * channels + offsets[k]) * plane;
            double* dst = g.raw() + b * c * plane;
            for (std::size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
          }
        }
      });
}

Var crop_leading(Var x, std::size_t offset) {
  const Tensor& in = x.value();
  require_rank(in, 4, "crop_leading", "input");
  if (offset >= in.dim(2) || offset >= in.dim(3)) {
    throw ShapeError("crop_leading: offset " + std::to_string(offset) + " exceeds " +
                     shape_str(in.shape()));
  }
  const std::size_t n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  const std::size_t ho = h - offset, wo = w - offset;
  Tensor out(Shape{n, c, ho, wo});
  for (std::size_t p = 0; p < n * c; ++p) {
    for (std::size_t i = 0; i < ho; ++i) {
      std::copy_n(in.raw() + (p * h + i + offset) * w + offset, wo, out.raw() + (p * ho + i) * wo);
    }
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi, n, c, h, w, ho, wo, offset](Tape& tape,
                                                                                 std::size_t self) {
    const Tensor& gy = tape.upstream(self);
    Tensor& gx = tape.grad_buffer(xi);
    for (std::size_t p = 0; p < n * c; ++p) {
      for (std::size_t i = 0; i < ho; ++i) {
        const double* src = gy.raw() + (p * ho + i) * wo;
        double* dst = gx.raw() + (p * h + i + offset) * w + offset;
        for (std::size_t j = 0; j < wo; ++j) dst[j] += src[j];
      }
    }
  });
}

Var global_average_pool(Var x) {
  const Tensor& in = x.value();
  require_rank(in, 4, "global_average_pool", "input");
  const std::size_t n = in.dim(0), c = in.dim(1), plane = in.dim(2) * in.dim(3);
  Tensor out(Shape{n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += in[p * plane + i];
    out[p] = acc / static_cast<double>(plane);
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi, n, c, plane](Tape& tape, std::size_t self) {
    const Tensor& gy = tape.upstream(self);
    Tensor& gx = tape.grad_buffer(xi);
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t p = 0; p < n * c; ++p) {
      const double g = gy[p] * inv;
      for (std::size_t i = 0; i < plane; ++i) gx[p * plane + i] += g;
    }
  });
}

Var linear(Var x, Var weight, Var bias) {
  require_same_tape(x, weight, "linear");
  require_same_tape(x, bias, "linear");
  const Tensor& in = x.value();
  const Tensor& wt = weight.value();
  const Tensor& b = bias.value();
  require_rank(in, 2, "linear", "input");
  require_rank(wt, 2, "linear", "weight");
  const std::size_t n = in.dim(0), f = in.dim(1), o = wt.dim(0);
  if (wt.dim(1) != f) {
    throw ShapeError("linear: weight " + shape_str(wt.shape()) + " does not accept " +
                     std::to_string(f) + " input features");
  }
  if (b.rank() != 1 || b.dim(0) != o) {
    throw ShapeError("linear: bias " + shape_str(b.shape()) + " does not match " +
                     std::to_string(o) + " outputs");
  }
  Tensor out(Shape{n, o});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < o; ++k) {
      double acc = b[k];
      for (std::size_t j = 0; j < f; ++j) acc += in[r * f + j] * wt[k * f + j];
      out[r * o + k] = acc;
    }
  }
  MacCounter::add(static_cast<std::uint64_t>(f) * o, n);
  const std::size_t xi = x.id(), wi = weight.id(), bi = bias.id();
  return x.tape().record(std::move(out), {xi, wi, bi}, [xi, wi, bi, n, f, o](Tape& tape,
                                                                            std::size_t self) {
    const Tensor& gy = tape.upstream(self);
    const Tensor& in = tape.value(xi);
    const Tensor& wt = tape.value(wi);
    if (tape.requires_grad(xi)) {
      Tensor& gx = tape.grad_buffer(xi);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < o; ++k)
          for (std::size_t j = 0; j < f; ++j) gx[r * f + j] += gy[r * o + k] * wt[k * f + j];
    }
    if (tape.requires_grad(wi)) {
      Tensor& gw = tape.grad_buffer(wi);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < o; ++k)
          for (std::size_t j = 0; j < f; ++j) gw[k * f + j] += gy[r * o + k] * in[r * f + j];
    }
    if (tape.requires_grad(bi)) {
      Tensor& gb = tape.grad_buffer(bi);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < o; ++k) gb[k] += gy[r * o + k];
    }
  });
}

Var softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
  const Tensor& z = logits.value();
  require_rank(z, 2, "softmax_cross_entropy", "logits");
  const std::size_t n = z.dim(0), k = z.dim(1);
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  Tensor probs(Shape{n, k});
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(labels[r]) +
                       " outside [0, " + std::to_string(k) + ")");
    }
    double mx = z[r * k];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z[r * k + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(z[r * k + j] - mx);
    const double lse = mx + std::log(denom);
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = std::exp(z[r * k + j] - lse);
    loss += lse - z[r * k + static_cast<std::size_t>(labels[r])];
  }
  loss /= static_cast<double>(n);
  const std::size_t zi = logits.id();
  return logits.tape().record(
      Tensor(Shape{1}, loss), {zi},
      [zi, probs = std::move(probs), labels, n, k](Tape& tape, std::size_t self) {
        const double gy = tape.upstream(self)[0] / static_cast<double>(n);
        Tensor& gz = tape.grad_buffer(zi);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t j = 0; j < k; ++j) {
            const double onehot = static_cast<std::size_t>(labels[r]) == j ? 1.0 : 0.0;
            gz[r * k + j] += gy * (probs[r * k + j] - onehot);
          }
        }
      });
}

Var batch_norm(Var x, Var gamma, Var beta, RunningStats& stats, const BatchNormOptions& opt) {
  const Tensor& in = x.value();
  require_rank(in, 4, "batch_norm", "input");
  const std::size_t n = in.dim(0), c = in.dim(1), plane = in.dim(2) * in.dim(3);
  const bool affine = gamma.valid();
  if (affine != beta.valid()) throw Error("batch_norm: gamma and beta must both be given or omitted");
  if (affine && (gamma.value().size() != c || beta.value().size() != c)) {
    throw ShapeError("batch_norm: affine parameters of size " + std::to_string(gamma.value().size()) +
                     " for " + std::to_string(c) + " channels");
  }
  if (stats.mean.size() != c) {
    throw ShapeError("batch_norm: running statistics sized for " +
                     std::to_string(stats.mean.size()) + " channels, input has " + std::to_string(c));
  }
  const std::size_t m = n * plane;
  std::vector<double> mean(c), invstd(c);
  if (opt.training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = in.raw() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(m);
      double v = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = in.raw() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      v /= static_cast<double>(m);
      mean[ch] = mu;
      invstd[ch] = 1.0 / std::sqrt(v + opt.eps);
      if (opt.update_running_stats) {
        const double unbiased = m > 1 ? v * static_cast<double>(m) / static_cast<double>(m - 1) : v;
        stats.mean[ch] = (1.0 - opt.momentum) * stats.mean[ch] + opt.momentum * mu;
        stats.var[ch] = (1.0 - opt.momentum) * stats.var[ch] + opt.momentum * unbiased;
      }
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = stats.mean[ch];
      invstd[ch] = 1.0 / std::sqrt(stats.var[ch] + opt.eps);
    }
  }

  Tensor xhat(in.shape());
  Tensor out(in.shape());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * plane;
      const double g = affine ? gamma.value()[ch] : 1.0;
      const double sh = affine ? beta.value()[ch] : 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xh = (in[base + i] - mean[ch]) * invstd[ch];
        xhat[base + i] = xh;
        out[base + i] = g * xh + sh;
      }
    }
  }

  std::vector<std::size_t> inputs{x.id()};
  if (affine) {
    inputs.push_back(gamma.id());
    inputs.push_back(beta.id());
  }
  const std::size_t xi = x.id();
  const std::size_t gi = affine ? gamma.id() : 0, bi = affine ? beta.id() : 0;
  const bool training = opt.training;
  return x.tape().record(
      std::move(out), inputs,
      [xi, gi, bi, affine, training, n, c, plane, m, invstd, xhat = std::move(xhat)](
          Tape& tape, std::size_t self) {
        const Tensor& gy = tape.upstream(self);
        if (affine) {
          const bool need_g = tape.requires_grad(gi), need_b = tape.requires_grad(bi);
          for (std::size_t ch = 0; ch < c; ++ch) {
            double sg = 0.0, sb = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
              const std::size_t base = (b * c + ch) * plane;
              for (std::size_t i = 0; i < plane; ++i) {
                sg += gy[base + i] * xhat[base + i];
                sb += gy[base + i];
              }
            }
            if (need_g) tape.grad_buffer(gi)[ch] += sg;
            if (need_b) tape.grad_buffer(bi)[ch] += sb;
          }
        }
        if (!tape.requires_grad(xi)) return;
        Tensor& gx = tape.grad_buffer(xi);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double g = affine ? tape.value(gi)[ch] : 1.0;
          if (!training) {
            for (std::size_t b = 0; b < n; ++b) {
              const std::size_t base = (b * c + ch) * plane;
              for (std::size_t i = 0; i < plane; ++i) gx[base + i] += gy[base + i] * g * invstd[ch];
            }
            continue;
          }
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t base = (b * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const double d = gy[base + i] * g;
              sum_d += d;
              sum_dx += d * xhat[base + i];
            }
          }
          const double inv_m = 1.0 / static_cast<double>(m);
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t base = (b * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const double d = gy[base + i] * g;
              gx[base + i] += invstd[ch] * (d - inv_m * sum_d - xhat[base + i] * inv_m * sum_dx);
            }
          }
        }
      });
}

}  // namespace goldnas
