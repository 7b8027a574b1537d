#ifndef PANE_IMPL_FORWARD_IMPL_HPP
#define PANE_IMPL_FORWARD_IMPL_HPP

#include <algorithm>
#include <limits>

#include "pane/bytes.hpp"

namespace pane {

namespace kernels {

template <typename Scalar>
std::vector<Scalar> linear(const Linear<Scalar>& l, std::span<const Scalar> x) {
  const std::size_t out = l.weight.extent(0), in = l.weight.extent(1);
  const auto w = l.weight.data();
  std::vector<Scalar> y(out);
  for (std::size_t i = 0; i < out; ++i) {
    Scalar s = 0;
    const Scalar* row = w.data() + i * in;
    for (std::size_t j = 0; j < in; ++j) s += row[j] * x[j];
    y[i] = s;
  }
  return y;
}

template <typename Scalar>
std::vector<Scalar> conv2d(const Conv2d<Scalar>& c, const WindowGeometry& g, std::span<const Scalar> x) {
  std::vector<Scalar> y(g.out_c * g.out_h * g.out_w, Scalar(0));
  const auto k = c.kernel.data();
  const std::size_t s = g.stride;
  for (std::size_t oc = 0; oc < g.out_c; ++oc) {
    Scalar* yc = y.data() + oc * g.out_h * g.out_w;
    for (std::size_t ic = 0; ic < g.in_c; ++ic) {
      const Scalar* xc = x.data() + ic * g.in_h * g.in_w;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const auto [r0, r1] = g.rows_for(ky);
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const auto [c0, c1] = g.cols_for(kx);
          const Scalar w = k[((oc * g.in_c + ic) * g.kh + ky) * g.kw + kx];
          if (w == Scalar(0)) continue;
          for (std::size_t oy = r0; oy < r1; ++oy) {
            const Scalar* xr = xc + (oy * s + ky - g.padding) * g.in_w + kx - g.padding;
            Scalar* yr = yc + oy * g.out_w;
            for (std::size_t ox = c0; ox < c1; ++ox) yr[ox] += w * xr[ox * s];
          }
        }
      }
    }
  }
  return y;
}

template <typename Scalar>
std::vector<Scalar> maxpool(const WindowGeometry& g, std::span<const Scalar> x, std::vector<std::uint32_t>& argmax) {
  const std::size_t n = g.out_c * g.out_h * g.out_w;
  std::vector<Scalar> y(n);
  argmax.assign(n, 0);
  for (std::size_t c = 0; c < g.out_c; ++c)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        std::size_t best = (c * g.in_h + oy * g.stride) * g.in_w + ox * g.stride;
        for (std::size_t ky = 0; ky < g.kh; ++ky)
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const std::size_t at = (c * g.in_h + oy * g.stride + ky) * g.in_w + ox * g.stride + kx;
            if (x[at] > x[best]) best = at;  // strict: ties keep the first in row-major order
          }
        const std::size_t o = (c * g.out_h + oy) * g.out_w + ox;
        y[o] = x[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
  return y;
}

template <typename Scalar>
std::vector<Scalar> avgpool(const WindowGeometry& g, std::span<const Scalar> x) {
  std::vector<Scalar> y(g.out_c * g.out_h * g.out_w);
  const Scalar inv = Scalar(1) / Scalar(g.kh * g.kw);
  for (std::size_t c = 0; c < g.out_c; ++c)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        Scalar s = 0;
        for (std::size_t ky = 0; ky < g.kh; ++ky)
          for (std::size_t kx = 0; kx < g.kw; ++kx)
            s += x[(c * g.in_h + oy * g.stride + ky) * g.in_w + ox * g.stride + kx] * inv;
        y[(c * g.out_h + oy) * g.out_w + ox] = s;
      }
  return y;
}

}  // namespace kernels

template <typename Scalar>
std::uint32_t model_fingerprint(const ModelGraph<Scalar>& model) {
  if (model.source_hash() != 0) return model.source_hash();
  ByteWriter w;
  for (std::size_t e : model.input_shape()) w.u32(static_cast<std::uint32_t>(e));
  const auto put = [&w](const Tensor<Scalar>& t) {
    for (Scalar v : t.data()) w.f64(static_cast<double>(v));
  };
  for (const auto& layer : model.layers()) {
    w.u8(static_cast<std::uint8_t>(layer.kind()));
    std::visit(detail::overloaded{
                   [&](const Linear<Scalar>& l) { put(l.weight); put(l.bias); },
                   [&](const Conv2d<Scalar>& c) {
                     w.u32(static_cast<std::uint32_t>(c.stride));
                     w.u32(static_cast<std::uint32_t>(c.padding));
                     put(c.kernel);
                     put(c.bias);
                   },
                   [&](const BatchNorm<Scalar>& b) {
                     w.f64(static_cast<double>(b.eps));
                     put(b.gamma); put(b.beta); put(b.mean); put(b.var);
                   },
                   [&](const MaxPool2d& p) { w.u32(p.kh); w.u32(p.kw); w.u32(p.stride); },
                   [&](const AvgPool2d& p) { w.u32(p.kh); w.u32(p.kw); w.u32(p.stride); },
                   [](const ReLU&) {},
                   [](const Flatten&) {},
               },
               layer.params);
  }
  return crc32(w.buffer());
}

template <typename Scalar>
ForwardTrace<Scalar> forward(const ModelGraph<Scalar>& model, const Tensor<Scalar>& x, ForwardOptions options) {
  if (x.shape() != model.input_shape()) {
    throw ShapeError("input shape " + shape_string(x.shape()) + " does not match model input " +
                     shape_string(model.input_shape()));
  }
  ForwardTrace<Scalar> trace;
  const std::size_t n_layers = model.depth();
  trace.outputs.reserve(n_layers + 1);
  trace.prebias_.resize(n_layers);
  trace.argmax.resize(n_layers);
  trace.model_hash = model_fingerprint(model);
  trace.input_hash = crc32(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(x.data().data()),
                                                         x.size() * sizeof(Scalar)));
  trace.outputs.push_back(x);

  for (std::size_t n = 0; n < n_layers; ++n) {
    const auto& layer = model.layer(n);
    const Tensor<Scalar>& in = trace.outputs.back();
    const auto xs = in.data();
    const Shape& out_shape = model.boundaries()[n + 1];
    std::vector<Scalar> out;
    std::visit(detail::overloaded{
                   [&](const Linear<Scalar>& l) {
                     auto pre = kernels::linear(l, xs);
                     out = pre;
                     for (std::size_t i = 0; i < out.size(); ++i) out[i] += l.bias[i];
                     trace.prebias_[n] = Tensor<Scalar>(out_shape, std::move(pre), Check::none);
                   },
                   [&](const Conv2d<Scalar>& c) {
                     const auto g = window_geometry(layer, in.shape());
                     auto pre = kernels::conv2d(c, g, xs);
                     out = pre;
                     const std::size_t plane = g.out_h * g.out_w;
                     for (std::size_t oc = 0; oc < g.out_c; ++oc)
                       for (std::size_t p = 0; p < plane; ++p) out[oc * plane + p] += c.bias[oc];
                     trace.prebias_[n] = Tensor<Scalar>(out_shape, std::move(pre), Check::none);
                   },
                   [&](const BatchNorm<Scalar>& b) {
                     const std::size_t channels = b.gamma.size();
                     const std::size_t per = in.size() / channels;
                     std::vector<Scalar> pre(in.size());
                     out.resize(in.size());
                     for (std::size_t c = 0; c < channels; ++c) {
                       const Scalar w = b.slope(c), shift = b.intercept(c);
                       for (std::size_t p = 0; p < per; ++p) {
                         pre[c * per + p] = w * xs[c * per + p];
                         out[c * per + p] = pre[c * per + p] + shift;
                       }
                     }
                     trace.prebias_[n] = Tensor<Scalar>(out_shape, std::move(pre), Check::none);
                   },
                   [&](const ReLU&) {
                     out.resize(in.size());
                     for (std::size_t i = 0; i < out.size(); ++i) out[i] = xs[i] > Scalar(0) ? xs[i] : Scalar(0);
                   },
                   [&](const MaxPool2d&) {
                     out = kernels::maxpool(window_geometry(layer, in.shape()), xs, trace.argmax[n]);
                   },
                   [&](const AvgPool2d&) { out = kernels::avgpool(window_geometry(layer, in.shape()), xs); },
                   [&](const Flatten&) { out.assign(xs.begin(), xs.end()); },
               },
               layer.params);
    Tensor<Scalar> result(out_shape, std::move(out), Check::none);
    if (options.checked && !all_finite(result)) {
      throw NumericError("non-finite activation after layer " + std::to_string(n) + " ('" + layer.name + "')");
    }
    trace.outputs.push_back(std::move(result));
  }
  return trace;
}

template <typename Scalar>
Tensor<double> softmax(const Tensor<Scalar>& logits) {
  if (logits.rank() != 1 || logits.empty()) throw ShapeError("softmax expects a non-empty [K] vector");
  double hi = -std::numeric_limits<double>::infinity();
  for (Scalar v : logits.data()) hi = std::max(hi, static_cast<double>(v));
  std::vector<double> p(logits.size());
  double z = 0;
  for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(static_cast<double>(logits[i]) - hi);
  for (auto& v : p) v /= z;
  return Tensor<double>(logits.shape(), std::move(p));
}

}  // namespace pane

#endif  // PANE_IMPL_FORWARD_IMPL_HPP
