#ifndef PANE_GRAD_HPP
#define PANE_GRAD_HPP

#include <functional>
#include <optional>

#include "pane/forward.hpp"

namespace pane {

enum class GradMode { plain, guided };

/// Called at every ReLU site with the gradient leaving that ReLU (towards the input).
using ReluProbe = std::function<void(std::size_t layer, std::span<const double> grad)>;

/**
 * Reverse-mode pass over a recorded trace.
 *
 * `seed` is dL/dO_N; the result is dL/dO_stop where boundary `stop` is 0 for
 * the input and n+1 for the output of layer n. Accumulates in double. Max-pool
 * routes through the recorded argmax; guided mode also clamps the upstream
 * gradient at zero from below at every ReLU.
 */
template <typename Scalar>
Tensor<double> backward(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace,
                        const Tensor<double>& seed, GradMode mode = GradMode::plain, std::size_t stop = 0,
                        const ReluProbe& probe = {});

/// Seed for dO_N[k]; throws ArgumentError for k >= K.
inline Tensor<double> one_hot(std::size_t k, std::size_t classes) {
  if (k >= classes) {
    throw ArgumentError("class index " + std::to_string(k) + " out of range for " + std::to_string(classes) +
                        " classes");
  }
  std::vector<double> v(classes, 0.0);
  v[k] = 1.0;
  return Tensor<double>({classes}, std::move(v));
}

/// dO_N[k]/dX.
template <typename Scalar>
Tensor<double> backward_input_grad(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace,
                                   std::size_t k) {
  return backward(model, trace, one_hot(k, model.class_count()), GradMode::plain);
}

/// Guided backpropagation: dO_N[k]/dX with both ReLU gates.
template <typename Scalar>
Tensor<double> guided_backward(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace,
                               std::size_t k, const ReluProbe& probe = {}) {
  return backward(model, trace, one_hot(k, model.class_count()), GradMode::guided, 0, probe);
}

/// dO_N[k]/dO_tap for a conv layer `tap`, shaped like that feature map.
template <typename Scalar>
Tensor<double> feature_grad(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace, std::size_t k,
                            std::size_t tap) {
  if (tap >= model.depth() || model.layer(tap).kind() != LayerKind::conv2d) {
    throw ArgumentError("feature tap " + std::to_string(tap) + " is not a conv layer");
  }
  return backward(model, trace, one_hot(k, model.class_count()), GradMode::plain, tap + 1);
}

/// Index of the last conv layer, if any.
template <typename Scalar>
std::optional<std::size_t> last_conv_layer(const ModelGraph<Scalar>& model) {
  for (std::size_t n = model.depth(); n-- > 0;)
    if (model.layer(n).kind() == LayerKind::conv2d) return n;
  return std::nullopt;
}

template <typename Scalar>
Tensor<double> backward(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace,
                        const Tensor<double>& seed, GradMode mode, std::size_t stop, const ReluProbe& probe) {
  if (trace.depth() != model.depth()) throw ShapeError("trace depth does not match model");
  if (seed.shape() != model.boundaries().back()) throw ShapeError("gradient seed must match the logit shape");
  if (stop > model.depth()) throw ArgumentError("stop boundary out of range");

  std::vector<double> g(seed.values());
  for (std::size_t n = model.depth(); n-- > stop;) {
    const auto& layer = model.layer(n);
    const auto& xin = trace.input(n);
    const auto x = xin.data();
    std::vector<double> gx;
    std::visit(
        detail::overloaded{
            [&](const Linear<Scalar>& l) {
              const std::size_t out = l.weight.extent(0), in = l.weight.extent(1);
              const auto w = l.weight.data();
              gx.assign(in, 0.0);
              for (std::size_t i = 0; i < out; ++i) {
                const double gi = g[i];
                if (gi == 0.0) continue;
                const Scalar* row = w.data() + i * in;
                for (std::size_t j = 0; j < in; ++j) gx[j] += gi * double(row[j]);
              }
            },
            [&](const Conv2d<Scalar>& c) {
              const auto geo = geometry_of(c, xin.shape());
              const auto k = c.kernel.data();
              gx.assign(xin.size(), 0.0);
              const std::size_t s = geo.stride;
              for (std::size_t oc = 0; oc < geo.out_c; ++oc) {
                const double* gc = g.data() + oc * geo.out_h * geo.out_w;
                for (std::size_t ic = 0; ic < geo.in_c; ++ic) {
                  double* xc = gx.data() + ic * geo.in_h * geo.in_w;
                  for (std::size_t ky = 0; ky < geo.kh; ++ky) {
                    const auto [r0, r1] = geo.rows_for(ky);
                    for (std::size_t kx = 0; kx < geo.kw; ++kx) {
                      const auto [c0, c1] = geo.cols_for(kx);
                      const double w = k[((oc * geo.in_c + ic) * geo.kh + ky) * geo.kw + kx];
                      if (w == 0.0) continue;
                      for (std::size_t oy = r0; oy < r1; ++oy) {
                        double* xr = xc + (oy * s + ky - geo.padding) * geo.in_w + kx - geo.padding;
                        const double* gr = gc + oy * geo.out_w;
                        for (std::size_t ox = c0; ox < c1; ++ox) xr[ox * s] += w * gr[ox];
                      }
                    }
                  }
                }
              }
            },
            [&](const ReLU&) {
              gx.resize(g.size());
              for (std::size_t i = 0; i < g.size(); ++i) {
                double v = x[i] > Scalar(0) ? g[i] : 0.0;
                if (mode == GradMode::guided && v < 0.0) v = 0.0;
                gx[i] = v;
              }
              if (probe) probe(n, gx);
            },
            [&](const MaxPool2d&) {
              gx.assign(xin.size(), 0.0);
              const auto& arg = trace.argmax[n];
              for (std::size_t o = 0; o < g.size(); ++o) gx[arg[o]] += g[o];
            },
            [&](const AvgPool2d& p) {
              const auto geo = geometry_of(p, xin.shape());
              gx.assign(xin.size(), 0.0);
              const double inv = 1.0 / double(geo.kh * geo.kw);
              for (std::size_t c = 0; c < geo.out_c; ++c)
                for (std::size_t oy = 0; oy < geo.out_h; ++oy)
                  for (std::size_t ox = 0; ox < geo.out_w; ++ox) {
                    const double v = g[(c * geo.out_h + oy) * geo.out_w + ox] * inv;
                    for (std::size_t ky = 0; ky < geo.kh; ++ky)
                      for (std::size_t kx = 0; kx < geo.kw; ++kx)
                        gx[(c * geo.in_h + oy * geo.stride + ky) * geo.in_w + ox * geo.stride + kx] += v;
                  }
            },
            [&](const BatchNorm<Scalar>& b) {
              const std::size_t channels = b.gamma.size(), per = g.size() / channels;
              gx.resize(g.size());
              for (std::size_t c = 0; c < channels; ++c) {
                const double w = b.slope(c);
                for (std::size_t p = 0; p < per; ++p) gx[c * per + p] = g[c * per + p] * w;
              }
            },
            [&](const Flatten&) { gx = g; },
        },
        layer.params);
    g = std::move(gx);
  }
  return Tensor<double>(model.boundaries()[stop], std::move(g), Check::none);
}

}  // namespace pane

#endif  // PANE_GRAD_HPP
