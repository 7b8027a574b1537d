#ifndef PANE_IMPL_EXCITATION_IMPL_HPP
#define PANE_IMPL_EXCITATION_IMPL_HPP

namespace pane {

namespace detail {

inline void require_state(const ChainState& r, const Shape& expected, const char* who) {
  if (r.pos.shape() != expected || r.neg.shape() != expected) {
    throw ShapeError(std::string(who) + ": chain state " + shape_string(r.pos.shape()) + "/" +
                     shape_string(r.neg.shape()) + " does not match layer output " + shape_string(expected));
  }
}

/**
 * Per output cell, the (pos, neg) chain increments for a unit coefficient,
 * split by the sign of the term: `plus_*` for terms > 0, `minus_*` for terms < 0.
 */
struct RoutedCoefficients {
  std::vector<double> plus_pos, plus_neg, minus_pos, minus_neg;

  template <typename Scalar>
  RoutedCoefficients(std::span<const Scalar> o_prebias, const ChainState& r)
      : plus_pos(o_prebias.size()),
        plus_neg(o_prebias.size()),
        minus_pos(o_prebias.size()),
        minus_neg(o_prebias.size()) {
    const auto rp = r.pos.data();
    const auto rn = r.neg.data();
    for (std::size_t i = 0; i < o_prebias.size(); ++i) {
      const Scalar o = o_prebias[i];
      if (o > Scalar(0)) {  // t > 0 positive, t < 0 negative
        plus_pos[i] = rp[i], plus_neg[i] = rn[i];
        minus_pos[i] = rn[i], minus_neg[i] = rp[i];
      } else if (o < Scalar(0)) {  // t > 0 negative, t < 0 positive
        plus_pos[i] = rn[i], plus_neg[i] = rp[i];
        minus_pos[i] = rp[i], minus_neg[i] = rn[i];
      } else {  // zero output: every non-zero term positive
        plus_pos[i] = minus_pos[i] = rp[i];
        plus_neg[i] = minus_neg[i] = rn[i];
      }
    }
  }
};

}  // namespace detail

template <typename Scalar>
ChainState chain_back_linear(const Linear<Scalar>& layer, const Tensor<Scalar>& x, const Tensor<Scalar>& o_prebias,
                             const ChainState& r) {
  const std::size_t out = layer.weight.extent(0), in = layer.weight.extent(1);
  if (x.shape() != Shape{in} || o_prebias.shape() != Shape{out}) {
    throw ShapeError("chain_back_linear: signals do not match a " + std::to_string(out) + "x" +
                     std::to_string(in) + " layer");
  }
  detail::require_state(r, {out}, "chain_back_linear");
  const detail::RoutedCoefficients route(o_prebias.data(), r);
  const auto w = layer.weight.data();
  const auto xs = x.data();
  std::vector<double> up(in, 0.0), un(in, 0.0);
  for (std::size_t i = 0; i < out; ++i) {
    const Scalar* row = w.data() + i * in;
    for (std::size_t j = 0; j < in; ++j) {
      const Scalar wij = row[j], xj = xs[j];
      if (wij == Scalar(0) || xj == Scalar(0)) continue;
      const double wd = wij;
      if ((wij > Scalar(0)) == (xj > Scalar(0))) {
        up[j] += wd * route.plus_pos[i];
        un[j] += wd * route.plus_neg[i];
      } else {
        up[j] += wd * route.minus_pos[i];
        un[j] += wd * route.minus_neg[i];
      }
    }
  }
  return {Tensor<double>(x.shape(), std::move(up), Check::none), Tensor<double>(x.shape(), std::move(un), Check::none)};
}

template <typename Scalar>
ChainState chain_back_conv(const Conv2d<Scalar>& layer, const Tensor<Scalar>& x, const Tensor<Scalar>& o_prebias,
                           const ChainState& r) {
  const auto g = geometry_of(layer, x.shape());
  const Shape out_shape{g.out_c, g.out_h, g.out_w};
  if (o_prebias.shape() != out_shape) throw ShapeError("chain_back_conv: pre-bias output has the wrong shape");
  detail::require_state(r, out_shape, "chain_back_conv");

  const detail::RoutedCoefficients route(o_prebias.data(), r);
  const auto k = layer.kernel.data();
  const auto xs = x.data();
  std::vector<double> up(x.size(), 0.0), un(x.size(), 0.0);
  const std::size_t s = g.stride, plane = g.out_h * g.out_w;

  for (std::size_t oc = 0; oc < g.out_c; ++oc) {
    for (std::size_t ic = 0; ic < g.in_c; ++ic) {
      const Scalar* xc = xs.data() + ic * g.in_h * g.in_w;
      double* upc = up.data() + ic * g.in_h * g.in_w;
      double* unc = un.data() + ic * g.in_h * g.in_w;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const auto [r0, r1] = g.rows_for(ky);
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const auto [c0, c1] = g.cols_for(kx);
          const Scalar w = k[((oc * g.in_c + ic) * g.kh + ky) * g.kw + kx];
          if (w == Scalar(0)) continue;
          const double wd = w;
          // for x > 0 the term has the sign of w, for x < 0 the opposite one
          const bool wpos = w > Scalar(0);
          const double* xpos_p = (wpos ? route.plus_pos : route.minus_pos).data() + oc * plane;
          const double* xpos_n = (wpos ? route.plus_neg : route.minus_neg).data() + oc * plane;
          const double* xneg_p = (wpos ? route.minus_pos : route.plus_pos).data() + oc * plane;
          const double* xneg_n = (wpos ? route.minus_neg : route.plus_neg).data() + oc * plane;
          for (std::size_t oy = r0; oy < r1; ++oy) {
            const std::size_t in_row = (oy * s + ky - g.padding) * g.in_w + kx - g.padding;
            const Scalar* xr = xc + in_row;
            double* upr = upc + in_row;
            double* unr = unc + in_row;
            const std::size_t o = oy * g.out_w;
            for (std::size_t ox = c0; ox < c1; ++ox) {
              const Scalar xv = xr[ox * s];
              const double p = xv > Scalar(0) ? xpos_p[o + ox] : (xv < Scalar(0) ? xneg_p[o + ox] : 0.0);
              const double n = xv > Scalar(0) ? xpos_n[o + ox] : (xv < Scalar(0) ? xneg_n[o + ox] : 0.0);
              upr[ox * s] += wd * p;
              unr[ox * s] += wd * n;
            }
          }
        }
      }
    }
  }
  return {Tensor<double>(x.shape(), std::move(up), Check::none), Tensor<double>(x.shape(), std::move(un), Check::none)};
}

template <typename Scalar>
ChainState chain_back_relu(const Tensor<Scalar>& x, const ChainState& r) {
  detail::require_state(r, x.shape(), "chain_back_relu");
  std::vector<double> up(x.size()), un(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool on = x[i] > Scalar(0);
    up[i] = on ? r.pos[i] : 0.0;
    un[i] = on ? r.neg[i] : 0.0;
  }
  return {Tensor<double>(x.shape(), std::move(up), Check::none), Tensor<double>(x.shape(), std::move(un), Check::none)};
}

template <typename Scalar>
ChainState chain_back_maxpool(const MaxPool2d& layer, const Tensor<Scalar>& x, std::span<const std::uint32_t> argmax,
                              const ChainState& r) {
  const auto g = geometry_of(layer, x.shape());
  detail::require_state(r, {g.out_c, g.out_h, g.out_w}, "chain_back_maxpool");
  if (argmax.size() != r.pos.size()) throw ShapeError("chain_back_maxpool: argmax record has the wrong length");
  std::vector<double> up(x.size(), 0.0), un(x.size(), 0.0);
  for (std::size_t o = 0; o < argmax.size(); ++o) {
    const std::size_t j = argmax[o];
    if (j >= x.size()) throw ShapeError("chain_back_maxpool: argmax index out of range");
    if (x[j] == Scalar(0)) continue;  // zero term
    up[j] += r.pos[o];
    un[j] += r.neg[o];
  }
  return {Tensor<double>(x.shape(), std::move(up), Check::none), Tensor<double>(x.shape(), std::move(un), Check::none)};
}

template <typename Scalar>
ChainState chain_back_avgpool(const AvgPool2d& layer, const Tensor<Scalar>& x, const Tensor<Scalar>& o_prebias,
                              const ChainState& r) {
  const auto g = geometry_of(layer, x.shape());
  const Shape out_shape{g.out_c, g.out_h, g.out_w};
  if (o_prebias.shape() != out_shape) throw ShapeError("chain_back_avgpool: window means have the wrong shape");
  detail::require_state(r, out_shape, "chain_back_avgpool");
  const detail::RoutedCoefficients route(o_prebias.data(), r);
  const double w = 1.0 / double(g.kh * g.kw);
  std::vector<double> up(x.size(), 0.0), un(x.size(), 0.0);
  for (std::size_t c = 0; c < g.out_c; ++c)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const std::size_t o = (c * g.out_h + oy) * g.out_w + ox;
        for (std::size_t ky = 0; ky < g.kh; ++ky)
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const std::size_t j = (c * g.in_h + oy * g.stride + ky) * g.in_w + ox * g.stride + kx;
            if (x[j] > Scalar(0)) {
              up[j] += w * route.plus_pos[o];
              un[j] += w * route.plus_neg[o];
            } else if (x[j] < Scalar(0)) {
              up[j] += w * route.minus_pos[o];
              un[j] += w * route.minus_neg[o];
            }
          }
      }
  return {Tensor<double>(x.shape(), std::move(up), Check::none), Tensor<double>(x.shape(), std::move(un), Check::none)};
}

template <typename Scalar>
ChainState chain_back_bn(const BatchNorm<Scalar>& layer, const Tensor<Scalar>& x, const ChainState& r) {
  detail::require_state(r, x.shape(), "chain_back_bn");
  if (x.rank() == 0 || x.extent(0) != layer.gamma.size()) throw ShapeError("chain_back_bn: channel mismatch");
  const std::size_t channels = layer.gamma.size(), per = x.size() / channels;
  std::vector<double> up(x.size(), 0.0), un(x.size(), 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    const Scalar w = layer.slope(c);
    for (std::size_t p = 0; p < per; ++p) {
      const std::size_t i = c * per + p;
      // the single term w'x is the whole pre-bias output
      switch (classify_factors(w, x[i], static_cast<Scalar>(w * x[i]))) {
        case Excitation::positive:
          up[i] = double(w) * r.pos[i];
          un[i] = double(w) * r.neg[i];
          break;
        case Excitation::negative:
          up[i] = double(w) * r.neg[i];
          un[i] = double(w) * r.pos[i];
          break;
        case Excitation::zero: break;
      }
    }
  }
  return {Tensor<double>(x.shape(), std::move(up), Check::none), Tensor<double>(x.shape(), std::move(un), Check::none)};
}

inline ChainState chain_back_flatten(const Shape& input_shape, const ChainState& r) {
  return {reshape(r.pos, input_shape), reshape(r.neg, input_shape)};
}

template <typename Scalar>
ChainState chain_back(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace, std::size_t n,
                      const ChainState& r) {
  const auto& layer = model.layer(n);
  const auto& x = trace.input(n);
  return std::visit(detail::overloaded{
                        [&](const Linear<Scalar>& l) { return chain_back_linear(l, x, trace.prebias(n), r); },
                        [&](const Conv2d<Scalar>& c) { return chain_back_conv(c, x, trace.prebias(n), r); },
                        [&](const ReLU&) { return chain_back_relu(x, r); },
                        [&](const MaxPool2d& p) { return chain_back_maxpool(p, x, trace.argmax[n], r); },
                        [&](const AvgPool2d& p) { return chain_back_avgpool(p, x, trace.prebias(n), r); },
                        [&](const BatchNorm<Scalar>& b) { return chain_back_bn(b, x, r); },
                        [&](const Flatten&) { return chain_back_flatten(x.shape(), r); },
                    },
                    layer.params);
}

}  // namespace pane

#endif  // PANE_IMPL_EXCITATION_IMPL_HPP
