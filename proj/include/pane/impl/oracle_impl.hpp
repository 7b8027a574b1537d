#ifndef PANE_IMPL_ORACLE_IMPL_HPP
#define PANE_IMPL_ORACLE_IMPL_HPP

namespace pane {

/// Explicit im2col expansion: row = output position, column = (ic, ky, kx).
struct Im2col {
  Eigen::MatrixXd values;
  /// Flat input index feeding each entry, -1 for padded taps.
  Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic> source;
};

template <typename Scalar>
Im2col im2col(const Tensor<Scalar>& x, const WindowGeometry& g) {
  const long rows = static_cast<long>(g.out_h * g.out_w);
  const long cols = static_cast<long>(g.in_c * g.kh * g.kw);
  Im2col m{Eigen::MatrixXd::Zero(rows, cols), Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>::Constant(rows, cols, -1)};
  for (std::size_t oy = 0; oy < g.out_h; ++oy)
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const long row = static_cast<long>(oy * g.out_w + ox);
      for (std::size_t ic = 0; ic < g.in_c; ++ic)
        for (std::size_t ky = 0; ky < g.kh; ++ky)
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const long col = static_cast<long>((ic * g.kh + ky) * g.kw + kx);
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) || ix >= static_cast<long>(g.in_w)) continue;
            const long j = (static_cast<long>(ic) * static_cast<long>(g.in_h) + iy) * static_cast<long>(g.in_w) + ix;
            m.values(row, col) = x[static_cast<std::size_t>(j)];
            m.source(row, col) = j;
          }
    }
  return m;
}

namespace detail {

inline void place(DensePair& a, Excitation e, long i, long j, double w) {
  if (e == Excitation::positive) a.first(i, j) += w;
  if (e == Excitation::negative) a.second(i, j) += w;
}

}  // namespace detail

template <typename Scalar>
DensePair local_split(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace, std::size_t n) {
  const auto& layer = model.layer(n);
  const auto& x = trace.input(n);
  const auto& pre = trace.prebias(n);
  const long rows = static_cast<long>(element_count(model.boundaries()[n + 1]));
  const long cols = static_cast<long>(x.size());
  DensePair a{Eigen::MatrixXd::Zero(rows, cols), Eigen::MatrixXd::Zero(rows, cols)};

  std::visit(
      detail::overloaded{
          [&](const Linear<Scalar>& l) {
            for (long i = 0; i < rows; ++i)
              for (long j = 0; j < cols; ++j) {
                const double w = l.weight.at({std::size_t(i), std::size_t(j)});
                detail::place(a, classify_term(w * double(x[j]), double(pre[i])), i, j, w);
              }
          },
          [&](const Conv2d<Scalar>& c) {
            const auto g = geometry_of(c, x.shape());
            const auto cols_m = im2col(x, g);
            const long positions = static_cast<long>(g.out_h * g.out_w);
            const long taps = static_cast<long>(g.in_c * g.kh * g.kw);
            for (std::size_t oc = 0; oc < g.out_c; ++oc)
              for (long p = 0; p < positions; ++p) {
                const long i = static_cast<long>(oc) * positions + p;
                for (long l = 0; l < taps; ++l) {
                  const long j = cols_m.source(p, l);
                  if (j < 0) continue;  // padded tap: zero term
                  const double w = c.kernel[oc * std::size_t(taps) + std::size_t(l)];
                  detail::place(a, classify_term(w * cols_m.values(p, l), double(pre[i])), i, j, w);
                }
              }
          },
          [&](const ReLU&) {
            for (long i = 0; i < rows; ++i)
              if (x[i] > Scalar(0)) a.first(i, i) = 1.0;
          },
          [&](const MaxPool2d&) {
            const auto& arg = trace.argmax[n];
            for (long i = 0; i < rows; ++i) {
              const long j = arg[i];
              detail::place(a, classify_term(double(x[j]), double(pre[i])), i, j, 1.0);
            }
          },
          [&](const AvgPool2d& p) {
            const auto g = geometry_of(p, x.shape());
            const double w = 1.0 / double(g.kh * g.kw);
            for (std::size_t c = 0; c < g.out_c; ++c)
              for (std::size_t oy = 0; oy < g.out_h; ++oy)
                for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                  const long i = static_cast<long>((c * g.out_h + oy) * g.out_w + ox);
                  for (std::size_t ky = 0; ky < g.kh; ++ky)
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                      const long j = static_cast<long>((c * g.in_h + oy * g.stride + ky) * g.in_w + ox * g.stride + kx);
                      detail::place(a, classify_term(w * double(x[j]), double(pre[i])), i, j, w);
                    }
                }
          },
          [&](const BatchNorm<Scalar>& b) {
            const long per = cols / static_cast<long>(b.gamma.size());
            for (long i = 0; i < rows; ++i) {
              const double w = b.slope(static_cast<std::size_t>(i / per));
              detail::place(a, classify_term(w * double(x[i]), double(pre[i])), i, i, w);
            }
          },
          [&](const Flatten&) { a.first.setIdentity(); },
      },
      layer.params);
  return a;
}

template <typename Scalar>
ExcitationPair dense_oracle(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace, std::size_t k) {
  check_trace(model, trace);
  if (k >= model.class_count()) throw ArgumentError("class index out of range");
  for (const auto& b : model.boundaries())
    if (element_count(b) > 4096) throw ArgumentError("dense oracle limited to boundaries of <= 4096 elements");

  DensePair e = local_split(model, trace, 0);
  for (std::size_t n = 1; n < model.depth(); ++n) {
    const DensePair a = local_split(model, trace, n);
    Eigen::MatrixXd pos = a.first * e.first + a.second * e.second;
    Eigen::MatrixXd neg = a.first * e.second + a.second * e.first;
    e = {std::move(pos), std::move(neg)};
  }
  const Shape& in = model.input_shape();
  const auto row = [&](const Eigen::MatrixXd& m) {
    std::vector<double> v(static_cast<std::size_t>(m.cols()));
    for (long c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(static_cast<long>(k), c);
    return Tensor<double>(in, std::move(v));
  };
  return {row(e.first), row(e.second), k, trace.model_hash, trace.trace_hash()};
}

}  // namespace pane

#endif  // PANE_IMPL_ORACLE_IMPL_HPP
