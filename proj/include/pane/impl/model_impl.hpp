#ifndef PANE_IMPL_MODEL_IMPL_HPP
#define PANE_IMPL_MODEL_IMPL_HPP

// Template definitions for model.hpp.

namespace pane {

namespace detail {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace detail

template <typename Scalar>
template <typename T>
Layer<T> Layer<Scalar>::cast() const {
  Layer<T> out;
  out.name = name;
  out.params = std::visit(
      detail::overloaded{
          [](const Linear<Scalar>& l) -> LayerParams<T> {
            return Linear<T>{l.weight.template cast<T>(), l.bias.template cast<T>()};
          },
          [](const Conv2d<Scalar>& c) -> LayerParams<T> {
            return Conv2d<T>{c.kernel.template cast<T>(), c.bias.template cast<T>(), c.stride, c.padding};
          },
          [](const BatchNorm<Scalar>& b) -> LayerParams<T> {
            return BatchNorm<T>{b.gamma.template cast<T>(), b.beta.template cast<T>(),
                                b.mean.template cast<T>(), b.var.template cast<T>(), static_cast<T>(b.eps)};
          },
          [](const ReLU& r) -> LayerParams<T> { return r; },
          [](const MaxPool2d& p) -> LayerParams<T> { return p; },
          [](const AvgPool2d& p) -> LayerParams<T> { return p; },
          [](const Flatten& f) -> LayerParams<T> { return f; },
      },
      params);
  return out;
}

inline std::size_t window_output_extent(std::size_t in, std::size_t k, std::size_t stride,
                                        std::size_t padding) {
  if (stride == 0) throw ShapeError("stride must be >= 1");
  if (k == 0) throw ShapeError("window extent must be >= 1");
  if (in + 2 * padding < k) {
    throw ShapeError("window " + std::to_string(k) + " larger than padded input " +
                     std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - k) / stride + 1;
}

namespace detail {

inline WindowGeometry base_geometry(const Shape& in, std::size_t kh, std::size_t kw, std::size_t stride,
                                    std::size_t padding) {
  require(in.size() == 3, "window layer expects a [C,H,W] input, got " + shape_string(in));
  WindowGeometry g;
  g.in_c = g.out_c = in[0];
  g.in_h = in[1];
  g.in_w = in[2];
  g.kh = kh;
  g.kw = kw;
  g.stride = stride;
  g.padding = padding;
  g.out_h = window_output_extent(g.in_h, kh, stride, padding);
  g.out_w = window_output_extent(g.in_w, kw, stride, padding);
  return g;
}

}  // namespace detail

template <typename Scalar>
WindowGeometry geometry_of(const Conv2d<Scalar>& c, const Shape& in) {
  auto g = detail::base_geometry(in, c.kernel.extent(2), c.kernel.extent(3), c.stride, c.padding);
  detail::require(c.kernel.extent(1) == g.in_c, "conv expects " + std::to_string(c.kernel.extent(1)) +
                                                    " input channels, got " + std::to_string(g.in_c));
  g.out_c = c.kernel.extent(0);
  return g;
}

inline WindowGeometry geometry_of(const MaxPool2d& p, const Shape& in) {
  return detail::base_geometry(in, p.kh, p.kw, p.stride, 0);
}

inline WindowGeometry geometry_of(const AvgPool2d& p, const Shape& in) {
  return detail::base_geometry(in, p.kh, p.kw, p.stride, 0);
}

template <typename Scalar>
WindowGeometry window_geometry(const Layer<Scalar>& layer, const Shape& in) {
  if (const auto* c = std::get_if<Conv2d<Scalar>>(&layer.params)) return geometry_of(*c, in);
  if (const auto* p = std::get_if<MaxPool2d>(&layer.params)) return geometry_of(*p, in);
  if (const auto* a = std::get_if<AvgPool2d>(&layer.params)) return geometry_of(*a, in);
  throw ShapeError("layer '" + layer.name + "' has no window geometry");
}

template <typename Scalar>
Shape output_shape(const Layer<Scalar>& layer, const Shape& in) {
  using detail::require;
  return std::visit(
      detail::overloaded{
          [&](const Linear<Scalar>& l) -> Shape {
            require(in.size() == 1, "linear '" + layer.name + "' expects a rank-1 input, got " + shape_string(in));
            require(l.weight.extent(1) == in[0], "linear '" + layer.name + "' expects " +
                                                     std::to_string(l.weight.extent(1)) + " inputs, got " +
                                                     std::to_string(in[0]));
            return {l.weight.extent(0)};
          },
          [&](const Conv2d<Scalar>&) -> Shape {
            const auto g = window_geometry(layer, in);
            return {g.out_c, g.out_h, g.out_w};
          },
          [&](const MaxPool2d&) -> Shape {
            const auto g = window_geometry(layer, in);
            return {g.out_c, g.out_h, g.out_w};
          },
          [&](const AvgPool2d&) -> Shape {
            const auto g = window_geometry(layer, in);
            return {g.out_c, g.out_h, g.out_w};
          },
          [&](const BatchNorm<Scalar>& b) -> Shape {
            require(!in.empty() && in[0] == b.gamma.size(),
                    "batchnorm '" + layer.name + "' has " + std::to_string(b.gamma.size()) +
                        " channels, input is " + shape_string(in));
            return in;
          },
          [&](const ReLU&) -> Shape { return in; },
          [&](const Flatten&) -> Shape { return {element_count(in)}; },
      },
      layer.params);
}

namespace detail {

template <typename Scalar>
void validate_params(const Layer<Scalar>& layer) {
  const std::string who = std::string(kind_name(layer.kind())) + " '" + layer.name + "'";
  std::visit(
      overloaded{
          [&](const Linear<Scalar>& l) {
            require(l.weight.rank() == 2, who + ": weight must be [out,in]");
            require(l.bias.rank() == 1 && l.bias.size() == l.weight.extent(0),
                    who + ": bias length " + std::to_string(l.bias.size()) + " != out features " +
                        std::to_string(l.weight.extent(0)));
          },
          [&](const Conv2d<Scalar>& c) {
            require(c.kernel.rank() == 4, who + ": kernel must be [out,in,kh,kw]");
            require(c.bias.rank() == 1 && c.bias.size() == c.kernel.extent(0),
                    who + ": bias length " + std::to_string(c.bias.size()) + " != out channels " +
                        std::to_string(c.kernel.extent(0)));
            require(c.stride >= 1, who + ": stride must be >= 1");
            require(c.kernel.extent(2) >= 1 && c.kernel.extent(3) >= 1, who + ": empty kernel");
          },
          [&](const MaxPool2d& p) {
            require(p.stride >= 1 && p.kh >= 1 && p.kw >= 1, who + ": window and stride must be >= 1");
          },
          [&](const AvgPool2d& p) {
            require(p.stride >= 1 && p.kh >= 1 && p.kw >= 1, who + ": window and stride must be >= 1");
          },
          [&](const BatchNorm<Scalar>& b) {
            const auto n = b.gamma.size();
            require(b.beta.size() == n && b.mean.size() == n && b.var.size() == n,
                    who + ": gamma/beta/mean/var lengths differ");
            require(b.eps > 0, who + ": eps must be > 0");
            for (std::size_t c = 0; c < n; ++c) require(b.var[c] >= 0, who + ": negative running variance");
          },
          [](const ReLU&) {},
          [](const Flatten&) {},
      },
      layer.params);
}

}  // namespace detail

template <typename Scalar>
ModelGraph<Scalar>::ModelGraph(std::vector<Layer<Scalar>> layers, Shape input_shape, std::string name,
                               std::uint32_t source_hash)
    : layers_(std::move(layers)),
      input_shape_(std::move(input_shape)),
      name_(std::move(name)),
      source_hash_(source_hash) {
  if (layers_.empty()) throw ShapeError("model has no layers");
  if (element_count(input_shape_) == 0) throw ShapeError("empty input shape");
  boundaries_.push_back(input_shape_);
  for (const auto& layer : layers_) {
    detail::validate_params(layer);
    boundaries_.push_back(output_shape(layer, boundaries_.back()));
  }
  const Shape& out = boundaries_.back();
  if (out.size() != 1 || out[0] == 0) {
    throw ShapeError("final layer must produce a [K] logit vector, got " + shape_string(out));
  }
}

template <typename Scalar>
template <typename T>
ModelGraph<T> ModelGraph<Scalar>::cast() const {
  std::vector<Layer<T>> layers;
  layers.reserve(layers_.size());
  for (const auto& l : layers_) layers.push_back(l.template cast<T>());
  return ModelGraph<T>(std::move(layers), input_shape_, name_, source_hash_);
}

}  // namespace pane

#endif  // PANE_IMPL_MODEL_IMPL_HPP
