#ifndef PANE_MODEL_HPP
#define PANE_MODEL_HPP

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pane/tensor.hpp"

namespace pane {

/// Kind codes as stored in the weight file.
enum class LayerKind : std::uint8_t {
  linear = 1,
  conv2d = 2,
  relu = 3,
  maxpool = 4,
  avgpool = 5,
  batchnorm = 6,
  flatten = 7,
};

const char* kind_name(LayerKind kind);

template <typename Scalar>
struct Linear {
  Tensor<Scalar> weight;  // [out, in]
  Tensor<Scalar> bias;    // [out]
};

template <typename Scalar>
struct Conv2d {
  Tensor<Scalar> kernel;  // [out_c, in_c, kh, kw]
  Tensor<Scalar> bias;    // [out_c]
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct ReLU {};

struct MaxPool2d {
  std::size_t kh = 2, kw = 2, stride = 2;
};

struct AvgPool2d {
  std::size_t kh = 2, kw = 2, stride = 2;
};

/// Inference-mode batch norm, y = (x - mean) / (sqrt(var) + eps) * gamma + beta,
/// per channel (axis 0 of the input).
template <typename Scalar>
struct BatchNorm {
  Tensor<Scalar> gamma, beta, mean, var;
  Scalar eps = Scalar(1e-5);

  /// Per-channel slope w' and intercept b' of the folded affine map.
  Scalar slope(std::size_t c) const { return gamma[c] / (std::sqrt(var[c]) + eps); }
  Scalar intercept(std::size_t c) const { return beta[c] - mean[c] * slope(c); }
};

struct Flatten {};

template <typename Scalar>
using LayerParams =
    std::variant<Linear<Scalar>, Conv2d<Scalar>, ReLU, MaxPool2d, AvgPool2d, BatchNorm<Scalar>, Flatten>;

template <typename Scalar>
struct Layer {
  std::string name;
  LayerParams<Scalar> params;

  LayerKind kind() const {
    constexpr LayerKind kinds[] = {LayerKind::linear,  LayerKind::conv2d,    LayerKind::relu,
                                   LayerKind::maxpool, LayerKind::avgpool,   LayerKind::batchnorm,
                                   LayerKind::flatten};
    return kinds[params.index()];
  }

  /// Layers whose output carries a bias/shift term on top of Y'.
  bool affine() const {
    return std::holds_alternative<Linear<Scalar>>(params) ||
           std::holds_alternative<Conv2d<Scalar>>(params) ||
           std::holds_alternative<BatchNorm<Scalar>>(params);
  }

  template <typename T>
  Layer<T> cast() const;
};

/// Spatial geometry of a sliding-window layer (conv or pool) at a given input.
struct WindowGeometry {
  std::size_t in_c = 0, in_h = 0, in_w = 0;
  std::size_t out_c = 0, out_h = 0, out_w = 0;
  std::size_t kh = 1, kw = 1, stride = 1, padding = 0;

  /// Output rows [lo, hi) whose window row offset `k` lands inside the input.
  std::pair<std::size_t, std::size_t> rows_for(std::size_t k) const { return range(k, in_h, out_h); }
  std::pair<std::size_t, std::size_t> cols_for(std::size_t k) const { return range(k, in_w, out_w); }

 private:
  std::pair<std::size_t, std::size_t> range(std::size_t k, std::size_t in, std::size_t out) const {
    // valid o satisfies 0 <= o*s + k - p < in
    const long s = static_cast<long>(stride);
    const long off = static_cast<long>(k) - static_cast<long>(padding);
    long lo = off >= 0 ? 0 : (-off + s - 1) / s;
    long hi = (static_cast<long>(in) - 1 - off);
    hi = hi < 0 ? 0 : hi / s + 1;
    if (hi > static_cast<long>(out)) hi = static_cast<long>(out);
    if (lo > hi) lo = hi;
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
  }
};

/// Output extent of one axis: floor((in - k + 2p) / s) + 1.
std::size_t window_output_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t padding);

template <typename Scalar>
WindowGeometry window_geometry(const Layer<Scalar>& layer, const Shape& in);

/// Output shape of `layer` applied to an input of shape `in`; throws ShapeError.
template <typename Scalar>
Shape output_shape(const Layer<Scalar>& layer, const Shape& in);

/**
 * Ordered layer stack with a fixed input shape.
 *
 * `boundaries()[n]` is the shape of O_n (boundaries()[0] is the input); the
 * last boundary is the [K] logit vector.
 */
template <typename Scalar>
class ModelGraph {
 public:
  using scalar_type = Scalar;

  ModelGraph() = default;
  /// Validates parameters and the shape chain.
  ModelGraph(std::vector<Layer<Scalar>> layers, Shape input_shape, std::string name = {},
             std::uint32_t source_hash = 0);

  const std::vector<Layer<Scalar>>& layers() const noexcept { return layers_; }
  const Layer<Scalar>& layer(std::size_t n) const { return layers_.at(n); }
  std::size_t depth() const noexcept { return layers_.size(); }
  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<Shape>& boundaries() const noexcept { return boundaries_; }
  std::size_t class_count() const { return boundaries_.back()[0]; }
  const std::string& name() const noexcept { return name_; }
  std::uint32_t source_hash() const noexcept { return source_hash_; }

  template <typename T>
  ModelGraph<T> cast() const;

 private:
  std::vector<Layer<Scalar>> layers_;
  Shape input_shape_;
  std::vector<Shape> boundaries_;
  std::string name_;
  std::uint32_t source_hash_ = 0;
};

// Weight file (PANEW001), little-endian:
//   magic "PANEW001"; u32 layer count; u32 C, H, W (input shape);
//   per layer: u8 kind; u16 name length; name bytes; kind header; f32 payloads
//     Linear    header u32 out, in;                        payload weight, bias
//     Conv2d    header u32 out, in, kh, kw, stride, pad;   payload weight, bias
//     MaxPool / AvgPool header u32 kh, kw, stride
//     BatchNorm header u32 channels, f32 eps;              payload gamma, beta, mean, var
//     ReLU / Flatten: no header
//   u32 CRC32 of every preceding byte.

/// Parses and validates a weight file; source hash is the stored CRC.
ModelGraph<double> load_model(std::span<const std::uint8_t> bytes);
ModelGraph<double> load_model_file(const std::string& path);

/// Serializes a model (parameters rounded to f32).
std::vector<std::uint8_t> save_model(const ModelGraph<double>& model);

}  // namespace pane

#include "pane/impl/model_impl.hpp"

#endif  // PANE_MODEL_HPP
