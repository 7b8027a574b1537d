#ifndef PANE_TENSOR_HPP
#define PANE_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "pane/error.hpp"

namespace pane {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Row-major strides for `shape`.
inline std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

enum class Check { finite, none };

/**
 * Dense row-major tensor.
 *
 * Immutable after construction: every operation returns a new tensor. Build
 * contents in a std::vector and hand it over; pass Check::none on hot paths
 * where finiteness is validated elsewhere.
 */
template <typename Scalar>
class Tensor {
  static_assert(std::is_floating_point_v<Scalar>);

 public:
  using value_type = Scalar;

  Tensor() = default;

  /// Zero tensor.
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(element_count(shape_), Scalar(0)) {}

  Tensor(Shape shape, std::vector<Scalar> data, Check check = Check::finite)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size()) {
      throw ShapeError("tensor shape " + shape_string(shape_) + " holds " +
                       std::to_string(element_count(shape_)) + " elements, got " +
                       std::to_string(data_.size()));
    }
    if (check == Check::finite) {
      for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
          throw NumericError("non-finite tensor entry at flat index " + std::to_string(i));
        }
      }
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const Scalar> data() const noexcept { return data_; }
  const std::vector<Scalar>& values() const noexcept { return data_; }

  Scalar operator[](std::size_t flat) const { return data_[flat]; }

  /// Element at a multi-index; bounds-checked.
  Scalar at(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) throw ShapeError("index rank mismatch");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
      if (i >= shape_[axis]) throw ShapeError("index out of range on axis " + std::to_string(axis));
      flat = flat * shape_[axis] + i;
      ++axis;
    }
    return data_[flat];
  }

  template <typename Other>
  Tensor<Other> cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return Tensor<Other>(shape_, std::move(out), Check::none);
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<Scalar> data_;
};

template <typename Scalar>
Tensor<Scalar> tensor_new(Shape shape, std::vector<Scalar> data) {
  return Tensor<Scalar>(std::move(shape), std::move(data));
}

/// Same flat data under a new shape.
template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& t, Shape shape) {
  if (element_count(shape) != t.size()) {
    throw ShapeError("cannot reshape " + shape_string(t.shape()) + " to " + shape_string(shape));
  }
  return Tensor<Scalar>(std::move(shape), t.values(), Check::none);
}

enum class BinOp { add, sub, mul };

template <typename Scalar>
Tensor<Scalar> binop(const Tensor<Scalar>& a, const Tensor<Scalar>& b, BinOp op) {
  if (a.shape() != b.shape()) {
    throw ShapeError("elementwise op on " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  std::vector<Scalar> out(a.size());
  const auto x = a.data();
  const auto y = b.data();
  switch (op) {
    case BinOp::add:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
      break;
    case BinOp::sub:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
      break;
    case BinOp::mul:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
      break;
  }
  return Tensor<Scalar>(a.shape(), std::move(out), Check::none);
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binop(a, b, BinOp::add);
}
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binop(a, b, BinOp::sub);
}
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binop(a, b, BinOp::mul);
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& t, Scalar alpha) {
  std::vector<Scalar> out(t.values());
  for (auto& v : out) v *= alpha;
  return Tensor<Scalar>(t.shape(), std::move(out), Check::none);
}

/// Flat inner product, accumulated in double.
template <typename A, typename B>
double dot(const Tensor<A>& a, const Tensor<B>& b) {
  if (a.size() != b.size()) throw ShapeError("dot of tensors with different sizes");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

template <typename Scalar>
bool all_finite(const Tensor<Scalar>& t) {
  for (Scalar v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

// Raw tensor file: "PTNSR1", u8 dtype (0=f32, 1=f64), u8 rank, rank x u32
// extents, little-endian payload.

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

std::vector<std::uint8_t> encode_tensor(const Tensor<float>& t);
std::vector<std::uint8_t> encode_tensor(const Tensor<double>& t);

/// Decodes either dtype, widening f32 payloads to double.
Tensor<double> decode_tensor(std::span<const std::uint8_t> bytes, DType* stored = nullptr);

}  // namespace pane

#endif  // PANE_TENSOR_HPP
