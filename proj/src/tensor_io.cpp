#include <bit>

#include "pane/bytes.hpp"
#include "pane/tensor.hpp"

namespace pane {

namespace {

static_assert(std::endian::native == std::endian::little, "payloads are written as host floats");

constexpr std::string_view kMagic = "PTNSR1";

template <typename Scalar>
std::vector<std::uint8_t> encode(const Tensor<Scalar>& t, DType dtype) {
  if (t.rank() > 255) throw ShapeError("tensor rank exceeds 255");
  ByteWriter w;
  w.bytes(kMagic);
  w.u8(static_cast<std::uint8_t>(dtype));
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t e : t.shape()) {
    if (e > 0xFFFFFFFFu) throw ShapeError("tensor extent exceeds u32");
    w.u32(static_cast<std::uint32_t>(e));
  }
  w.raw(t.data().data(), t.size() * sizeof(Scalar));
  return w.take();
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor<float>& t) { return encode(t, DType::f32); }
std::vector<std::uint8_t> encode_tensor(const Tensor<double>& t) { return encode(t, DType::f64); }

Tensor<double> decode_tensor(std::span<const std::uint8_t> bytes, DType* stored) {
  ByteReader r(bytes);
  if (r.remaining() < kMagic.size() || r.string(kMagic.size()) != kMagic) {
    throw FormatError("bad tensor magic (expected PTNSR1)");
  }
  const auto code = r.u8();
  if (code > 1) throw FormatError("unknown tensor dtype code " + std::to_string(code));
  const auto dtype = static_cast<DType>(code);
  const std::size_t rank = r.u8();
  Shape shape(rank);
  for (auto& e : shape) e = r.u32();
  const std::size_t n = element_count(shape);
  std::vector<double> data(n);
  if (dtype == DType::f32) {
    r.need(n * sizeof(float));
    for (auto& v : data) v = r.f32();
  } else {
    r.need(n * sizeof(double));
    for (auto& v : data) v = r.f64();
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after tensor payload");
  if (stored) *stored = dtype;
  return Tensor<double>(std::move(shape), std::move(data));
}

}  // namespace pane
