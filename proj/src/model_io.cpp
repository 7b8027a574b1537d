#include <string_view>

#include "pane/bytes.hpp"
#include "pane/model.hpp"

namespace pane {

const char* kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::linear: return "linear";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::flatten: return "flatten";
  }
  return "unknown";
}

namespace {

constexpr std::string_view kMagic = "PANEW001";

Tensor<double> read_payload(ByteReader& r, Shape shape) {
  const std::size_t n = element_count(shape);
  r.need(n * sizeof(float));
  std::vector<double> data(n);
  for (auto& v : data) v = r.f32();
  return Tensor<double>(std::move(shape), std::move(data));
}

void write_payload(ByteWriter& w, const Tensor<double>& t) {
  for (double v : t.data()) w.f32(static_cast<float>(v));
}

std::uint32_t u32_of(std::size_t v) {
  if (v > 0xFFFFFFFFu) throw ShapeError("value does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

ModelGraph<double> load_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() ||
      std::string_view(reinterpret_cast<const char*>(bytes.data()), kMagic.size()) != kMagic) {
    throw FormatError("bad weight-file magic (expected PANEW001)");
  }
  ByteReader r(bytes);
  r.string(kMagic.size());
  const std::uint32_t count = r.u32();
  Shape input_shape{r.u32(), r.u32(), r.u32()};

  std::vector<Layer<double>> layers;
  layers.reserve(count);
  for (std::uint32_t n = 0; n < count; ++n) {
    const std::size_t at = r.offset();
    const std::uint8_t code = r.u8();
    Layer<double> layer;
    layer.name = r.string(r.u16());
    switch (static_cast<LayerKind>(code)) {
      case LayerKind::linear: {
        const std::size_t out = r.u32(), in = r.u32();
        auto weight = read_payload(r, {out, in});
        auto bias = read_payload(r, {out});
        layer.params = Linear<double>{std::move(weight), std::move(bias)};
        break;
      }
      case LayerKind::conv2d: {
        const std::size_t out = r.u32(), in = r.u32(), kh = r.u32(), kw = r.u32();
        const std::size_t stride = r.u32(), pad = r.u32();
        auto kernel = read_payload(r, {out, in, kh, kw});
        auto bias = read_payload(r, {out});
        layer.params = Conv2d<double>{std::move(kernel), std::move(bias), stride, pad};
        break;
      }
      case LayerKind::relu: layer.params = ReLU{}; break;
      case LayerKind::maxpool: {
        MaxPool2d p;
        p.kh = r.u32();
        p.kw = r.u32();
        p.stride = r.u32();
        layer.params = p;
        break;
      }
      case LayerKind::avgpool: {
        AvgPool2d p;
        p.kh = r.u32();
        p.kw = r.u32();
        p.stride = r.u32();
        layer.params = p;
        break;
      }
      case LayerKind::batchnorm: {
        const std::size_t c = r.u32();
        const double eps = r.f32();
        BatchNorm<double> bn;
        bn.eps = eps;
        bn.gamma = read_payload(r, {c});
        bn.beta = read_payload(r, {c});
        bn.mean = read_payload(r, {c});
        bn.var = read_payload(r, {c});
        layer.params = std::move(bn);
        break;
      }
      case LayerKind::flatten: layer.params = Flatten{}; break;
      default:
        throw FormatError("unknown layer kind code " + std::to_string(code) + " at byte offset " +
                          std::to_string(at));
    }
    layers.push_back(std::move(layer));
  }

  const std::size_t body = r.offset();
  const std::uint32_t stored = r.u32();
  if (r.remaining() != 0) throw FormatError("trailing bytes after weight-file checksum");
  const std::uint32_t actual = crc32(bytes.first(body));
  if (stored != actual) throw FormatError("weight-file CRC32 mismatch");

  return ModelGraph<double>(std::move(layers), std::move(input_shape), {}, stored);
}

ModelGraph<double> load_model_file(const std::string& path) {
  const auto bytes = read_file(path);
  auto m = load_model(bytes);
  const auto slash = path.find_last_of('/');
  std::vector<Layer<double>> layers = m.layers();
  return ModelGraph<double>(std::move(layers), m.input_shape(),
                            slash == std::string::npos ? path : path.substr(slash + 1), m.source_hash());
}

std::vector<std::uint8_t> save_model(const ModelGraph<double>& model) {
  if (model.input_shape().size() != 3) throw ShapeError("weight file stores a [C,H,W] input shape");
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(u32_of(model.depth()));
  for (std::size_t e : model.input_shape()) w.u32(u32_of(e));
  for (const auto& layer : model.layers()) {
    w.u8(static_cast<std::uint8_t>(layer.kind()));
    if (layer.name.size() > 0xFFFF) throw ShapeError("layer name too long");
    w.u16(static_cast<std::uint16_t>(layer.name.size()));
    w.bytes(layer.name);
    std::visit(detail::overloaded{
                   [&](const Linear<double>& l) {
                     w.u32(u32_of(l.weight.extent(0)));
                     w.u32(u32_of(l.weight.extent(1)));
                     write_payload(w, l.weight);
                     write_payload(w, l.bias);
                   },
                   [&](const Conv2d<double>& c) {
                     for (std::size_t a = 0; a < 4; ++a) w.u32(u32_of(c.kernel.extent(a)));
                     w.u32(u32_of(c.stride));
                     w.u32(u32_of(c.padding));
                     write_payload(w, c.kernel);
                     write_payload(w, c.bias);
                   },
                   [&](const MaxPool2d& p) {
                     w.u32(u32_of(p.kh));
                     w.u32(u32_of(p.kw));
                     w.u32(u32_of(p.stride));
                   },
                   [&](const AvgPool2d& p) {
                     w.u32(u32_of(p.kh));
                     w.u32(u32_of(p.kw));
                     w.u32(u32_of(p.stride));
                   },
                   [&](const BatchNorm<double>& b) {
                     w.u32(u32_of(b.gamma.size()));
                     w.f32(static_cast<float>(b.eps));
                     write_payload(w, b.gamma);
                     write_payload(w, b.beta);
                     write_payload(w, b.mean);
                     write_payload(w, b.var);
                   },
                   [](const ReLU&) {},
                   [](const Flatten&) {},
               },
               layer.params);
  }
  w.u32(crc32(w.buffer()));
  return w.take();
}

}  // namespace pane
