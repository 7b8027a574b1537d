#include "pane/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace pane {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::pane_pos: return "pane_pos";
    case Method::pane_neg: return "pane_neg";
    case Method::pane_sum: return "pane_sum";
    case Method::vbp: return "vbp";
    case Method::guided_bp: return "guided_bp";
    case Method::gradcam: return "gradcam";
    case Method::random: return "random";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
  for (Method m : {Method::pane_pos, Method::pane_neg, Method::pane_sum, Method::vbp, Method::guided_bp,
                   Method::gradcam, Method::random}) {
    if (method_name(m) == name) return m;
  }
  return std::nullopt;
}

Tensor<double> collapse_channels(const Tensor<double>& map, Collapse mode) {
  if (mode == Collapse::none) return map;
  if (map.rank() != 3) throw ShapeError("channel collapse expects a [C,H,W] map, got " + shape_string(map.shape()));
  const std::size_t c = map.extent(0), h = map.extent(1), w = map.extent(2), plane = h * w;
  std::vector<double> out(plane, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < plane; ++p) {
      const double v = map[ch * plane + p];
      out[p] += mode == Collapse::channel_abs_sum ? std::abs(v) : v;
    }
  return Tensor<double>({h, w}, std::move(out), Check::none);
}

SaliencyBundle assemble_pane(const ExcitationPair& pair, PaneVariant variant, Collapse collapse) {
  SaliencyBundle b;
  switch (variant) {
    case PaneVariant::pos:
      b.method = Method::pane_pos;
      b.map = pair.pos;
      break;
    case PaneVariant::neg:
      b.method = Method::pane_neg;
      b.map = pair.neg;
      break;
    case PaneVariant::sum:
      b.method = Method::pane_sum;
      b.map = pair.pos + pair.neg;
      b.signed_map = true;
      break;
  }
  b.collapse = collapse;
  if (collapse != Collapse::none) b.map = collapse_channels(b.map, collapse);
  return b;
}

Tensor<double> bilinear_resize(const Tensor<double>& map, std::size_t out_h, std::size_t out_w) {
  if (map.rank() != 2) throw ShapeError("bilinear_resize expects an [h,w] map");
  const std::size_t in_h = map.extent(0), in_w = map.extent(1);
  const double sy = double(in_h) / double(out_h), sx = double(in_w) / double(out_w);
  const auto coord = [](double dst, double scale, std::size_t extent, std::size_t& i0, std::size_t& i1, double& f) {
    double src = (dst + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, double(extent - 1));
    i0 = static_cast<std::size_t>(std::floor(src));
    i1 = std::min(i0 + 1, extent - 1);
    f = src - double(i0);
  };
  std::vector<double> out(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double fy;
    coord(double(y), sy, in_h, y0, y1, fy);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      double fx;
      coord(double(x), sx, in_w, x0, x1, fx);
      const double top = map[y0 * in_w + x0] * (1 - fx) + map[y0 * in_w + x1] * fx;
      const double bot = map[y1 * in_w + x0] * (1 - fx) + map[y1 * in_w + x1] * fx;
      out[y * out_w + x] = top * (1 - fy) + bot * fy;
    }
  }
  return Tensor<double>({out_h, out_w}, std::move(out));
}

Tensor<double> gradcam_from_features(const Tensor<double>& features, const Tensor<double>& grads, std::size_t out_h,
                                     std::size_t out_w) {
  if (features.rank() != 3 || features.shape() != grads.shape()) {
    throw ShapeError("grad-cam expects matching [C,H,W] features and gradients");
  }
  const std::size_t c = features.extent(0), plane = features.extent(1) * features.extent(2);
  std::vector<double> cam(plane, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double weight = 0;
    for (std::size_t p = 0; p < plane; ++p) weight += grads[ch * plane + p];
    weight /= double(plane);
    for (std::size_t p = 0; p < plane; ++p) cam[p] += weight * features[ch * plane + p];
  }
  for (auto& v : cam) v = std::max(v, 0.0);
  return bilinear_resize(Tensor<double>({features.extent(1), features.extent(2)}, std::move(cam)), out_h, out_w);
}

Tensor<double> random_map(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(h * w);
  for (auto& x : v) x = u(rng);
  return Tensor<double>({h, w}, std::move(v));
}

std::size_t selection_count(double ratio, std::size_t pixels) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ArgumentError("selection ratio must lie in (0, 1]");
  // tolerance absorbs decimal ratios such as 0.29 * 100 = 28.999...
  const auto n = static_cast<std::size_t>(std::floor(ratio * double(pixels) + 1e-9));
  return std::clamp<std::size_t>(n, 1, pixels);
}

std::vector<Pixel> rank_pixels(const SaliencyBundle& bundle, RankOrder order, double ratio) {
  Tensor<double> map = bundle.map;
  if (map.rank() == 3) {
    map = collapse_channels(map, bundle.collapse == Collapse::none ? Collapse::channel_sum : bundle.collapse);
  }
  if (map.rank() != 2) throw ShapeError("rank_pixels expects an [H,W] or [C,H,W] map");
  const std::size_t w = map.extent(1), n = map.size();
  const std::size_t count = selection_count(ratio, n);

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto v = map.data();
  const auto by = [&](auto key) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key(v[a]) < key(v[b]); });
  };
  switch (order) {
    case RankOrder::desc_value:
    case RankOrder::desc_signed: by([](double x) { return -x; }); break;
    case RankOrder::asc_abs: by([](double x) { return std::abs(x); }); break;
    case RankOrder::asc_signed: by([](double x) { return x; }); break;
  }
  std::vector<Pixel> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back({idx[i] / w, idx[i] % w});
  return out;
}

double pearson(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("pearson needs equally-sized non-empty maps");
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

Tensor<double> guided_product(const Tensor<double>& a, const Tensor<double>& b) { return a * b; }

}  // namespace pane
