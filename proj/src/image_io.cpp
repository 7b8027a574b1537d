#include "pane/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "pane/bytes.hpp"

namespace pane {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::span<const std::uint8_t> b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < b.size() && !std::isspace(b[pos]) && b[pos] != '#') tok += static_cast<char>(b[pos++]);
  if (tok.empty()) throw FormatError("truncated PNM header");
  return tok;
}

std::size_t header_number(std::span<const std::uint8_t> b, std::size_t& pos) {
  const auto tok = header_token(b, pos);
  if (!std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    throw FormatError("bad PNM header field '" + tok + "'");
  }
  return std::stoul(tok);
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

Tensor<double> decode_pnm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  const auto magic = header_token(bytes, pos);
  std::size_t channels;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw FormatError("unsupported image format '" + magic + "' (binary P5/P6 only)");
  }
  const std::size_t w = header_number(bytes, pos);
  const std::size_t h = header_number(bytes, pos);
  const std::size_t maxval = header_number(bytes, pos);
  if (maxval != 255) throw FormatError("unsupported PNM maxval " + std::to_string(maxval) + " (255 only)");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("truncated PNM header");
  ++pos;  // single whitespace before the raster
  const std::size_t n = w * h * channels;
  if (bytes.size() - pos < n) throw TruncationError(bytes.size(), n - (bytes.size() - pos));

  // interleaved RGB -> channel-major
  std::vector<double> data(n);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        data[(c * h + y) * w + x] = bytes[pos + (y * w + x) * channels + c];
  return Tensor<double>({channels, h, w}, std::move(data));
}

std::vector<std::uint8_t> encode_pnm(const Tensor<double>& image) {
  if (image.rank() != 3 || (image.extent(0) != 1 && image.extent(0) != 3)) {
    throw ShapeError("PNM export needs a [1,H,W] or [3,H,W] image, got " + shape_string(image.shape()));
  }
  const std::size_t c = image.extent(0), h = image.extent(1), w = image.extent(2);
  const std::string header =
      std::string(c == 1 ? "P5" : "P6") + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + image.size());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) out.push_back(to_byte(image[(ch * h + y) * w + x]));
  return out;
}

Tensor<double> read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 6 && std::string(bytes.begin(), bytes.begin() + 6) == "PTNSR1") return decode_tensor(bytes);
  return decode_pnm(bytes);
}

std::vector<std::uint8_t> render_heatmap(const Tensor<double>& map, HeatmapStyle style) {
  if (map.rank() != 2) throw ShapeError("heatmap expects an [H,W] map, got " + shape_string(map.shape()));
  if (!all_finite(map)) throw NumericError("heatmap contains non-finite values");
  const std::size_t h = map.extent(0), w = map.extent(1);
  const auto [lo_it, hi_it] = std::minmax_element(map.data().begin(), map.data().end());
  const double lo = *lo_it, hi = *hi_it;

  if (style == HeatmapStyle::gray) {
    std::vector<double> v(map.size(), 128.0);
    if (hi > lo)
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = (map[i] - lo) / (hi - lo) * 255.0;
    return encode_pnm(Tensor<double>({1, h, w}, std::move(v)));
  }

  const double scale = std::max(std::abs(lo), std::abs(hi));
  std::vector<double> rgb(3 * map.size(), 0.0);
  if (scale > 0)
    for (std::size_t i = 0; i < map.size(); ++i) {
      const double m = std::abs(map[i]) / scale * 255.0;
      if (map[i] > 0) rgb[i] = m;                       // red plane
      if (map[i] < 0) rgb[2 * map.size() + i] = m;      // blue plane
    }
  return encode_pnm(Tensor<double>({3, h, w}, std::move(rgb)));
}

void write_heatmap(const Tensor<double>& map, const std::filesystem::path& path, HeatmapStyle style) {
  write_file_atomic(path, render_heatmap(map, style));
}

}  // namespace pane
