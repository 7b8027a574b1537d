#ifndef PANE_SALIENCY_HPP
#define PANE_SALIENCY_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pane/chain.hpp"
#include "pane/grad.hpp"

namespace pane {

enum class Method { pane_pos, pane_neg, pane_sum, vbp, guided_bp, gradcam, random };

std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);

enum class Collapse { none, channel_sum, channel_abs_sum };

/// A saliency map: [C,H,W] when not collapsed, [H,W] otherwise.
struct SaliencyBundle {
  Method method = Method::pane_pos;
  Tensor<double> map;
  Collapse collapse = Collapse::none;
  bool signed_map = false;
};

/// Sum over the channel axis of a [C,H,W] map, signed or by absolute value.
Tensor<double> collapse_channels(const Tensor<double>& map, Collapse mode);

enum class PaneVariant { pos, neg, sum };

SaliencyBundle assemble_pane(const ExcitationPair& pair, PaneVariant variant, Collapse collapse = Collapse::none);

/// Bilinear resize of a [h,w] map (half-pixel centres, edge clamped).
Tensor<double> bilinear_resize(const Tensor<double>& map, std::size_t out_h, std::size_t out_w);

/// Grad-CAM from precomputed feature maps and their gradients ([C_t,H_t,W_t] each).
Tensor<double> gradcam_from_features(const Tensor<double>& features, const Tensor<double>& grads, std::size_t out_h,
                                     std::size_t out_w);

/// Grad-CAM at the last conv layer, upsampled to the input's spatial size.
template <typename Scalar>
SaliencyBundle gradcam(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace, std::size_t k) {
  const auto tap = last_conv_layer(model);
  if (!tap) throw ArgumentError("grad-cam needs at least one conv layer");
  const auto grads = feature_grad(model, trace, k, *tap);
  const auto features = trace.output(*tap).template cast<double>();
  const Shape& in = model.input_shape();
  return {Method::gradcam, gradcam_from_features(features, grads, in[1], in[2]), Collapse::channel_sum, false};
}

/// Seeded uniform [H,W] map; the control baseline.
Tensor<double> random_map(std::size_t h, std::size_t w, std::uint64_t seed);

/// vbp / guided_bp (|gradient| summed over channels) or the random control.
template <typename Scalar>
SaliencyBundle baseline_map(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace, std::size_t k,
                            Method method, std::uint64_t seed = 0) {
  const Shape& in = model.input_shape();
  switch (method) {
    case Method::vbp:
      return {method, collapse_channels(backward_input_grad(model, trace, k), Collapse::channel_abs_sum),
              Collapse::channel_abs_sum, false};
    case Method::guided_bp:
      return {method, collapse_channels(guided_backward(model, trace, k), Collapse::channel_abs_sum),
              Collapse::channel_abs_sum, false};
    case Method::random:
      if (in.size() != 3) throw ShapeError("random map needs a [C,H,W] model input");
      return {method, random_map(in[1], in[2], seed), Collapse::channel_sum, false};
    default:
      throw ArgumentError("not a baseline method: " + std::string(method_name(method)));
  }
}

/// Any method as a collapsed [H,W] map (PANE variants collapse by signed sum).
template <typename Scalar>
SaliencyBundle saliency_map(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace, std::size_t k,
                            Method method, std::uint64_t seed = 0) {
  switch (method) {
    case Method::pane_pos:
      return assemble_pane(pane_explain(model, trace, k), PaneVariant::pos, Collapse::channel_sum);
    case Method::pane_neg:
      return assemble_pane(pane_explain(model, trace, k), PaneVariant::neg, Collapse::channel_sum);
    case Method::pane_sum:
      return assemble_pane(pane_explain(model, trace, k), PaneVariant::sum, Collapse::channel_sum);
    case Method::gradcam:
      return gradcam(model, trace, k);
    default:
      return baseline_map(model, trace, k, method, seed);
  }
}

struct Pixel {
  std::size_t row = 0, col = 0;
  bool operator==(const Pixel&) const = default;
};

enum class RankOrder {
  desc_value,   // largest value first
  asc_abs,      // smallest |value| first (minor pixels)
  desc_signed,  // largest signed value first
  asc_signed,   // most negative first
};

/// floor(ratio * pixels) with a minimum of one; ratio must lie in (0, 1].
std::size_t selection_count(double ratio, std::size_t pixels);

/**
 * Deterministic pixel ranking over the collapsed map.
 *
 * Per-channel maps are collapsed first with the bundle's collapse mode
 * (signed sum when none was recorded). Ties keep row-major order.
 */
std::vector<Pixel> rank_pixels(const SaliencyBundle& bundle, RankOrder order, double ratio);

/// Pearson correlation of two equally-sized maps (0 when either is constant).
double pearson(const Tensor<double>& a, const Tensor<double>& b);

/// Elementwise product of two [H,W] maps, for guided visualizations.
Tensor<double> guided_product(const Tensor<double>& a, const Tensor<double>& b);

}  // namespace pane

#endif  // PANE_SALIENCY_HPP
