#ifndef PANE_FORWARD_HPP
#define PANE_FORWARD_HPP

#include <cstdint>
#include <vector>

#include "pane/model.hpp"

namespace pane {

/**
 * Signals recorded by one forward pass.
 *
 * outputs[0] is the input X and outputs[n+1] is O_{n+1}. For affine layers
 * prebias[n] holds Y' (output without the bias/shift term); for the other
 * layers it is empty and prebias(n) returns the output itself. argmax[n]
 * holds, for max-pool layers, the flat input index chosen by each output cell.
 */
template <typename Scalar>
struct ForwardTrace {
  std::vector<Tensor<Scalar>> outputs;
  std::vector<Tensor<Scalar>> prebias_;
  std::vector<std::vector<std::uint32_t>> argmax;
  std::uint32_t model_hash = 0;
  std::uint32_t input_hash = 0;

  std::size_t depth() const noexcept { return prebias_.size(); }
  const Tensor<Scalar>& input(std::size_t n) const { return outputs.at(n); }
  const Tensor<Scalar>& output(std::size_t n) const { return outputs.at(n + 1); }
  const Tensor<Scalar>& prebias(std::size_t n) const {
    return prebias_.at(n).empty() ? outputs.at(n + 1) : prebias_[n];
  }
  /// Identifies (model, input) for consistency checks downstream.
  std::uint32_t trace_hash() const { return model_hash ^ (input_hash * 0x9E3779B1u); }
};

struct ForwardOptions {
  /// Reject non-finite activations.
  bool checked = true;
};

/// Hash used to tie traces and explanations to a model.
template <typename Scalar>
std::uint32_t model_fingerprint(const ModelGraph<Scalar>& model);

template <typename Scalar>
ForwardTrace<Scalar> forward(const ModelGraph<Scalar>& model, const Tensor<Scalar>& x,
                             ForwardOptions options = {});

/// O_N, no softmax applied.
template <typename Scalar>
const Tensor<Scalar>& logits(const ForwardTrace<Scalar>& trace) {
  return trace.outputs.back();
}

template <typename Scalar>
std::size_t argmax_index(const Tensor<Scalar>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

/// Max-subtracted softmax, evaluated in double.
template <typename Scalar>
Tensor<double> softmax(const Tensor<Scalar>& logits);

// Single-layer kernels, shared by forward and the gradient/excitation engines.
namespace kernels {

/// y = W x (no bias).
template <typename Scalar>
std::vector<Scalar> linear(const Linear<Scalar>& l, std::span<const Scalar> x);

/// Direct correlation without bias.
template <typename Scalar>
std::vector<Scalar> conv2d(const Conv2d<Scalar>& c, const WindowGeometry& g, std::span<const Scalar> x);

/// Window maxima plus the flat input index of each (first maximum in row-major order).
template <typename Scalar>
std::vector<Scalar> maxpool(const WindowGeometry& g, std::span<const Scalar> x, std::vector<std::uint32_t>& argmax);

template <typename Scalar>
std::vector<Scalar> avgpool(const WindowGeometry& g, std::span<const Scalar> x);

}  // namespace kernels

}  // namespace pane

#include "pane/impl/forward_impl.hpp"

#endif  // PANE_FORWARD_HPP
