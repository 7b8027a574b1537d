#ifndef PANE_EXCITATION_HPP
#define PANE_EXCITATION_HPP

#include <utility>

#include "pane/forward.hpp"

namespace pane {

/**
 * Coefficient rows carried by the double chain at one layer boundary.
 *
 * `pos` and `neg` hold Exc(O_N -> O_n)^+ and ^- restricted to the explained
 * class. Entries are raw real coefficients: a positive-chain coefficient can
 * be negative.
 */
struct ChainState {
  Tensor<double> pos;
  Tensor<double> neg;

  const Shape& shape() const noexcept { return pos.shape(); }

  ChainState swapped() const { return {neg, pos}; }
};

/// Classification of one scalar term t against the pre-bias output it feeds.
enum class Excitation : int { negative = -1, zero = 0, positive = 1 };

/**
 * Sign split of the term t = w * x.
 *
 * Zero terms are zero excitation. A non-zero term is positive when its sign
 * matches the pre-bias output and negative when it opposes it. When the output
 * is exactly zero every non-zero term is treated as positive.
 */
template <typename Scalar>
constexpr Excitation classify_term(Scalar t, Scalar o_prebias) {
  if (t == Scalar(0)) return Excitation::zero;
  if (o_prebias == Scalar(0)) return Excitation::positive;
  return (t > Scalar(0)) == (o_prebias > Scalar(0)) ? Excitation::positive : Excitation::negative;
}

/// Same classification from the factor signs, immune to product under/overflow.
template <typename Scalar>
constexpr Excitation classify_factors(Scalar w, Scalar x, Scalar o_prebias) {
  if (w == Scalar(0) || x == Scalar(0)) return Excitation::zero;
  if (o_prebias == Scalar(0)) return Excitation::positive;
  return ((w > Scalar(0)) == (x > Scalar(0))) == (o_prebias > Scalar(0)) ? Excitation::positive
                                                                          : Excitation::negative;
}

// Local double-chain steps. Each maps the state at a layer's output to the
// state at its input:
//   u_pos[j] = sum_i r_pos[i] W+_ij + r_neg[i] W-_ij
//   u_neg[j] = sum_i r_pos[i] W-_ij + r_neg[i] W+_ij
// where W+/W- keep the coefficients whose term is positive/negative excitation.

template <typename Scalar>
ChainState chain_back_linear(const Linear<Scalar>& layer, const Tensor<Scalar>& x, const Tensor<Scalar>& o_prebias,
                             const ChainState& r);

template <typename Scalar>
ChainState chain_back_conv(const Conv2d<Scalar>& layer, const Tensor<Scalar>& x, const Tensor<Scalar>& o_prebias,
                           const ChainState& r);

/// Gate both chains by 1[x > 0]; the ReLU has no negative block.
template <typename Scalar>
ChainState chain_back_relu(const Tensor<Scalar>& x, const ChainState& r);

/// Route both chains to the recorded argmax with coefficient 1 (nothing if the maximum is 0).
template <typename Scalar>
ChainState chain_back_maxpool(const MaxPool2d& layer, const Tensor<Scalar>& x, std::span<const std::uint32_t> argmax,
                              const ChainState& r);

/// Constant-kernel conv with weight 1/(kh*kw); each term classified against the window mean.
template <typename Scalar>
ChainState chain_back_avgpool(const AvgPool2d& layer, const Tensor<Scalar>& x, const Tensor<Scalar>& o_prebias,
                              const ChainState& r);

/// Single-term layer: coefficient w' on the positive chain, shift excluded.
template <typename Scalar>
ChainState chain_back_bn(const BatchNorm<Scalar>& layer, const Tensor<Scalar>& x, const ChainState& r);

ChainState chain_back_flatten(const Shape& input_shape, const ChainState& r);

/// Dispatches on the layer kind using the recorded signals of layer `n`.
template <typename Scalar>
ChainState chain_back(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace, std::size_t n,
                      const ChainState& r);

}  // namespace pane

#include "pane/impl/excitation_impl.hpp"

#endif  // PANE_EXCITATION_HPP
