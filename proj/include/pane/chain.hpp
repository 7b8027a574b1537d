#ifndef PANE_CHAIN_HPP
#define PANE_CHAIN_HPP

#include <optional>

#include <Eigen/Dense>

#include "pane/excitation.hpp"

namespace pane {

/// Whole-network excitation coefficients of one class, shaped like the input.
struct ExcitationPair {
  Tensor<double> pos;
  Tensor<double> neg;
  std::size_t class_index = 0;
  std::uint32_t model_hash = 0;
  std::uint32_t trace_hash = 0;
};

/// Runs the double chain from boundary `from` (output of layer from-1) down to boundary `to`.
template <typename Scalar>
ChainState propagate_chain(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace, ChainState state,
                           std::size_t from, std::size_t to) {
  if (from > model.depth() || to > from) throw ArgumentError("invalid chain boundaries");
  if (state.shape() != model.boundaries()[from]) throw ShapeError("chain seed does not match boundary shape");
  for (std::size_t n = from; n-- > to;) state = chain_back(model, trace, n, state);
  return state;
}

template <typename Scalar>
void check_trace(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace) {
  if (trace.depth() != model.depth() || trace.model_hash != model_fingerprint(model)) {
    throw ArgumentError("trace was not produced by this model");
  }
}

/**
 * Positive and negative excitation maps of logit k.
 *
 * Seeds the logit boundary with (one-hot(k), 0) and folds the local chain
 * steps from the last layer down to the input. Cost is one row propagation,
 * never the full K x |X| matrix.
 */
template <typename Scalar>
ExcitationPair pane_explain(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace, std::size_t k) {
  check_trace(model, trace);
  const std::size_t classes = model.class_count();
  if (k >= classes) throw ArgumentError("class index " + std::to_string(k) + " out of range");
  std::vector<double> seed(classes, 0.0);
  seed[k] = 1.0;
  ChainState state{Tensor<double>({classes}, std::move(seed)), Tensor<double>(Shape{classes})};
  state = propagate_chain(model, trace, std::move(state), model.depth(), 0);
  return {std::move(state.pos), std::move(state.neg), k, trace.model_hash, trace.trace_hash()};
}

using DensePair = std::pair<Eigen::MatrixXd, Eigen::MatrixXd>;

/**
 * Composite coefficients Exc(O_i -> O_j)^{+,-} between boundaries i > j.
 *
 * Rows index O_i (or the single `cell` when given), columns index O_j.
 * Computed one row at a time with the chain steps.
 */
template <typename Scalar>
DensePair pane_layer_to_layer(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace, std::size_t i,
                              std::size_t j, std::optional<std::size_t> cell = std::nullopt) {
  check_trace(model, trace);
  if (i <= j || i > model.depth()) throw ArgumentError("layer-to-layer needs boundaries i > j");
  const Shape& top = model.boundaries()[i];
  const std::size_t rows_total = element_count(top);
  const std::size_t cols = element_count(model.boundaries()[j]);
  if (cell && *cell >= rows_total) throw ArgumentError("output cell out of range");
  const std::size_t rows = cell ? 1 : rows_total;
  if (rows * cols > (std::size_t{1} << 16)) throw ArgumentError("dense layer-to-layer block exceeds 2^16 entries");

  DensePair out{Eigen::MatrixXd::Zero(rows, cols), Eigen::MatrixXd::Zero(rows, cols)};
  for (std::size_t row = 0; row < rows; ++row) {
    std::vector<double> seed(rows_total, 0.0);
    seed[cell ? *cell : row] = 1.0;
    ChainState s{Tensor<double>(top, std::move(seed)), Tensor<double>(top)};
    s = propagate_chain(model, trace, std::move(s), i, j);
    for (std::size_t c = 0; c < cols; ++c) {
      out.first(row, c) = s.pos[c];
      out.second(row, c) = s.neg[c];
    }
  }
  return out;
}

/**
 * Dense split matrices (A+, A-) of layer n at the recorded point, rows = outputs.
 *
 * Built entry by entry from classify_term; conv goes through an explicit
 * im2col expansion. Reference path only.
 */
template <typename Scalar>
DensePair local_split(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace, std::size_t n);

/**
 * Reference realization of the composite: materializes every layer's split,
 * composes them bottom-up with explicit products and returns row k.
 * Guard: every boundary must hold at most 4096 elements.
 */
template <typename Scalar>
ExcitationPair dense_oracle(const ModelGraph<Scalar>& model, const ForwardTrace<Scalar>& trace, std::size_t k);

}  // namespace pane

#include "pane/impl/oracle_impl.hpp"

#endif  // PANE_CHAIN_HPP
