#ifndef PANE_CHECKS_HPP
#define PANE_CHECKS_HPP

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "pane/chain.hpp"

// Randomized identity suites over the excitation and gradient engines, shared
// by the selftest command, the acceptance runner and the unit tests.
namespace pane::checks {

using Rng = std::mt19937_64;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct NetOptions {
  bool bias = true;     // false: zero biases and zero BN shift
  bool zeros = false;   // sprinkle exact zeros into weights
};

Tensor<double> random_tensor(Rng& rng, const Shape& shape, double lo, double hi, double zero_fraction = 0.0);

/// Tiny CNN with every layer kind (conv, BN, ReLU, max/avg pool, flatten, linear).
ModelGraph<double> random_network(Rng& rng, const NetOptions& options = {});

/// One layer of the given kind, followed by a flatten when its output is not rank 1.
ModelGraph<double> random_single_layer(Rng& rng, LayerKind kind);

/// Random input for `model`, with a share of exact zeros.
Tensor<double> random_input(Rng& rng, const ModelGraph<double>& model, double zero_fraction = 0.0);

/// Positive plus negative term sums of every output of one layer equal its pre-bias output.
Outcome local_completeness(std::uint64_t seed, std::size_t per_kind = 100);

/// pane_explain against the dense composed oracle, every class.
Outcome oracle_equivalence(std::uint64_t seed, std::size_t models = 20);

/// <pos + neg, x> equals the logit on bias-free models.
Outcome bias_free_reconstruction(std::uint64_t seed, std::size_t models = 20);

/// ReLU negative blocks are zero; single-term layers never move mass across chains.
Outcome relu_purity(std::uint64_t seed, std::size_t models = 20);

/// Plain backward against central differences (h = 1e-4).
Outcome gradient_check(std::uint64_t seed, std::size_t models = 50);

/// Fixture forward pass against the probe logits in manifest.json.
Outcome fixture_parity(const std::filesystem::path& bundle);

/// max |a - b| over max(|a|, |b|); 0 when both are zero.
double relative_error(const Tensor<double>& a, const Tensor<double>& b);

}  // namespace pane::checks

#endif  // PANE_CHECKS_HPP
