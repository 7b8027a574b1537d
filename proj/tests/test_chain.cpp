#include "helpers.hpp"
#include "pane/chain.hpp"
#include "pane/grad.hpp"
#include "pane/image_io.hpp"

using namespace pane;
using namespace testing;

namespace {

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() ? (a - b).cwiseAbs().maxCoeff() : 1e300;
}

}  // namespace

TEST_SUITE("chain") {

TEST_CASE("single linear layer") {
  const auto m = model({linear(1, 2, {3, 1})}, {2});
  const auto p = pane_explain(m, forward(m, T({2}, {1, -2})), 0);
  CHECK(values(p.pos) == std::vector<double>{3, 0});
  CHECK(values(p.neg) == std::vector<double>{0, 1});
  CHECK(p.class_index == 0);
}

TEST_CASE("two stacked scalings") {
  const auto m = model({linear(1, 1, {2}), linear(1, 1, {-3})}, {1});
  const auto p = pane_explain(m, forward(m, T({1}, {1})), 0);
  CHECK(values(p.pos) == std::vector<double>{-6});
  CHECK(values(p.neg) == std::vector<double>{0});
}

TEST_CASE("identity model passes the seed through") {
  const auto m = model({linear(2, 2, {1, 0, 0, 1})}, {2});
  const auto p = pane_explain(m, forward(m, T({2}, {4, 5})), 1);
  CHECK(values(p.pos) == std::vector<double>{0, 1});
  CHECK(values(p.neg) == std::vector<double>{0, 0});
}

TEST_CASE("argument checks") {
  const auto m = model({linear(2, 2, {1, 0, 0, 1})}, {2});
  const auto other = model({linear(2, 2, {1, 1, 0, 1})}, {2});
  const auto t = forward(m, T({2}, {4, 5}));
  CHECK_THROWS_AS(pane_explain(m, t, 2), ArgumentError);
  CHECK_THROWS_AS(pane_explain(other, t, 0), ArgumentError);
  CHECK_THROWS_AS(pane_layer_to_layer(m, t, 0, 0), ArgumentError);
  CHECK_THROWS_AS(pane_layer_to_layer(m, t, 0, 1), ArgumentError);
  CHECK_THROWS_AS(pane_layer_to_layer(m, t, 2, 0), ArgumentError);
  CHECK_THROWS_AS(pane_layer_to_layer(m, t, 1, 0, 5), ArgumentError);
}

TEST_CASE("dense block size guard") {
  const auto m = load_model_file((fixture_dir() / "model.panew").string());
  const auto t = forward(m, read_image(fixture_dir() / "images" / "img_000.ppm"));
  CHECK_THROWS_AS(pane_layer_to_layer(m, t, 1, 0), ArgumentError);
  const auto row = pane_layer_to_layer(m, t, 1, 0, 100);  // one output cell is always small enough
  CHECK(row.first.rows() == 1);
  CHECK(row.first.cols() == 3 * 32 * 32);
}

TEST_CASE("layer-to-layer blocks") {
  checks::Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = checks::random_network(rng);
    const auto t = forward(m, checks::random_input(rng, m, 0.1));
    SUBCASE("adjacent boundaries give the local split") {
      for (std::size_t n = 0; n < m.depth(); ++n) {
        const std::size_t rows = element_count(m.boundaries()[n + 1]), cols = element_count(m.boundaries()[n]);
        if (rows * cols > (std::size_t{1} << 16)) continue;
        const auto a = pane_layer_to_layer(m, t, n + 1, n);
        const auto b = local_split(m, t, n);
        REQUIRE(max_abs_diff(a.first, b.first) <= 1e-12);
        REQUIRE(max_abs_diff(a.second, b.second) <= 1e-12);
      }
    }
    SUBCASE("logit row to the input is the explanation") {
      const auto p = pane_explain(m, t, 1);
      const auto row = pane_layer_to_layer(m, t, m.depth(), 0, 1);
      for (std::size_t c = 0; c < p.pos.size(); ++c) {
        REQUIRE(row.first(0, long(c)) == p.pos[c]);
        REQUIRE(row.second(0, long(c)) == p.neg[c]);
      }
    }
  }
}

TEST_CASE("agrees with the dense oracle") {
  const auto o = checks::oracle_equivalence(5, 10);
  INFO(o.detail);
  CHECK(o.pass);
  checks::Rng rng(40);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = checks::random_network(rng, {.bias = true, .zeros = true});
    const auto t = forward(m, checks::random_input(rng, m, 0.2));
    const auto a = pane_explain(m, t, 0);
    const auto b = dense_oracle(m, t, 0);
    REQUIRE(checks::relative_error(a.pos, b.pos) <= 1e-9);
    REQUIRE(checks::relative_error(a.neg, b.neg) <= 1e-9);
  }
}

TEST_CASE("bias-free reconstruction of the logits") {
  const auto o = checks::bias_free_reconstruction(6, 10);
  INFO(o.detail);
  CHECK(o.pass);
}

TEST_CASE("seeding the negative chain swaps the result") {
  checks::Rng rng(3);
  const auto m = checks::random_network(rng);
  const auto t = forward(m, checks::random_input(rng, m));
  const auto p = pane_explain(m, t, 0);
  const std::size_t classes = m.class_count();
  ChainState seed{Tensor<double>(Shape{classes}), one_hot(0, classes)};
  const auto s = propagate_chain(m, t, seed, m.depth(), 0);
  CHECK(s.pos == p.neg);
  CHECK(s.neg == p.pos);
}

TEST_CASE("repeated explanations are bit-identical") {
  checks::Rng rng(4);
  const auto m = checks::random_network(rng);
  const auto x = checks::random_input(rng, m);
  const auto a = pane_explain(m, forward(m, x), 0), b = pane_explain(m, forward(m, x), 0);
  CHECK(a.pos == b.pos);
  CHECK(a.neg == b.neg);
  CHECK(a.trace_hash == b.trace_hash);
  CHECK(a.model_hash == model_fingerprint(m));
}

}
