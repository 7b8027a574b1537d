#include <map>

#include "helpers.hpp"
#include "pane/grad.hpp"
#include "pane/image_io.hpp"

using namespace pane;
using namespace testing;

namespace {

// Model made of layers [from, depth) of `m`, taking O_from as its input.
ModelGraph<double> tail(const ModelGraph<double>& m, std::size_t from) {
  return ModelGraph<double>(std::vector<Layer<double>>(m.layers().begin() + long(from), m.layers().end()),
                            m.boundaries()[from]);
}

}  // namespace

TEST_SUITE("grad") {

TEST_CASE("single linear layer: gradient is the weight row") {
  const auto m = model({linear(2, 3, {1, -2, 3, 4, 5, -6}, {7, 8})}, {3});
  const auto t = forward(m, T({3}, {0.5, 1, -1}));
  CHECK(values(backward_input_grad(m, t, 0)) == std::vector<double>{1, -2, 3});
  CHECK(values(backward_input_grad(m, t, 1)) == std::vector<double>{4, 5, -6});
  CHECK_THROWS_AS(backward_input_grad(m, t, 2), ArgumentError);
}

TEST_CASE("relu gates the gradient") {
  const auto m = model({relu()}, {2});
  const auto t = forward(m, T({2}, {-3, 2}));
  CHECK(values(backward_input_grad(m, t, 0)) == std::vector<double>{0, 0});
  CHECK(values(backward_input_grad(m, t, 1)) == std::vector<double>{0, 1});
}

TEST_CASE("central differences on a small CNN") {
  const auto o = checks::gradient_check(123, 10);
  INFO(o.detail);
  CHECK(o.pass);
}

TEST_CASE("guided backprop") {
  SUBCASE("no relu: identical to plain") {
    checks::Rng rng(2);
    const auto m = model({linear(3, 4, checks::random_tensor(rng, {12}, -1, 1).values()), linear(2, 3, {1, -1, 2, 0.5, 3, -2})}, {4});
    const auto t = forward(m, checks::random_tensor(rng, {4}, -1, 1));
    for (std::size_t k = 0; k < 2; ++k) CHECK(guided_backward(m, t, k) == backward_input_grad(m, t, k));
  }
  SUBCASE("negative upstream at a positive input is clamped") {
    const auto m = model({relu(), linear(1, 1, {-2})}, {1});
    const auto t = forward(m, T({1}, {5}));
    CHECK(values(backward_input_grad(m, t, 0)) == std::vector<double>{-2});
    CHECK(values(guided_backward(m, t, 0)) == std::vector<double>{0});
  }
  SUBCASE("fixture CNN: nothing negative leaves a relu") {
    const auto m = load_model_file((fixture_dir() / "model.panew").string());
    const auto t = forward(m, read_image(fixture_dir() / "images" / "img_003.ppm"));
    std::size_t sites = 0, negatives = 0;
    guided_backward(m, t, 0, [&](std::size_t, std::span<const double> g) {
      ++sites;
      for (double v : g) negatives += v < 0;
    });
    CHECK(sites == 3);
    CHECK(negatives == 0);
  }
  SUBCASE("guided passes at no more relu sites than plain") {
    checks::Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
      const auto m = checks::random_network(rng);
      const auto t = forward(m, checks::random_input(rng, m));
      std::map<std::size_t, std::vector<bool>> plain, guided;
      const auto record = [](auto& into) {
        return [&into](std::size_t n, std::span<const double> g) {
          auto& mask = into[n];
          for (double v : g) mask.push_back(v != 0);
        };
      };
      backward(m, t, one_hot(0, m.class_count()), GradMode::plain, 0, record(plain));
      backward(m, t, one_hot(0, m.class_count()), GradMode::guided, 0, record(guided));
      for (const auto& [n, gm] : guided) {
        const auto& x = t.input(n);
        std::size_t g_count = 0, p_count = 0;
        for (std::size_t i = 0; i < gm.size(); ++i) {
          if (gm[i]) REQUIRE(x[i] > 0);
          g_count += gm[i];
          p_count += plain[n][i];
        }
        REQUIRE(g_count <= p_count);
      }
    }
  }
}

TEST_CASE("gradients scale with a linear head") {
  checks::Rng rng(6);
  const auto w1 = checks::random_tensor(rng, {12}, -1, 1).values();
  const auto w2 = checks::random_tensor(rng, {6}, -1, 1).values();
  std::vector<double> w2s(w2);
  for (auto& v : w2s) v *= 2.5;
  const auto x = checks::random_tensor(rng, {4}, -1, 1);
  const auto a = model({linear(3, 4, w1), linear(2, 3, w2)}, {4});
  const auto b = model({linear(3, 4, w1), linear(2, 3, w2s)}, {4});
  const auto ga = backward_input_grad(a, forward(a, x), 1), gb = backward_input_grad(b, forward(b, x), 1);
  for (std::size_t i = 0; i < 4; ++i) CHECK(gb[i] == doctest::Approx(2.5 * ga[i]).epsilon(1e-14));
}

TEST_CASE("feature gradients") {
  SUBCASE("tap feeding the logits directly is the one-hot seed") {
    const auto m = model({conv({3, 1, 1, 1}, {1, 2, 3}), flatten()}, {1, 1, 1});
    const auto t = forward(m, T({1, 1, 1}, {2}));
    const auto g = feature_grad(m, t, 1, 0);
    CHECK(g.shape() == Shape{3, 1, 1});
    CHECK(values(g) == std::vector<double>{0, 1, 0});
  }
  SUBCASE("only conv taps are accepted") {
    checks::Rng rng(1);
    const auto m = checks::random_network(rng);
    const auto t = forward(m, checks::random_input(rng, m));
    CHECK_THROWS_AS(feature_grad(m, t, 0, 2), ArgumentError);  // relu
    CHECK_THROWS_AS(feature_grad(m, t, 0, 99), ArgumentError);
    CHECK(last_conv_layer(m) == std::optional<std::size_t>(4));
  }
  SUBCASE("central differences on feature-map entries") {
    checks::Rng rng(12);
    const double h = 1e-4;
    for (int trial = 0; trial < 10; ++trial) {
      const auto m = checks::random_network(rng);
      const auto t = forward(m, checks::random_input(rng, m));
      const std::size_t tap = *last_conv_layer(m);
      const auto g = feature_grad(m, t, 0, tap);
      const auto sub = tail(m, tap + 1);
      const auto& f = t.output(tap);
      const auto base = forward(sub, f);
      double diff = 0, mag = 0;
      for (std::size_t j = 0; j < f.size(); ++j) {
        std::vector<double> up(f.values()), down(f.values());
        up[j] += h;
        down[j] -= h;
        const auto tu = forward(sub, Tensor<double>(f.shape(), up)), td = forward(sub, Tensor<double>(f.shape(), down));
        bool kink = false;
        for (std::size_t n = 0; n < sub.depth(); ++n) {
          if (tu.argmax[n] != base.argmax[n] || td.argmax[n] != base.argmax[n]) kink = true;
          if (sub.layer(n).kind() == LayerKind::relu)
            for (std::size_t i = 0; i < tu.input(n).size(); ++i)
              if ((tu.input(n)[i] > 0) != (base.input(n)[i] > 0) || (td.input(n)[i] > 0) != (base.input(n)[i] > 0))
                kink = true;
        }
        if (kink) continue;
        const double fd = (logits(tu)[0] - logits(td)[0]) / (2 * h);
        diff = std::max(diff, std::abs(fd - g[j]));
        mag = std::max({mag, std::abs(fd), std::abs(g[j])});
      }
      REQUIRE(diff <= 1e-4 * std::max(mag, 1e-12));
    }
  }
}

TEST_CASE("backward validates its inputs") {
  const auto m = model({linear(1, 2, {1, 1})}, {2});
  const auto t = forward(m, T({2}, {1, 1}));
  CHECK_THROWS_AS(backward(m, t, T({2}, {1, 0})), ShapeError);
  CHECK_THROWS_AS(backward(m, t, T({1}, {1}), GradMode::plain, 5), ArgumentError);
}

}
