#include <Eigen/Dense>

#include "helpers.hpp"
#include "pane/bytes.hpp"
#include "pane/image_io.hpp"

using namespace pane;
using namespace testing;

namespace {

ModelGraph<double> small_cnn() {
  // conv 1->2 (3x3, pad 1) on 1x4x4, relu, flatten, linear 32->2
  std::vector<double> k(18), w(64);
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = 0.1 * double(i) - 0.8;
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.05 * double(i % 7) - 0.1;
  return model({conv({2, 1, 3, 3}, k, {0.5, -0.25}, 1, 1), relu(), flatten(), linear(2, 32, w, {0.1, -0.2})},
               {1, 4, 4});
}

// Hand-built weight file: conv 1->2 1x1 followed by a batch norm whose channel count is `bn_channels`.
std::vector<std::uint8_t> conv_bn_file(std::uint32_t bn_channels) {
  ByteWriter w;
  w.bytes("PANEW001");
  w.u32(3);
  w.u32(1), w.u32(2), w.u32(2);
  w.u8(2), w.u16(1), w.bytes("c");
  for (std::uint32_t v : {2u, 1u, 1u, 1u, 1u, 0u}) w.u32(v);
  for (float v : {1.0f, 2.0f, 0.0f, 0.0f}) w.f32(v);
  w.u8(6), w.u16(1), w.bytes("b");
  w.u32(bn_channels);
  w.f32(1e-5f);
  for (std::uint32_t i = 0; i < 4 * bn_channels; ++i) w.f32(i % 4 == 3 ? 1.0f : 0.5f);
  w.u8(7), w.u16(1), w.bytes("f");
  w.u32(crc32(w.buffer()));
  return w.take();
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("weight file round-trip") {
  const auto m = small_cnn();
  const auto bytes = save_model(m);
  const auto back = load_model(bytes);
  CHECK(back.depth() == 4);
  CHECK(back.input_shape() == Shape{1, 4, 4});
  CHECK(back.class_count() == 2);
  CHECK(back.layer(0).kind() == LayerKind::conv2d);
  CHECK(back.layer(3).kind() == LayerKind::linear);
  CHECK(save_model(back) == bytes);
  CHECK(back.source_hash() != 0);
}

TEST_CASE("weight file with every kind") {
  checks::Rng rng(3);
  const auto m = checks::random_network(rng);
  const auto back = load_model(save_model(m));
  REQUIRE(back.depth() == m.depth());
  const auto x = checks::random_input(rng, m);
  // parameters are stored as f32
  CHECK(checks::relative_error(logits(forward(back, x)), logits(forward(m.cast<float>().cast<double>(), x))) == 0);
}

TEST_CASE("weight file errors") {
  const auto good = save_model(small_cnn());
  SUBCASE("bad magic") {
    auto b = good;
    b[7] = '2';
    CHECK_THROWS_AS(load_model(b), FormatError);
  }
  SUBCASE("crc mismatch") {
    auto b = good;
    b[60] ^= 0x01;  // inside the conv weights
    CHECK_THROWS_WITH_AS(load_model(b), doctest::Contains("CRC"), FormatError);
  }
  SUBCASE("unknown layer kind") {
    auto b = good;
    b[24] = 9;  // first kind byte follows magic, count and C,H,W
    ByteWriter w;
    w.raw(b.data(), b.size() - 4);
    w.u32(crc32(w.buffer()));
    CHECK_THROWS_AS(load_model(w.buffer()), FormatError);
  }
  SUBCASE("trailing bytes") {
    auto b = good;
    b.insert(b.end() - 4, 0);
    CHECK_THROWS_AS(load_model(b), FormatError);
  }
  SUBCASE("truncated payload reports the byte offset") {
    // header: magic 8 + count 4 + shape 12 + kind 1 + name len 2 + name 4 + conv header 24 = 55
    std::vector<std::uint8_t> cut(good.begin(), good.begin() + 55 + 4 * 3 + 2);
    try {
      load_model(cut);
      FAIL("expected truncation");
    } catch (const TruncationError& e) {
      // the payload that does not fit starts right after the conv header
      CHECK(e.offset() == 55);
      CHECK(std::string(e.what()).find("offset 55") != std::string::npos);
    }
  }
  SUBCASE("channel mismatch between layers") {
    CHECK_NOTHROW(load_model(conv_bn_file(2)));
    CHECK_THROWS_AS(load_model(conv_bn_file(3)), ShapeError);
  }
}

TEST_CASE("graph validation") {
  const Layer<double> long_bias{"fc", Linear<double>{T({2, 3}, {1, 2, 3, 4, 5, 6}), T({3}, {1, 2, 3})}};
  CHECK_THROWS_AS(model({long_bias}, {3}), ShapeError);
  CHECK_THROWS_AS(model({linear(2, 3, {1, 2, 3, 4, 5, 6})}, {4}), ShapeError);             // fan-in
  CHECK_THROWS_AS(model({conv({1, 1, 3, 3}, std::vector<double>(9, 1.0)), flatten()}, {1, 2, 2}), ShapeError);
  CHECK_THROWS_AS(model({relu()}, {2, 2}), ShapeError);  // final output must be a vector
  CHECK_THROWS_AS(model({batchnorm({1}, {0}, {0}, {1}, 0.0), flatten()}, {1, 1, 1}), ShapeError);  // eps > 0
  CHECK_THROWS_AS(model({{"p", MaxPool2d{2, 2, 0}}, flatten()}, {1, 4, 4}), ShapeError);             // stride >= 1
}

TEST_CASE("window extent") {
  CHECK(window_output_extent(7, 3, 2, 1) == 4);
  CHECK(window_output_extent(32, 3, 1, 1) == 32);
  CHECK(window_output_extent(5, 2, 2, 0) == 2);
  CHECK_THROWS_AS(window_output_extent(2, 3, 1, 0), ShapeError);
}

TEST_CASE("forward: scalar conv") {
  const auto m = model({conv({1, 1, 1, 1}, {2}), flatten()}, {1, 1, 1});
  const auto t = forward(m, T({1, 1, 1}, {3}));
  CHECK(values(t.output(0)) == std::vector<double>{6});
  CHECK(values(t.prebias(0)) == std::vector<double>{6});
}

TEST_CASE("forward: linear records the pre-bias output") {
  const auto m = model({linear(1, 2, {3, 1}, {1})}, {2});
  const auto t = forward(m, T({2}, {1, -2}));
  CHECK(values(t.prebias(0)) == std::vector<double>{1});
  CHECK(values(t.output(0)) == std::vector<double>{2});
}

TEST_CASE("forward: max-pool records the argmax") {
  const auto m = model({maxpool(2, 2), flatten()}, {1, 2, 2});
  const auto t = forward(m, T({1, 2, 2}, {1, 4, 3, 2}));
  CHECK(values(t.output(0)) == std::vector<double>{4});
  REQUIRE(t.argmax[0].size() == 1);
  CHECK(t.argmax[0][0] == 1);  // (row 0, col 1)
  const auto tie = forward(m, T({1, 2, 2}, {7, 7, 0, 0}));
  CHECK(tie.argmax[0][0] == 0);
}

TEST_CASE("forward: avg-pool and batch norm") {
  const auto a = forward(model({avgpool(2, 2), flatten()}, {1, 2, 2}), T({1, 2, 2}, {1, 2, 3, 6}));
  CHECK(a.output(0)[0] == doctest::Approx(3.0));
  // (x - mean) / (sqrt(var) + eps) * gamma + beta with gamma 2, var 0, eps 1
  const auto b = forward(model({batchnorm({2}, {0.5}, {1}, {0}, 1.0), flatten()}, {1, 1, 1}), T({1, 1, 1}, {3}));
  CHECK(b.prebias(0)[0] == 6.0);
  CHECK(b.output(0)[0] == 6.0 - 2.0 + 0.5);
}

TEST_CASE("trace identity: output equals pre-bias output plus the bias") {
  checks::Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = checks::random_network(rng);
    const auto t = forward(m, checks::random_input(rng, m));
    REQUIRE(t.depth() == m.depth());
    for (std::size_t n = 0; n < m.depth(); ++n) {
      const auto& l = m.layer(n);
      const auto& o = t.output(n);
      const auto& y = t.prebias(n);
      const Shape& shape = m.boundaries()[n + 1];
      const std::size_t channels = shape[0], plane = o.size() / channels;
      for (std::size_t i = 0; i < o.size(); ++i) {
        double b = 0;
        if (auto* lin = std::get_if<Linear<double>>(&l.params)) b = lin->bias[i];
        if (auto* c = std::get_if<Conv2d<double>>(&l.params)) b = c->bias[i / plane];
        if (auto* bn = std::get_if<BatchNorm<double>>(&l.params)) b = bn->intercept(i / plane);
        REQUIRE(o[i] == y[i] + b);
      }
    }
  }
}

TEST_CASE("forward rejects bad inputs") {
  const auto m = model({linear(1, 2, {1e308, 1e308})}, {2});
  CHECK_THROWS_AS(forward(m, T({3}, {1, 2, 3})), ShapeError);
  CHECK_THROWS_AS(forward(m, T({2}, {10, 10})), NumericError);
  CHECK_NOTHROW(forward(m, T({2}, {10, 10}), ForwardOptions{false}));
}

TEST_CASE("logits and softmax") {
  const auto id = model({flatten()}, {3});
  CHECK(values(logits(forward(id, T({3}, {1, -2, 5})))) == std::vector<double>{1, -2, 5});
  CHECK(values(softmax(T({2}, {0, 0}))) == std::vector<double>{0.5, 0.5});
  const auto big = softmax(T({2}, {1000, 0}));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] >= 0.0);
  CHECK(big[1] < 1e-300);
  const auto third = softmax(T({2}, {std::log(2.0), 0}));
  CHECK(third[0] == doctest::Approx(2.0 / 3).epsilon(1e-14));
  CHECK(third[1] == doctest::Approx(1.0 / 3).epsilon(1e-14));
  checks::Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const auto p = softmax(checks::random_tensor(rng, {7}, -50, 50));
    double s = 0;
    for (double v : p.data()) s += v;
    REQUIRE(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("shape chain holds on random valid models") {
  checks::Rng rng(99);
  for (int i = 0; i < 200; ++i) {
    const auto m = checks::random_network(rng);
    const auto back = load_model(save_model(m));
    const auto t = forward(back, checks::random_input(rng, back));
    for (std::size_t n = 0; n <= back.depth(); ++n) REQUIRE(t.outputs[n].shape() == back.boundaries()[n]);
  }
}

TEST_CASE("direct conv equals the im2col linear form") {
  checks::Rng rng(4);
  std::uniform_int_distribution<std::size_t> pick(1, 3);
  int done = 0;
  while (done < 100) {
    const std::size_t ic = pick(rng), oc = pick(rng), k = pick(rng), s = pick(rng), p = pick(rng) - 1;
    const std::size_t h = 2 + pick(rng) + pick(rng), w = 2 + pick(rng) + pick(rng);
    if (h + 2 * p < k || w + 2 * p < k) continue;
    const auto kern = checks::random_tensor(rng, {oc, ic, k, k}, -1, 1);
    const auto m = model({{"conv", Conv2d<double>{kern, Tensor<double>(Shape{oc}), s, p}}, flatten()}, {ic, h, w});
    const auto x = checks::random_tensor(rng, {ic, h, w}, -1, 1);
    const auto t = forward(m, x);
    const auto g = window_geometry(m.layer(0), m.input_shape());
    const auto cols = im2col(x, g);
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> f(
        kern.data().data(), long(oc), long(ic * k * k));
    const Eigen::MatrixXd y = cols.values * f.transpose();  // [positions, oc]
    double diff = 0, mag = 0;
    for (std::size_t c = 0; c < oc; ++c)
      for (std::size_t q = 0; q < g.out_h * g.out_w; ++q) {
        const double direct = t.prebias(0)[c * g.out_h * g.out_w + q];
        diff = std::max(diff, std::abs(direct - y(long(q), long(c))));
        mag = std::max(mag, std::abs(direct));
      }
    REQUIRE(diff <= 1e-9 * std::max(mag, 1e-300));
    ++done;
  }
}

TEST_CASE("forward is deterministic") {
  checks::Rng rng(17);
  const auto m = checks::random_network(rng);
  const auto x = checks::random_input(rng, m);
  const auto a = forward(m, x), b = forward(m, x);
  CHECK(a.outputs == b.outputs);
  CHECK(a.prebias_ == b.prebias_);
  CHECK(a.argmax == b.argmax);
  CHECK(a.trace_hash() == b.trace_hash());
  const auto mf = m.cast<float>();
  const auto xf = x.cast<float>();
  CHECK(forward(mf, xf).outputs == forward(mf, xf).outputs);
}

TEST_CASE("fixture logits match the exporter probes") {
  const auto o = checks::fixture_parity(fixture_dir());
  INFO(o.detail);
  CHECK(o.pass);
}

TEST_CASE("fixture model in single precision stays close") {
  const auto m = load_model_file((fixture_dir() / "model.panew").string());
  CHECK(m.input_shape() == Shape{3, 32, 32});
  const auto x = read_image(fixture_dir() / "images" / "img_000.ppm");
  const auto z64 = logits(forward(m, x));
  const auto z32 = logits(forward(m.cast<float>(), x.cast<float>())).cast<double>();
  CHECK(checks::relative_error(z32, z64) <= 1e-4);
}

}
