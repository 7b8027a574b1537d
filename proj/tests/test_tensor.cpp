#include <cmath>
#include <cstring>
#include <random>

#include "helpers.hpp"

using namespace pane;
using testing::T;
using testing::values;

TEST_SUITE("tensor") {

TEST_CASE("construction") {
  const auto t = tensor_new<double>({2, 2}, {1, 2, 3, 4});
  CHECK(t.shape() == Shape{2, 2});
  CHECK(t.at({1, 0}) == 3);
  CHECK(tensor_new<double>({3}, {0, 0, 0}) == Tensor<double>(Shape{3}));
  CHECK_THROWS_AS(tensor_new<double>({2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(tensor_new<double>({1}, {std::nan("")}), NumericError);
  CHECK_THROWS_AS(tensor_new<float>({1}, {INFINITY}), NumericError);
  CHECK_NOTHROW(Tensor<double>({1}, {INFINITY}, Check::none));
}

TEST_CASE("strides and indexing are row-major") {
  CHECK(strides_of({2, 3, 4}) == std::vector<std::size_t>{12, 4, 1});
  std::vector<double> v(24);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = double(i);
  const auto t = T({2, 3, 4}, v);
  CHECK(t.at({1, 2, 3}) == 23);
  CHECK(t.at({0, 1, 2}) == 6);
  CHECK_THROWS_AS(t.at({0, 3, 0}), ShapeError);
  CHECK_THROWS_AS(t.at({0, 0}), ShapeError);
}

TEST_CASE("reshape") {
  const auto v = T({4}, {1, 2, 3, 4});
  const auto m = reshape(v, {2, 2});
  CHECK(m.at({0, 0}) == 1);
  CHECK(m.at({0, 1}) == 2);
  CHECK(m.at({1, 0}) == 3);
  CHECK(m.at({1, 1}) == 4);
  CHECK(reshape(m, {4}) == v);
  CHECK_THROWS_AS(reshape(T({3}, {1, 2, 3}), {2, 2}), ShapeError);
}

TEST_CASE("reshape round-trip is bit-identical") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 1e3);
  std::vector<double> v(60);
  for (auto& x : v) x = n(rng);
  const auto t = T({3, 4, 5}, v);
  const auto back = reshape(reshape(reshape(t, {60}), {6, 10}), {3, 4, 5});
  CHECK(std::memcmp(back.data().data(), t.data().data(), 60 * sizeof(double)) == 0);
}

TEST_CASE("binary operations") {
  CHECK(values(T({2}, {1, 2}) + T({2}, {3, 4})) == std::vector<double>{4, 6});
  CHECK(values(T({2}, {1, -2}) * T({2}, {0, 5})) == std::vector<double>{0, -10});
  const auto x = T({3}, {1.5, -2.25, 7});
  CHECK(x - x == Tensor<double>(Shape{3}));
  CHECK_THROWS_AS(T({2}, {1, 2}) + T({2, 1}, {1, 2}), ShapeError);
  CHECK_THROWS_AS(binop(T({2}, {1, 2}), T({3}, {1, 2, 3}), BinOp::mul), ShapeError);
}

TEST_CASE("binary operations match a scalar loop exactly") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> len(1, 50);
  std::normal_distribution<double> n(0, 10);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t size = len(rng);
    std::vector<double> a(size), b(size);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    const auto ta = T({size}, a), tb = T({size}, b);
    const auto sum = ta + tb, diff = ta - tb, prod = ta * tb;
    for (std::size_t i = 0; i < size; ++i) {
      REQUIRE(sum[i] == a[i] + b[i]);
      REQUIRE(diff[i] == a[i] - b[i]);
      REQUIRE(prod[i] == a[i] * b[i]);
    }
  }
}

TEST_CASE("scale, dot and cast") {
  const auto x = T({3}, {1, 2, 3});
  CHECK(values(scale(x, 2.0)) == std::vector<double>{2, 4, 6});
  CHECK(dot(x, x) == 14);
  CHECK(x.cast<float>().cast<double>() == x);
  CHECK_THROWS_AS(dot(x, T({2}, {1, 1})), ShapeError);
}

TEST_CASE("raw tensor file round-trip") {
  const auto t = T({2, 1, 3}, {0.5, -1, 2, 1e-300, 3, 4});
  DType stored;
  CHECK(decode_tensor(encode_tensor(t), &stored) == t);
  CHECK(stored == DType::f64);
  const auto f = T({2}, {0.25, -8}).cast<float>();
  const auto bytes = encode_tensor(f);
  CHECK(bytes.size() == 6 + 2 + 4 + 2 * 4);
  CHECK(bytes[6] == 0);  // dtype code
  CHECK(bytes[7] == 1);  // rank
  CHECK(decode_tensor(bytes, &stored) == T({2}, {0.25, -8}));
  CHECK(stored == DType::f32);
}

TEST_CASE("raw tensor file errors") {
  auto bytes = encode_tensor(T({2}, {1, 2}));
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_tensor(bad), FormatError);
  bad = bytes;
  bad[6] = 7;
  CHECK_THROWS_AS(decode_tensor(bad), FormatError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_tensor(bad), TruncationError);
  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_tensor(bad), FormatError);
}

}
