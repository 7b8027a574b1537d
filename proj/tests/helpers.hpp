#ifndef PANE_TESTS_HELPERS_HPP
#define PANE_TESTS_HELPERS_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "pane/checks.hpp"

namespace testing {

using pane::Layer;
using pane::ModelGraph;
using pane::Shape;
using pane::Tensor;

inline Tensor<double> T(Shape s, std::vector<double> v) { return Tensor<double>(std::move(s), std::move(v)); }

inline Layer<double> linear(std::size_t out, std::size_t in, std::vector<double> w, std::vector<double> b = {}) {
  if (b.empty()) b.assign(out, 0.0);
  return {"fc", pane::Linear<double>{T({out, in}, std::move(w)), T({out}, std::move(b))}};
}

inline Layer<double> conv(Shape k, std::vector<double> w, std::vector<double> b = {}, std::size_t stride = 1,
                          std::size_t pad = 0) {
  const std::size_t oc = k[0];
  if (b.empty()) b.assign(oc, 0.0);
  return {"conv", pane::Conv2d<double>{T(std::move(k), std::move(w)), T({oc}, std::move(b)), stride, pad}};
}

inline Layer<double> relu() { return {"relu", pane::ReLU{}}; }
inline Layer<double> flatten() { return {"flatten", pane::Flatten{}}; }
inline Layer<double> maxpool(std::size_t k, std::size_t s) { return {"maxpool", pane::MaxPool2d{k, k, s}}; }
inline Layer<double> avgpool(std::size_t k, std::size_t s) { return {"avgpool", pane::AvgPool2d{k, k, s}}; }

inline Layer<double> batchnorm(std::vector<double> gamma, std::vector<double> beta, std::vector<double> mean,
                               std::vector<double> var, double eps) {
  const std::size_t c = gamma.size();
  pane::BatchNorm<double> b{T({c}, std::move(gamma)), T({c}, std::move(beta)), T({c}, std::move(mean)),
                            T({c}, std::move(var)), eps};
  return {"bn", b};
}

inline ModelGraph<double> model(std::vector<Layer<double>> layers, Shape input) {
  return ModelGraph<double>(std::move(layers), std::move(input), "test");
}

inline std::vector<double> values(const Tensor<double>& t) { return t.values(); }

inline std::filesystem::path fixture_dir() { return PANE_FIXTURE_DIR; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("pane_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing

#endif  // PANE_TESTS_HELPERS_HPP
