#include "pane/checks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pane/grad.hpp"
#include "pane/image_io.hpp"

namespace pane::checks {

namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Tensor<double> zeros(const Shape& s) { return Tensor<double>(s); }

Layer<double> conv_layer(Rng& rng, std::size_t in_c, std::size_t out_c, std::size_t k, std::size_t stride,
                         std::size_t pad, const NetOptions& o, const std::string& name) {
  const double zf = o.zeros ? 0.2 : 0.0;
  Conv2d<double> c{random_tensor(rng, {out_c, in_c, k, k}, -1, 1, zf),
                   o.bias ? random_tensor(rng, {out_c}, -0.5, 0.5) : zeros({out_c}), stride, pad};
  return {name, c};
}

Layer<double> linear_layer(Rng& rng, std::size_t in, std::size_t out, const NetOptions& o, const std::string& name) {
  const double zf = o.zeros ? 0.2 : 0.0;
  Linear<double> l{random_tensor(rng, {out, in}, -1, 1, zf), o.bias ? random_tensor(rng, {out}, -0.5, 0.5) : zeros({out})};
  return {name, l};
}

Layer<double> bn_layer(Rng& rng, std::size_t c, const NetOptions& o, const std::string& name) {
  BatchNorm<double> b;
  b.gamma = random_tensor(rng, {c}, -2, 2);
  b.beta = o.bias ? random_tensor(rng, {c}, -1, 1) : zeros({c});
  b.mean = o.bias ? random_tensor(rng, {c}, -1, 1) : zeros({c});
  b.var = random_tensor(rng, {c}, 0.2, 2);
  b.eps = 1e-5;
  return {name, b};
}

// Relative error of a sum against the magnitude of the terms that formed it.
struct Worst {
  double value = 0;
  void add(double err, double scale) {
    if (err == 0) return;
    value = std::max(value, scale > 0 ? err / scale : INFINITY);
  }
};

std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

// Activation pattern: ReLU input signs and max-pool choices.
std::vector<std::uint32_t> pattern(const ModelGraph<double>& model, const ForwardTrace<double>& trace) {
  std::vector<std::uint32_t> p;
  for (std::size_t n = 0; n < model.depth(); ++n) {
    if (model.layer(n).kind() == LayerKind::relu)
      for (double v : trace.input(n).data()) p.push_back(v > 0 ? 1u : 0u);
    for (auto a : trace.argmax[n]) p.push_back(a);
  }
  return p;
}

}  // namespace

Tensor<double> random_tensor(Rng& rng, const Shape& shape, double lo, double hi, double zero_fraction) {
  std::bernoulli_distribution zero(zero_fraction);
  std::vector<double> v(element_count(shape));
  for (auto& x : v) {
    x = uniform(rng, lo, hi);
    if (zero_fraction > 0 && zero(rng)) x = 0.0;
  }
  return Tensor<double>(shape, std::move(v));
}

ModelGraph<double> random_network(Rng& rng, const NetOptions& o) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const std::size_t c = pick(rng, 1, 3), h = pick(rng, 6, 10), w = pick(rng, 6, 10);
    const std::size_t c1 = pick(rng, 2, 4), c2 = pick(rng, 2, 4);
    const bool max_first = pick(rng, 0, 1) == 1;
    std::vector<Layer<double>> layers;
    layers.push_back(conv_layer(rng, c, c1, pick(rng, 1, 3), pick(rng, 1, 2), pick(rng, 0, 1), o, "conv1"));
    layers.push_back(bn_layer(rng, c1, o, "bn1"));
    layers.push_back({"relu1", ReLU{}});
    const std::size_t s1 = pick(rng, 1, 2);
    if (max_first) layers.push_back({"pool1", MaxPool2d{2, 2, s1}});
    else layers.push_back({"pool1", AvgPool2d{2, 2, s1}});
    layers.push_back(conv_layer(rng, c1, c2, pick(rng, 1, 2), 1, pick(rng, 0, 1), o, "conv2"));
    layers.push_back({"relu2", ReLU{}});
    const std::size_t k2 = pick(rng, 1, 2), s2 = pick(rng, 1, 2);
    if (max_first) layers.push_back({"pool2", AvgPool2d{k2, k2, s2}});
    else layers.push_back({"pool2", MaxPool2d{k2, k2, s2}});
    layers.push_back({"flatten", Flatten{}});
    try {
      // shapes up to the flatten decide the first linear fan-in
      const ModelGraph<double> probe(std::vector<Layer<double>>(layers.begin(), layers.end()), {c, h, w});
      const std::size_t flat = probe.boundaries().back()[0];
      if (flat > 600) continue;
      const std::size_t hidden = pick(rng, 3, 6), classes = pick(rng, 2, 4);
      layers.push_back(linear_layer(rng, flat, hidden, o, "fc1"));
      layers.push_back({"relu3", ReLU{}});
      layers.push_back(linear_layer(rng, hidden, classes, o, "fc2"));
      return ModelGraph<double>(std::move(layers), {c, h, w}, "random");
    } catch (const ShapeError&) {
      continue;  // window larger than its input; draw again
    }
  }
  throw NumericError("could not draw a valid random network");
}

ModelGraph<double> random_single_layer(Rng& rng, LayerKind kind) {
  const NetOptions o{};
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<Layer<double>> layers;
    Shape in;
    switch (kind) {
      case LayerKind::linear: {
        const std::size_t n = pick(rng, 1, 8);
        in = {n};
        layers.push_back(linear_layer(rng, n, pick(rng, 1, 8), o, "fc"));
        break;
      }
      case LayerKind::conv2d: {
        const std::size_t c = pick(rng, 1, 3);
        in = {c, pick(rng, 3, 7), pick(rng, 3, 7)};
        layers.push_back(conv_layer(rng, c, pick(rng, 1, 4), pick(rng, 1, 3), pick(rng, 1, 2), pick(rng, 0, 1),
                                    NetOptions{true, true}, "conv"));
        break;
      }
      case LayerKind::relu:
        in = {pick(rng, 1, 20)};
        layers.push_back({"relu", ReLU{}});
        break;
      case LayerKind::maxpool:
      case LayerKind::avgpool: {
        in = {pick(rng, 1, 3), pick(rng, 2, 7), pick(rng, 2, 7)};
        const std::size_t k = pick(rng, 1, 3), s = pick(rng, 1, 3);
        if (kind == LayerKind::maxpool) layers.push_back({"pool", MaxPool2d{k, k, s}});
        else layers.push_back({"pool", AvgPool2d{k, k, s}});
        break;
      }
      case LayerKind::batchnorm: {
        const std::size_t c = pick(rng, 1, 4);
        in = {c, pick(rng, 1, 4), pick(rng, 1, 4)};
        layers.push_back(bn_layer(rng, c, o, "bn"));
        break;
      }
      case LayerKind::flatten:
        in = {pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)};
        break;
    }
    if (in.size() == 3) layers.push_back({"flatten", Flatten{}});
    try {
      return ModelGraph<double>(std::move(layers), in, "single");
    } catch (const ShapeError&) {
      continue;
    }
  }
  throw NumericError("could not draw a valid single-layer model");
}

Tensor<double> random_input(Rng& rng, const ModelGraph<double>& model, double zero_fraction) {
  return random_tensor(rng, model.input_shape(), -1, 1, zero_fraction);
}

double relative_error(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) throw ShapeError("relative_error of differently shaped tensors");
  double diff = 0, mag = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    mag = std::max({mag, std::abs(a[i]), std::abs(b[i])});
  }
  if (diff == 0) return 0;
  return mag > 0 ? diff / mag : INFINITY;
}

Outcome local_completeness(std::uint64_t seed, std::size_t per_kind) {
  Rng rng(seed);
  Worst worst;
  std::size_t layers = 0, outputs = 0;
  bool signs_ok = true;
  for (LayerKind kind : {LayerKind::linear, LayerKind::conv2d, LayerKind::relu, LayerKind::maxpool,
                         LayerKind::avgpool, LayerKind::batchnorm, LayerKind::flatten}) {
    for (std::size_t t = 0; t < per_kind; ++t) {
      const auto model = random_single_layer(rng, kind);
      const auto x = random_input(rng, model, 0.2);
      const auto trace = forward(model, x);
      const Shape& out = model.boundaries()[1];
      const auto& y = trace.prebias(0);
      std::vector<double> errs(y.size()), mags(y.size());
      double scale = 0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        Tensor<double> e = one_hot(i, y.size());
        ChainState r{reshape(e, out), Tensor<double>(out)};
        const auto u = chain_back(model, trace, 0, r);
        const double p = dot(u.pos, x), n = dot(u.neg, x);
        errs[i] = std::abs(p + n - y[i]);
        scale = std::max(scale, std::abs(p) + std::abs(n));
        if (y[i] > 0 && (p < 0 || n > 0)) signs_ok = false;
        if (y[i] < 0 && (p > 0 || n < 0)) signs_ok = false;
        if (y[i] == 0 && n != 0) signs_ok = false;
        ++outputs;
      }
      for (double e : errs) worst.add(e, scale);
      ++layers;
    }
  }
  const bool pass = worst.value <= 1e-9 && signs_ok;
  return {pass, std::to_string(layers) + " layers, " + std::to_string(outputs) + " outputs, max rel err " +
                    sci(worst.value) + (signs_ok ? "" : ", sign split violated")};
}

Outcome oracle_equivalence(std::uint64_t seed, std::size_t models) {
  Rng rng(seed);
  double worst = 0;
  std::size_t maps = 0;
  for (std::size_t m = 0; m < models; ++m) {
    const auto model = random_network(rng, NetOptions{true, m % 2 == 1});
    const auto x = random_input(rng, model, m % 3 == 0 ? 0.1 : 0.0);
    const auto trace = forward(model, x);
    for (std::size_t k = 0; k < model.class_count(); ++k) {
      const auto fast = pane_explain(model, trace, k);
      const auto dense = dense_oracle(model, trace, k);
      worst = std::max({worst, relative_error(fast.pos, dense.pos), relative_error(fast.neg, dense.neg)});
      ++maps;
    }
  }
  return {worst <= 1e-9, std::to_string(models) + " models, " + std::to_string(maps) + " classes, max rel err " +
                             sci(worst)};
}

Outcome bias_free_reconstruction(std::uint64_t seed, std::size_t models) {
  Rng rng(seed);
  double worst = 0;
  std::size_t checked = 0;
  for (std::size_t m = 0; m < models; ++m) {
    const auto model = random_network(rng, NetOptions{false, false});
    // redraw inputs that leave every logit exactly zero (dead network)
    Tensor<double> x;
    ForwardTrace<double> trace;
    for (int tries = 0; tries < 50; ++tries) {
      x = random_input(rng, model);
      trace = forward(model, x);
      const auto& z = logits(trace);
      if (std::any_of(z.data().begin(), z.data().end(), [](double v) { return v != 0; })) break;
    }
    for (std::size_t k = 0; k < model.class_count(); ++k) {
      const auto e = pane_explain(model, trace, k);
      const double recon = dot(e.pos + e.neg, x), logit = logits(trace)[k];
      const double err = std::abs(recon - logit);
      if (err > 0) worst = std::max(worst, logit != 0 ? err / std::abs(logit) : INFINITY);
      ++checked;
    }
  }
  return {worst <= 1e-6, std::to_string(models) + " models, " + std::to_string(checked) + " logits, max rel err " +
                             sci(worst)};
}

Outcome relu_purity(std::uint64_t seed, std::size_t models) {
  Rng rng(seed);
  std::size_t relu_blocks = 0, single_steps = 0, violations = 0;
  for (std::size_t m = 0; m < models; ++m) {
    const auto model = random_network(rng, NetOptions{true, m % 2 == 0});
    const auto trace = forward(model, random_input(rng, model, 0.1));
    for (std::size_t n = 0; n < model.depth(); ++n) {
      const LayerKind kind = model.layer(n).kind();
      if (kind == LayerKind::relu) {
        const auto split = local_split(model, trace, n);
        if (split.second.cwiseAbs().maxCoeff() != 0.0) ++violations;
        ++relu_blocks;
      }
      if (kind == LayerKind::relu || kind == LayerKind::maxpool || kind == LayerKind::batchnorm ||
          kind == LayerKind::flatten) {
        const Shape& out = model.boundaries()[n + 1];
        const auto rp = random_tensor(rng, out, -1, 1), rn = random_tensor(rng, out, -1, 1);
        const auto only_pos = chain_back(model, trace, n, ChainState{rp, Tensor<double>(out)});
        const auto only_neg = chain_back(model, trace, n, ChainState{Tensor<double>(out), rn});
        if (!std::all_of(only_pos.neg.data().begin(), only_pos.neg.data().end(), [](double v) { return v == 0; }))
          ++violations;
        if (!std::all_of(only_neg.pos.data().begin(), only_neg.pos.data().end(), [](double v) { return v == 0; }))
          ++violations;
        if (kind == LayerKind::relu) {
          // pure gating: each chain passes where x > 0 and is zero elsewhere
          const auto& x = trace.input(n);
          for (std::size_t i = 0; i < x.size(); ++i)
            if (only_pos.pos[i] != (x[i] > 0 ? rp[i] : 0.0) || only_neg.neg[i] != (x[i] > 0 ? rn[i] : 0.0))
              ++violations;
        }
        ++single_steps;
      }
    }
  }
  return {violations == 0 && relu_blocks > 0, std::to_string(relu_blocks) + " ReLU blocks, " +
                                                  std::to_string(single_steps) + " single-term steps, " +
                                                  std::to_string(violations) + " violations"};
}

Outcome gradient_check(std::uint64_t seed, std::size_t models) {
  Rng rng(seed);
  const double h = 1e-4;
  double worst = 0;
  std::size_t coords = 0, skipped = 0;
  for (std::size_t m = 0; m < models; ++m) {
    const auto model = random_network(rng);
    const auto x = random_input(rng, model);
    const auto trace = forward(model, x);
    const std::size_t k = pick(rng, 0, model.class_count() - 1);
    const auto g = backward_input_grad(model, trace, k);
    const auto base = pattern(model, trace);
    std::vector<double> fd(x.size(), 0.0);
    std::vector<bool> used(x.size(), false);
    for (std::size_t j = 0; j < x.size(); ++j) {
      std::vector<double> up(x.values()), down(x.values());
      up[j] += h;
      down[j] -= h;
      const auto tu = forward(model, Tensor<double>(x.shape(), std::move(up)));
      const auto td = forward(model, Tensor<double>(x.shape(), std::move(down)));
      // a difference across a ReLU kink or a max-pool switch is not a derivative
      if (pattern(model, tu) != base || pattern(model, td) != base) {
        ++skipped;
        continue;
      }
      fd[j] = (logits(tu)[k] - logits(td)[k]) / (2 * h);
      used[j] = true;
      ++coords;
    }
    double diff = 0, mag = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (!used[j]) continue;
      diff = std::max(diff, std::abs(g[j] - fd[j]));
      mag = std::max({mag, std::abs(g[j]), std::abs(fd[j])});
    }
    if (diff > 0) worst = std::max(worst, mag > 0 ? diff / mag : INFINITY);
  }
  const bool pass = worst <= 1e-4 && coords > 0 && skipped * 10 < coords;
  return {pass, std::to_string(models) + " models, " + std::to_string(coords) + " coordinates (" +
                    std::to_string(skipped) + " at kinks skipped), max rel err " + sci(worst)};
}

Outcome fixture_parity(const std::filesystem::path& bundle) {
  const auto model = load_model_file((bundle / "model.panew").string());
  std::ifstream in(bundle / "manifest.json");
  if (!in) throw FormatError("cannot open " + (bundle / "manifest.json").string());
  const auto manifest = nlohmann::json::parse(in);
  double worst = 0;
  std::size_t probes = 0;
  for (const auto& p : manifest.at("probes")) {
    const auto trace = forward(model, read_image(bundle / p.at("image").get<std::string>()));
    const auto expect = p.at("logits").get<std::vector<double>>();
    worst = std::max(worst, relative_error(logits(trace), Tensor<double>({expect.size()}, expect)));
    ++probes;
  }
  return {probes > 0 && worst <= 1e-4, std::to_string(probes) + " probes, max rel err " + sci(worst)};
}

}  // namespace pane::checks
