#ifndef PANE_EVAL_HPP
#define PANE_EVAL_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "pane/saliency.hpp"

namespace pane {

struct Sample {
  std::string name;
  Tensor<double> image;  // [C,H,W], 0-255
  int label = -1;
};

/// Directory with images and a `filename,label` manifest (labels.csv).
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

struct EvalConfig {
  std::vector<Method> methods{Method::pane_pos};
  std::vector<double> ratios;  // ascending; 0 is the no-op point
  double fill = 0.0;
  bool mean_fill = false;  // fill each image with its own mean instead
  double pixel_max = 255.0;
  std::uint64_t seed = 0;
  unsigned jobs = 1;

  void validate() const;
};

/// Salient grid 0.1%..1%, minor grid 1%..10%, logit grid 0.01%..0.1%.
std::vector<double> salient_ratio_grid();
std::vector<double> minor_ratio_grid();
std::vector<double> logit_ratio_grid();

/// Sets every channel of the listed pixels to `fill`.
Tensor<double> remove_pixels(const Tensor<double>& image, const std::vector<Pixel>& pixels, double fill);

/// Runs fn(i) for i in [0, n) on `jobs` threads; results keep index order.
template <typename Fn>
auto parallel_map(std::size_t n, unsigned jobs, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
  std::vector<decltype(fn(std::size_t{}))> out(n);
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  for (unsigned t = 0; t < jobs; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += jobs) out[i] = fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// negative: most negative signed values first (negative-region removal)
enum class RemovalMode { salient, minor, negative };

struct ApdCurve {
  Method method = Method::pane_pos;
  std::vector<double> ratios;
  std::vector<double> apd;  // mean of p_after - p_before of the explained class
  std::size_t samples = 0;
};

enum class LogitRegion { pos_region, neg_region };

struct LogitDeltaTable {
  Method method = Method::pane_sum;
  LogitRegion region = LogitRegion::pos_region;
  std::vector<double> ratios;
  std::vector<double> sum_delta;          // sum of logit_after - logit_before
  std::vector<double> expected_fraction;  // share moving in the expected direction
  std::size_t samples = 0;
};

struct AttackParams {
  double linf = 50.0;
  double step = 7.0;
  int iterations = 10;
};

struct AttackResult {
  Tensor<double> delta;        // adversarial - original
  Tensor<double> adversarial;
  bool success = false;        // top-1 changed
};

struct GuidedAttackRow {
  Method method = Method::pane_pos;
  double keep_ratio = 0;
  double success_rate = 0;
};

struct GuidedAttackTable {
  std::vector<GuidedAttackRow> rows;
  double unrestricted_rate = 0;
  double base_rate = 0;  // misclassification with no perturbation kept
  std::size_t samples = 0;
};

namespace detail {

template <typename Scalar>
ForwardTrace<Scalar> run(const ModelGraph<Scalar>& model, const Tensor<double>& image) {
  return forward(model, image.template cast<Scalar>());
}

inline void require_nonempty(const std::vector<Sample>& data) {
  if (data.empty()) throw ArgumentError("empty dataset");
}

}  // namespace detail

/**
 * Average probability drop under pixel removal, one curve per method.
 *
 * The explained class is each image's original top-1. Salient mode removes the
 * highest-valued pixels first, minor mode those closest to zero.
 */
template <typename Scalar>
std::vector<ApdCurve> apd_curve(const ModelGraph<Scalar>& model, const std::vector<Sample>& data,
                                const EvalConfig& cfg, RemovalMode mode) {
  cfg.validate();
  detail::require_nonempty(data);
  const RankOrder order = mode == RemovalMode::salient ? RankOrder::desc_value
                          : mode == RemovalMode::minor ? RankOrder::asc_abs
                                                       : RankOrder::asc_signed;
  const std::size_t m = cfg.methods.size(), r = cfg.ratios.size();

  // per sample: [method][ratio] probability change
  const auto per_sample = parallel_map(data.size(), cfg.jobs, [&](std::size_t i) {
    std::vector<double> drops(m * r, 0.0);
    const auto trace = detail::run(model, data[i].image);
    const std::size_t k = argmax_index(logits(trace));
    const double before = softmax(logits(trace))[k];
    const auto& img = data[i].image;
    const double fill =
        cfg.mean_fill ? std::accumulate(img.data().begin(), img.data().end(), 0.0) / double(img.size()) : cfg.fill;
    for (std::size_t a = 0; a < m; ++a) {
      const auto bundle = saliency_map(model, trace, k, cfg.methods[a], cfg.seed + i);
      for (std::size_t b = 0; b < r; ++b) {
        if (cfg.ratios[b] == 0.0) continue;
        const auto removed = remove_pixels(img, rank_pixels(bundle, order, cfg.ratios[b]), fill);
        drops[a * r + b] = softmax(logits(detail::run(model, removed)))[k] - before;
      }
    }
    return drops;
  });

  std::vector<ApdCurve> curves;
  for (std::size_t a = 0; a < m; ++a) {
    ApdCurve c{cfg.methods[a], cfg.ratios, std::vector<double>(r, 0.0), data.size()};
    for (const auto& s : per_sample)
      for (std::size_t b = 0; b < r; ++b) c.apd[b] += s[a * r + b];
    for (auto& v : c.apd) v /= double(data.size());
    curves.push_back(std::move(c));
  }
  return curves;
}

/**
 * Logit change when the selected pixels are lowered by one intensity level.
 *
 * pos_region takes the largest signed values and expects the explained logit
 * to fall; neg_region takes the most negative values and expects it to rise.
 */
template <typename Scalar>
LogitDeltaTable logit_delta(const ModelGraph<Scalar>& model, const std::vector<Sample>& data, const EvalConfig& cfg,
                            LogitRegion region, Method method) {
  cfg.validate();
  detail::require_nonempty(data);
  if (cfg.pixel_max != 255.0) throw ArgumentError("logit-delta protocol needs 0-255 pixel scale");
  const RankOrder order = region == LogitRegion::pos_region ? RankOrder::desc_signed : RankOrder::asc_signed;
  const std::size_t r = cfg.ratios.size();

  const auto per_sample = parallel_map(data.size(), cfg.jobs, [&](std::size_t i) {
    std::vector<double> deltas(r, 0.0);
    const auto trace = detail::run(model, data[i].image);
    const std::size_t k = argmax_index(logits(trace));
    const double before = logits(trace)[k];
    const auto bundle = saliency_map(model, trace, k, method, cfg.seed + i);
    const auto& img = data[i].image;
    const std::size_t c = img.extent(0), plane = img.extent(1) * img.extent(2), w = img.extent(2);
    for (std::size_t b = 0; b < r; ++b) {
      if (cfg.ratios[b] == 0.0) continue;
      std::vector<double> v(img.values());
      for (const Pixel& p : rank_pixels(bundle, order, cfg.ratios[b]))
        for (std::size_t ch = 0; ch < c; ++ch) {
          double& px = v[ch * plane + p.row * w + p.col];
          px = std::max(px - 1.0, 0.0);
        }
      deltas[b] = double(logits(detail::run(model, Tensor<double>(img.shape(), std::move(v))))[k]) - before;
    }
    return deltas;
  });

  LogitDeltaTable t{method, region, cfg.ratios, std::vector<double>(r, 0.0), std::vector<double>(r, 0.0), data.size()};
  for (const auto& s : per_sample)
    for (std::size_t b = 0; b < r; ++b) {
      t.sum_delta[b] += s[b];
      const bool expected = region == LogitRegion::pos_region ? s[b] < 0 : s[b] > 0;
      if (expected) t.expected_fraction[b] += 1.0;
    }
  for (auto& f : t.expected_fraction) f /= double(data.size());
  return t;
}

/**
 * Iterative FGSM: sign-gradient ascent on the cross-entropy of class k, each
 * step projected onto the L-inf ball around the original and the pixel range.
 */
template <typename Scalar>
AttackResult ifgsm(const ModelGraph<Scalar>& model, const Tensor<double>& image, std::size_t k,
                   const AttackParams& params, double pixel_max = 255.0) {
  if (params.linf < 0 || params.step < 0 || params.iterations < 0) throw ArgumentError("invalid attack parameters");
  const auto x0 = image.values();
  std::vector<double> x = x0;
  for (int it = 0; it < params.iterations && params.linf > 0; ++it) {
    const auto trace = detail::run(model, Tensor<double>(image.shape(), x, Check::none));
    auto p = softmax(logits(trace)).values();
    p[k] -= 1.0;  // d(-log p_k)/d logits
    const std::size_t classes = p.size();
    const auto g = backward(model, trace, Tensor<double>({classes}, std::move(p)));
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double sgn = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
      double v = x[i] + params.step * sgn;
      v = std::clamp(v, x0[i] - params.linf, x0[i] + params.linf);
      x[i] = std::clamp(v, 0.0, pixel_max);
    }
  }
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - x0[i];
  Tensor<double> adv(image.shape(), std::move(x));
  const bool success = argmax_index(logits(detail::run(model, adv))) != k;
  return {Tensor<double>(image.shape(), std::move(d)), std::move(adv), success};
}

/// Adds only the part of `delta` that falls on the listed pixels.
Tensor<double> apply_masked_delta(const Tensor<double>& image, const Tensor<double>& delta,
                                  const std::vector<Pixel>& keep);

/**
 * Misclassification rate when the I-FGSM perturbation is kept only on the
 * top-ranked pixels of each method's map.
 */
template <typename Scalar>
GuidedAttackTable guided_attack_eval(const ModelGraph<Scalar>& model, const std::vector<Sample>& data,
                                     const EvalConfig& cfg, const std::vector<double>& keep_ratios,
                                     const AttackParams& params = {}) {
  cfg.validate();
  detail::require_nonempty(data);
  const std::size_t m = cfg.methods.size(), r = keep_ratios.size();
  struct Outcome {
    std::vector<int> hits;
    int unrestricted = 0;
  };
  const auto per_sample = parallel_map(data.size(), cfg.jobs, [&](std::size_t i) {
    Outcome o{std::vector<int>(m * r, 0), 0};
    const auto trace = detail::run(model, data[i].image);
    const std::size_t k = argmax_index(logits(trace));
    const auto attack = ifgsm(model, data[i].image, k, params, cfg.pixel_max);
    o.unrestricted = attack.success ? 1 : 0;
    for (std::size_t a = 0; a < m; ++a) {
      const auto bundle = saliency_map(model, trace, k, cfg.methods[a], cfg.seed + i);
      for (std::size_t b = 0; b < r; ++b) {
        const auto keep = rank_pixels(bundle, RankOrder::desc_value, keep_ratios[b]);
        const auto x = apply_masked_delta(data[i].image, attack.delta, keep);
        o.hits[a * r + b] = argmax_index(logits(detail::run(model, x))) != k ? 1 : 0;
      }
    }
    return o;
  });

  GuidedAttackTable t;
  t.samples = data.size();
  for (const auto& o : per_sample) t.unrestricted_rate += o.unrestricted;
  t.unrestricted_rate /= double(data.size());
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < r; ++b) {
      double hits = 0;
      for (const auto& o : per_sample) hits += o.hits[a * r + b];
      t.rows.push_back({cfg.methods[a], keep_ratios[b], hits / double(data.size())});
    }
  // top-1 is the explained class, so the unperturbed images are never misclassified
  t.base_rate = 0.0;
  return t;
}

// Result emitters: one CSV row per method x ratio, plus a JSON summary.
std::string apd_csv(const std::vector<ApdCurve>& curves);
std::string logit_csv(const std::vector<LogitDeltaTable>& tables);
std::string attack_csv(const GuidedAttackTable& table);
std::string apd_json(const std::vector<ApdCurve>& curves, RemovalMode mode);
std::string logit_json(const std::vector<LogitDeltaTable>& tables);
std::string attack_json(const GuidedAttackTable& table);

}  // namespace pane

#endif  // PANE_EVAL_HPP
