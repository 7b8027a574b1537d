#include "pane/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pane/checks.hpp"
#include "pane/eval.hpp"
#include "pane/image_io.hpp"

namespace pane {

namespace {

enum class FloatMode { f32, f64 };

FloatMode float_mode() {
  const char* env = std::getenv("PANE_FLOAT_MODE");
  if (env == nullptr || std::string_view(env).empty() || std::string_view(env) == "f32") return FloatMode::f32;
  if (std::string_view(env) == "f64") return FloatMode::f64;
  throw ArgumentError("PANE_FLOAT_MODE must be f32 or f64, got '" + std::string(env) + "'");
}

std::string_view mode_tag(FloatMode m) { return m == FloatMode::f64 ? "f64" : "f32"; }

template <typename Fn>
decltype(auto) with_precision(const ModelGraph<double>& model, FloatMode mode, Fn&& fn) {
  if (mode == FloatMode::f64) return fn(model);
  return fn(model.cast<float>());
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  for (const auto& name : split_list(list)) {
    const auto m = parse_method(name);
    if (!m) throw ArgumentError("unknown method '" + name + "'");
    out.push_back(*m);
  }
  if (out.empty()) throw ArgumentError("no methods given");
  return out;
}

std::vector<double> parse_ratios(const std::string& list) {
  std::vector<double> out;
  for (const auto& item : split_list(list)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ArgumentError("bad ratio '" + item + "'");
    }
  }
  if (out.empty()) throw ArgumentError("empty ratio list");
  return out;
}

std::string hex32(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

struct ExplainArgs {
  std::string model, input, out, pair, raw;
  std::string variant, method, style = "auto";
  std::optional<std::size_t> cls;
  std::uint64_t seed = 0;
};

struct EvalArgs {
  std::string model, data, methods, ratios, grid, fill = "0", csv, json, mode = "salient", region = "pos";
  std::string keep = "0.005,0.01,0.02,0.03";
  unsigned jobs = 1;
  std::uint64_t seed = 0;
  std::size_t limit = 0;
  AttackParams attack;
};

int explain(const ExplainArgs& a, std::ostream& out) {
  // validate flags before touching any file
  if (!a.variant.empty() && !a.method.empty()) throw ArgumentError("--variant and --method are exclusive");
  Method method = Method::pane_pos;
  if (!a.method.empty()) {
    const auto m = parse_method(a.method);
    if (!m) throw ArgumentError("unknown method '" + a.method + "'");
    method = *m;
  } else if (!a.variant.empty()) {
    const auto m = parse_method("pane_" + a.variant);
    if (!m || (a.variant != "pos" && a.variant != "neg" && a.variant != "sum"))
      throw ArgumentError("--variant must be pos, neg or sum");
    method = *m;
  }
  if (a.style != "auto" && a.style != "gray" && a.style != "signed") throw ArgumentError("--style must be auto, gray or signed");
  const FloatMode fm = float_mode();

  const auto model = load_model_file(a.model);
  const auto image = read_image(a.input);
  if (image.shape() != model.input_shape()) {
    throw ShapeError("image shape " + shape_string(image.shape()) + " does not match model input " +
                     shape_string(model.input_shape()));
  }
  if (a.cls && *a.cls >= model.class_count()) throw ArgumentError("--class out of range");

  const bool pane_method = method == Method::pane_pos || method == Method::pane_neg || method == Method::pane_sum;
  const HeatmapStyle style =
      a.style == "gray" ? HeatmapStyle::gray
                        : (a.style == "signed" || (a.style == "auto" && pane_method) ? HeatmapStyle::signed_rb
                                                                                      : HeatmapStyle::gray);

  with_precision(model, fm, [&](const auto& m) {
    using S = typename std::decay_t<decltype(m)>::scalar_type;
    const auto trace = forward(m, image.template cast<S>());
    const auto& z = logits(trace);
    const std::size_t k = a.cls.value_or(argmax_index(z));
    const auto bundle = saliency_map(m, trace, k, method, a.seed);
    write_heatmap(bundle.map, a.out, style);
    out << "class " << k << " logit " << double(z[k]) << " probability " << softmax(z)[k] << "\n";
    out << "wrote " << a.out << "\n";
    if (!a.raw.empty()) {
      write_file_atomic(a.raw, encode_tensor(bundle.map));
      out << "wrote " << a.raw << "\n";
    }
    if (!a.pair.empty()) {
      const auto pair = pane_explain(m, trace, k);
      const auto pos = collapse_channels(pair.pos, Collapse::channel_sum);
      const auto neg = collapse_channels(pair.neg, Collapse::channel_sum);
      nlohmann::ordered_json j{{"model_hash", hex32(pair.model_hash)},
                               {"trace_hash", hex32(pair.trace_hash)},
                               {"class_index", pair.class_index},
                               {"mode", mode_tag(fm)},
                               {"pos_neg_correlation", pearson(pos, neg)}};
      write_file_atomic(a.pair + ".pos.ptnsr", encode_tensor(pair.pos));
      write_file_atomic(a.pair + ".neg.ptnsr", encode_tensor(pair.neg));
      write_file_atomic(a.pair + ".json", j.dump(2) + "\n");
      out << "wrote " << a.pair << ".{pos.ptnsr,neg.ptnsr,json}\n";
    }
  });
  return exit_ok;
}

// Shared flag handling for the dataset protocols.
struct EvalSetup {
  EvalConfig cfg;
  FloatMode fm;
};

EvalSetup eval_setup(const EvalArgs& a, const std::string& default_methods, std::vector<double> default_grid) {
  EvalSetup s;
  s.cfg.methods = parse_methods(a.methods.empty() ? default_methods : a.methods);
  if (!a.ratios.empty() && !a.grid.empty()) throw ArgumentError("--ratios and --grid are exclusive");
  if (!a.ratios.empty()) s.cfg.ratios = parse_ratios(a.ratios);
  else if (a.grid == "salient") s.cfg.ratios = salient_ratio_grid();
  else if (a.grid == "logit") s.cfg.ratios = logit_ratio_grid();
  else if (a.grid == "minor") s.cfg.ratios = minor_ratio_grid();
  else if (a.grid.empty()) s.cfg.ratios = std::move(default_grid);
  else throw ArgumentError("--grid must be salient, minor or logit");
  if (a.fill == "mean") {
    s.cfg.mean_fill = true;
  } else {
    try {
      std::size_t used = 0;
      s.cfg.fill = std::stod(a.fill, &used);
      if (used != a.fill.size()) throw std::invalid_argument(a.fill);
    } catch (const std::exception&) {
      throw ArgumentError("--fill must be a pixel value or 'mean'");
    }
  }
  s.cfg.seed = a.seed;
  s.cfg.jobs = std::max(1u, a.jobs);
  s.cfg.validate();
  s.fm = float_mode();
  return s;
}

std::vector<Sample> load_samples(const EvalArgs& a, const Shape& input) {
  auto data = load_dataset(a.data);
  if (a.limit > 0 && data.size() > a.limit) data.resize(a.limit);
  for (const auto& s : data)
    if (s.image.shape() != input)
      throw ShapeError(s.name + ": shape " + shape_string(s.image.shape()) + " does not match model input " +
                       shape_string(input));
  return data;
}

void emit(const EvalArgs& a, const std::string& csv, const std::string& json, std::ostream& out) {
  if (!a.csv.empty()) write_file_atomic(a.csv, csv);
  if (!a.json.empty()) write_file_atomic(a.json, json);
  if (a.csv.empty() && a.json.empty()) out << csv;
}

int eval_remove(const EvalArgs& a, bool minor, std::ostream& out) {
  RemovalMode mode = RemovalMode::minor;
  if (!minor) {
    if (a.mode == "salient") mode = RemovalMode::salient;
    else if (a.mode == "negative") mode = RemovalMode::negative;
    else throw ArgumentError("--mode must be salient or negative");
  }
  const auto s = eval_setup(a, minor ? "pane_pos,pane_sum,vbp,guided_bp,gradcam,random"
                                     : (mode == RemovalMode::negative ? "pane_sum"
                                                                      : "pane_pos,pane_sum,vbp,guided_bp,gradcam,random"),
                            minor ? minor_ratio_grid() : salient_ratio_grid());
  const auto model = load_model_file(a.model);
  const auto data = load_samples(a, model.input_shape());
  const auto curves = with_precision(model, s.fm, [&](const auto& m) { return apd_curve(m, data, s.cfg, mode); });
  emit(a, apd_csv(curves), apd_json(curves, mode), out);
  return exit_ok;
}

int eval_logit(const EvalArgs& a, std::ostream& out) {
  std::vector<LogitRegion> regions;
  if (a.region == "pos" || a.region == "both") regions.push_back(LogitRegion::pos_region);
  if (a.region == "neg" || a.region == "both") regions.push_back(LogitRegion::neg_region);
  if (regions.empty()) throw ArgumentError("--region must be pos, neg or both");
  const auto s = eval_setup(a, "pane_sum,pane_pos", logit_ratio_grid());
  const auto model = load_model_file(a.model);
  const auto data = load_samples(a, model.input_shape());
  std::vector<LogitDeltaTable> tables;
  with_precision(model, s.fm, [&](const auto& m) {
    for (LogitRegion r : regions)
      for (Method method : s.cfg.methods) tables.push_back(logit_delta(m, data, s.cfg, r, method));
  });
  emit(a, logit_csv(tables), logit_json(tables), out);
  return exit_ok;
}

int attack_guide(const EvalArgs& a, std::ostream& out) {
  EvalArgs b = a;
  b.ratios = "1";  // the ratio grid is unused here; keep validation happy
  b.grid.clear();
  const auto s = eval_setup(b, "pane_pos,pane_sum,gradcam", {});
  const auto keep = parse_ratios(a.keep);
  for (double r : keep)
    if (!(r > 0 && r <= 1)) throw ArgumentError("--keep ratios must lie in (0, 1]");
  if (a.attack.linf < 0 || a.attack.step < 0 || a.attack.iterations < 0) throw ArgumentError("invalid attack parameters");
  const auto model = load_model_file(a.model);
  const auto data = load_samples(a, model.input_shape());
  const auto table =
      with_precision(model, s.fm, [&](const auto& m) { return guided_attack_eval(m, data, s.cfg, keep, a.attack); });
  emit(a, attack_csv(table), attack_json(table), out);
  return exit_ok;
}

int selftest(std::uint64_t seed, const std::string& fixture, std::ostream& out) {
  bool ok = true;
  const auto report = [&](const char* name, const checks::Outcome& o) {
    out << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << "\n";
    ok = ok && o.pass;
  };
  report("local_completeness", checks::local_completeness(seed));
  report("oracle_equivalence", checks::oracle_equivalence(seed + 1));
  report("bias_free_reconstruction", checks::bias_free_reconstruction(seed + 2));
  report("relu_purity", checks::relu_purity(seed + 3));
  report("gradient_check", checks::gradient_check(seed + 4));
  if (!fixture.empty()) report("fixture_parity", checks::fixture_parity(fixture));
  return ok ? exit_ok : exit_numeric;
}

int info(const std::string& path, std::ostream& out) {
  const auto model = load_model_file(path);
  out << "model " << model.name() << " crc " << hex32(model.source_hash()) << "\n";
  out << "input " << shape_string(model.input_shape()) << ", classes " << model.class_count() << "\n";
  for (std::size_t n = 0; n < model.depth(); ++n) {
    const auto& l = model.layer(n);
    out << "  " << n << "  " << kind_name(l.kind()) << "  " << l.name << "  -> "
        << shape_string(model.boundaries()[n + 1]) << "\n";
  }
  return exit_ok;
}

void add_eval_flags(CLI::App* cmd, EvalArgs& a, bool ratios) {
  cmd->add_option("--model", a.model, "PANEW001 weight file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--data", a.data, "dataset directory with labels.csv")->required()->check(CLI::ExistingDirectory);
  cmd->add_option("--methods", a.methods, "comma-separated methods");
  if (ratios) {
    cmd->add_option("--ratios", a.ratios, "comma-separated ratio grid (fractions)");
    cmd->add_option("--grid", a.grid, "named grid: salient (0.1-1%), minor (1-10%) or logit (0.01-0.1%)");
  }
  cmd->add_option("--jobs", a.jobs, "worker threads")->check(CLI::Range(1u, 256u));
  cmd->add_option("--seed", a.seed, "seed for the random baseline");
  cmd->add_option("--limit", a.limit, "use only the first N images");
  cmd->add_option("--csv", a.csv, "CSV output path");
  cmd->add_option("--json", a.json, "JSON summary path");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Positive and negative excitation saliency for CNNs", "pane"};
  app.require_subcommand(1);

  ExplainArgs ex;
  auto* explain_cmd = app.add_subcommand("explain", "explain one image and write a heatmap");
  explain_cmd->add_option("--model", ex.model, "PANEW001 weight file")->required()->check(CLI::ExistingFile);
  explain_cmd->add_option("--input", ex.input, "PPM/PGM image or raw tensor")->required()->check(CLI::ExistingFile);
  explain_cmd->add_option("--out", ex.out, "heatmap path (PGM or PPM)")->required();
  explain_cmd->add_option("--class", ex.cls, "class to explain (default: top-1)");
  explain_cmd->add_option("--variant", ex.variant, "pos, neg or sum");
  explain_cmd->add_option("--method", ex.method, "any method: pane_pos, pane_neg, pane_sum, vbp, guided_bp, gradcam, random");
  explain_cmd->add_option("--style", ex.style, "auto, gray or signed");
  explain_cmd->add_option("--pair", ex.pair, "prefix for the raw pos/neg maps and JSON sidecar");
  explain_cmd->add_option("--raw", ex.raw, "raw tensor file of the collapsed map");
  explain_cmd->add_option("--seed", ex.seed, "seed for the random baseline");

  EvalArgs rm, mn, lg, at;
  auto* remove_cmd = app.add_subcommand("eval-remove", "salient or negative-region pixel removal (APD)");
  add_eval_flags(remove_cmd, rm, true);
  remove_cmd->add_option("--mode", rm.mode, "salient or negative");
  remove_cmd->add_option("--fill", rm.fill, "fill value or 'mean'");
  auto* minor_cmd = app.add_subcommand("eval-minor", "minor pixel removal (APD)");
  add_eval_flags(minor_cmd, mn, true);
  minor_cmd->add_option("--fill", mn.fill, "fill value or 'mean'");
  auto* logit_cmd = app.add_subcommand("eval-logit", "logit change after lowering selected pixels by one");
  add_eval_flags(logit_cmd, lg, true);
  logit_cmd->add_option("--region", lg.region, "pos, neg or both");
  auto* attack_cmd = app.add_subcommand("attack-guide", "I-FGSM perturbation kept on salient pixels");
  add_eval_flags(attack_cmd, at, false);
  attack_cmd->add_option("--keep", at.keep, "comma-separated retention ratios");
  attack_cmd->add_option("--linf", at.attack.linf, "L-inf radius in pixel units");
  attack_cmd->add_option("--step", at.attack.step, "step size in pixel units");
  attack_cmd->add_option("--iters", at.attack.iterations, "iterations");

  std::uint64_t st_seed = 0;
  std::string st_fixture;
  auto* self_cmd = app.add_subcommand("selftest", "run the excitation and gradient identity suites");
  self_cmd->add_option("--seed", st_seed, "suite seed");
  self_cmd->add_option("--fixture", st_fixture, "fixture bundle for the parity check")->check(CLI::ExistingDirectory);

  std::string info_model;
  auto* info_cmd = app.add_subcommand("info", "print the layer stack of a model");
  info_cmd->add_option("--model", info_model, "PANEW001 weight file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return exit_usage;
  }

  try {
    float_mode();  // reject a bad PANE_FLOAT_MODE before any work
    if (*explain_cmd) return explain(ex, out);
    if (*remove_cmd) return eval_remove(rm, false, out);
    if (*minor_cmd) return eval_remove(mn, true, out);
    if (*logit_cmd) return eval_logit(lg, out);
    if (*attack_cmd) return attack_guide(at, out);
    if (*self_cmd) return selftest(st_seed, st_fixture, out);
    if (*info_cmd) return info(info_model, out);
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return exit_usage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return exit_numeric;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << "\n";
    return exit_data;
  }
  return exit_usage;
}

}  // namespace pane
