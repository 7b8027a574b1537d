#include "pane/eval.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "pane/image_io.hpp"

namespace pane {

namespace {

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

std::vector<double> grid(double first, std::size_t n) {
  std::vector<double> out;
  for (std::size_t i = 1; i <= n; ++i) out.push_back(first * double(i));
  return out;
}

// Shortest representation that round-trips.
std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string_view mode_name(RemovalMode m) {
  switch (m) {
    case RemovalMode::salient: return "salient";
    case RemovalMode::minor: return "minor";
    case RemovalMode::negative: return "negative";
  }
  return "unknown";
}

std::string_view region_name(LogitRegion r) { return r == LogitRegion::pos_region ? "pos_region" : "neg_region"; }

}  // namespace

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  const auto manifest = dir / "labels.csv";
  std::ifstream in(manifest);
  if (!in) throw FormatError("cannot open dataset manifest " + manifest.string());
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("labels.csv line " + std::to_string(lineno) + ": expected filename,label");
    std::string name = trim(line.substr(0, comma)), label = trim(line.substr(comma + 1));
    if (lineno == 1 && label == "label") continue;  // header row
    int value;
    try {
      std::size_t used = 0;
      value = std::stoi(label, &used);
      if (used != label.size()) throw std::invalid_argument(label);
    } catch (const std::exception&) {
      throw FormatError("labels.csv line " + std::to_string(lineno) + ": bad label '" + label + "'");
    }
    out.push_back({name, read_image(dir / name), value});
  }
  if (out.empty()) throw ArgumentError("empty dataset in " + dir.string());
  return out;
}

void EvalConfig::validate() const {
  if (methods.empty()) throw ArgumentError("no methods selected");
  if (ratios.empty()) throw ArgumentError("empty ratio grid");
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (!(ratios[i] >= 0.0 && ratios[i] <= 1.0)) throw ArgumentError("ratio " + fmt(ratios[i]) + " outside [0, 1]");
    if (i > 0 && ratios[i] < ratios[i - 1]) throw ArgumentError("ratio grid must be ascending");
  }
  if (!(pixel_max > 0)) throw ArgumentError("pixel scale must be positive");
  if (!(fill >= 0.0 && fill <= pixel_max)) throw ArgumentError("fill value outside pixel range");
}

std::vector<double> salient_ratio_grid() { return grid(0.001, 10); }
std::vector<double> minor_ratio_grid() { return grid(0.01, 10); }
std::vector<double> logit_ratio_grid() { return grid(0.0001, 10); }

Tensor<double> remove_pixels(const Tensor<double>& image, const std::vector<Pixel>& pixels, double fill) {
  if (image.rank() != 3) throw ShapeError("remove_pixels expects a [C,H,W] image, got " + shape_string(image.shape()));
  const std::size_t c = image.extent(0), h = image.extent(1), w = image.extent(2);
  std::vector<double> v(image.values());
  for (const Pixel& p : pixels) {
    if (p.row >= h || p.col >= w) {
      throw ArgumentError("pixel (" + std::to_string(p.row) + "," + std::to_string(p.col) + ") outside " +
                          std::to_string(h) + "x" + std::to_string(w) + " image");
    }
    for (std::size_t ch = 0; ch < c; ++ch) v[(ch * h + p.row) * w + p.col] = fill;
  }
  return Tensor<double>(image.shape(), std::move(v), Check::none);
}

Tensor<double> apply_masked_delta(const Tensor<double>& image, const Tensor<double>& delta,
                                  const std::vector<Pixel>& keep) {
  if (image.shape() != delta.shape() || image.rank() != 3) throw ShapeError("image and perturbation shapes differ");
  const std::size_t c = image.extent(0), h = image.extent(1), w = image.extent(2);
  std::vector<double> v(image.values());
  for (const Pixel& p : keep) {
    if (p.row >= h || p.col >= w) throw ArgumentError("retained pixel outside image");
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = (ch * h + p.row) * w + p.col;
      v[i] = image[i] + delta[i];
    }
  }
  return Tensor<double>(image.shape(), std::move(v), Check::none);
}

std::string apd_csv(const std::vector<ApdCurve>& curves) {
  std::string out = "method,ratio,apd,samples\n";
  for (const auto& c : curves)
    for (std::size_t i = 0; i < c.ratios.size(); ++i)
      out += std::string(method_name(c.method)) + "," + fmt(c.ratios[i]) + "," + fmt(c.apd[i]) + "," +
             std::to_string(c.samples) + "\n";
  return out;
}

std::string logit_csv(const std::vector<LogitDeltaTable>& tables) {
  std::string out = "method,region,ratio,sum_delta,expected_fraction,samples\n";
  for (const auto& t : tables)
    for (std::size_t i = 0; i < t.ratios.size(); ++i)
      out += std::string(method_name(t.method)) + "," + std::string(region_name(t.region)) + "," + fmt(t.ratios[i]) +
             "," + fmt(t.sum_delta[i]) + "," + fmt(t.expected_fraction[i]) + "," + std::to_string(t.samples) + "\n";
  return out;
}

std::string attack_csv(const GuidedAttackTable& table) {
  std::string out = "method,keep_ratio,success_rate,samples\n";
  for (const auto& r : table.rows)
    out += std::string(method_name(r.method)) + "," + fmt(r.keep_ratio) + "," + fmt(r.success_rate) + "," +
           std::to_string(table.samples) + "\n";
  return out;
}

std::string apd_json(const std::vector<ApdCurve>& curves, RemovalMode mode) {
  nlohmann::ordered_json j;
  j["protocol"] = "pixel_removal";
  j["mode"] = mode_name(mode);
  j["curves"] = nlohmann::ordered_json::array();
  for (const auto& c : curves)
    j["curves"].push_back({{"method", method_name(c.method)}, {"ratios", c.ratios}, {"apd", c.apd}, {"samples", c.samples}});
  return j.dump(2) + "\n";
}

std::string logit_json(const std::vector<LogitDeltaTable>& tables) {
  nlohmann::ordered_json j;
  j["protocol"] = "logit_delta";
  j["tables"] = nlohmann::ordered_json::array();
  for (const auto& t : tables)
    j["tables"].push_back({{"method", method_name(t.method)},
                           {"region", region_name(t.region)},
                           {"ratios", t.ratios},
                           {"sum_delta", t.sum_delta},
                           {"expected_fraction", t.expected_fraction},
                           {"samples", t.samples}});
  return j.dump(2) + "\n";
}

std::string attack_json(const GuidedAttackTable& table) {
  nlohmann::ordered_json j;
  j["protocol"] = "attack_guidance";
  j["samples"] = table.samples;
  j["unrestricted_rate"] = table.unrestricted_rate;
  j["base_rate"] = table.base_rate;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : table.rows)
    j["rows"].push_back({{"method", method_name(r.method)}, {"keep_ratio", r.keep_ratio}, {"success_rate", r.success_rate}});
  return j.dump(2) + "\n";
}

}  // namespace pane
