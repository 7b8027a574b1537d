#include <cstdlib>
#include <sstream>

#include "helpers.hpp"
#include "pane/bytes.hpp"
#include "pane/cli.hpp"

using namespace pane;
using namespace testing;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pane");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string model_path() { return (fixture_dir() / "model.panew").string(); }
std::string image_path(int i) {
  return (fixture_dir() / "images" / ("img_00" + std::to_string(i) + ".ppm")).string();
}

struct FloatMode {
  explicit FloatMode(const char* mode) { ::setenv("PANE_FLOAT_MODE", mode, 1); }
  ~FloatMode() { ::unsetenv("PANE_FLOAT_MODE"); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("explain writes a heatmap") {
  const auto dir = scratch_dir("cli_explain");
  const auto r = cli({"explain", "--model", model_path(), "--input", image_path(2), "--out", (dir / "h.ppm").string(),
                      "--pair", (dir / "p").string()});
  INFO(r.err);
  CHECK(r.code == exit_ok);
  CHECK(std::filesystem::file_size(dir / "h.ppm") > 0);
  CHECK(std::filesystem::exists(dir / "p.pos.ptnsr"));
  CHECK(std::filesystem::exists(dir / "p.neg.ptnsr"));
  const auto sidecar = read_file(dir / "p.json");
  CHECK(std::string(sidecar.begin(), sidecar.end()).find("pos_neg_correlation") != std::string::npos);
}

TEST_CASE("usage errors exit with 1") {
  CHECK(cli({}).code == exit_usage);
  CHECK(cli({"explain", "--bogus"}).code == exit_usage);
  CHECK(cli({"explain", "--model", model_path(), "--input", image_path(0), "--out", "/tmp/x.ppm", "--class", "7"})
            .code == exit_usage);
  CHECK(cli({"eval-remove", "--model", model_path(), "--data", fixture_dir().string(), "--ratios", "0.02,0.01"})
            .code == exit_usage);
  FloatMode bad("f16");
  CHECK(cli({"info", "--model", model_path()}).code == exit_usage);
}

TEST_CASE("data errors exit with 2 and leave no output") {
  const auto dir = scratch_dir("cli_data");
  write_file_atomic(dir / "junk.panew", std::string_view("not a model"));
  const auto out = dir / "h.ppm";
  const auto r = cli({"explain", "--model", (dir / "junk.panew").string(), "--input", image_path(0), "--out",
                      out.string()});
  CHECK(r.code == exit_data);
  CHECK(r.err.find("magic") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(out));
  write_file_atomic(dir / "junk.ppm", std::string_view("P6\n4 4\n255\n\x01\x02"));
  CHECK(cli({"explain", "--model", model_path(), "--input", (dir / "junk.ppm").string(), "--out", out.string()}).code ==
        exit_data);
  CHECK_FALSE(std::filesystem::exists(out));
}

TEST_CASE("info lists the layers") {
  const auto r = cli({"info", "--model", model_path()});
  CHECK(r.code == exit_ok);
  CHECK(r.out.find("conv2d") != std::string::npos);
  CHECK(r.out.find("linear") != std::string::npos);
}

TEST_CASE("evaluation output is reproducible") {
  FloatMode f64("f64");
  const std::vector<std::string> args{"eval-remove", "--model", model_path(), "--data", fixture_dir().string(),
                                      "--methods", "pane_pos,random", "--ratios", "0.01,0.05", "--limit", "4",
                                      "--seed", "9"};
  const auto a = cli(args);
  auto with_jobs = args;
  with_jobs.insert(with_jobs.end(), {"--jobs", "2"});
  const auto b = cli(with_jobs);
  REQUIRE(a.code == exit_ok);
  CHECK(a.out == b.out);
  CHECK(a.out.rfind("method,ratio,apd,samples\n", 0) == 0);
}

TEST_CASE("selftest passes") {
  const auto r = cli({"selftest", "--fixture", fixture_dir().string()});
  INFO(r.out);
  CHECK(r.code == exit_ok);
  CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("the installed binary maps errors to exit codes") {
  const std::string bin = PANE_CLI_PATH;
  CHECK(std::system((bin + " info --model " + model_path() + " > /dev/null 2>&1").c_str()) == 0);
  const int status = std::system((bin + " info --model " + image_path(0) + " > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(status) == exit_data);
}

}
