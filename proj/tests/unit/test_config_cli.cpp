#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ncps/cli.hpp"
#include "ncps/config.hpp"

using namespace ncps;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ncps_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ncps");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

}  // namespace

TEST_CASE("config parsing", "[config]") {
  const auto c = parse_config(R"(
# comment
[model]
catalog = bounded-smooth
d = 4
lambda = 12.5
T = 2
v = -1, 0 1 3

[scheme]
name = semi-implicit-milstein
n_steps = 256

[convergence]
ns = 8 16 32
n_ref = 1024

[moments]
functional = norm
q = 2
times = 0.5 1 2

[run]
seed = 77
paths = 50
outside_guarantee = yes
)");
  CHECK(c.catalog == "bounded-smooth");
  CHECK(c.d == 4);
  CHECK(c.lambda == 12.5);
  CHECK(c.horizon == 2.0);
  CHECK(c.v == std::vector<double>{-1.0, 0.0, 1.0, 3.0});
  CHECK(c.scheme == "semi-implicit-milstein");
  CHECK(c.ns == std::vector<std::size_t>{8, 16, 32});
  CHECK(c.times == std::vector<double>{0.5, 1.0, 2.0});
  CHECK(c.seed == 77);
  CHECK(c.outside_guarantee);

  const auto r = c.resolved();
  CHECK(*r.sigma_base == 2.0);
  CHECK(*r.sigma_amplitude == 0.5);
  CHECK(*r.slope_min == -2.3);
  CHECK(*r.slope_max == -1.7);
  const auto m = c.model();
  CHECK(m.dimension() == 4);
  CHECK(m.diffusion_derivative.has_value());
}

TEST_CASE("config rejects bad input", "[config]") {
  CHECK_THROWS_AS(parse_config("[model]\ncolour = red\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model]\nd = two\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model]\nd = -2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model]\ncatalog = brownian\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[scheme]\nname = rk4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[moments]\nfunctional = max\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[moments]\npair = 1 2 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[run]\noutside_guarantee = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model\nd = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("d = 2\n"), ConfigError);

  auto tree = to_ptree(ExperimentConfig{});
  CHECK_THROWS_AS(apply_override(tree, "model.d"), ConfigError);
  CHECK_THROWS_AS(apply_override(tree, "model.colour=3"), ConfigError);
  apply_override(tree, " model.d = 5 ");
  CHECK(from_ptree(tree).d == 5);
}

TEST_CASE("config round trip", "[config][property]") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  std::uniform_int_distribution<std::size_t> n(1, 5000);
  const char* catalogs[] = {"dyson", "affine-drift", "bounded-smooth"};
  for (int k = 0; k < 200; ++k) {
    ExperimentConfig c;
    c.catalog = catalogs[k % 3];
    c.d = n(rng);
    c.lambda = std::abs(u(rng)) + 1e-3;
    c.horizon = std::abs(u(rng)) + 1e-3;
    c.v = {u(rng), u(rng) / 3.0};
    if (k % 2) c.sigma_base = u(rng) / 7.0;
    if (k % 5 == 0) c.drift_slope = 1.0 / 3.0;
    c.scheme = k % 2 ? "semi-implicit-em" : "semi-implicit-milstein";
    c.ns = {n(rng), n(rng)};
    if (k % 3 == 0) c.slope_min = -0.1 * k;
    c.p = u(rng);
    c.times = {std::abs(u(rng)), 1e-17 * std::abs(u(rng))};
    c.seed = rng();
    c.path_index = rng();
    c.out = "dir_" + std::to_string(k);
    c.outside_guarantee = k % 4 == 0;
    c.grad_tol = 1e-13 * (1 + k);
    REQUIRE(parse_config(render_config(c)) == c);
  }
}

TEST_CASE("CLI usage errors exit 2", "[cli]") {
  CHECK(cli({}).code == exit_usage);
  CHECK(cli({"frobnicate"}).code == exit_usage);
  CHECK(cli({"validate", "--threads", "0"}).code == exit_usage);
  CHECK(cli({"validate", "--paths", "many"}).code == exit_usage);
  CHECK(cli({"validate", "--config", "/nonexistent/file.ini"}).code == exit_usage);
  CHECK(cli({"validate", "--set", "model.nope=1"}).code == exit_usage);
  CHECK(cli({"--help"}).code == exit_ok);
}

TEST_CASE("validate command", "[cli]") {
  const auto dir = scratch("validate");
  auto ok = cli({"validate", "--out", dir.string(), "--set", "model.d=3"});
  CHECK(ok.code == exit_ok);
  CHECK(ok.out.find("all hold") != std::string::npos);
  CHECK(fs::exists(dir / "validate.txt"));
  const auto manifest = slurp(dir / "manifest.txt");
  CHECK(manifest.find("run.command = validate") != std::string::npos);
  CHECK(manifest.find("config.model.d = 3") != std::string::npos);
  CHECK(manifest.find("result.exit_code = 0") != std::string::npos);

  auto bad = cli({"validate", "--out", dir.string(), "--set", "model.sigma_base=2"});
  CHECK(bad.code == exit_failure);
  CHECK(bad.out.find("VIOLATED") != std::string::npos);

  auto degenerate = cli({"validate", "--out", dir.string(), "--set", "model.sigma_base=0",
                         "--set", "model.sigma_amplitude=1"});
  CHECK(degenerate.code == exit_failure);
  CHECK(degenerate.out.find("unbounded") != std::string::npos);

  CHECK(cli({"validate", "--out", dir.string(), "--set", "model.lambda=-1"}).code == exit_usage);
  CHECK(cli({"validate", "--out", dir.string(), "--set", "model.v=1 0"}).code == exit_usage);
}

TEST_CASE("config file, --set and flags precedence", "[cli]") {
  const auto dir = scratch("precedence");
  write(dir / "exp.ini", "[model]\nd = 3\nlambda = 4\n[run]\nseed = 5\npaths = 7\n");
  const auto r = cli({"validate", "--config", (dir / "exp.ini").string(), "--set", "model.lambda=6",
                      "--set", "run.seed=8", "--seed", "9", "--out", (dir / "o").string()});
  REQUIRE(r.code == exit_ok);
  const auto manifest = slurp(dir / "o" / "manifest.txt");
  CHECK(manifest.find("config.model.d = 3") != std::string::npos);
  CHECK(manifest.find("config.model.lambda = 6") != std::string::npos);
  CHECK(manifest.find("config.run.seed = 9") != std::string::npos);
  CHECK(manifest.find("config.run.paths = 7") != std::string::npos);

  write(dir / "bad.ini", "[model]\nwat = 1\n");
  CHECK(cli({"validate", "--config", (dir / "bad.ini").string()}).code == exit_usage);
}

TEST_CASE("simulate command", "[cli]") {
  const auto dir = scratch("simulate");
  const auto r = cli({"simulate", "--out", dir.string(), "--set", "scheme.n_steps=16", "--set",
                      "model.d=3", "--seed", "3"});
  REQUIRE(r.code == exit_ok);
  const auto csv = slurp(dir / "trajectory.csv");
  CHECK(csv.rfind("t,x1,x2,x3\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 18);

  const auto again = scratch("simulate2");
  REQUIRE(cli({"simulate", "--out", again.string(), "--set", "scheme.n_steps=16", "--set", "model.d=3",
               "--seed", "3"})
              .code == exit_ok);
  CHECK(slurp(again / "trajectory.csv") == csv);

  const auto fail = cli({"simulate", "--out", dir.string(), "--set", "scheme.n_steps=16", "--set",
                         "solver.max_iters=0", "--set", "solver.grad_tol=1e-300"});
  CHECK(fail.code == exit_failure);
  CHECK(fail.err.find("step 0") != std::string::npos);

  CHECK(cli({"simulate", "--out", dir.string(), "--set", "scheme.n_steps=0"}).code == exit_usage);
  CHECK(cli({"simulate", "--out", dir.string(), "--set", "scheme.name=semi-implicit-milstein",
             "--set", "model.catalog=bounded-smooth", "--set", "scheme.n_steps=8"})
            .code == exit_ok);
}

TEST_CASE("moments command", "[cli]") {
  const auto dir = scratch("moments");
  const std::vector<std::string> base{"moments", "--out", dir.string(), "--paths", "100", "--set",
                                      "scheme.n_steps=32", "--set", "model.lambda=3.5"};
  auto args = base;
  const auto ok = cli(args);
  REQUIRE(ok.code == exit_ok);
  const auto csv = slurp(dir / "moments.csv");
  CHECK(csv.rfind("functional,p_or_q,t,value,stderr,n_paths,flags\n", 0) == 0);
  CHECK(csv.find("gap_neg_1_2,1,1,") != std::string::npos);
  CHECK(csv.find(",100,ok\n") != std::string::npos);

  args = base;
  args.insert(args.end(), {"--set", "moments.p=2"});
  const auto refused = cli(args);
  CHECK(refused.code == exit_failure);
  CHECK(refused.err.find("threshold") != std::string::npos);

  args.push_back("--outside-guarantee");
  const auto forced = cli(args);
  CHECK(forced.code == exit_ok);
  CHECK(slurp(dir / "moments.csv").find("ok;outside-guarantee") != std::string::npos);

  args = base;
  args.insert(args.end(), {"--set", "moments.p=400", "--outside-guarantee", "--set", "model.lambda=0.01"});
  const auto overflow = cli(args);
  CHECK(overflow.code == exit_failure);
  CHECK(slurp(dir / "moments.csv").find("overflow=") != std::string::npos);
  CHECK(slurp(dir / "manifest.txt").find("flags.overflow = 0") == std::string::npos);

  args = base;
  args.insert(args.end(), {"--set", "moments.functional=norm", "--set", "moments.times=0.5 1"});
  const auto norm = cli(args);
  CHECK(norm.code == exit_ok);
  CHECK(slurp(dir / "moments.csv").find("norm_2q,1,0.5,") != std::string::npos);

  args = base;
  args.insert(args.end(), {"--set", "moments.pair=2 1"});
  CHECK(cli(args).code == exit_usage);
  args = base;
  args.insert(args.end(), {"--set", "moments.times=0.3"});
  CHECK(cli(args).code == exit_usage);
}

TEST_CASE("convergence command", "[cli]") {
  const auto dir = scratch("convergence");
  const std::vector<std::string> base{"convergence", "--out", dir.string(), "--paths", "64",
                                      "--set", "convergence.ns=4 8 16", "--set", "convergence.n_ref=256",
                                      "--set", "model.lambda=4"};
  auto args = base;
  args.insert(args.end(), {"--set", "convergence.slope_min=-10", "--set", "convergence.slope_max=0"});
  const auto ok = cli(args);
  CHECK(ok.code == exit_ok);
  const auto csv = slurp(dir / "convergence.csv");
  CHECK(csv.rfind("n,mse,stderr\n4,", 0) == 0);
  CHECK(slurp(dir / "convergence_fit.txt").find("in_band = true") != std::string::npos);
  CHECK(slurp(dir / "manifest.txt").find("result.slope = ") != std::string::npos);

  args = base;
  args.insert(args.end(), {"--set", "convergence.slope_min=5", "--set", "convergence.slope_max=6"});
  CHECK(cli(args).code == exit_failure);

  args = base;
  args.insert(args.end(), {"--set", "convergence.ns=4 8"});
  CHECK(cli(args).code == exit_usage);
  args = base;
  args.insert(args.end(), {"--set", "convergence.n_ref=128"});
  CHECK(cli(args).code == exit_usage);
  args = base;
  args.insert(args.end(), {"--set", "convergence.ns=4 6 8"});
  CHECK(cli(args).code == exit_usage);
}

TEST_CASE("identity-check command", "[cli]") {
  const auto dir = scratch("identity");
  const auto two = cli({"identity-check", "--out", dir.string()});
  CHECK(two.code == exit_ok);
  CHECK(two.out.find("empty sum") != std::string::npos);

  const auto five = cli({"identity-check", "--out", dir.string(), "--set", "model.d=5"});
  CHECK(five.code == exit_ok);
  CHECK(slurp(dir / "identity.txt").find("failures = 0") != std::string::npos);

  CHECK(cli({"identity-check", "--out", dir.string(), "--set", "model.d=1"}).code == exit_usage);
  CHECK(cli({"identity-check", "--out", dir.string(), "--set", "model.d=4", "--set", "identity.gap_min=0"})
            .code == exit_usage);
}
