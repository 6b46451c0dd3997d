#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "kquad/experiment.hpp"
#include "kquad/svg.hpp"

using namespace kquad;
namespace fs = std::filesystem;

namespace {

fs::path source_dir() { return fs::path(KQUAD_SOURCE_DIR); }

fs::path fresh_dir(const std::string& tag) {
  static int counter = 0;
  const fs::path p =
      fs::temp_directory_path() / ("kquad_test_" + tag + "_" + std::to_string(counter++));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

nlohmann::json base_config_json() {
  return {{"gmm", (source_dir() / "data" / "default_gmm.json").string()},
          {"kernel", {{"type", "rbf"}, {"lengthscale", "auto"}}},
          {"pool_size", 400},
          {"max_samples", 25},
          {"methods", {"iid", "herding", "sbq", "herding-bq-reweight"}},
          {"seeds", {1, 2}},
          {"output_dir", "out"}};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const char* cli = std::getenv("KQUAD_CLI");
  REQUIRE(cli != nullptr);
  const std::string cmd = std::string(cli) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config parsing is fail-fast", "[experiment]") {
  const fs::path base = source_dir();
  SECTION("valid config parses") {
    const auto cfg = ExperimentConfig::from_json(base_config_json(), base);
    REQUIRE(cfg.pool_size == 400);
    REQUIRE(cfg.methods.size() == 4);
    REQUIRE(cfg.lengthscale_auto);
    REQUIRE(cfg.load_target().num_components() == 20);
  }
  SECTION("unknown keys are rejected") {
    auto j = base_config_json();
    j["extra"] = 1;
    REQUIRE_THROWS_AS(ExperimentConfig::from_json(j, base), ConfigError);
    auto j2 = base_config_json();
    j2["kernel"]["width"] = 0.1;
    REQUIRE_THROWS_AS(ExperimentConfig::from_json(j2, base), ConfigError);
  }
  SECTION("kernel must be an rbf with a positive lengthscale") {
    auto j = base_config_json();
    j["kernel"]["type"] = "matern";
    REQUIRE_THROWS_AS(ExperimentConfig::from_json(j, base), ConfigError);
    auto j2 = base_config_json();
    j2["kernel"]["lengthscale"] = -0.5;
    REQUIRE_THROWS_AS(ExperimentConfig::from_json(j2, base), ConfigError);
    auto j3 = base_config_json();
    j3["kernel"]["lengthscale"] = "wide";
    REQUIRE_THROWS_AS(ExperimentConfig::from_json(j3, base), ConfigError);
  }
  SECTION("seed and method lists are validated") {
    auto j = base_config_json();
    j["seeds"] = {1, 1};
    REQUIRE_THROWS_AS(ExperimentConfig::from_json(j, base), ConfigError);
    auto j2 = base_config_json();
    j2["methods"] = {"sbq", "sbq"};
    REQUIRE_THROWS_AS(ExperimentConfig::from_json(j2, base), ConfigError);
    auto j3 = base_config_json();
    j3["methods"] = {"mcmc"};
    REQUIRE_THROWS_AS(ExperimentConfig::from_json(j3, base), std::invalid_argument);
  }
  SECTION("pool must cover the requested samples") {
    auto j = base_config_json();
    j["pool_size"] = 10;
    REQUIRE_THROWS_AS(ExperimentConfig::from_json(j, base), ConfigError);
  }
  SECTION("function family and checkpoints") {
    auto j = base_config_json();
    j["function_family"] = "fourier";
    REQUIRE_THROWS_AS(ExperimentConfig::from_json(j, base), ConfigError);
    auto j2 = base_config_json();
    j2["weight_checkpoints"] = {0};
    REQUIRE_THROWS_AS(ExperimentConfig::from_json(j2, base), ConfigError);
    auto j3 = base_config_json();
    j3["weight_checkpoints"] = {26};
    REQUIRE_THROWS_AS(ExperimentConfig::from_json(j3, base), ConfigError);
  }
  SECTION("checked-in configs parse") {
    for (const char* name :
         {"default.json", "within_model.json", "out_of_model.json", "weights.json",
          "bench.json"}) {
      REQUIRE_NOTHROW(ExperimentConfig::from_file(source_dir() / "configs" / name));
    }
  }
}

TEST_CASE("first SBQ row carries the one-point posterior deviation", "[experiment]") {
  auto j = base_config_json();
  j["methods"] = {"sbq"};
  j["seeds"] = {1};
  j["max_samples"] = 1;
  const auto cfg = ExperimentConfig::from_json(j, source_dir());
  const auto out = fresh_dir("first_row");
  const auto csv = cmd_mmd_curve(cfg, out);
  const auto rows = read_csv(csv);
  REQUIRE(rows.size() == 1);

  const auto gmm = cfg.load_target();
  const RbfKernel kernel = cfg.make_kernel(gmm);
  Rng rng(1);
  auto pool = CandidatePool<RbfKernel>::draw(kernel, gmm, rng, cfg.pool_size);
  double zmax = -1.0;
  for (int i = 0; i < pool.size(); ++i) zmax = std::max(zmax, pool.embedding(i));
  const double expected =
      kernel.initial_variance(gmm) - zmax * zmax / (1.0 + kDefaultJitter);
  REQUIRE(*rows[0].mmd_bq * *rows[0].mmd_bq == Catch::Approx(expected).epsilon(1e-12));
  REQUIRE_FALSE(rows[0].wall_millis.has_value());
}

TEST_CASE("experiment outputs are byte-identical across reruns", "[experiment][slow]") {
  const auto cfg = ExperimentConfig::from_json(base_config_json(), source_dir());
  const auto out_a = fresh_dir("rerun_a");
  const auto out_b = fresh_dir("rerun_b");
  const auto csv_a = cmd_mmd_curve(cfg, out_a);
  const auto csv_b = cmd_mmd_curve(cfg, out_b);
  REQUIRE(read_file(csv_a) == read_file(csv_b));
  for (const auto& entry : fs::directory_iterator(out_a)) {
    const auto name = entry.path().filename();
    CAPTURE(name.string());
    REQUIRE(read_file(entry.path()) == read_file(out_b / name));
  }
}

TEST_CASE("weight diagnostics start shrunk below one", "[experiment]") {
  auto j = base_config_json();
  j["methods"] = {"sbq"};
  j["seeds"] = {1};
  j["max_samples"] = 20;
  j["weight_checkpoints"] = {5, 20};
  const auto cfg = ExperimentConfig::from_json(j, source_dir());
  const auto out = fresh_dir("weights");
  const auto csv = cmd_weights(cfg, out);
  const auto rows = read_csv(csv);
  REQUIRE(rows.size() == 20);

  const auto gmm = cfg.load_target();
  const RbfKernel kernel = cfg.make_kernel(gmm);
  Rng rng(1);
  auto pool = CandidatePool<RbfKernel>::draw(kernel, gmm, rng, cfg.pool_size);
  double zmax = -1.0;
  for (int i = 0; i < pool.size(); ++i) zmax = std::max(zmax, pool.embedding(i));
  REQUIRE(*rows[0].weight_sum == Catch::Approx(zmax / (1.0 + kDefaultJitter)).epsilon(1e-12));
  for (const auto& row : rows) REQUIRE(*row.weight_sum < 1.0);

  // checkpoint dumps exist and carry full vectors
  nlohmann::json dump;
  std::ifstream in(out / "weights_full_seed1.json");
  REQUIRE(in.good());
  in >> dump;
  REQUIRE(dump.at("checkpoints").at("5").size() == 5);
  REQUIRE(dump.at("checkpoints").at("20").size() == 20);

  // anything but a single sbq method is a config error
  auto bad = base_config_json();
  const auto bad_cfg = ExperimentConfig::from_json(bad, source_dir());
  REQUIRE_THROWS_AS(cmd_weights(bad_cfg, out), ConfigError);
}

TEST_CASE("within-model errors respect the posterior bound per function", "[experiment]") {
  auto j = base_config_json();
  j["methods"] = {"sbq"};
  j["seeds"] = {1};
  j["max_samples"] = 30;
  j["pool_size"] = 500;
  j["function_family"] = "rkhs";
  j["num_functions"] = 10;
  const auto cfg = ExperimentConfig::from_json(j, source_dir());
  const auto gmm = cfg.load_target();
  const RbfKernel kernel = cfg.make_kernel(gmm);
  const auto bundle = compute_seed_runs(gmm, kernel, cfg, 1, 1);
  const auto& run = bundle.runs.front();
  Rng fn_rng(derive_seed(1, kFunctionStreamTag));
  std::vector<RkhsFunction> fns;
  std::vector<double> exact;
  for (int i = 0; i < cfg.num_functions; ++i) {
    fns.push_back(draw_rkhs_function(fn_rng, kernel, gmm));
    exact.push_back(exact_integral(fns.back(), gmm));
  }
  const auto curve = detail::error_curve_for_run(fns, exact, run, kernel, gmm, true);
  for (std::size_t f = 0; f < fns.size(); ++f) {
    for (int n = 1; n <= 30; ++n) {
      const double bound = std::sqrt(run.records[static_cast<std::size_t>(n - 1)].mmd2_bq);
      REQUIRE(curve.per_function[f][static_cast<std::size_t>(n - 1)] <= bound + 1e-8);
    }
  }
}

TEST_CASE("error-curve command writes errors, bounds and function sets", "[experiment]") {
  auto j = base_config_json();
  j["seeds"] = {1};
  j["max_samples"] = 15;
  j["pool_size"] = 300;
  j["function_family"] = "bumps";
  j["num_functions"] = 5;
  const auto cfg = ExperimentConfig::from_json(j, source_dir());
  const auto out = fresh_dir("error_curve");
  const auto csv = cmd_error_curve(cfg, out);
  const auto rows = read_csv(csv);
  REQUIRE(rows.size() == 4 * 15);
  for (const auto& row : rows) {
    REQUIRE(row.mean_abs_err.has_value());
    REQUIRE(row.bound.has_value());
  }
  REQUIRE(fs::exists(out / "functions_bumps_seed1.json"));

  auto no_family = base_config_json();
  const auto bad_cfg = ExperimentConfig::from_json(no_family, source_dir());
  REQUIRE_THROWS_AS(cmd_error_curve(bad_cfg, out), ConfigError);
}

TEST_CASE("a pool no larger than the sample count still completes", "[experiment]") {
  auto j = base_config_json();
  j["pool_size"] = 25;
  j["max_samples"] = 25;
  j["seeds"] = {3};
  const auto cfg = ExperimentConfig::from_json(j, source_dir());
  const auto gmm = cfg.load_target();
  const RbfKernel kernel = cfg.make_kernel(gmm);
  const auto bundle = compute_seed_runs(gmm, kernel, cfg, 3, 1);
  for (const auto& run : bundle.runs) {
    REQUIRE(run.trajectory.size() == 25);
    std::set<int> unique(run.indices.begin(), run.indices.end());
    REQUIRE(unique.size() == 25);  // no duplicate selections
  }
}

TEST_CASE("iid integration error follows the square-root law", "[experiment][slow]") {
  const auto gmm = make_default_gmm();
  const RbfKernel kernel(default_lengthscale(gmm));
  Rng fn_rng(derive_seed(1, kFunctionStreamTag));
  std::vector<RkhsFunction> fns;
  std::vector<double> exact;
  for (int i = 0; i < 10; ++i) {
    fns.push_back(draw_rkhs_function(fn_rng, kernel, gmm));
    exact.push_back(exact_integral(fns.back(), gmm));
  }
  double err16 = 0.0, err256 = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const auto points = gmm.sample(rng, 256);
    for (std::size_t f = 0; f < fns.size(); ++f) {
      double acc = 0.0;
      for (int n = 1; n <= 256; ++n) {
        acc += fns[f].eval(points[static_cast<std::size_t>(n - 1)]);
        if (n == 16) err16 += std::abs(exact[f] - acc / n);
        if (n == 256) err256 += std::abs(exact[f] - acc / n);
      }
    }
  }
  const double ratio = err16 / err256;  // should be ~4 (sqrt(256/16))
  REQUIRE(ratio > 2.0);
  REQUIRE(ratio < 8.0);
}

TEST_CASE("plot renders a chart and rejects malformed input", "[experiment]") {
  auto j = base_config_json();
  j["seeds"] = {1};
  j["max_samples"] = 10;
  j["pool_size"] = 200;
  const auto cfg = ExperimentConfig::from_json(j, source_dir());
  const auto out = fresh_dir("plot");
  const auto csv = cmd_mmd_curve(cfg, out);
  const auto svg = out / "curve.svg";
  cmd_plot(csv, svg);
  const std::string body = read_file(svg);
  REQUIRE(body.find("<svg") != std::string::npos);
  REQUIRE(body.find("polyline") != std::string::npos);
  REQUIRE(body.find("sbq") != std::string::npos);

  const auto bad = out / "bad.csv";
  std::ofstream(bad) << "not,a,real,header\n1,2,3,4\n";
  REQUIRE_THROWS_AS(cmd_plot(bad, out / "bad.svg"), std::invalid_argument);
  REQUIRE_THROWS_AS(cmd_plot(csv, svg, "nonsense"), std::invalid_argument);
}

TEST_CASE("audit re-verifies runs and catches tampering", "[experiment]") {
  auto j = base_config_json();
  j["seeds"] = {1};
  j["max_samples"] = 12;
  j["pool_size"] = 300;
  const auto cfg = ExperimentConfig::from_json(j, source_dir());
  const auto out = fresh_dir("audit");
  const auto csv = cmd_mmd_curve(cfg, out);
  REQUIRE(cmd_audit(cfg, out) > 0);

  // corrupt one numeric field
  std::string body = read_file(csv);
  const auto pos = body.find("0.");
  REQUIRE(pos != std::string::npos);
  body[pos + 2] = body[pos + 2] == '9' ? '8' : '9';
  std::ofstream(csv) << body;
  REQUIRE_THROWS_AS(cmd_audit(cfg, out), NumericalError);
}

TEST_CASE("command line maps failures to documented exit codes", "[experiment][cli]") {
  const auto out = fresh_dir("cli");
  const auto cfg_path = out / "tiny.json";
  auto j = base_config_json();
  j["seeds"] = {1};
  j["max_samples"] = 8;
  j["pool_size"] = 200;
  j["output_dir"] = (out / "results").string();
  std::ofstream(cfg_path) << j.dump(2);

  REQUIRE(run_cli("") == 2);                                        // missing subcommand
  REQUIRE(run_cli("mmd-curve --config /does/not/exist.json") == 2);  // bad config path
  REQUIRE(run_cli("mmd-curve --config " + cfg_path.string()) == 0);
  REQUIRE(run_cli("audit --config " + cfg_path.string()) == 0);
  REQUIRE(run_cli("plot " + (out / "results" / "mmd_curve.csv").string() + " --out " +
                  (out / "results" / "curve.svg").string()) == 0);
  REQUIRE(run_cli("plot /does/not/exist.csv --out " + (out / "x.svg").string()) == 2);

  // weights on a multi-method config is a config error
  const auto weights_bad = out / "weights_bad.json";
  std::ofstream(weights_bad) << base_config_json().dump(2);
  REQUIRE(run_cli("weights --config " + weights_bad.string()) == 2);

  // tampering turns audit into a numerical error
  const auto csv = out / "results" / "mmd_curve.csv";
  std::string body = read_file(csv);
  const auto pos = body.find("0.");
  body[pos + 2] = body[pos + 2] == '9' ? '8' : '9';
  std::ofstream(csv) << body;
  REQUIRE(run_cli("audit --config " + cfg_path.string()) == 3);
}
