// Experiment driver: deterministic sample selection and integral
// estimation against known Gaussian-mixture targets.
//
// Subcommands: mmd-curve, error-curve, weights, bench, plot, audit.
// Exit codes: 0 success, 2 config/input error, 3 numerical error.

#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "kquad/errors.hpp"
#include "kquad/experiment.hpp"
#include "kquad/svg.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed_override = -1;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config (JSON)")->required();
  cmd->add_option("--out", opts.out_dir, "output directory (default: config output_dir)");
  cmd->add_option("--seed", opts.seed_override, "replace the config seed list with one seed");
  cmd->add_option("--threads", opts.threads, "worker threads for candidate scoring")
      ->check(CLI::PositiveNumber);
}

kquad::ExperimentConfig load(const CommonOpts& opts) {
  kquad::ExperimentConfig cfg = kquad::ExperimentConfig::from_file(opts.config_path);
  if (opts.seed_override >= 0) {
    cfg.seeds = {static_cast<std::uint64_t>(opts.seed_override)};
  }
  return cfg;
}

std::filesystem::path resolve_out(const CommonOpts& opts, const kquad::ExperimentConfig& cfg) {
  return opts.out_dir.empty() ? std::filesystem::path(cfg.output_dir)
                              : std::filesystem::path(opts.out_dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kquad: kernel herding / sequential Bayesian quadrature experiments"};
  app.require_subcommand(1);

  CommonOpts mmd_opts, err_opts, weight_opts, bench_opts, audit_opts;
  std::string plot_csv, plot_out, plot_column = "auto";

  auto* mmd_cmd = app.add_subcommand("mmd-curve", "MMD vs sample count for each method");
  add_common(mmd_cmd, mmd_opts);
  auto* err_cmd =
      app.add_subcommand("error-curve", "empirical integration error vs sample count");
  add_common(err_cmd, err_opts);
  auto* weight_cmd = app.add_subcommand("weights", "BQ weight diagnostics for SBQ runs");
  add_common(weight_cmd, weight_opts);
  auto* bench_cmd = app.add_subcommand("bench", "per-step cost benchmarks");
  add_common(bench_cmd, bench_opts);
  auto* audit_cmd = app.add_subcommand("audit", "re-verify a finished run from trajectories");
  add_common(audit_cmd, audit_opts);
  auto* plot_cmd = app.add_subcommand("plot", "render a results CSV as a log-log SVG chart");
  plot_cmd->add_option("csv", plot_csv, "CSV produced by the other subcommands")->required();
  plot_cmd->add_option("--out", plot_out, "output SVG path")->required();
  plot_cmd->add_option("--column", plot_column,
                       "series column: auto|mmd_uniform|mmd_bq|mean_abs_err|bound");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (mmd_cmd->parsed()) {
      const auto cfg = load(mmd_opts);
      const auto csv = kquad::cmd_mmd_curve(cfg, resolve_out(mmd_opts, cfg), mmd_opts.threads);
      std::cout << "wrote " << csv.string() << "\n";
    } else if (err_cmd->parsed()) {
      const auto cfg = load(err_opts);
      const auto csv = kquad::cmd_error_curve(cfg, resolve_out(err_opts, cfg), err_opts.threads);
      std::cout << "wrote " << csv.string() << "\n";
    } else if (weight_cmd->parsed()) {
      const auto cfg = load(weight_opts);
      const auto csv =
          kquad::cmd_weights(cfg, resolve_out(weight_opts, cfg), weight_opts.threads);
      std::cout << "wrote " << csv.string() << "\n";
    } else if (bench_cmd->parsed()) {
      const auto cfg = load(bench_opts);
      const auto csv = kquad::cmd_bench(cfg, resolve_out(bench_opts, cfg));
      std::cout << "wrote " << csv.string() << "\n";
    } else if (audit_cmd->parsed()) {
      const auto cfg = load(audit_opts);
      const std::size_t checked = kquad::cmd_audit(cfg, resolve_out(audit_opts, cfg));
      std::cout << "audit ok: " << checked << " values verified\n";
    } else if (plot_cmd->parsed()) {
      kquad::cmd_plot(plot_csv, plot_out, plot_column);
      std::cout << "wrote " << plot_out << "\n";
    }
  } catch (const kquad::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const kquad::NotPositiveDefinite& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::length_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
