#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ppimt/cli.hpp"

namespace {

std::size_t threads_from_env() {
  const char* v = std::getenv("PPI_MT_THREADS");
  if (!v || !*v) return 1;
  try {
    const auto n = std::stoul(v);
    return n == 0 ? 1 : n;
  } catch (const std::exception&) {
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task prediction-powered inference"};
  app.require_subcommand(1);

  ppimt::cli::CliConfig cfg;
  std::string config_path;
  std::size_t threads = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", cfg.seed, "master seed");
    sub->add_option("--out", cfg.out_dir, "output directory");
    sub->add_option("--threads", threads, "worker threads (default: PPI_MT_THREADS or 1)");
    sub->add_option("--set", cfg.overrides, "override a config key, e.g. runner.replications=500");
  };
  auto* synthetic = app.add_subcommand("synthetic", "run the synthetic replication study");
  auto* estimate = app.add_subcommand("estimate", "estimate task means from a CSV study");
  auto* verify = app.add_subcommand("verify", "check the variance theory numerically");
  auto* report = app.add_subcommand("report", "re-emit a summary in the configured formats");
  for (auto* s : {synthetic, estimate, verify, report}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : ppimt::cli::kUsageError;
  }

  if (synthetic->parsed()) cfg.subcommand = ppimt::cli::Subcommand::Synthetic;
  else if (estimate->parsed()) cfg.subcommand = ppimt::cli::Subcommand::Estimate;
  else if (verify->parsed()) cfg.subcommand = ppimt::cli::Subcommand::Verify;
  else cfg.subcommand = ppimt::cli::Subcommand::Report;
  if (!config_path.empty()) cfg.config_path = config_path;
  cfg.threads = threads > 0 ? threads : threads_from_env();

  return ppimt::cli::run(cfg, std::cout, std::cerr);
}
