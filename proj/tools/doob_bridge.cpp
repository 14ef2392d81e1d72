#include <iostream>

#include "CLI11.hpp"

#include "doob/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Endpoint-conditioned diffusion bridges and shooting baselines"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run one experiment config into an artifact directory");
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  int threads = 0;
  run->add_option("config", config, "Experiment config (JSON)")->required();
  auto* seed_opt = run->add_option("--seed", seed, "Override the config seed");
  auto* out_opt = run->add_option("--out", out, "Artifact directory (default runs/<name>)");
  auto* threads_opt = run->add_option("--threads", threads, "OpenMP thread count");

  auto* cmp = app.add_subcommand("compare", "Merge reports of finished runs into one table");
  std::vector<std::string> dirs;
  std::string cmp_out;
  cmp->add_option("dirs", dirs, "Artifact directories")->required();
  auto* cmp_out_opt = cmp->add_option("--out", cmp_out, "Write report.{csv,json,md} here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*run) {
    doob::RunOptions opts;
    if (*seed_opt) opts.seed = seed;
    if (*out_opt) opts.out = out;
    if (*threads_opt) opts.threads = threads;
    return doob::run_experiment(config, opts, std::cout, std::cerr);
  }
  std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
  std::optional<std::filesystem::path> dest;
  if (*cmp_out_opt) dest = cmp_out;
  return doob::run_compare(paths, dest, std::cout, std::cerr);
}
