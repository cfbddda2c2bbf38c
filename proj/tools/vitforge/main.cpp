#include <cstdio>
#include <cstdlib>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "vitforge/errors.hpp"

using namespace vitforge;
using namespace vitforge::cli;

int main(int argc, char** argv) {
  CLI::App app{"training-free ViT topology search, scaling, and scheduling"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir_flag;
  uint64_t seed_flag = 0;
  bool seed_given = false;
  int jobs_flag = 0;
  bool jobs_given = false;
  app.add_option("--config", config_path, "INI config file ([command] sections)")
      ->each([](const std::string&) {});
  app.add_option("--seed", seed_flag, "global seed for all random streams")
      ->each([&](const std::string&) { seed_given = true; });
  app.add_option("--jobs", jobs_flag, "worker threads (0 = library default)")
      ->each([&](const std::string&) { jobs_given = true; });
  app.add_option("--out-dir", out_dir_flag,
                 "output directory (default: $VITFORGE_OUT_DIR or '.')");
  app.fallthrough();

  FlagOverrides fl;
  std::string arch_file;

  CLI::App* evaluate = app.add_subcommand("evaluate", "score one architecture document");
  evaluate->add_option("arch", arch_file, "architecture document")->required();
  evaluate->add_option("--seeds", fl.seeds, "number of evaluation seeds");

  CLI::App* search = app.add_subcommand("search", "REINFORCE topology search");
  search->add_option("--steps", fl.steps, "policy-gradient steps");
  search->add_option("--resume", fl.resume, "policy checkpoint to continue from");

  CLI::App* scale = app.add_subcommand("scale", "grow an architecture to a parameter budget");
  scale->add_option("arch", arch_file, "seed architecture document")->required();
  scale->add_option("--budget", fl.budget, "parameter budget");
  scale->add_flag("--random-scaling", fl.random_scaling, "uniform-choice baseline mode");

  CLI::App* schedule = app.add_subcommand("schedule", "progressive re-tokenization savings");
  schedule->add_option("arch", arch_file, "architecture document")->required();
  schedule->add_option("--phases", fl.phases, "e.g. 1-40:4x,41-70:2x,71-300:full");

  CLI::App* correlate = app.add_subcommand("correlate", "metric vs. accuracy study");
  correlate->add_option("--n", fl.n, "number of topologies");
  correlate->add_option("--epochs", fl.epochs, "training epochs per topology");
  correlate->add_option("--resume", fl.resume, "partial study.csv to continue from");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    CommonOpts opts;
    if (!config_path.empty()) {
      opts.config = parse_ini_file(config_path);
      check_known_keys(opts.config);
    }
    opts.seed = seed_given ? seed_flag
                           : static_cast<uint64_t>(opts.config.get_int("seed", 1));
    opts.jobs = jobs_given ? jobs_flag : static_cast<int>(opts.config.get_int("jobs", 0));
    if (!out_dir_flag.empty()) {
      opts.out_dir = out_dir_flag;
    } else if (opts.config.has("out_dir")) {
      opts.out_dir = opts.config.get_str("out_dir", ".");
    } else if (const char* env = std::getenv("VITFORGE_OUT_DIR")) {
      opts.out_dir = env;
    }

    if (evaluate->parsed()) return cmd_evaluate(arch_file, opts, fl);
    if (search->parsed()) return cmd_search(opts, fl);
    if (scale->parsed()) return cmd_scale(arch_file, opts, fl);
    if (schedule->parsed()) return cmd_schedule(arch_file, opts, fl);
    if (correlate->parsed()) return cmd_correlate(opts, fl);
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const EvalError& e) {
    std::fprintf(stderr, "evaluation error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
