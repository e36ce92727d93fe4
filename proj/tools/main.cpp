#include <functional>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "callrisk/commands.hpp"

namespace {

using callrisk::cli::RunConfig;

struct CommonFlags {
  std::string config_path;
  std::string corpus;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool unsafe_asl_override = false;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON run-config file");
  cmd->add_option("--corpus", flags.corpus, "corpus file (line-delimited JSON)");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--seed", flags.seed, "master seed")->each([&](const std::string&) {
    flags.seed_set = true;
  });
  cmd->add_option("--threads", flags.threads, "worker threads for bootstrap loops");
  cmd->add_flag("--unsafe-asl-override", flags.unsafe_asl_override,
                "accept a replacement ASL table from the config");
}

RunConfig resolve(const CommonFlags& flags) {
  RunConfig cfg;
  if (!flags.config_path.empty()) cfg = callrisk::cli::load_config_file(flags.config_path);
  if (!flags.corpus.empty()) cfg.corpus = flags.corpus;
  if (!flags.out.empty()) cfg.out = flags.out;
  if (flags.seed_set) cfg.seed = flags.seed;
  if (flags.threads > 0) cfg.threads = flags.threads;
  cfg.unsafe_asl_override = flags.unsafe_asl_override;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"earnings-call affect pipeline: synthetic corpora, ASL features, "
               "boosted-tree volatility models and the physics-regularized toy trainer"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::function<int(const RunConfig&)> action;

  auto* synth = app.add_subcommand("synth", "generate a planted synthetic corpus");
  add_common(synth, flags);
  int n_calls_override = 0;
  synth->add_option("--n-calls", n_calls_override, "number of calls to generate");
  synth->callback([&] {
    action = [&](const RunConfig& base) {
      RunConfig cfg = base;
      if (synth->count("--n-calls") > 0) cfg.synth.n_calls = n_calls_override;
      return callrisk::cli::cmd_synth(cfg);
    };
  });

  auto* ingest_check = app.add_subcommand("ingest-check", "parse and validate a corpus");
  add_common(ingest_check, flags);
  ingest_check->callback([&] { action = callrisk::cli::cmd_ingest_check; });

  auto* features = app.add_subcommand("features", "export the feature matrix");
  add_common(features, flags);
  features->callback([&] { action = callrisk::cli::cmd_features; });

  auto* train = app.add_subcommand("train", "fit one boosted-tree model");
  add_common(train, flags);
  int train_horizon = 0;
  std::string train_target;
  train->add_option("--horizon", train_horizon, "target horizon (1, 7 or 30)");
  train->add_option("--target", train_target, "car | realized_vol");
  train->callback([&] {
    action = [&](const RunConfig& base) {
      RunConfig cfg = base;
      if (train->count("--horizon") > 0) cfg.eval_options.train_horizon = train_horizon;
      if (!train_target.empty()) {
        if (train_target == "car") {
          cfg.eval_options.train_target = callrisk::features::TargetKind::car;
        } else if (train_target == "realized_vol") {
          cfg.eval_options.train_target = callrisk::features::TargetKind::realized_vol;
        } else {
          throw callrisk::cli::ConfigError("--target must be car or realized_vol");
        }
      }
      return callrisk::cli::cmd_train(cfg);
    };
  });

  auto* ablate = app.add_subcommand("ablate", "four-variant ablation across horizons");
  add_common(ablate, flags);
  int ablate_iterations = 0;
  ablate->add_option("--iterations", ablate_iterations, "bootstrap iterations per cell");
  ablate->callback([&] {
    action = [&](const RunConfig& base) {
      RunConfig cfg = base;
      if (ablate->count("--iterations") > 0) {
        cfg.eval_options.validate_iterations = ablate_iterations;
      }
      return callrisk::cli::cmd_ablate(cfg);
    };
  });

  auto* importance = app.add_subcommand("importance", "bootstrap feature-importance report");
  add_common(importance, flags);
  int imp_iterations = 0, imp_top_k = 0;
  importance->add_option("--iterations", imp_iterations, "bootstrap iterations");
  importance->add_option("--top-k", imp_top_k, "ranked rows in the text report");
  importance->callback([&] {
    action = [&](const RunConfig& base) {
      RunConfig cfg = base;
      if (importance->count("--iterations") > 0) {
        cfg.eval_options.importance_iterations = imp_iterations;
      }
      if (importance->count("--top-k") > 0) cfg.eval_options.top_k = imp_top_k;
      return callrisk::cli::cmd_importance(cfg);
    };
  });

  auto* concordance =
      app.add_subcommand("concordance", "acoustic vs text label agreement per role");
  add_common(concordance, flags);
  concordance->callback([&] { action = callrisk::cli::cmd_concordance; });

  auto* piam_demo =
      app.add_subcommand("piam-demo", "paired lambda=0 / lambda>0 toy training runs");
  add_common(piam_demo, flags);
  int demo_seeds = 0;
  bool gradcheck = false;
  piam_demo->add_option("--seeds", demo_seeds, "number of paired seeds");
  piam_demo->add_flag("--gradcheck", gradcheck,
                      "finite-difference check of the end-to-end gradient");
  piam_demo->callback([&] {
    action = [&](const RunConfig& base) {
      RunConfig cfg = base;
      if (piam_demo->count("--seeds") > 0) cfg.piam_options.seeds = demo_seeds;
      if (gradcheck) return callrisk::cli::cmd_piam_gradcheck(cfg);
      return callrisk::cli::cmd_piam_demo(cfg);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    return action(resolve(flags));
  } catch (const callrisk::cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
