#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "callrisk/eval.hpp"
#include "callrisk/features.hpp"
#include "callrisk/gbt.hpp"
#include "callrisk/physics.hpp"
#include "callrisk/piam.hpp"
#include "callrisk/synthgen.hpp"

namespace callrisk::cli {

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

struct EvalOptions {
  eval::SplitMode mode = eval::SplitMode::chronological;
  double test_fraction = 0.2;
  int validate_iterations = 50;
  int importance_iterations = 100;
  int importance_estimators = 50;
  std::vector<int> horizons = {1, 7, 30};
  int top_k = 15;
  int train_horizon = 30;
  features::TargetKind train_target = features::TargetKind::realized_vol;
};

struct PiamOptions {
  piam::WaveformConfig waveform{};
  piam::ToyModelConfig model{};
  double lambda = 0.01;
  int epochs = 25;
  double lr = 0.05;
  int batch = 16;
  double momentum = 0.9;
  int seeds = 10;
  int n_train = 210;
  int n_holdout = 70;
};

// One config drives every subcommand. `out` and `threads` are execution
// knobs: they are not part of the experiment definition and are excluded
// from effective_config.json, so reruns at different thread counts or output
// directories stay byte-identical.
struct RunConfig {
  std::uint64_t seed = 42;
  std::string corpus;
  std::string out = "out";
  int threads = 1;
  bool unsafe_asl_override = false;

  synthgen::PlantSpec synth = synthgen::PlantSpec::defaults();
  std::optional<std::string> asl_override_path;
  std::optional<features::InteractionSpec> interactions;  // nullopt -> defaults
  gbt::GbtHyperparams gbt_params{};
  EvalOptions eval_options{};
  physics::AcousticConstants constants{};
  PiamOptions piam_options{};

  static RunConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;  // experiment-defining fields only
};

RunConfig load_config_file(const std::string& path);

int cmd_synth(const RunConfig& cfg);
int cmd_ingest_check(const RunConfig& cfg);
int cmd_features(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_ablate(const RunConfig& cfg);
int cmd_importance(const RunConfig& cfg);
int cmd_concordance(const RunConfig& cfg);
int cmd_piam_demo(const RunConfig& cfg);
int cmd_piam_gradcheck(const RunConfig& cfg);

}  // namespace callrisk::cli
