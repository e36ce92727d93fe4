#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "callrisk/features.hpp"
#include "callrisk/ingest.hpp"

namespace callrisk::synthgen {

class InvalidSpec : public Error {
 public:
  explicit InvalidSpec(const std::string& what) : Error(what) {}
};
class TooFewReturns : public Error {
 public:
  TooFewReturns() : Error("realized_vol needs at least 2 returns") {}
};

// Controls the planted relationships in a generated corpus. The 30-day
// realized volatility is
//   max(0, base_vol + hist_coeff * hist_vol + sum coeff_f * feature_f + eps),
// with a missing feature contributing 0, so the planted effects are exactly
// recoverable from the emitted feature values. Shorter horizons carry a
// damped signal and more noise; CAR is pure noise at every horizon.
struct PlantSpec {
  std::map<std::string, double> coefficients;  // feature name -> linear effect
  double hist_coeff = 1.0;
  double base_vol = 0.02;
  double noise_sd = 0.10;
  double car_noise_sd = 0.05;
  int n_calls = 1795;
  double p_cfo = 0.90;  // per-call presence probability (CEO always present)
  double p_cxo = 0.75;
  int utterances_min = 4;
  int utterances_max = 12;

  static PlantSpec defaults();
  void validate() const;  // planted names must follow the feature grammar
};

struct CallTruth {
  std::string call_id;
  std::map<std::string, double> features;  // realized planted-feature values
  double signal = 0.0;                     // noiseless 30-day volatility
};

struct GeneratedCorpus {
  std::vector<ingest::CallRecord> calls;
  std::vector<CallTruth> truth;
  PlantSpec spec;
};

// Deterministic per seed; call i depends only on (seed, i).
GeneratedCorpus generate_corpus(const PlantSpec& spec, std::uint64_t seed);

// Annualized population standard deviation of daily log returns (sqrt(252)).
double realized_vol(std::span<const double> daily_log_returns);

nlohmann::json truth_json(const GeneratedCorpus& corpus);

}  // namespace callrisk::synthgen
