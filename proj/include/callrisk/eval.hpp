#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "callrisk/features.hpp"
#include "callrisk/gbt.hpp"

namespace callrisk::eval {

using features::FeatureMatrix;
using features::TargetKind;

class DegenerateTarget : public Error {
 public:
  DegenerateTarget() : Error("r2_oos: zero denominator (constant actuals)") {}
};
class TooFewCalls : public Error {
 public:
  explicit TooFewCalls(Eigen::Index n)
      : Error("split needs at least 2 calls, got " + std::to_string(n)) {}
};
class MissingTargets : public Error {
 public:
  explicit MissingTargets(int horizon)
      : Error("no usable rows carry targets for horizon " + std::to_string(horizon)) {}
};

enum class SplitMode { chronological, random_shuffle };

// Chronological uses corpus order as the time key; the test set is the latest
// fraction. Test size is floor(test_fraction * n), clamped to at least 1.
struct SplitPolicy {
  SplitMode mode = SplitMode::chronological;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct IndexSplit {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> test;
};

IndexSplit split_indices(Eigen::Index n, const SplitPolicy& policy);

// 1 - sum (y - yhat)^2 / sum (y - baseline_mean)^2; baseline_mean is the
// training-target mean. May be negative. Throws DegenerateTarget when the
// denominator is zero.
double r2_oos(std::span<const double> predictions, std::span<const double> actuals,
              double baseline_mean);
double r2_oos(const Eigen::Ref<const Eigen::VectorXd>& predictions,
              const Eigen::Ref<const Eigen::VectorXd>& actuals, double baseline_mean);

struct BootstrapSettings {
  int iterations = 50;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct BootstrapReport {
  // Validation part.
  std::vector<double> r2_samples;
  double r2_mean = 0.0;
  double r2_lo = 0.0;  // percentile 2.5
  double r2_hi = 0.0;  // percentile 97.5

  // Importance part (empty unless produced by bootstrap_importance).
  std::vector<std::string> feature_names;
  Eigen::MatrixXd importance_samples;  // iterations x features
  Eigen::VectorXd importance_mean;
  Eigen::VectorXd importance_lo;
  Eigen::VectorXd importance_hi;
};

// Linear-interpolated order statistic (R type 7).
double percentile(std::vector<double> values, double p);

// Fixed test set from the policy; each iteration resamples the training rows
// with replacement (same size), fits, and records out-of-sample R^2 on the
// fixed test set. Early stopping uses the iteration's out-of-bag training
// rows, never the test set. Iteration seeds derive from settings.seed and the
// iteration index, so any thread count reproduces the sequential result.
BootstrapReport bootstrap_validate(const FeatureMatrix& matrix, int horizon,
                                   TargetKind kind, const gbt::GbtHyperparams& hp,
                                   const SplitPolicy& policy,
                                   const BootstrapSettings& settings);

// Same resampling, but fits with a fixed number of estimators (no early
// stopping) and collects gain-importance vectors.
BootstrapReport bootstrap_importance(const FeatureMatrix& matrix, int horizon,
                                     TargetKind kind, const gbt::GbtHyperparams& hp,
                                     int fixed_estimators, const SplitPolicy& policy,
                                     const BootstrapSettings& settings);

// Dense-core variants; rows of X must already be target-complete.
BootstrapReport bootstrap_validate(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                   const Eigen::Ref<const Eigen::VectorXd>& y,
                                   std::span<const std::string> schema,
                                   const gbt::GbtHyperparams& hp,
                                   const SplitPolicy& policy,
                                   const BootstrapSettings& settings);
BootstrapReport bootstrap_importance(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                     const Eigen::Ref<const Eigen::VectorXd>& y,
                                     std::span<const std::string> schema,
                                     const gbt::GbtHyperparams& hp, int fixed_estimators,
                                     const SplitPolicy& policy,
                                     const BootstrapSettings& settings);

enum class Variant { factors_only, acoustic_only, text_only, multimodal };

std::string_view to_string(Variant v) noexcept;

// factors_only keeps hist_vol_30d alone; the modality variants keep that
// modality's base and delta features only (no control, no interactions);
// multimodal keeps everything.
std::vector<std::string> variant_schema(std::span<const std::string> full_schema,
                                        Variant variant);

struct AblationCellReport {
  int horizon = 0;
  TargetKind kind = TargetKind::realized_vol;
  Variant variant = Variant::multimodal;
  std::vector<double> r2_samples;
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct AblationTable {
  std::vector<int> horizons;
  // horizon -> mean bootstrap R^2 of the multimodal CAR model.
  std::map<int, double> car_multimodal;
  // horizon -> variant -> mean bootstrap R^2 for realized volatility.
  std::map<int, std::map<Variant, double>> volatility;
  std::vector<AblationCellReport> cells;

  nlohmann::json to_json() const;
  std::string render_text() const;
};

AblationTable run_ablation(const FeatureMatrix& matrix, std::span<const int> horizons,
                           const gbt::GbtHyperparams& hp, const SplitPolicy& policy,
                           const BootstrapSettings& settings);

}  // namespace callrisk::eval
