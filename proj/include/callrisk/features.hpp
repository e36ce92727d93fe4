#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "callrisk/ingest.hpp"

namespace callrisk::features {

using ingest::CallRecord;
using ingest::Role;
using ingest::Section;

enum class Modality : int { acoustic = 0, text };
enum class AslDim : int { tension = 0, stability, arousal };
enum class Stat : int { mean = 0, std_dev, skewness, kurtosis };

// Section token used in feature names; delta is the Q&A-minus-presentation
// pseudo-section.
enum class NameSection : int { presentation = 0, qa, delta };

std::string_view to_string(Modality m) noexcept;
std::string_view to_string(AslDim d) noexcept;
std::string_view to_string(Stat s) noexcept;

class EmptySeries : public Error {
 public:
  EmptySeries() : Error("moments: series is empty") {}
};
class InvalidCombination : public Error {
 public:
  explicit InvalidCombination(const std::string& what) : Error(what) {}
};
class UnknownFeatureName : public Error {
 public:
  explicit UnknownFeatureName(const std::string& name)
      : Error("unknown feature name: " + name) {}
};
class NoDualLabeledUtterances : public Error {
 public:
  NoDualLabeledUtterances()
      : Error("no utterance carries both acoustic and text emotion labels") {}
};

// First four population moments. When every value is identical, skewness and
// kurtosis_excess are 0 by convention and zero_variance is set, so no NaN can
// reach the tree learner.
struct Moments {
  double mean = 0.0;
  double std_dev = 0.0;
  double skewness = 0.0;
  double kurtosis_excess = 0.0;
  std::size_t n = 0;
  bool zero_variance = false;
};

Moments moments(std::span<const double> values);

// Base grammar:  {ROLE}_{section}_{modality}_{dimension}_{stat}
// Delta grammar: {ROLE}_delta_{modality}_{dimension}_{stat}
// with section spelled "presentation" / "q&a" and delta limited to mean/std.
std::string feature_name(Role role, NameSection section, Modality modality,
                         AslDim dim, Stat stat);

// ASL vectors for every utterance matching (role, section) whose emotion for
// the requested modality is present, in order_index order. May be empty.
std::vector<asl::AslVector> asl_series(
    const CallRecord& call, Role role, Section section, Modality modality,
    const asl::AslTable& table = asl::AslTable::builtin());

using InteractionSpec = std::vector<std::pair<std::string, std::string>>;

// Per role: the two risk-salient text deltas multiplied together, and the
// volatility control times the stability delta.
InteractionSpec default_interactions();

std::string interaction_name(const std::string& a, const std::string& b);

struct FeatureRow {
  std::string call_id;
  std::map<std::string, double> values;  // absent key = missing; values finite

  std::optional<double> get(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) return std::nullopt;
    return it->second;
  }
};

// Ordered column names: 144 base moments, 36 deltas, interactions, control.
std::vector<std::string> feature_schema(const InteractionSpec& interactions);

FeatureRow build_features(const CallRecord& call,
                          const InteractionSpec& interactions = default_interactions(),
                          const asl::AslTable& table = asl::AslTable::builtin());

// Product features inter__{a}__{b}; missing when either operand is missing.
// Operand names must belong to the schema.
std::map<std::string, double> build_interactions(const FeatureRow& row,
                                                 const InteractionSpec& spec,
                                                 std::span<const std::string> schema);

enum class TargetKind { car, realized_vol };

struct FeatureMatrix {
  std::vector<std::string> schema;
  std::vector<FeatureRow> rows;
  // Per horizon, one optional target cell per row (same order as rows).
  std::map<int, std::vector<std::optional<ingest::Targets>>> targets;

  Eigen::Index n_rows() const { return static_cast<Eigen::Index>(rows.size()); }
  Eigen::Index n_cols() const { return static_cast<Eigen::Index>(schema.size()); }

  // Dense view; NaN encodes missing.
  Eigen::MatrixXd dense() const;

  // One target value per row; NaN where the horizon is absent.
  Eigen::VectorXd target_column(int horizon, TargetKind kind) const;
};

FeatureMatrix build_matrix(std::span<const CallRecord> calls,
                           const InteractionSpec& interactions = default_interactions(),
                           const asl::AslTable& table = asl::AslTable::builtin());

// CSV with header call_id, <schema...>, car_1, car_7, car_30, realized_vol_1,
// realized_vol_7, realized_vol_30; missing cells are empty fields.
void write_matrix_csv(std::ostream& out, const FeatureMatrix& matrix);

struct RoleConcordance {
  Eigen::Matrix<std::int64_t, 7, 7> counts;  // acoustic label x text label
  std::int64_t total = 0;
  double agreement = 0.0;
  double kappa = 0.0;
};

// Contingency, raw agreement and Cohen's kappa per role, over utterances
// carrying both labels. Roles with no dual-labeled utterance are omitted;
// throws NoDualLabeledUtterances when none exists at all.
std::map<Role, RoleConcordance> modality_concordance(std::span<const CallRecord> calls);

}  // namespace callrisk::features
