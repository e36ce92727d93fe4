#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "callrisk/common.hpp"

namespace callrisk::gbt {

class EmptyMatrix : public Error {
 public:
  EmptyMatrix() : Error("training matrix needs at least 2 rows") {}
};
class NonFiniteTarget : public Error {
 public:
  NonFiniteTarget() : Error("target column contains non-finite values") {}
};
class SchemaMismatch : public Error {
 public:
  explicit SchemaMismatch(const std::string& what) : Error(what) {}
};

struct GbtHyperparams {
  double learning_rate = 0.05;
  int max_depth = 3;
  double subsample = 0.8;
  double colsample = 0.8;
  int n_estimators = 100;
  int early_stopping_rounds = 10;
  double l2_leaf = 1.0;
  double min_child_weight = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0 && learning_rate <= 1.0) || max_depth < 1 ||
        !(subsample > 0.0 && subsample <= 1.0) ||
        !(colsample > 0.0 && colsample <= 1.0) || n_estimators < 0 ||
        l2_leaf < 0.0 || min_child_weight < 0.0) {
      throw Error("invalid gbt hyperparameters");
    }
  }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  bool default_left = true;  // routing for missing values
  double gain = 0.0;
  int left = -1;
  int right = -1;
  double leaf_weight = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // root at index 0

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  bool has_split() const { return !nodes.empty() && !nodes[0].is_leaf(); }
};

// Additive model: prediction = base_score + learning_rate * sum of tree leaf
// weights. Missing features (NaN) follow each node's stored default
// direction, so prediction is total over arbitrary missingness patterns.
struct TreeEnsemble {
  double base_score = 0.0;
  double learning_rate = 0.05;
  std::vector<RegressionTree> trees;
  std::vector<std::string> schema;

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::MatrixXd>& X) const;

  // Total split gain per feature, normalized to sum to 1 when any gain exists.
  std::map<std::string, double> gain_importance() const;

  nlohmann::json to_json() const;
  static TreeEnsemble from_json(const nlohmann::json& doc);
};

struct SplitCandidate {
  double threshold = 0.0;
  double gain = 0.0;
  bool default_left = true;
};

// Exact greedy split of one column. `values` are aligned with g/h and may be
// NaN (missing). Gain is the regularized second-order formula
//   1/2 [ G_L^2/(H_L+l2) + G_R^2/(H_R+l2) - (G_L+G_R)^2/(H_L+H_R+l2) ],
// maximized over midpoints of consecutive distinct values and both default
// directions for the missing rows. Ties break toward the smaller threshold,
// then missing-left. Returns nullopt when no positive-gain split satisfies
// min_child_weight.
std::optional<SplitCandidate> best_split(std::span<const double> gradients,
                                         std::span<const double> hessians,
                                         std::span<const double> values, double l2,
                                         double min_child_weight);

// Squared-error boosting with exact greedy splits. When a holdout is given,
// training stops once holdout RMSE has not improved for
// early_stopping_rounds rounds and the ensemble is truncated at the best
// round. Deterministic for a fixed seed.
TreeEnsemble fit(const Eigen::Ref<const Eigen::MatrixXd>& X,
                 const Eigen::Ref<const Eigen::VectorXd>& y,
                 std::span<const std::string> schema, const GbtHyperparams& hp,
                 const Eigen::MatrixXd* valid_X = nullptr,
                 const Eigen::VectorXd* valid_y = nullptr);

}  // namespace callrisk::gbt
