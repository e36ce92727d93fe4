#include "callrisk/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "callrisk/rng.hpp"

namespace callrisk::gbt {

namespace {

double split_gain(double gl, double hl, double gr, double hr, double l2) {
  const double gp = gl + gr;
  const double hp = hl + hr;
  return 0.5 * (gl * gl / (hl + l2) + gr * gr / (hr + l2) - gp * gp / (hp + l2));
}

}  // namespace

double RegressionTree::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  int idx = 0;
  while (!nodes[idx].is_leaf()) {
    const TreeNode& node = nodes[idx];
    const double v = row(node.feature);
    if (std::isnan(v)) {
      idx = node.default_left ? node.left : node.right;
    } else {
      idx = v < node.threshold ? node.left : node.right;
    }
  }
  return nodes[idx].leaf_weight;
}

double TreeEnsemble::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  if (row.size() != static_cast<Eigen::Index>(schema.size())) {
    throw SchemaMismatch("row has " + std::to_string(row.size()) + " features, schema has " +
                         std::to_string(schema.size()));
  }
  double sum = base_score;
  for (const RegressionTree& tree : trees) {
    sum += learning_rate * tree.predict_row(row);
  }
  return sum;
}

Eigen::VectorXd TreeEnsemble::predict(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = predict_row(X.row(i));
  return out;
}

std::map<std::string, double> TreeEnsemble::gain_importance() const {
  std::map<std::string, double> importance;
  for (const auto& name : schema) importance[name] = 0.0;
  double total = 0.0;
  for (const RegressionTree& tree : trees) {
    for (const TreeNode& node : tree.nodes) {
      if (!node.is_leaf()) {
        importance[schema[static_cast<std::size_t>(node.feature)]] += node.gain;
        total += node.gain;
      }
    }
  }
  if (total > 0.0) {
    for (auto& [name, value] : importance) value /= total;
  }
  return importance;
}

std::optional<SplitCandidate> best_split(std::span<const double> gradients,
                                         std::span<const double> hessians,
                                         std::span<const double> values, double l2,
                                         double min_child_weight) {
  if (gradients.size() != hessians.size() || gradients.size() != values.size()) {
    throw Error("best_split: misaligned inputs");
  }
  const std::size_t n = values.size();

  double total_g = 0.0, total_h = 0.0;
  double miss_g = 0.0, miss_h = 0.0;
  std::vector<std::size_t> present;
  present.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    total_g += gradients[i];
    total_h += hessians[i];
    if (std::isnan(values[i])) {
      miss_g += gradients[i];
      miss_h += hessians[i];
    } else {
      present.push_back(i);
    }
  }
  if (present.size() < 2) return std::nullopt;
  std::sort(present.begin(), present.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::optional<SplitCandidate> best;
  double best_gain = 0.0;

  double acc_g = 0.0, acc_h = 0.0;
  for (std::size_t k = 0; k + 1 <= present.size(); ++k) {
    const std::size_t i = present[k];
    if (k > 0 && values[i] > values[present[k - 1]]) {
      const double threshold = 0.5 * (values[present[k - 1]] + values[i]);
      // Missing-left first so a gain tie keeps the missing-left candidate.
      for (bool missing_left : {true, false}) {
        const double gl = acc_g + (missing_left ? miss_g : 0.0);
        const double hl = acc_h + (missing_left ? miss_h : 0.0);
        const double gr = total_g - gl;
        const double hr = total_h - hl;
        if (hl < min_child_weight || hr < min_child_weight) continue;
        const double gain = split_gain(gl, hl, gr, hr, l2);
        if (gain > best_gain) {
          best_gain = gain;
          best = SplitCandidate{threshold, gain, missing_left};
        }
      }
    }
    acc_g += gradients[i];
    acc_h += hessians[i];
  }
  return best;
}

namespace {

// Working state for one candidate leaf during level-wise growth.
struct LeafState {
  int node = -1;
  double g = 0.0, h = 0.0;
  // Best split found so far.
  double best_gain = 0.0;
  int best_feature = -1;
  double best_threshold = 0.0;
  bool best_default_left = true;
  // Per-column scan state.
  double present_g = 0.0, present_h = 0.0;
  double acc_g = 0.0, acc_h = 0.0;
  double prev_value = 0.0;
  bool has_prev = false;
};

}  // namespace

TreeEnsemble fit(const Eigen::Ref<const Eigen::MatrixXd>& X,
                 const Eigen::Ref<const Eigen::VectorXd>& y,
                 std::span<const std::string> schema, const GbtHyperparams& hp,
                 const Eigen::MatrixXd* valid_X, const Eigen::VectorXd* valid_y) {
  hp.validate();
  const Eigen::Index n = X.rows();
  const Eigen::Index m = X.cols();
  if (n < 2) throw EmptyMatrix();
  if (y.size() != n || !y.allFinite()) throw NonFiniteTarget();
  if (static_cast<Eigen::Index>(schema.size()) != m) {
    throw SchemaMismatch("schema size does not match matrix columns");
  }
  const bool use_valid = valid_X != nullptr && valid_y != nullptr && valid_X->rows() > 0;

  TreeEnsemble ensemble;
  ensemble.base_score = y.mean();
  ensemble.learning_rate = hp.learning_rate;
  ensemble.schema.assign(schema.begin(), schema.end());

  // Presort each column once; missing rows tracked separately.
  std::vector<std::vector<int>> sorted_rows(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) {
    auto& rows = sorted_rows[static_cast<std::size_t>(j)];
    rows.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!std::isnan(X(i, j))) rows.push_back(static_cast<int>(i));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [&](int a, int b) { return X(a, j) < X(b, j); });
  }

  Eigen::VectorXd preds = Eigen::VectorXd::Constant(n, ensemble.base_score);
  Eigen::VectorXd valid_preds;
  if (use_valid) {
    valid_preds = Eigen::VectorXd::Constant(valid_X->rows(), ensemble.base_score);
  }

  Rng rng(hp.seed);
  std::vector<int> row_order(static_cast<std::size_t>(n));
  std::vector<int> col_order(static_cast<std::size_t>(m));

  double best_rmse = std::numeric_limits<double>::infinity();
  int best_round = -1;

  std::vector<int> position(static_cast<std::size_t>(n));
  std::vector<int> node_slot;

  for (int round = 0; round < hp.n_estimators; ++round) {
    // Row sample (without replacement).
    std::fill(position.begin(), position.end(), -1);
    if (hp.subsample < 1.0) {
      std::iota(row_order.begin(), row_order.end(), 0);
      rng.shuffle(row_order);
      const auto k = std::max<std::size_t>(
          1, static_cast<std::size_t>(hp.subsample * static_cast<double>(n)));
      for (std::size_t i = 0; i < k; ++i) position[static_cast<std::size_t>(row_order[i])] = 0;
    } else {
      std::fill(position.begin(), position.end(), 0);
    }

    // Column sample; kept ascending so gain ties resolve to the lower index.
    col_order.resize(static_cast<std::size_t>(m));
    std::iota(col_order.begin(), col_order.end(), 0);
    if (hp.colsample < 1.0) {
      rng.shuffle(col_order);
      const auto kc = std::max<std::size_t>(
          1, static_cast<std::size_t>(hp.colsample * static_cast<double>(m)));
      col_order.resize(kc);
      std::sort(col_order.begin(), col_order.end());
    }

    RegressionTree tree;
    tree.nodes.push_back(TreeNode{});

    std::vector<LeafState> level;
    {
      LeafState root;
      root.node = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (position[static_cast<std::size_t>(i)] == 0) {
          root.g += preds(i) - y(i);
          root.h += 1.0;
        }
      }
      level.push_back(root);
    }

    for (int depth = 0; depth < hp.max_depth && !level.empty(); ++depth) {
      node_slot.assign(tree.nodes.size(), -1);
      for (std::size_t s = 0; s < level.size(); ++s) {
        node_slot[static_cast<std::size_t>(level[s].node)] = static_cast<int>(s);
      }

      for (int j : col_order) {
        const auto& rows = sorted_rows[static_cast<std::size_t>(j)];

        // Pass 1: per-leaf sums over rows with a present value, so the
        // missing share of each leaf is known before scanning candidates.
        for (LeafState& st : level) {
          st.present_g = 0.0;
          st.present_h = 0.0;
          st.acc_g = 0.0;
          st.acc_h = 0.0;
          st.has_prev = false;
        }
        for (int r : rows) {
          const int node = position[static_cast<std::size_t>(r)];
          if (node < 0) continue;
          const int s = node_slot[static_cast<std::size_t>(node)];
          if (s < 0) continue;
          level[static_cast<std::size_t>(s)].present_g += preds(r) - y(r);
          level[static_cast<std::size_t>(s)].present_h += 1.0;
        }

        // Pass 2: scan split candidates at boundaries between distinct values.
        for (int r : rows) {
          const int node = position[static_cast<std::size_t>(r)];
          if (node < 0) continue;
          const int s = node_slot[static_cast<std::size_t>(node)];
          if (s < 0) continue;
          LeafState& st = level[static_cast<std::size_t>(s)];
          const double v = X(r, j);
          if (st.has_prev && v > st.prev_value) {
            const double threshold = 0.5 * (st.prev_value + v);
            const double miss_g = st.g - st.present_g;
            const double miss_h = st.h - st.present_h;
            for (bool missing_left : {true, false}) {
              const double gl = st.acc_g + (missing_left ? miss_g : 0.0);
              const double hl = st.acc_h + (missing_left ? miss_h : 0.0);
              const double gr = st.g - gl;
              const double hr = st.h - hl;
              if (hl < hp.min_child_weight || hr < hp.min_child_weight) continue;
              const double gain = split_gain(gl, hl, gr, hr, hp.l2_leaf);
              if (gain > st.best_gain) {
                st.best_gain = gain;
                st.best_feature = j;
                st.best_threshold = threshold;
                st.best_default_left = missing_left;
              }
            }
          }
          st.acc_g += preds(r) - y(r);
          st.acc_h += 1.0;
          st.prev_value = v;
          st.has_prev = true;
        }
      }

      // Materialize splits and route rows.
      std::vector<LeafState> next_level;
      for (LeafState& st : level) {
        TreeNode& node = tree.nodes[static_cast<std::size_t>(st.node)];
        if (st.best_feature < 0) {
          node.leaf_weight = -st.g / (st.h + hp.l2_leaf);
          continue;
        }
        node.feature = st.best_feature;
        node.threshold = st.best_threshold;
        node.default_left = st.best_default_left;
        node.gain = st.best_gain;
        node.left = static_cast<int>(tree.nodes.size());
        node.right = node.left + 1;
        tree.nodes.push_back(TreeNode{});
        tree.nodes.push_back(TreeNode{});

        LeafState left, right;
        left.node = node.left;
        right.node = node.right;
        next_level.push_back(left);
        next_level.push_back(right);
      }
      if (next_level.empty()) break;

      node_slot.assign(tree.nodes.size(), -1);
      for (std::size_t s = 0; s < next_level.size(); ++s) {
        node_slot[static_cast<std::size_t>(next_level[s].node)] = static_cast<int>(s);
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        const int node = position[static_cast<std::size_t>(i)];
        if (node < 0) continue;
        const TreeNode& parent = tree.nodes[static_cast<std::size_t>(node)];
        if (parent.is_leaf()) continue;
        const double v = X(i, parent.feature);
        int child;
        if (std::isnan(v)) {
          child = parent.default_left ? parent.left : parent.right;
        } else {
          child = v < parent.threshold ? parent.left : parent.right;
        }
        position[static_cast<std::size_t>(i)] = child;
        const int s = node_slot[static_cast<std::size_t>(child)];
        LeafState& st = next_level[static_cast<std::size_t>(s)];
        st.g += preds(i) - y(i);
        st.h += 1.0;
      }
      level = std::move(next_level);
    }
    // Any leaves left after hitting max depth.
    for (LeafState& st : level) {
      TreeNode& node = tree.nodes[static_cast<std::size_t>(st.node)];
      if (node.is_leaf() && node.left < 0) {
        node.leaf_weight = -st.g / (st.h + hp.l2_leaf);
      }
    }

    // A single zero-weight leaf cannot change any prediction, and with
    // squared error no later round can do better: training has converged.
    if (!tree.has_split() && tree.nodes[0].leaf_weight == 0.0) break;

    for (Eigen::Index i = 0; i < n; ++i) {
      preds(i) += hp.learning_rate * tree.predict_row(X.row(i));
    }
    ensemble.trees.push_back(std::move(tree));

    if (use_valid) {
      const RegressionTree& last = ensemble.trees.back();
      for (Eigen::Index i = 0; i < valid_X->rows(); ++i) {
        valid_preds(i) += hp.learning_rate * last.predict_row(valid_X->row(i));
      }
      const double rmse =
          std::sqrt((valid_preds - *valid_y).squaredNorm() / static_cast<double>(valid_y->size()));
      if (rmse < best_rmse) {
        best_rmse = rmse;
        best_round = round;
      } else if (round - best_round >= hp.early_stopping_rounds) {
        break;
      }
    }
  }

  if (use_valid && best_round >= 0 &&
      ensemble.trees.size() > static_cast<std::size_t>(best_round + 1)) {
    ensemble.trees.resize(static_cast<std::size_t>(best_round + 1));
  }
  return ensemble;
}

namespace {

nlohmann::json node_to_json(const RegressionTree& tree, const std::vector<std::string>& schema,
                            int idx) {
  const TreeNode& node = tree.nodes[static_cast<std::size_t>(idx)];
  if (node.is_leaf()) {
    return nlohmann::json{{"leaf", node.leaf_weight}};
  }
  return nlohmann::json{{"feature", schema[static_cast<std::size_t>(node.feature)]},
                        {"threshold", node.threshold},
                        {"default", node.default_left ? "left" : "right"},
                        {"gain", node.gain},
                        {"left", node_to_json(tree, schema, node.left)},
                        {"right", node_to_json(tree, schema, node.right)}};
}

int node_from_json(const nlohmann::json& j, const std::map<std::string, int>& feature_index,
                   RegressionTree& tree) {
  const int idx = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(TreeNode{});
  if (j.contains("leaf")) {
    tree.nodes[static_cast<std::size_t>(idx)].leaf_weight = j.at("leaf").get<double>();
    return idx;
  }
  const std::string feature = j.at("feature").get<std::string>();
  const auto it = feature_index.find(feature);
  if (it == feature_index.end()) throw SchemaMismatch("unknown feature in model: " + feature);
  TreeNode node;
  node.feature = it->second;
  node.threshold = j.at("threshold").get<double>();
  node.default_left = j.at("default").get<std::string>() == "left";
  node.gain = j.at("gain").get<double>();
  tree.nodes[static_cast<std::size_t>(idx)] = node;
  const int left = node_from_json(j.at("left"), feature_index, tree);
  const int right = node_from_json(j.at("right"), feature_index, tree);
  tree.nodes[static_cast<std::size_t>(idx)].left = left;
  tree.nodes[static_cast<std::size_t>(idx)].right = right;
  return idx;
}

}  // namespace

nlohmann::json TreeEnsemble::to_json() const {
  nlohmann::json trees_json = nlohmann::json::array();
  for (const RegressionTree& tree : trees) {
    trees_json.push_back(node_to_json(tree, schema, 0));
  }
  return nlohmann::json{{"format", "callrisk.gbt"},
                        {"version", 1},
                        {"base_score", base_score},
                        {"learning_rate", learning_rate},
                        {"schema", schema},
                        {"trees", std::move(trees_json)}};
}

TreeEnsemble TreeEnsemble::from_json(const nlohmann::json& doc) {
  if (doc.value("format", "") != "callrisk.gbt" || doc.value("version", 0) != 1) {
    throw Error("unsupported ensemble document");
  }
  TreeEnsemble ensemble;
  ensemble.base_score = doc.at("base_score").get<double>();
  ensemble.learning_rate = doc.at("learning_rate").get<double>();
  ensemble.schema = doc.at("schema").get<std::vector<std::string>>();

  std::map<std::string, int> feature_index;
  for (std::size_t i = 0; i < ensemble.schema.size(); ++i) {
    feature_index[ensemble.schema[i]] = static_cast<int>(i);
  }
  for (const auto& tree_json : doc.at("trees")) {
    RegressionTree tree;
    node_from_json(tree_json, feature_index, tree);
    ensemble.trees.push_back(std::move(tree));
  }
  return ensemble;
}

}  // namespace callrisk::gbt
