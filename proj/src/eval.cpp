#include "callrisk/eval.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "callrisk/rng.hpp"

namespace callrisk::eval {

IndexSplit split_indices(Eigen::Index n, const SplitPolicy& policy) {
  if (n < 2) throw TooFewCalls(n);
  if (!(policy.test_fraction > 0.0 && policy.test_fraction < 1.0)) {
    throw Error("test_fraction must lie in (0, 1)");
  }
  const auto n_test = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(policy.test_fraction * static_cast<double>(n)));
  if (n - n_test < 1) throw TooFewCalls(n);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  if (policy.mode == SplitMode::random_shuffle) {
    Rng rng(policy.seed);
    rng.shuffle(order);
  }

  IndexSplit split;
  split.train.assign(order.begin(), order.end() - n_test);
  split.test.assign(order.end() - n_test, order.end());
  return split;
}

double r2_oos(std::span<const double> predictions, std::span<const double> actuals,
              double baseline_mean) {
  if (predictions.size() != actuals.size() || actuals.empty()) {
    throw Error("r2_oos: predictions and actuals must be equal-length and non-empty");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < actuals.size(); ++i) {
    const double e = actuals[i] - predictions[i];
    const double d = actuals[i] - baseline_mean;
    num += e * e;
    den += d * d;
  }
  if (den == 0.0) throw DegenerateTarget();
  return 1.0 - num / den;
}

double r2_oos(const Eigen::Ref<const Eigen::VectorXd>& predictions,
              const Eigen::Ref<const Eigen::VectorXd>& actuals, double baseline_mean) {
  return r2_oos(std::span<const double>(predictions.data(),
                                        static_cast<std::size_t>(predictions.size())),
                std::span<const double>(actuals.data(),
                                        static_cast<std::size_t>(actuals.size())),
                baseline_mean);
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw Error("percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double idx = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(idx));
  const auto hi = static_cast<std::size_t>(std::ceil(idx));
  const double frac = idx - std::floor(idx);
  return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

// Runs `body(i)` for i in [0, count); any thread count yields the same
// per-index results because each index is seeded independently.
void for_each_index(int count, int threads, const std::function<void(int)>& body) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

struct BootstrapProblem {
  Eigen::MatrixXd train_X;
  Eigen::VectorXd train_y;
  Eigen::MatrixXd test_X;
  Eigen::VectorXd test_y;
};

BootstrapProblem make_problem(const Eigen::Ref<const Eigen::MatrixXd>& X,
                              const Eigen::Ref<const Eigen::VectorXd>& y,
                              const SplitPolicy& policy) {
  const IndexSplit split = split_indices(X.rows(), policy);
  BootstrapProblem p;
  p.train_X = X(split.train, Eigen::all);
  p.train_y = y(split.train);
  p.test_X = X(split.test, Eigen::all);
  p.test_y = y(split.test);
  return p;
}

// One bootstrap fit: resample training rows with replacement, fit, return the
// model. OOB rows (never drawn) serve as the early-stopping holdout when
// requested.
gbt::TreeEnsemble bootstrap_fit(const BootstrapProblem& p,
                                std::span<const std::string> schema,
                                gbt::GbtHyperparams hp, std::uint64_t resample_seed,
                                std::uint64_t fit_seed, bool early_stopping) {
  const Eigen::Index n = p.train_X.rows();
  Rng rng(resample_seed);
  std::vector<Eigen::Index> picks(static_cast<std::size_t>(n));
  std::vector<char> drawn(static_cast<std::size_t>(n), 0);
  for (auto& pick : picks) {
    const auto r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    pick = r;
    drawn[static_cast<std::size_t>(r)] = 1;
  }
  const Eigen::MatrixXd bs_X = p.train_X(picks, Eigen::all);
  const Eigen::VectorXd bs_y = p.train_y(picks);

  hp.seed = fit_seed;
  if (!early_stopping) {
    return gbt::fit(bs_X, bs_y, schema, hp);
  }

  std::vector<Eigen::Index> oob;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!drawn[static_cast<std::size_t>(i)]) oob.push_back(i);
  }
  if (oob.empty()) {
    return gbt::fit(bs_X, bs_y, schema, hp);
  }
  const Eigen::MatrixXd oob_X = p.train_X(oob, Eigen::all);
  const Eigen::VectorXd oob_y = p.train_y(oob);
  return gbt::fit(bs_X, bs_y, schema, hp, &oob_X, &oob_y);
}

double scored_r2(const gbt::TreeEnsemble& model, const BootstrapProblem& p) {
  const Eigen::VectorXd pred = model.predict(p.test_X);
  const double baseline = model.base_score;  // resampled training-target mean
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < p.test_y.size(); ++i) {
    num += (p.test_y(i) - pred(i)) * (p.test_y(i) - pred(i));
    den += (p.test_y(i) - baseline) * (p.test_y(i) - baseline);
  }
  if (den == 0.0) {
    // Constant test target: R^2 = 0 when the model is the baseline predictor.
    if (num == 0.0) return 0.0;
    throw DegenerateTarget();
  }
  return 1.0 - num / den;
}

void summarize_r2(BootstrapReport& report) {
  report.r2_mean = std::accumulate(report.r2_samples.begin(), report.r2_samples.end(), 0.0) /
                   static_cast<double>(report.r2_samples.size());
  report.r2_lo = percentile(report.r2_samples, 0.025);
  report.r2_hi = percentile(report.r2_samples, 0.975);
}

}  // namespace

BootstrapReport bootstrap_validate(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                   const Eigen::Ref<const Eigen::VectorXd>& y,
                                   std::span<const std::string> schema,
                                   const gbt::GbtHyperparams& hp, const SplitPolicy& policy,
                                   const BootstrapSettings& settings) {
  if (settings.iterations < 1) throw Error("bootstrap iterations must be >= 1");
  const BootstrapProblem problem = make_problem(X, y, policy);

  BootstrapReport report;
  report.r2_samples.assign(static_cast<std::size_t>(settings.iterations), 0.0);
  for_each_index(settings.iterations, settings.threads, [&](int i) {
    const auto model = bootstrap_fit(problem, schema, hp,
                                     derive_seed(settings.seed, 2 * static_cast<std::uint64_t>(i)),
                                     derive_seed(settings.seed, 2 * static_cast<std::uint64_t>(i) + 1),
                                     /*early_stopping=*/true);
    report.r2_samples[static_cast<std::size_t>(i)] = scored_r2(model, problem);
  });
  summarize_r2(report);
  return report;
}

BootstrapReport bootstrap_importance(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                     const Eigen::Ref<const Eigen::VectorXd>& y,
                                     std::span<const std::string> schema,
                                     const gbt::GbtHyperparams& hp, int fixed_estimators,
                                     const SplitPolicy& policy,
                                     const BootstrapSettings& settings) {
  if (settings.iterations < 1) throw Error("bootstrap iterations must be >= 1");
  if (fixed_estimators < 1) throw Error("fixed_estimators must be >= 1");
  const BootstrapProblem problem = make_problem(X, y, policy);

  BootstrapReport report;
  report.feature_names.assign(schema.begin(), schema.end());
  const auto n_features = static_cast<Eigen::Index>(schema.size());
  report.importance_samples.setZero(settings.iterations, n_features);
  report.r2_samples.assign(static_cast<std::size_t>(settings.iterations), 0.0);

  gbt::GbtHyperparams fixed_hp = hp;
  fixed_hp.n_estimators = fixed_estimators;

  for_each_index(settings.iterations, settings.threads, [&](int i) {
    const auto model = bootstrap_fit(problem, schema, fixed_hp,
                                     derive_seed(settings.seed, 2 * static_cast<std::uint64_t>(i)),
                                     derive_seed(settings.seed, 2 * static_cast<std::uint64_t>(i) + 1),
                                     /*early_stopping=*/false);
    const auto importance = model.gain_importance();
    for (Eigen::Index j = 0; j < n_features; ++j) {
      report.importance_samples(i, j) = importance.at(report.feature_names[static_cast<std::size_t>(j)]);
    }
    report.r2_samples[static_cast<std::size_t>(i)] = scored_r2(model, problem);
  });

  summarize_r2(report);
  report.importance_mean = report.importance_samples.colwise().mean();
  report.importance_lo.resize(n_features);
  report.importance_hi.resize(n_features);
  for (Eigen::Index j = 0; j < n_features; ++j) {
    std::vector<double> column(report.importance_samples.col(j).data(),
                               report.importance_samples.col(j).data() + settings.iterations);
    report.importance_lo(j) = percentile(column, 0.025);
    report.importance_hi(j) = percentile(std::move(column), 0.975);
  }
  return report;
}

namespace {

// Rows whose target for (horizon, kind) is present, in original order.
struct UsableRows {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

UsableRows usable_rows(const Eigen::Ref<const Eigen::MatrixXd>& X,
                       const Eigen::VectorXd& y, int horizon) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (std::isfinite(y(i))) keep.push_back(i);
  }
  if (keep.empty()) throw MissingTargets(horizon);
  return {X(keep, Eigen::all), y(keep)};
}

}  // namespace

BootstrapReport bootstrap_validate(const FeatureMatrix& matrix, int horizon,
                                   TargetKind kind, const gbt::GbtHyperparams& hp,
                                   const SplitPolicy& policy,
                                   const BootstrapSettings& settings) {
  const UsableRows rows = usable_rows(matrix.dense(), matrix.target_column(horizon, kind), horizon);
  return bootstrap_validate(rows.X, rows.y, matrix.schema, hp, policy, settings);
}

BootstrapReport bootstrap_importance(const FeatureMatrix& matrix, int horizon,
                                     TargetKind kind, const gbt::GbtHyperparams& hp,
                                     int fixed_estimators, const SplitPolicy& policy,
                                     const BootstrapSettings& settings) {
  const UsableRows rows = usable_rows(matrix.dense(), matrix.target_column(horizon, kind), horizon);
  return bootstrap_importance(rows.X, rows.y, matrix.schema, hp, fixed_estimators, policy,
                              settings);
}

std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::factors_only: return "factors_only";
    case Variant::acoustic_only: return "acoustic_only";
    case Variant::text_only: return "text_only";
    case Variant::multimodal: return "multimodal";
  }
  return "?";
}

std::vector<std::string> variant_schema(std::span<const std::string> full_schema,
                                        Variant variant) {
  std::vector<std::string> schema;
  for (const std::string& name : full_schema) {
    const bool is_control = name == "hist_vol_30d";
    const bool is_interaction = name.starts_with("inter__");
    switch (variant) {
      case Variant::multimodal:
        schema.push_back(name);
        break;
      case Variant::factors_only:
        if (is_control) schema.push_back(name);
        break;
      case Variant::acoustic_only:
        if (!is_control && !is_interaction && name.find("_acoustic_") != std::string::npos) {
          schema.push_back(name);
        }
        break;
      case Variant::text_only:
        if (!is_control && !is_interaction && name.find("_text_") != std::string::npos) {
          schema.push_back(name);
        }
        break;
    }
  }
  return schema;
}

AblationTable run_ablation(const FeatureMatrix& matrix, std::span<const int> horizons,
                           const gbt::GbtHyperparams& hp, const SplitPolicy& policy,
                           const BootstrapSettings& settings) {
  const Eigen::MatrixXd full_X = matrix.dense();

  constexpr std::array<Variant, 4> kVariants = {Variant::factors_only, Variant::acoustic_only,
                                                Variant::text_only, Variant::multimodal};

  // Column subsets per variant, resolved once.
  std::map<Variant, std::vector<Eigen::Index>> variant_cols;
  std::map<Variant, std::vector<std::string>> variant_names;
  for (Variant v : kVariants) {
    auto names = variant_schema(matrix.schema, v);
    std::vector<Eigen::Index> cols;
    for (const auto& name : names) {
      const auto it = std::find(matrix.schema.begin(), matrix.schema.end(), name);
      cols.push_back(static_cast<Eigen::Index>(it - matrix.schema.begin()));
    }
    variant_cols[v] = std::move(cols);
    variant_names[v] = std::move(names);
  }

  AblationTable table;
  table.horizons.assign(horizons.begin(), horizons.end());
  auto record = [&, &table = table](int horizon, TargetKind kind, Variant variant,
                                    const BootstrapReport& report) {
    AblationCellReport cell;
    cell.horizon = horizon;
    cell.kind = kind;
    cell.variant = variant;
    cell.r2_samples = report.r2_samples;
    cell.mean = report.r2_mean;
    cell.lo = report.r2_lo;
    cell.hi = report.r2_hi;
    table.cells.push_back(std::move(cell));
  };

  for (int horizon : horizons) {
    {
      const UsableRows rows =
          usable_rows(full_X, matrix.target_column(horizon, TargetKind::car), horizon);
      const auto report =
          bootstrap_validate(rows.X, rows.y, matrix.schema, hp, policy, settings);
      table.car_multimodal[horizon] = report.r2_mean;
      record(horizon, TargetKind::car, Variant::multimodal, report);
    }
    const Eigen::VectorXd vol = matrix.target_column(horizon, TargetKind::realized_vol);
    for (Variant v : kVariants) {
      const UsableRows rows = usable_rows(full_X(Eigen::all, variant_cols[v]), vol, horizon);
      const auto report =
          bootstrap_validate(rows.X, rows.y, variant_names[v], hp, policy, settings);
      table.volatility[horizon][v] = report.r2_mean;
      record(horizon, TargetKind::realized_vol, v, report);
    }
  }
  return table;
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json mean_cells = nlohmann::json::object();
  for (int horizon : horizons) {
    nlohmann::json cell{{"car_multimodal", car_multimodal.at(horizon)}};
    for (const auto& [variant, r2] : volatility.at(horizon)) {
      cell["vol_" + std::string(to_string(variant))] = r2;
    }
    mean_cells[std::to_string(horizon)] = std::move(cell);
  }
  nlohmann::json detail = nlohmann::json::array();
  for (const AblationCellReport& cell : cells) {
    detail.push_back({{"horizon", cell.horizon},
                      {"target", cell.kind == TargetKind::car ? "car" : "realized_vol"},
                      {"variant", std::string(to_string(cell.variant))},
                      {"r2_mean", cell.mean},
                      {"r2_lo", cell.lo},
                      {"r2_hi", cell.hi}});
  }
  return nlohmann::json{
      {"horizons", horizons}, {"cells", std::move(mean_cells)}, {"detail", std::move(detail)}};
}

std::string AblationTable::render_text() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %14s | %14s %14s %14s %14s\n", "Horizon",
                "CAR Multimodal", "Vol Factors", "Vol Acoustic", "Vol Text",
                "Vol Multimodal");
  out << line;
  out << std::string(92, '-') << '\n';
  for (int horizon : horizons) {
    const auto& vol = volatility.at(horizon);
    std::snprintf(line, sizeof(line), "t+%-10d %14.3f | %14.3f %14.3f %14.3f %14.3f\n",
                  horizon, car_multimodal.at(horizon), vol.at(Variant::factors_only),
                  vol.at(Variant::acoustic_only), vol.at(Variant::text_only),
                  vol.at(Variant::multimodal));
    out << line;
  }
  return out.str();
}

}  // namespace callrisk::eval
