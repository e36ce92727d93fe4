#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "callrisk/eval.hpp"
#include "callrisk/rng.hpp"
#include "callrisk/synthgen.hpp"

using namespace callrisk;
using eval::SplitMode;
using eval::SplitPolicy;
using eval::Variant;
using features::TargetKind;

namespace {

features::FeatureMatrix planted_matrix(int n_calls, std::uint64_t seed) {
  auto spec = synthgen::PlantSpec::defaults();
  spec.n_calls = n_calls;
  const auto corpus = synthgen::generate_corpus(spec, seed);
  return features::build_matrix(corpus.calls);
}

}  // namespace

TEST_CASE("r2_oos identities") {
  const std::vector<double> y = {1.0, 2.0, 3.0, 4.0};
  CHECK(eval::r2_oos(y, y, 2.5) == 1.0);

  const std::vector<double> mean_pred(4, 2.5);
  CHECK(eval::r2_oos(mean_pred, y, 2.5) == 0.0);

  const std::vector<double> worse = {4.0, 3.0, 2.0, 1.0};
  CHECK(eval::r2_oos(worse, y, 2.5) < 0.0);

  const std::vector<double> constant(4, 1.0);
  CHECK_THROWS_AS(eval::r2_oos(constant, constant, 1.0), eval::DegenerateTarget);
  CHECK_THROWS_AS(eval::r2_oos(std::vector<double>{1.0}, y, 0.0), Error);
}

TEST_CASE("split_indices") {
  SUBCASE("chronological keeps the latest fraction as test") {
    SplitPolicy policy;
    const auto split = eval::split_indices(10, policy);
    CHECK(split.train.size() == 8);
    CHECK(split.test == std::vector<Eigen::Index>{8, 9});
  }
  SUBCASE("floor rule on 3 calls at one half") {
    SplitPolicy policy;
    policy.test_fraction = 0.5;
    const auto split = eval::split_indices(3, policy);
    CHECK(split.train.size() == 2);
    CHECK(split.test.size() == 1);
  }
  SUBCASE("random mode is deterministic per seed") {
    SplitPolicy policy;
    policy.mode = SplitMode::random_shuffle;
    policy.seed = 77;
    const auto a = eval::split_indices(20, policy);
    const auto b = eval::split_indices(20, policy);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
  }
  SUBCASE("partitions are disjoint and exhaustive") {
    for (SplitMode mode : {SplitMode::chronological, SplitMode::random_shuffle}) {
      SplitPolicy policy;
      policy.mode = mode;
      policy.test_fraction = 0.3;
      const auto split = eval::split_indices(17, policy);
      std::set<Eigen::Index> all(split.train.begin(), split.train.end());
      all.insert(split.test.begin(), split.test.end());
      CHECK(all.size() == 17);
      CHECK(split.train.size() + split.test.size() == 17);
    }
  }
  SUBCASE("too few calls") {
    CHECK_THROWS_AS(eval::split_indices(1, SplitPolicy{}), eval::TooFewCalls);
  }
}

TEST_CASE("percentile interpolation") {
  CHECK(eval::percentile({5.0}, 0.025) == 5.0);
  CHECK(eval::percentile({5.0}, 0.975) == 5.0);
  CHECK(eval::percentile({1.0, 2.0, 3.0, 4.0}, 0.5) == doctest::Approx(2.5));
  CHECK(eval::percentile({1.0, 2.0}, 0.0) == 1.0);
  CHECK(eval::percentile({1.0, 2.0}, 1.0) == 2.0);
}

TEST_CASE("bootstrap_validate on a constant target collapses to zero") {
  Eigen::MatrixXd X(20, 2);
  X.setRandom();
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(20, 0.4);
  eval::BootstrapSettings settings;
  settings.iterations = 5;
  const std::vector<std::string> schema = {"a", "b"};
  const auto report =
      eval::bootstrap_validate(X, y, schema, gbt::GbtHyperparams{}, SplitPolicy{}, settings);
  REQUIRE(report.r2_samples.size() == 5);
  for (double r2 : report.r2_samples) CHECK(r2 == 0.0);
  CHECK(report.r2_lo == 0.0);
  CHECK(report.r2_hi == 0.0);
}

TEST_CASE("single iteration gives a degenerate CI") {
  Rng rng(3);
  Eigen::MatrixXd X(30, 1);
  Eigen::VectorXd y(30);
  for (int i = 0; i < 30; ++i) {
    X(i, 0) = rng.normal();
    y(i) = X(i, 0) + rng.normal(0, 0.2);
  }
  eval::BootstrapSettings settings;
  settings.iterations = 1;
  const std::vector<std::string> schema = {"x"};
  const auto report =
      eval::bootstrap_validate(X, y, schema, gbt::GbtHyperparams{}, SplitPolicy{}, settings);
  CHECK(report.r2_samples.size() == 1);
  CHECK(report.r2_lo == report.r2_samples[0]);
  CHECK(report.r2_hi == report.r2_samples[0]);
  CHECK(report.r2_mean == report.r2_samples[0]);
}

TEST_CASE("bootstrap reports are identical across thread counts") {
  const auto matrix = planted_matrix(120, 6);
  gbt::GbtHyperparams hp;
  hp.n_estimators = 15;

  eval::BootstrapSettings serial;
  serial.iterations = 8;
  serial.seed = 99;
  serial.threads = 1;
  eval::BootstrapSettings parallel = serial;
  parallel.threads = 4;

  const auto a =
      eval::bootstrap_validate(matrix, 30, TargetKind::realized_vol, hp, SplitPolicy{}, serial);
  const auto b = eval::bootstrap_validate(matrix, 30, TargetKind::realized_vol, hp,
                                          SplitPolicy{}, parallel);
  CHECK(a.r2_samples == b.r2_samples);

  const auto ia = eval::bootstrap_importance(matrix, 30, TargetKind::realized_vol, hp, 10,
                                             SplitPolicy{}, serial);
  const auto ib = eval::bootstrap_importance(matrix, 30, TargetKind::realized_vol, hp, 10,
                                             SplitPolicy{}, parallel);
  CHECK(ia.importance_samples == ib.importance_samples);
}

TEST_CASE("importance vectors sum to one (or are all zero) per iteration") {
  const auto matrix = planted_matrix(100, 15);
  eval::BootstrapSettings settings;
  settings.iterations = 6;
  const auto report = eval::bootstrap_importance(matrix, 30, TargetKind::realized_vol,
                                                 gbt::GbtHyperparams{}, 10, SplitPolicy{},
                                                 settings);
  for (int i = 0; i < 6; ++i) {
    const double total = report.importance_samples.row(i).sum();
    CHECK((std::abs(total - 1.0) < 1e-9 || total == 0.0));
  }
}

TEST_CASE("single-feature matrix concentrates importance") {
  Rng rng(21);
  Eigen::MatrixXd X(60, 1);
  Eigen::VectorXd y(60);
  for (int i = 0; i < 60; ++i) {
    X(i, 0) = rng.normal();
    y(i) = 2.0 * X(i, 0) + rng.normal(0, 0.1);
  }
  eval::BootstrapSettings settings;
  settings.iterations = 4;
  const std::vector<std::string> schema = {"only"};
  const auto report = eval::bootstrap_importance(X, y, schema, gbt::GbtHyperparams{}, 10,
                                                 SplitPolicy{}, settings);
  for (int i = 0; i < 4; ++i) CHECK(report.importance_samples(i, 0) == 1.0);
}

TEST_CASE("pure-noise target keeps every CI lower bound near the uniform share") {
  Rng rng(31);
  const int n = 120, f = 12;
  Eigen::MatrixXd X(n, f);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < f; ++j) X(i, j) = rng.normal();
    y(i) = rng.normal();
  }
  std::vector<std::string> schema;
  for (int j = 0; j < f; ++j) schema.push_back("f" + std::to_string(j));

  eval::BootstrapSettings settings;
  settings.iterations = 20;
  const auto report = eval::bootstrap_importance(X, y, schema, gbt::GbtHyperparams{}, 20,
                                                 SplitPolicy{}, settings);
  const double uniform = 1.0 / f;
  for (Eigen::Index j = 0; j < f; ++j) {
    CHECK(report.importance_lo(j) <= 2.0 * uniform);
  }
}

TEST_CASE("variant schemas partition the full schema") {
  const auto schema = features::feature_schema(features::default_interactions());
  const auto factors = eval::variant_schema(schema, Variant::factors_only);
  const auto acoustic = eval::variant_schema(schema, Variant::acoustic_only);
  const auto text = eval::variant_schema(schema, Variant::text_only);
  const auto multi = eval::variant_schema(schema, Variant::multimodal);

  CHECK(factors == std::vector<std::string>{"hist_vol_30d"});
  CHECK(acoustic.size() == 90);  // 72 base + 18 delta columns per modality
  CHECK(text.size() == 90);
  CHECK(multi.size() == schema.size());
  for (const auto& name : acoustic) {
    CHECK(name.find("_acoustic_") != std::string::npos);
    CHECK(!name.starts_with("inter__"));
  }
}

TEST_CASE("ablation on an identity corpus recovers the control at horizon 30") {
  auto spec = synthgen::PlantSpec::defaults();
  spec.coefficients = {};
  spec.hist_coeff = 1.0;
  spec.base_vol = 0.0;
  spec.noise_sd = 0.0;
  spec.n_calls = 250;
  const auto corpus = synthgen::generate_corpus(spec, 2);
  const auto matrix = features::build_matrix(corpus.calls);

  gbt::GbtHyperparams hp;
  hp.n_estimators = 300;
  hp.learning_rate = 0.2;
  hp.subsample = 1.0;
  hp.colsample = 1.0;

  eval::BootstrapSettings settings;
  settings.iterations = 3;
  settings.threads = 2;
  const std::vector<int> horizons = {30};
  const auto table = eval::run_ablation(matrix, horizons, hp, SplitPolicy{}, settings);

  // vol_30 == hist_vol exactly; a deep-enough ensemble tracks it closely.
  CHECK(table.volatility.at(30).at(Variant::factors_only) > 0.95);
  // CAR stays noise.
  CHECK(std::abs(table.car_multimodal.at(30)) < 0.2);
  CHECK(table.cells.size() == 5);
  CHECK(!table.render_text().empty());
  CHECK(table.to_json().contains("cells"));
}
