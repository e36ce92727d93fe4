// Acceptance suite: runs every gate criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "callrisk/commands.hpp"
#include "callrisk/eval.hpp"
#include "callrisk/features.hpp"
#include "callrisk/gbt.hpp"
#include "callrisk/io.hpp"
#include "callrisk/physics.hpp"
#include "callrisk/piam.hpp"
#include "callrisk/rng.hpp"
#include "callrisk/synthgen.hpp"
#include "oracles.hpp"

using namespace callrisk;
namespace fs = std::filesystem;

namespace {

struct Harness {
  int failures = 0;

  void criterion(int index, const std::string& name,
                 const std::function<void(std::vector<std::string>&)>& body) {
    std::vector<std::string> problems;
    const auto start = std::chrono::steady_clock::now();
    try {
      body(problems);
    } catch (const std::exception& e) {
      problems.push_back(std::string("exception: ") + e.what());
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (problems.empty()) {
      std::printf("PASS  criterion %d  (%s)  [%.1fs]\n", index, name.c_str(), seconds);
    } else {
      ++failures;
      std::printf("FAIL  criterion %d  (%s)  [%.1fs]\n", index, name.c_str(), seconds);
      for (const auto& p : problems) std::printf("      - %s\n", p.c_str());
    }
    std::fflush(stdout);
  }
};

void expect(std::vector<std::string>& problems, bool ok, const std::string& message) {
  if (!ok) problems.push_back(message);
}

int eval_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::min(4u, hw == 0 ? 1u : hw));
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

int main() {
  Harness harness;

  harness.criterion(1, "ASL mapping fidelity", [](auto& problems) {
    const struct {
      asl::Emotion e;
      asl::AslVector v;
    } rows[] = {
        {asl::Emotion::happiness, {-0.5, 1.0, 0.6}}, {asl::Emotion::surprise, {0.2, 0.2, 0.9}},
        {asl::Emotion::neutral, {0.0, 0.5, 0.0}},    {asl::Emotion::sadness, {0.6, -0.8, -0.5}},
        {asl::Emotion::fear, {1.0, -1.0, 0.8}},      {asl::Emotion::anger, {0.9, -0.7, 0.7}},
        {asl::Emotion::disgust, {0.8, -0.9, 0.4}},
    };
    for (const auto& row : rows) {
      expect(problems, asl::map_emotion(row.e) == row.v,
             std::string("coordinates differ for ") + std::string(asl::to_string(row.e)));
    }
  });

  harness.criterion(2, "moment oracle at 1e-12 relative error", [](auto& problems) {
    Rng rng(20260808);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = 1 + static_cast<int>(rng.below(1000));
      std::vector<double> xs(static_cast<std::size_t>(n));
      for (auto& x : xs) {
        switch (trial % 3) {
          case 0: x = rng.uniform(-1.0, 1.0); break;
          case 1: x = rng.normal(0.2, 0.5); break;
          default: x = rng.unit() < 0.3 ? 0.5 : rng.normal(-0.1, 0.8); break;
        }
      }
      const auto m = features::moments(xs);
      const auto o = oracles::moments_power_sums(xs);
      worst = std::max({worst, oracles::rel_err(m.mean, o.mean),
                        oracles::rel_err(m.std_dev, o.std_dev),
                        oracles::rel_err(m.skewness, o.skewness),
                        oracles::rel_err(m.kurtosis_excess, o.kurtosis_excess)});
    }
    expect(problems, worst < 1e-12, "worst relative error " + std::to_string(worst));
  });

  harness.criterion(3, "physics residual and gradient correctness", [](auto& problems) {
    physics::AcousticConstants k;  // c0 = rho0 = dt = 1, beta = 1.2

    const Eigen::VectorXd constant = Eigen::VectorXd::Constant(9, 0.7);
    expect(problems, physics::westervelt_residual(constant, k).isZero(0.0),
           "constant pressure must have zero residual");

    Eigen::VectorXd ramp(8);
    for (int t = 0; t < 8; ++t) ramp(t) = t;
    const Eigen::VectorXd r = physics::westervelt_residual(ramp, k);
    bool ramp_ok = r.size() == 6;
    for (Eigen::Index i = 0; i < r.size(); ++i) ramp_ok = ramp_ok && r(i) == 2.4;
    expect(problems, ramp_ok, "unit ramp residual must equal 2*beta/(rho0 c0^4) = 2.4");

    Rng rng(31337);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      physics::LatentTrajectory traj;
      traj.h.resize(8, 3);
      for (Eigen::Index i = 0; i < 8; ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) traj.h(i, j) = rng.normal();
      }
      traj.dt = 1.0;
      const auto op = physics::PressureOperator::random(3, 4, rng);
      worst = std::max(worst, physics::finite_diff_check(traj, op, k, 1e-5));
    }
    expect(problems, worst < 1e-5,
           "max relative gradient error " + std::to_string(worst) + " over 100 instances");
  });

  harness.criterion(4, "physics regularizer lowers L_phys without hurting accuracy",
                    [](auto& problems) {
    const cli::PiamOptions opts;  // defaults drive the demo
    const std::uint64_t master = 20250808;

    int wins = 0;
    double acc_base = 0.0, acc_reg = 0.0, train_acc_base_min = 1.0;
    const int pairs = 10;
    for (int pair = 0; pair < pairs; ++pair) {
      const auto train_set = piam::synth_dataset(
          opts.n_train, derive_seed(master, 2 * static_cast<std::uint64_t>(pair)), opts.waveform);
      const auto holdout = piam::synth_dataset(
          opts.n_holdout, derive_seed(master, 2 * static_cast<std::uint64_t>(pair) + 1),
          opts.waveform);

      piam::TrainHyper hyper;
      hyper.epochs = opts.epochs;
      hyper.lr = opts.lr;
      hyper.batch = opts.batch;
      hyper.momentum = opts.momentum;
      hyper.seed = derive_seed(master, 1000 + static_cast<std::uint64_t>(pair));

      hyper.lambda = 0.0;
      const auto [base_model, base_report] = piam::train(train_set, opts.model, hyper);
      hyper.lambda = 0.01;
      const auto [reg_model, reg_report] = piam::train(train_set, opts.model, hyper);

      if (reg_report.epochs.back().l_phys < base_report.epochs.back().l_phys) ++wins;
      acc_base += piam::evaluate_accuracy(base_model, holdout);
      acc_reg += piam::evaluate_accuracy(reg_model, holdout);
      train_acc_base_min = std::min(train_acc_base_min, base_report.epochs.back().accuracy);
    }
    acc_base /= pairs;
    acc_reg /= pairs;

    expect(problems, wins >= 9,
           "lambda=0.01 lowered final L_phys in only " + std::to_string(wins) + "/10 pairs");
    expect(problems, acc_base - acc_reg <= 0.05,
           "mean holdout accuracy drop " + fmt(acc_base - acc_reg) + " exceeds 0.05");
    expect(problems, train_acc_base_min > 0.9,
           "baseline training accuracy fell to " + fmt(train_acc_base_min));
    expect(problems, acc_reg > 0.8, "regularized holdout accuracy " + fmt(acc_reg));
  });

  harness.criterion(5, "gbt split oracle and monotone training error", [](auto& problems) {
    Eigen::MatrixXd X(4, 1);
    X << 0, 1, 2, 3;
    Eigen::VectorXd y(4);
    y << 0, 0, 1, 1;
    gbt::GbtHyperparams hp;
    hp.learning_rate = 1.0;
    hp.max_depth = 1;
    hp.subsample = 1.0;
    hp.colsample = 1.0;
    hp.l2_leaf = 0.0;
    const std::vector<std::string> schema = {"x"};
    const auto model = gbt::fit(X, y, schema, hp);
    const auto& root = model.trees.at(0).nodes.at(0);
    expect(problems, root.threshold > 1.0 && root.threshold < 2.0,
           "split threshold " + std::to_string(root.threshold) + " not between 1 and 2");
    const Eigen::VectorXd pred = model.predict(X);
    expect(problems, pred(0) == 0 && pred(1) == 0 && pred(2) == 1 && pred(3) == 1,
           "4-point fit is not exact");

    Rng rng(606);
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 25 + static_cast<int>(rng.below(50));
      Eigen::MatrixXd Xr(n, 3);
      Eigen::VectorXd yr(n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 3; ++j) Xr(i, j) = rng.normal();
        yr(i) = std::cos(Xr(i, 0)) + 0.5 * Xr(i, 1) + rng.normal(0, 0.3);
      }
      gbt::GbtHyperparams hpr;
      hpr.subsample = 1.0;
      hpr.n_estimators = 25;
      hpr.seed = static_cast<std::uint64_t>(trial);
      const std::vector<std::string> schema3 = {"a", "b", "c"};
      const auto m = gbt::fit(Xr, yr, schema3, hpr);

      gbt::TreeEnsemble partial;
      partial.base_score = m.base_score;
      partial.learning_rate = m.learning_rate;
      partial.schema = m.schema;
      double prev = std::sqrt((partial.predict(Xr) - yr).squaredNorm() / n);
      for (const auto& tree : m.trees) {
        partial.trees.push_back(tree);
        const double now = std::sqrt((partial.predict(Xr) - yr).squaredNorm() / n);
        expect(problems, now <= prev + 1e-12, "training RMSE increased within a round");
        prev = now;
      }
    }
  });

  // Criteria 6 and 7 share the default planted corpus.
  auto spec = synthgen::PlantSpec::defaults();
  const auto corpus = synthgen::generate_corpus(spec, 424242);
  const auto matrix = features::build_matrix(corpus.calls);

  harness.criterion(6, "qualitative ablation on the planted corpus", [&](auto& problems) {
    gbt::GbtHyperparams hp;  // paper defaults
    eval::SplitPolicy policy;
    eval::BootstrapSettings settings;
    settings.iterations = 50;
    settings.seed = 777;
    settings.threads = eval_threads();
    const std::vector<int> horizons = {1, 7, 30};
    const auto table = eval::run_ablation(matrix, horizons, hp, policy, settings);

    const double multi30 = table.volatility.at(30).at(eval::Variant::multimodal);
    const double factors30 = table.volatility.at(30).at(eval::Variant::factors_only);
    expect(problems, multi30 - factors30 >= 0.10,
           "multimodal " + fmt(multi30) + " does not beat factors-only " + fmt(factors30) +
               " by 0.10");

    const double multi1 = table.volatility.at(1).at(eval::Variant::multimodal);
    const double multi7 = table.volatility.at(7).at(eval::Variant::multimodal);
    expect(problems, multi1 < multi7 && multi7 < multi30,
           "volatility R^2 not monotone over horizons: " + fmt(multi1) + ", " + fmt(multi7) +
               ", " + fmt(multi30));

    for (int horizon : horizons) {
      const double car = table.car_multimodal.at(horizon);
      expect(problems, car >= -0.05 && car <= 0.05,
             "CAR R^2 at horizon " + std::to_string(horizon) + " is " + fmt(car));
    }
    std::cout << table.render_text();
  });

  harness.criterion(7, "planted features recovered by bootstrap importance", [&](auto& problems) {
    gbt::GbtHyperparams hp;
    eval::SplitPolicy policy;
    eval::BootstrapSettings settings;
    settings.iterations = 100;
    settings.seed = 888;
    settings.threads = eval_threads();
    const auto report = eval::bootstrap_importance(matrix, 30, features::TargetKind::realized_vol,
                                                   hp, 50, policy, settings);

    const double uniform = 1.0 / static_cast<double>(report.feature_names.size());
    for (const std::string target : {std::string("CFO_delta_text_stability_mean"),
                                     std::string("CEO_q&a_text_arousal_std")}) {
      const auto it =
          std::find(report.feature_names.begin(), report.feature_names.end(), target);
      if (it == report.feature_names.end()) {
        problems.push_back("feature missing from schema: " + target);
        continue;
      }
      const auto j = static_cast<Eigen::Index>(it - report.feature_names.begin());

      int top5 = 0;
      for (int i = 0; i < settings.iterations; ++i) {
        const double value = report.importance_samples(i, j);
        int rank = 0;
        for (Eigen::Index c = 0; c < report.importance_samples.cols(); ++c) {
          if (report.importance_samples(i, c) > value) ++rank;
        }
        if (rank < 5) ++top5;
      }
      const double share = static_cast<double>(top5) / settings.iterations;
      expect(problems, share >= 0.80,
             target + " in per-iteration top-5 only " + fmt(share) + " of the time");
      expect(problems, report.importance_lo(j) > uniform,
             target + " CI lower bound " + fmt(report.importance_lo(j)) +
                 " not above uniform share " + fmt(uniform));
    }
  });

  harness.criterion(8, "pipeline determinism across runs and thread counts", [](auto& problems) {
    const fs::path root = fs::temp_directory_path() / "callrisk_acceptance_determinism";
    fs::remove_all(root);

    auto pipeline = [&](const std::string& tag, int threads) {
      cli::RunConfig cfg;
      cfg.seed = 20270101;
      cfg.threads = threads;
      cfg.out = (root / (tag + "_synth")).string();
      cli::cmd_synth(cfg);

      cfg.corpus = (root / (tag + "_synth") / "corpus.jsonl").string();
      cfg.out = (root / (tag + "_features")).string();
      cli::cmd_features(cfg);

      cfg.eval_options.validate_iterations = 10;
      cfg.out = (root / (tag + "_ablate")).string();
      cli::cmd_ablate(cfg);
    };
    pipeline("a", 1);
    pipeline("b", 4);

    {
      const std::string corpus = read_file(root / "a_synth" / "corpus.jsonl");
      const auto lines = std::count(corpus.begin(), corpus.end(), '\n');
      expect(problems, lines == 1795,
             "default corpus has " + std::to_string(lines) + " lines, wanted 1795");
    }

    for (const auto& [dir, file] : std::vector<std::pair<std::string, std::string>>{
             {"_synth", "corpus.jsonl"},
             {"_synth", "truth.json"},
             {"_synth", "effective_config.json"},
             {"_features", "features.csv"},
             {"_features", "features_meta.json"},
             {"_ablate", "ablation.json"},
             {"_ablate", "ablation.txt"},
             {"_ablate", "ablate_iterations.jsonl"}}) {
      const std::string a = read_file(root / ("a" + dir) / file);
      const std::string b = read_file(root / ("b" + dir) / file);
      expect(problems, a == b, file + " differs between runs");
    }
    fs::remove_all(root);
  });

  harness.criterion(9, "concordance calibration at 1e5 utterances", [](auto& problems) {
    Rng rng(515151);
    ingest::CallRecord call;
    call.call_id = "calibration";
    const int n = 100000;
    call.utterances.reserve(n);
    for (int i = 0; i < n; ++i) {
      ingest::Utterance u;
      u.role = ingest::Role::ceo;
      u.section = ingest::Section::qa;
      u.order_index = i;
      u.text_emotion = asl::Emotion::neutral;  // fixed text label
      u.acoustic_emotion = static_cast<asl::Emotion>(rng.below(7));
      call.utterances.push_back(std::move(u));
    }
    const std::vector<ingest::CallRecord> calls = {call};
    const auto stats = features::modality_concordance(calls);
    const auto& c = stats.at(ingest::Role::ceo);
    expect(problems, std::abs(c.agreement - 1.0 / 7.0) <= 0.01,
           "agreement " + fmt(c.agreement) + " not within 1/7 +- 0.01");
    expect(problems, std::abs(c.kappa) <= 0.02, "kappa " + fmt(c.kappa) + " not within +-0.02");
  });

  if (harness.failures == 0) {
    std::printf("all acceptance criteria passed\n");
    return 0;
  }
  std::printf("%d criterion(s) failed\n", harness.failures);
  return 1;
}
