#include "callrisk/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "callrisk/io.hpp"

namespace callrisk::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Collects output bytes + hashes so the manifest can be written last.
class OutputWriter {
 public:
  explicit OutputWriter(const fs::path& dir) : dir_(dir) { fs::create_directories(dir_); }

  void write(const std::string& name, std::string_view content) {
    write_file_atomic(dir_ / name, content);
    hashes_[name] = sha256_hex(content);
  }

  const std::map<std::string, std::string>& hashes() const { return hashes_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::map<std::string, std::string> hashes_;
};

void write_metadata(const RunConfig& cfg, OutputWriter& out,
                    const std::map<std::string, std::string>& input_hashes) {
  out.write("effective_config.json", cfg.to_json().dump(2) + "\n");
  json manifest{{"inputs", input_hashes}, {"outputs", out.hashes()}};
  write_file_atomic(out.dir() / "manifest.json", manifest.dump(2) + "\n");
}

struct LoadedCorpus {
  ingest::ParseResult parsed;
  std::string sha256;
};

LoadedCorpus load_corpus(const RunConfig& cfg) {
  if (cfg.corpus.empty()) throw ConfigError("no corpus path given (--corpus or config)");
  if (!fs::exists(cfg.corpus)) throw ConfigError("corpus file not found: " + cfg.corpus);
  const std::string bytes = read_file(cfg.corpus);
  std::istringstream in(bytes);
  LoadedCorpus loaded;
  loaded.parsed = ingest::parse_corpus(in);
  loaded.sha256 = sha256_hex(bytes);
  return loaded;
}

asl::AslTable resolve_asl_table(const RunConfig& cfg) {
  if (!cfg.asl_override_path) return asl::AslTable::builtin();
  if (!cfg.unsafe_asl_override) {
    throw ConfigError(
        "config names an ASL override file; pass --unsafe-asl-override to accept it");
  }
  return asl::load_asl_override(*cfg.asl_override_path);
}

features::InteractionSpec resolve_interactions(const RunConfig& cfg) {
  return cfg.interactions.value_or(features::default_interactions());
}

void check_horizons(const std::vector<int>& horizons) {
  if (horizons.empty()) throw ConfigError("at least one horizon required");
  for (int h : horizons) {
    if (std::find(ingest::kHorizons.begin(), ingest::kHorizons.end(), h) ==
        ingest::kHorizons.end()) {
      throw ConfigError("unsupported horizon " + std::to_string(h) + " (allowed: 1, 7, 30)");
    }
  }
}

eval::SplitPolicy split_policy(const RunConfig& cfg) {
  eval::SplitPolicy policy;
  policy.mode = cfg.eval_options.mode;
  policy.test_fraction = cfg.eval_options.test_fraction;
  policy.seed = derive_seed(cfg.seed, 0x5417);
  return policy;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

RunConfig load_config_file(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    return RunConfig::from_json(doc);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

RunConfig RunConfig::from_json(const json& doc) {
  RunConfig cfg;
  cfg.seed = doc.value("seed", cfg.seed);
  cfg.corpus = doc.value("corpus", cfg.corpus);
  cfg.out = doc.value("out", cfg.out);
  cfg.threads = doc.value("threads", cfg.threads);

  if (doc.contains("synth")) {
    const auto& s = doc.at("synth");
    cfg.synth.n_calls = s.value("n_calls", cfg.synth.n_calls);
    cfg.synth.hist_coeff = s.value("hist_coeff", cfg.synth.hist_coeff);
    cfg.synth.base_vol = s.value("base_vol", cfg.synth.base_vol);
    cfg.synth.noise_sd = s.value("noise_sd", cfg.synth.noise_sd);
    cfg.synth.car_noise_sd = s.value("car_noise_sd", cfg.synth.car_noise_sd);
    cfg.synth.p_cfo = s.value("p_cfo", cfg.synth.p_cfo);
    cfg.synth.p_cxo = s.value("p_cxo", cfg.synth.p_cxo);
    cfg.synth.utterances_min = s.value("utterances_min", cfg.synth.utterances_min);
    cfg.synth.utterances_max = s.value("utterances_max", cfg.synth.utterances_max);
    if (s.contains("coefficients")) {
      cfg.synth.coefficients.clear();
      for (const auto& [name, coeff] : s.at("coefficients").items()) {
        cfg.synth.coefficients[name] = coeff.get<double>();
      }
    }
  }

  if (doc.contains("features")) {
    const auto& f = doc.at("features");
    if (f.contains("asl_override") && !f.at("asl_override").is_null()) {
      cfg.asl_override_path = f.at("asl_override").get<std::string>();
    }
    if (f.contains("interactions")) {
      features::InteractionSpec spec;
      for (const auto& pair : f.at("interactions")) {
        spec.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
      }
      cfg.interactions = std::move(spec);
    }
  }

  if (doc.contains("gbt")) {
    const auto& g = doc.at("gbt");
    cfg.gbt_params.learning_rate = g.value("learning_rate", cfg.gbt_params.learning_rate);
    cfg.gbt_params.max_depth = g.value("max_depth", cfg.gbt_params.max_depth);
    cfg.gbt_params.subsample = g.value("subsample", cfg.gbt_params.subsample);
    cfg.gbt_params.colsample = g.value("colsample", cfg.gbt_params.colsample);
    cfg.gbt_params.n_estimators = g.value("n_estimators", cfg.gbt_params.n_estimators);
    cfg.gbt_params.early_stopping_rounds =
        g.value("early_stopping_rounds", cfg.gbt_params.early_stopping_rounds);
    cfg.gbt_params.l2_leaf = g.value("l2_leaf", cfg.gbt_params.l2_leaf);
    cfg.gbt_params.min_child_weight =
        g.value("min_child_weight", cfg.gbt_params.min_child_weight);
  }

  if (doc.contains("eval")) {
    const auto& e = doc.at("eval");
    const std::string mode = e.value("mode", std::string("chronological"));
    if (mode == "chronological") {
      cfg.eval_options.mode = eval::SplitMode::chronological;
    } else if (mode == "random") {
      cfg.eval_options.mode = eval::SplitMode::random_shuffle;
    } else {
      throw ConfigError("eval.mode must be 'chronological' or 'random'");
    }
    cfg.eval_options.test_fraction = e.value("test_fraction", cfg.eval_options.test_fraction);
    cfg.eval_options.validate_iterations =
        e.value("validate_iterations", cfg.eval_options.validate_iterations);
    cfg.eval_options.importance_iterations =
        e.value("importance_iterations", cfg.eval_options.importance_iterations);
    cfg.eval_options.importance_estimators =
        e.value("importance_estimators", cfg.eval_options.importance_estimators);
    cfg.eval_options.top_k = e.value("top_k", cfg.eval_options.top_k);
    cfg.eval_options.train_horizon = e.value("train_horizon", cfg.eval_options.train_horizon);
    if (e.contains("horizons")) {
      cfg.eval_options.horizons = e.at("horizons").get<std::vector<int>>();
    }
    const std::string target = e.value("train_target", std::string("realized_vol"));
    if (target == "car") {
      cfg.eval_options.train_target = features::TargetKind::car;
    } else if (target == "realized_vol") {
      cfg.eval_options.train_target = features::TargetKind::realized_vol;
    } else {
      throw ConfigError("eval.train_target must be 'car' or 'realized_vol'");
    }
  }

  if (doc.contains("physics")) {
    const auto& p = doc.at("physics");
    cfg.constants.c0 = p.value("c0", cfg.constants.c0);
    cfg.constants.rho0 = p.value("rho0", cfg.constants.rho0);
    cfg.constants.beta = p.value("beta", cfg.constants.beta);
    cfg.constants.dt = p.value("dt", cfg.constants.dt);
  }

  if (doc.contains("piam")) {
    const auto& p = doc.at("piam");
    auto& opts = cfg.piam_options;
    opts.lambda = p.value("lambda", opts.lambda);
    opts.epochs = p.value("epochs", opts.epochs);
    opts.lr = p.value("lr", opts.lr);
    opts.batch = p.value("batch", opts.batch);
    opts.momentum = p.value("momentum", opts.momentum);
    opts.seeds = p.value("seeds", opts.seeds);
    opts.n_train = p.value("n_train", opts.n_train);
    opts.n_holdout = p.value("n_holdout", opts.n_holdout);
    opts.waveform.duration = p.value("duration", opts.waveform.duration);
    opts.waveform.sample_rate = p.value("sample_rate", opts.waveform.sample_rate);
    opts.waveform.clip_level = p.value("clip_level", opts.waveform.clip_level);
    opts.waveform.amplitude = p.value("amplitude", opts.waveform.amplitude);
    opts.waveform.noise_sd = p.value("noise_sd", opts.waveform.noise_sd);
    opts.model.frame_size = p.value("frame_size", opts.model.frame_size);
    opts.model.hop = p.value("hop", opts.model.hop);
    opts.model.encoder_hidden = p.value("encoder_hidden", opts.model.encoder_hidden);
    opts.model.latent_dim = p.value("latent_dim", opts.model.latent_dim);
    opts.model.pressure_hidden = p.value("pressure_hidden", opts.model.pressure_hidden);
  }
  return cfg;
}

json RunConfig::to_json() const {
  json coefficients = json::object();
  for (const auto& [name, coeff] : synth.coefficients) coefficients[name] = coeff;

  json features_section = json::object();
  if (asl_override_path) features_section["asl_override"] = *asl_override_path;
  {
    json pairs = json::array();
    for (const auto& [a, b] : interactions.value_or(features::default_interactions())) {
      pairs.push_back(json::array({a, b}));
    }
    features_section["interactions"] = std::move(pairs);
  }

  return json{
      {"seed", seed},
      {"corpus", corpus},
      {"synth",
       {{"n_calls", synth.n_calls},
        {"hist_coeff", synth.hist_coeff},
        {"base_vol", synth.base_vol},
        {"noise_sd", synth.noise_sd},
        {"car_noise_sd", synth.car_noise_sd},
        {"p_cfo", synth.p_cfo},
        {"p_cxo", synth.p_cxo},
        {"utterances_min", synth.utterances_min},
        {"utterances_max", synth.utterances_max},
        {"coefficients", std::move(coefficients)}}},
      {"features", std::move(features_section)},
      {"gbt",
       {{"learning_rate", gbt_params.learning_rate},
        {"max_depth", gbt_params.max_depth},
        {"subsample", gbt_params.subsample},
        {"colsample", gbt_params.colsample},
        {"n_estimators", gbt_params.n_estimators},
        {"early_stopping_rounds", gbt_params.early_stopping_rounds},
        {"l2_leaf", gbt_params.l2_leaf},
        {"min_child_weight", gbt_params.min_child_weight}}},
      {"eval",
       {{"mode", eval_options.mode == eval::SplitMode::chronological ? "chronological" : "random"},
        {"test_fraction", eval_options.test_fraction},
        {"validate_iterations", eval_options.validate_iterations},
        {"importance_iterations", eval_options.importance_iterations},
        {"importance_estimators", eval_options.importance_estimators},
        {"horizons", eval_options.horizons},
        {"top_k", eval_options.top_k},
        {"train_horizon", eval_options.train_horizon},
        {"train_target",
         eval_options.train_target == features::TargetKind::car ? "car" : "realized_vol"}}},
      {"physics",
       {{"c0", constants.c0}, {"rho0", constants.rho0}, {"beta", constants.beta},
        {"dt", constants.dt}}},
      {"piam",
       {{"lambda", piam_options.lambda},
        {"epochs", piam_options.epochs},
        {"lr", piam_options.lr},
        {"batch", piam_options.batch},
        {"momentum", piam_options.momentum},
        {"seeds", piam_options.seeds},
        {"n_train", piam_options.n_train},
        {"n_holdout", piam_options.n_holdout},
        {"duration", piam_options.waveform.duration},
        {"sample_rate", piam_options.waveform.sample_rate},
        {"clip_level", piam_options.waveform.clip_level},
        {"amplitude", piam_options.waveform.amplitude},
        {"noise_sd", piam_options.waveform.noise_sd},
        {"frame_size", piam_options.model.frame_size},
        {"hop", piam_options.model.hop},
        {"encoder_hidden", piam_options.model.encoder_hidden},
        {"latent_dim", piam_options.model.latent_dim},
        {"pressure_hidden", piam_options.model.pressure_hidden}}}};
}

int cmd_synth(const RunConfig& cfg) {
  if (cfg.synth.n_calls < 1) throw ConfigError("synth.n_calls must be >= 1");
  cfg.synth.validate();

  const auto corpus = synthgen::generate_corpus(cfg.synth, cfg.seed);

  OutputWriter out(cfg.out);
  std::ostringstream corpus_stream;
  ingest::write_corpus(corpus_stream, corpus.calls);
  out.write("corpus.jsonl", corpus_stream.str());
  out.write("truth.json", synthgen::truth_json(corpus).dump(2) + "\n");
  write_metadata(cfg, out, {});

  std::cout << "wrote " << corpus.calls.size() << " calls to "
            << (out.dir() / "corpus.jsonl").string() << "\n";
  return 0;
}

int cmd_ingest_check(const RunConfig& cfg) {
  const LoadedCorpus loaded = load_corpus(cfg);

  json issues = json::array();
  std::map<std::string, int> issue_counts;
  int clean = 0;
  for (const auto& call : loaded.parsed.calls) {
    const auto call_issues = ingest::validate_call(call);
    if (call_issues.empty()) {
      ++clean;
      continue;
    }
    json items = json::array();
    for (const auto& issue : call_issues) {
      items.push_back({{"kind", std::string(ingest::to_string(issue.kind))},
                       {"detail", issue.detail}});
      ++issue_counts[std::string(ingest::to_string(issue.kind))];
    }
    issues.push_back({{"call_id", call.call_id}, {"issues", std::move(items)}});
  }

  OutputWriter out(cfg.out);
  const json summary{{"calls", loaded.parsed.calls.size()},
                     {"clean_calls", clean},
                     {"unknown_field_warnings", loaded.parsed.unknown_field_warnings},
                     {"dropped_non_executive", loaded.parsed.dropped_non_executive},
                     {"issue_counts", issue_counts}};
  out.write("ingest_summary.json", summary.dump(2) + "\n");
  {
    std::ostringstream lines;
    for (const auto& item : issues) lines << item.dump() << '\n';
    out.write("ingest_issues.jsonl", lines.str());
  }
  write_metadata(cfg, out, {{cfg.corpus, loaded.sha256}});

  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_features(const RunConfig& cfg) {
  const LoadedCorpus loaded = load_corpus(cfg);
  const auto table = resolve_asl_table(cfg);
  const auto interactions = resolve_interactions(cfg);
  const auto matrix = features::build_matrix(loaded.parsed.calls, interactions, table);

  OutputWriter out(cfg.out);
  std::ostringstream csv;
  features::write_matrix_csv(csv, matrix);
  out.write("features.csv", csv.str());

  json interactions_json = json::array();
  for (const auto& [a, b] : interactions) interactions_json.push_back(json::array({a, b}));
  const json meta{{"schema", matrix.schema},
                  {"n_rows", matrix.rows.size()},
                  {"interactions", std::move(interactions_json)},
                  {"corpus_sha256", loaded.sha256}};
  out.write("features_meta.json", meta.dump(2) + "\n");
  write_metadata(cfg, out, {{cfg.corpus, loaded.sha256}});

  std::cout << "wrote " << matrix.rows.size() << " rows x " << matrix.schema.size()
            << " features\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  check_horizons({cfg.eval_options.train_horizon});
  const LoadedCorpus loaded = load_corpus(cfg);
  const auto matrix =
      features::build_matrix(loaded.parsed.calls, resolve_interactions(cfg), resolve_asl_table(cfg));

  const Eigen::MatrixXd X = matrix.dense();
  const Eigen::VectorXd y =
      matrix.target_column(cfg.eval_options.train_horizon, cfg.eval_options.train_target);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (std::isfinite(y(i))) keep.push_back(i);
  }
  if (keep.empty()) throw eval::MissingTargets(cfg.eval_options.train_horizon);
  const Eigen::MatrixXd Xk = X(keep, Eigen::all);
  const Eigen::VectorXd yk = y(keep);

  const auto split = eval::split_indices(Xk.rows(), split_policy(cfg));
  const Eigen::MatrixXd train_X = Xk(split.train, Eigen::all);
  const Eigen::VectorXd train_y = yk(split.train);
  const Eigen::MatrixXd test_X = Xk(split.test, Eigen::all);
  const Eigen::VectorXd test_y = yk(split.test);

  // Early-stopping holdout: the most recent fifth of the training span.
  const auto n_valid = std::max<Eigen::Index>(1, train_X.rows() / 5);
  const Eigen::MatrixXd fit_X = train_X.topRows(train_X.rows() - n_valid);
  const Eigen::VectorXd fit_y = train_y.head(train_y.size() - n_valid);
  const Eigen::MatrixXd valid_X = train_X.bottomRows(n_valid);
  const Eigen::VectorXd valid_y = train_y.tail(n_valid);

  gbt::GbtHyperparams hp = cfg.gbt_params;
  hp.seed = derive_seed(cfg.seed, 0xf17);
  const auto model = gbt::fit(fit_X, fit_y, matrix.schema, hp, &valid_X, &valid_y);

  const double test_r2 = eval::r2_oos(model.predict(test_X), test_y, model.base_score);

  OutputWriter out(cfg.out);
  out.write("model.json", model.to_json().dump() + "\n");
  const json metrics{{"horizon", cfg.eval_options.train_horizon},
                     {"target", cfg.eval_options.train_target == features::TargetKind::car
                                    ? "car"
                                    : "realized_vol"},
                     {"trees", model.trees.size()},
                     {"train_rows", fit_X.rows()},
                     {"test_rows", test_X.rows()},
                     {"test_r2_oos", test_r2}};
  out.write("train_metrics.json", metrics.dump(2) + "\n");
  write_metadata(cfg, out, {{cfg.corpus, loaded.sha256}});

  std::cout << metrics.dump(2) << "\n";
  return 0;
}

int cmd_ablate(const RunConfig& cfg) {
  check_horizons(cfg.eval_options.horizons);
  const LoadedCorpus loaded = load_corpus(cfg);
  const auto matrix =
      features::build_matrix(loaded.parsed.calls, resolve_interactions(cfg), resolve_asl_table(cfg));

  eval::BootstrapSettings settings;
  settings.iterations = cfg.eval_options.validate_iterations;
  settings.seed = derive_seed(cfg.seed, 0xab1a7e);
  settings.threads = cfg.threads;

  const auto table = eval::run_ablation(matrix, cfg.eval_options.horizons, cfg.gbt_params,
                                        split_policy(cfg), settings);

  OutputWriter out(cfg.out);
  out.write("ablation.txt", table.render_text());
  out.write("ablation.json", table.to_json().dump(2) + "\n");
  {
    std::ostringstream lines;
    for (const auto& cell : table.cells) {
      for (std::size_t i = 0; i < cell.r2_samples.size(); ++i) {
        lines << json{{"horizon", cell.horizon},
                      {"target", cell.kind == features::TargetKind::car ? "car" : "realized_vol"},
                      {"variant", std::string(eval::to_string(cell.variant))},
                      {"iteration", i},
                      {"r2", cell.r2_samples[i]}}
                     .dump()
              << '\n';
      }
    }
    out.write("ablate_iterations.jsonl", lines.str());
  }
  write_metadata(cfg, out, {{cfg.corpus, loaded.sha256}});

  std::cout << table.render_text();
  return 0;
}

int cmd_importance(const RunConfig& cfg) {
  check_horizons({cfg.eval_options.train_horizon});
  if (cfg.eval_options.top_k < 1) throw ConfigError("top_k must be >= 1");
  const LoadedCorpus loaded = load_corpus(cfg);
  const auto matrix =
      features::build_matrix(loaded.parsed.calls, resolve_interactions(cfg), resolve_asl_table(cfg));

  eval::BootstrapSettings settings;
  settings.iterations = cfg.eval_options.importance_iterations;
  settings.seed = derive_seed(cfg.seed, 0x1a4f);
  settings.threads = cfg.threads;

  const auto report = eval::bootstrap_importance(
      matrix, cfg.eval_options.train_horizon, cfg.eval_options.train_target, cfg.gbt_params,
      cfg.eval_options.importance_estimators, split_policy(cfg), settings);

  std::vector<std::size_t> order(report.feature_names.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return report.importance_mean(static_cast<Eigen::Index>(a)) >
           report.importance_mean(static_cast<Eigen::Index>(b));
  });

  const double uniform_share = 1.0 / static_cast<double>(report.feature_names.size());
  std::ostringstream ranked;
  char line[200];
  std::snprintf(line, sizeof(line), "%-4s %-48s %10s %10s %10s\n", "rank", "feature", "mean",
                "ci_lo", "ci_hi");
  ranked << line;
  const auto top_k = std::min<std::size_t>(order.size(),
                                           static_cast<std::size_t>(cfg.eval_options.top_k));
  for (std::size_t r = 0; r < top_k; ++r) {
    const auto j = static_cast<Eigen::Index>(order[r]);
    std::snprintf(line, sizeof(line), "%-4zu %-48s %10.5f %10.5f %10.5f\n", r + 1,
                  report.feature_names[order[r]].c_str(), report.importance_mean(j),
                  report.importance_lo(j), report.importance_hi(j));
    ranked << line;
  }
  ranked << "uniform share = " << format_double(uniform_share) << "\n";

  OutputWriter out(cfg.out);
  out.write("importance_top.txt", ranked.str());
  {
    json all = json::array();
    for (std::size_t r = 0; r < order.size(); ++r) {
      const auto j = static_cast<Eigen::Index>(order[r]);
      all.push_back({{"feature", report.feature_names[order[r]]},
                     {"mean", report.importance_mean(j)},
                     {"ci_lo", report.importance_lo(j)},
                     {"ci_hi", report.importance_hi(j)}});
    }
    const json summary{{"horizon", cfg.eval_options.train_horizon},
                       {"iterations", settings.iterations},
                       {"fixed_estimators", cfg.eval_options.importance_estimators},
                       {"uniform_share", uniform_share},
                       {"features", std::move(all)}};
    out.write("importance_summary.json", summary.dump(2) + "\n");
  }
  {
    std::ostringstream lines;
    for (int i = 0; i < settings.iterations; ++i) {
      json values = json::object();
      for (std::size_t j = 0; j < report.feature_names.size(); ++j) {
        const double v = report.importance_samples(i, static_cast<Eigen::Index>(j));
        if (v > 0.0) values[report.feature_names[j]] = v;
      }
      lines << json{{"iteration", i}, {"importance", std::move(values)}}.dump() << '\n';
    }
    out.write("importance_iterations.jsonl", lines.str());
  }
  write_metadata(cfg, out, {{cfg.corpus, loaded.sha256}});

  std::cout << ranked.str();
  return 0;
}

int cmd_concordance(const RunConfig& cfg) {
  const LoadedCorpus loaded = load_corpus(cfg);
  const auto stats = features::modality_concordance(loaded.parsed.calls);

  json roles = json::object();
  std::ostringstream text;
  for (const auto& [role, c] : stats) {
    json counts = json::array();
    for (int i = 0; i < asl::kEmotionCount; ++i) {
      json row = json::array();
      for (int j = 0; j < asl::kEmotionCount; ++j) row.push_back(c.counts(i, j));
      counts.push_back(std::move(row));
    }
    roles[std::string(ingest::role_tag(role))] = {{"total", c.total},
                                                  {"agreement", c.agreement},
                                                  {"kappa", c.kappa},
                                                  {"counts_acoustic_x_text", std::move(counts)}};
    text << ingest::role_tag(role) << ": n=" << c.total
         << " agreement=" << format_double(c.agreement) << " kappa=" << format_double(c.kappa)
         << "\n";
  }

  OutputWriter out(cfg.out);
  out.write("concordance.json", roles.dump(2) + "\n");
  out.write("concordance.txt", text.str());
  write_metadata(cfg, out, {{cfg.corpus, loaded.sha256}});

  std::cout << text.str();
  return 0;
}

int cmd_piam_demo(const RunConfig& cfg) {
  const auto& opts = cfg.piam_options;
  if (opts.seeds < 1) throw ConfigError("piam.seeds must be >= 1");
  if (opts.n_train < asl::kEmotionCount) throw ConfigError("piam.n_train too small");

  OutputWriter out(cfg.out);
  std::ostringstream pair_lines;
  std::ostringstream epoch_lines;

  int phys_wins = 0;
  double acc_base_sum = 0.0, acc_reg_sum = 0.0;
  double phys_base_sum = 0.0, phys_reg_sum = 0.0;

  for (int pair = 0; pair < opts.seeds; ++pair) {
    const auto train_set = piam::synth_dataset(
        opts.n_train, derive_seed(cfg.seed, 2 * static_cast<std::uint64_t>(pair)), opts.waveform);
    const auto holdout = piam::synth_dataset(
        opts.n_holdout, derive_seed(cfg.seed, 2 * static_cast<std::uint64_t>(pair) + 1),
        opts.waveform);

    piam::TrainHyper hyper;
    hyper.epochs = opts.epochs;
    hyper.lr = opts.lr;
    hyper.batch = opts.batch;
    hyper.momentum = opts.momentum;
    hyper.constants = cfg.constants;
    hyper.seed = derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(pair));

    hyper.lambda = 0.0;
    auto [base_model, base_report] = piam::train(train_set, opts.model, hyper);
    hyper.lambda = opts.lambda;
    auto [reg_model, reg_report] = piam::train(train_set, opts.model, hyper);

    const double base_phys = base_report.epochs.back().l_phys;
    const double reg_phys = reg_report.epochs.back().l_phys;
    const double base_acc = piam::evaluate_accuracy(base_model, holdout);
    const double reg_acc = piam::evaluate_accuracy(reg_model, holdout);

    if (reg_phys < base_phys) ++phys_wins;
    acc_base_sum += base_acc;
    acc_reg_sum += reg_acc;
    phys_base_sum += base_phys;
    phys_reg_sum += reg_phys;

    pair_lines << json{{"pair", pair},
                       {"l_phys_lambda0", base_phys},
                       {"l_phys_lambda", reg_phys},
                       {"holdout_acc_lambda0", base_acc},
                       {"holdout_acc_lambda", reg_acc}}
                      .dump()
               << '\n';
    for (const auto* report : {&base_report, &reg_report}) {
      const double lambda = report == &base_report ? 0.0 : opts.lambda;
      for (const auto& e : report->epochs) {
        epoch_lines << json{{"pair", pair},       {"lambda", lambda},
                            {"epoch", e.epoch},   {"l_task", e.l_task},
                            {"l_phys", e.l_phys}, {"l_total", e.l_total},
                            {"accuracy", e.accuracy}}
                           .dump()
                    << '\n';
      }
    }

    if (pair == 0) {
      std::ostringstream model_bytes;
      reg_model.save(model_bytes);
      out.write("model.bin", model_bytes.str());
    }
  }

  const double n = static_cast<double>(opts.seeds);
  const double acc_delta = acc_base_sum / n - acc_reg_sum / n;
  const json summary{{"pairs", opts.seeds},
                     {"lambda", opts.lambda},
                     {"phys_loss_wins", phys_wins},
                     {"mean_l_phys_lambda0", phys_base_sum / n},
                     {"mean_l_phys_lambda", phys_reg_sum / n},
                     {"mean_holdout_acc_lambda0", acc_base_sum / n},
                     {"mean_holdout_acc_lambda", acc_reg_sum / n},
                     {"accuracy_drop", acc_delta}};

  out.write("piam_pairs.jsonl", pair_lines.str());
  out.write("piam_epochs.jsonl", epoch_lines.str());
  out.write("piam_summary.json", summary.dump(2) + "\n");
  write_metadata(cfg, out, {});

  std::cout << summary.dump(2) << "\n";
  std::cout << "regularizer lowered final L_phys in " << phys_wins << "/" << opts.seeds
            << " pairs; mean holdout accuracy drop " << format_double(acc_delta) << "\n";
  return 0;
}

int cmd_piam_gradcheck(const RunConfig& cfg) {
  piam::ToyModelConfig tiny;
  tiny.frame_size = 16;
  tiny.hop = 8;
  tiny.encoder_hidden = 6;
  tiny.latent_dim = 4;
  tiny.pressure_hidden = 5;

  piam::WaveformConfig wave_cfg = cfg.piam_options.waveform;
  wave_cfg.duration = 48.0 / wave_cfg.sample_rate;  // 5 frames

  const auto model = piam::ToyModel::init(tiny, derive_seed(cfg.seed, 7));
  const auto wave =
      piam::synth_waveform(asl::Emotion::fear, derive_seed(cfg.seed, 8), wave_cfg);
  const double lambda = cfg.piam_options.lambda > 0.0 ? cfg.piam_options.lambda : 0.05;
  const double err = piam::grad_check(model, wave, lambda, cfg.constants, 1e-5);

  std::cout << "max relative gradient error: " << err << " (tolerance 1e-5)\n";
  return err < 1e-5 ? 0 : 1;
}

}  // namespace callrisk::cli
