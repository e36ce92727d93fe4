#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "callrisk/features.hpp"
#include "callrisk/rng.hpp"
#include "callrisk/synthgen.hpp"
#include "oracles.hpp"

using namespace callrisk;
using features::AslDim;
using features::Modality;
using features::NameSection;
using features::Stat;
using ingest::CallRecord;
using ingest::Role;
using ingest::Section;

namespace {

ingest::Utterance utt(Role role, Section section, int order, asl::Emotion text,
                      std::optional<asl::Emotion> acoustic = std::nullopt) {
  ingest::Utterance u;
  u.role = role;
  u.section = section;
  u.order_index = order;
  u.text_emotion = text;
  u.acoustic_emotion = acoustic;
  return u;
}

CallRecord full_call() {
  auto spec = synthgen::PlantSpec::defaults();
  spec.n_calls = 1;
  spec.p_cfo = 1.0;
  spec.p_cxo = 1.0;
  return synthgen::generate_corpus(spec, 21).calls[0];
}

}  // namespace

TEST_CASE("moments on frozen examples") {
  SUBCASE("constant series uses the zero-variance convention") {
    const double xs[] = {0.1, 0.1, 0.1};
    const auto m = features::moments(xs);
    CHECK(m.mean == 0.1);
    CHECK(m.std_dev == 0.0);
    CHECK(m.skewness == 0.0);
    CHECK(m.kurtosis_excess == 0.0);
    CHECK(m.zero_variance);
  }
  SUBCASE("1..4") {
    const double xs[] = {1, 2, 3, 4};
    const auto m = features::moments(xs);
    CHECK(m.mean == doctest::Approx(2.5).epsilon(1e-14));
    CHECK(m.std_dev == doctest::Approx(1.118033988749895).epsilon(1e-12));
    CHECK(m.skewness == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(m.kurtosis_excess == doctest::Approx(-1.36).epsilon(1e-12));
  }
  SUBCASE("single value") {
    const double xs[] = {0.7};
    const auto m = features::moments(xs);
    CHECK(m.mean == 0.7);
    CHECK(m.std_dev == 0.0);
    CHECK(m.skewness == 0.0);
    CHECK(m.kurtosis_excess == 0.0);
  }
  SUBCASE("empty series throws") {
    CHECK_THROWS_AS(features::moments({}), features::EmptySeries);
  }
}

TEST_CASE("moments track the power-sum oracle") {
  Rng rng(20250811);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(200));
    std::vector<double> xs(static_cast<std::size_t>(n));
    for (auto& x : xs) {
      x = trial % 2 == 0 ? rng.uniform(-1.0, 1.0) : rng.normal(0.2, 0.6);
    }
    const auto m = features::moments(xs);
    const auto o = oracles::moments_power_sums(xs);
    CHECK(oracles::rel_err(m.mean, o.mean) < 1e-12);
    CHECK(oracles::rel_err(m.std_dev, o.std_dev) < 1e-12);
    CHECK(oracles::rel_err(m.skewness, o.skewness) < 1e-12);
    CHECK(oracles::rel_err(m.kurtosis_excess, o.kurtosis_excess) < 1e-12);
  }
}

TEST_CASE("feature_name follows the grammar") {
  CHECK(features::feature_name(Role::cfo, NameSection::delta, Modality::text,
                               AslDim::stability, Stat::mean) ==
        "CFO_delta_text_stability_mean");
  CHECK(features::feature_name(Role::ceo, NameSection::qa, Modality::text, AslDim::arousal,
                               Stat::std_dev) == "CEO_q&a_text_arousal_std");
  CHECK(features::feature_name(Role::cfo, NameSection::qa, Modality::acoustic,
                               AslDim::stability, Stat::kurtosis) ==
        "CFO_q&a_acoustic_stability_kurtosis");
  CHECK_THROWS_AS(features::feature_name(Role::ceo, NameSection::delta, Modality::text,
                                         AslDim::tension, Stat::skewness),
                  features::InvalidCombination);
}

TEST_CASE("asl_series filters and orders") {
  CallRecord call;
  call.call_id = "c";
  call.utterances.push_back(utt(Role::ceo, Section::qa, 0, asl::Emotion::neutral));
  call.utterances.push_back(utt(Role::cfo, Section::presentation, 1, asl::Emotion::fear));

  CHECK(features::asl_series(call, Role::cfo, Section::qa, Modality::text).empty());

  const auto fear_series =
      features::asl_series(call, Role::cfo, Section::presentation, Modality::text);
  REQUIRE(fear_series.size() == 1);
  CHECK(fear_series[0] == asl::AslVector{1.0, -1.0, 0.8});

  call.utterances.push_back(utt(Role::ceo, Section::qa, 2, asl::Emotion::neutral));
  const auto two = features::asl_series(call, Role::ceo, Section::qa, Modality::text);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == two[1]);

  // No acoustic labels anywhere.
  CHECK(features::asl_series(call, Role::ceo, Section::qa, Modality::acoustic).empty());
}

TEST_CASE("delta features subtract presentation from q&a") {
  CallRecord call;
  call.call_id = "c";
  call.hist_vol_30d = 0.2;
  // Presentation text stability mean 0.5 (neutral); Q&A mean 0.2 (surprise).
  call.utterances.push_back(utt(Role::cfo, Section::presentation, 0, asl::Emotion::neutral));
  call.utterances.push_back(utt(Role::cfo, Section::presentation, 1, asl::Emotion::neutral));
  call.utterances.push_back(utt(Role::cfo, Section::qa, 2, asl::Emotion::surprise));

  const auto row = features::build_features(call);
  const auto delta = row.get("CFO_delta_text_stability_mean");
  REQUIRE(delta.has_value());
  CHECK(*delta == doctest::Approx(-0.3).epsilon(1e-12));
}

TEST_CASE("absent role leaves all of its features missing") {
  CallRecord call = full_call();
  std::erase_if(call.utterances, [](const auto& u) { return u.role == Role::cxo; });
  const auto row = features::build_features(call);
  int cxo_features = 0;
  for (const auto& [name, value] : row.values) {
    (void)value;
    if (name.starts_with("CXO_")) ++cxo_features;
  }
  CHECK(cxo_features == 0);
  // 48 base + 12 delta names for the role exist in the schema nonetheless.
  const auto schema = features::feature_schema(features::default_interactions());
  const auto cxo_in_schema = std::count_if(schema.begin(), schema.end(), [](const auto& n) {
    return n.starts_with("CXO_");
  });
  CHECK(cxo_in_schema == 60);
}

TEST_CASE("full call with default interactions fills the whole schema") {
  const auto schema = features::feature_schema(features::default_interactions());
  CHECK(schema.size() == 144 + 36 + 6 + 1);

  const auto row = features::build_features(full_call());
  CHECK(row.values.size() == schema.size());
  for (const auto& name : schema) CHECK(row.get(name).has_value());
}

TEST_CASE("build_interactions") {
  features::FeatureRow row;
  row.values["a"] = 2.0;
  row.values["b"] = 3.0;
  const std::vector<std::string> schema = {"a", "b", "c"};

  SUBCASE("product of two present operands") {
    const auto adds = features::build_interactions(row, {{"a", "b"}}, schema);
    CHECK(adds.at("inter__a__b") == 6.0);
  }
  SUBCASE("missing operand yields a missing interaction") {
    const auto adds = features::build_interactions(row, {{"a", "c"}}, schema);
    CHECK(adds.empty());
  }
  SUBCASE("empty spec adds nothing") {
    CHECK(features::build_interactions(row, {}, schema).empty());
  }
  SUBCASE("operands must belong to the schema") {
    CHECK_THROWS_AS(features::build_interactions(row, {{"a", "zzz"}}, schema),
                    features::UnknownFeatureName);
  }
}

TEST_CASE("features are invariant to utterance storage order") {
  CallRecord call = full_call();
  const auto baseline = features::build_features(call);

  Rng rng(5);
  rng.shuffle(call.utterances);
  const auto shuffled = features::build_features(call);
  CHECK(shuffled.values == baseline.values);
}

TEST_CASE("asl-derived features stay in bounded ranges") {
  auto spec = synthgen::PlantSpec::defaults();
  spec.n_calls = 40;
  const auto corpus = synthgen::generate_corpus(spec, 99);
  for (const auto& call : corpus.calls) {
    const auto row = features::build_features(call);
    for (const auto& [name, value] : row.values) {
      if (name.ends_with("_mean") && !name.starts_with("inter__") &&
          name.find("_delta_") == std::string::npos) {
        CHECK(value >= -1.0);
        CHECK(value <= 1.0);
      }
      if (name.ends_with("_std") && name.find("_delta_") == std::string::npos) {
        CHECK(value >= 0.0);
        CHECK(value <= 1.0);
      }
      if (name.find("_delta_") != std::string::npos) {
        CHECK(value >= -2.0);
        CHECK(value <= 2.0);
      }
    }
  }
}

TEST_CASE("csv export shape and missing encoding") {
  CallRecord call = full_call();
  std::erase_if(call.utterances, [](const auto& u) { return u.role == Role::cfo; });
  const std::vector<CallRecord> calls = {call};
  const auto matrix = features::build_matrix(calls);

  std::ostringstream out;
  features::write_matrix_csv(out, matrix);
  std::istringstream lines(out.str());
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);

  const auto count_fields = [](const std::string& s) {
    return 1 + std::count(s.begin(), s.end(), ',');
  };
  CHECK(count_fields(header) == 1 + 187 + 6);
  CHECK(count_fields(row) == 1 + 187 + 6);
  CHECK(row.find(",,") != std::string::npos);  // CFO cells are empty fields
}

TEST_CASE("modality concordance") {
  SUBCASE("perfect agreement") {
    CallRecord call;
    call.call_id = "c";
    for (int i = 0; i < 5; ++i) {
      call.utterances.push_back(
          utt(Role::ceo, Section::qa, i, asl::Emotion::fear, asl::Emotion::fear));
    }
    const std::vector<CallRecord> calls = {call};
    const auto stats = features::modality_concordance(calls);
    CHECK(stats.at(Role::ceo).agreement == 1.0);
    CHECK(stats.at(Role::ceo).kappa == 1.0);
  }
  SUBCASE("no dual-labeled utterances") {
    CallRecord call;
    call.call_id = "c";
    call.utterances.push_back(utt(Role::ceo, Section::qa, 0, asl::Emotion::fear));
    const std::vector<CallRecord> calls = {call};
    CHECK_THROWS_AS(features::modality_concordance(calls), features::NoDualLabeledUtterances);
  }
  SUBCASE("uniform-random acoustic against a fixed text label") {
    Rng rng(17);
    CallRecord call;
    call.call_id = "c";
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      call.utterances.push_back(utt(Role::ceo, Section::qa, i, asl::Emotion::neutral,
                                    static_cast<asl::Emotion>(rng.below(7))));
    }
    const std::vector<CallRecord> calls = {call};
    const auto stats = features::modality_concordance(calls);
    CHECK(stats.at(Role::ceo).agreement == doctest::Approx(1.0 / 7.0).epsilon(0.15));
    CHECK(std::abs(stats.at(Role::ceo).kappa) < 0.05);
  }
}
