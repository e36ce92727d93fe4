#include "callrisk/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "callrisk/rng.hpp"

namespace callrisk::synthgen {

using ingest::CallRecord;
using ingest::Role;
using ingest::Section;
using ingest::Utterance;

PlantSpec PlantSpec::defaults() {
  PlantSpec spec;
  spec.coefficients = {
      {"CFO_delta_text_stability_mean", -0.60},
      {"CEO_q&a_text_arousal_std", 0.78},
      {"CFO_q&a_acoustic_stability_kurtosis", 0.054},
  };
  spec.hist_coeff = 1.10;
  spec.base_vol = 0.02;
  spec.noise_sd = 0.28;
  spec.car_noise_sd = 0.05;
  return spec;
}

void PlantSpec::validate() const {
  if (n_calls < 0) throw InvalidSpec("n_calls must be nonnegative");
  if (noise_sd < 0.0 || car_noise_sd < 0.0) throw InvalidSpec("noise sds must be nonnegative");
  if (p_cfo < 0.0 || p_cfo > 1.0 || p_cxo < 0.0 || p_cxo > 1.0) {
    throw InvalidSpec("role presence probabilities must lie in [0, 1]");
  }
  if (utterances_min < 1 || utterances_max < utterances_min) {
    throw InvalidSpec("utterances_per_cell range must satisfy 1 <= min <= max");
  }
  const auto schema = features::feature_schema(features::default_interactions());
  for (const auto& [name, coeff] : coefficients) {
    (void)coeff;
    if (std::find(schema.begin(), schema.end(), name) == schema.end()) {
      throw InvalidSpec("planted feature does not follow the feature grammar: " + name);
    }
  }
}

double realized_vol(std::span<const double> daily_log_returns) {
  if (daily_log_returns.size() < 2) throw TooFewReturns();
  const auto n = static_cast<double>(daily_log_returns.size());
  double mean = 0.0;
  for (double r : daily_log_returns) mean += r;
  mean /= n;
  double m2 = 0.0;
  for (double r : daily_log_returns) m2 += (r - mean) * (r - mean);
  m2 /= n;
  return std::sqrt(m2) * std::sqrt(252.0);
}

namespace {

using Weights = std::array<double, asl::kEmotionCount>;

// Emotion weights in enum order:
// happiness, surprise, neutral, sadness, fear, anger, disgust.

// Text is skewed toward positive labels; scripted remarks especially so.
constexpr Weights kTextCalm = {0.35, 0.08, 0.45, 0.04, 0.02, 0.03, 0.03};
constexpr Weights kTextStressed = {0.02, 0.03, 0.15, 0.20, 0.25, 0.20, 0.15};

// CEO-specific pair: calm concentrates arousal near zero, the volatile mix
// spreads it wide.
constexpr Weights kCeoCalm = {0.20, 0.04, 0.70, 0.03, 0.01, 0.01, 0.01};
constexpr Weights kCeoVolatile = {0.15, 0.25, 0.02, 0.25, 0.20, 0.10, 0.03};

// Acoustic labels are spread out rather than positive-heavy.
constexpr Weights kAcousticBase = {0.12, 0.12, 0.30, 0.12, 0.10, 0.12, 0.12};
// Fear-heavy mix that fattens the stability tails in the CFO's Q&A audio.
constexpr Weights kAcousticExtreme = {0.02, 0.03, 0.40, 0.10, 0.35, 0.05, 0.05};

std::vector<double> blend(const Weights& a, const Weights& b, double w) {
  std::vector<double> out(asl::kEmotionCount);
  for (int i = 0; i < asl::kEmotionCount; ++i) {
    out[i] = (1.0 - w) * a[i] + w * b[i];
  }
  return out;
}

asl::Emotion draw_emotion(Rng& rng, const std::vector<double>& weights) {
  return static_cast<asl::Emotion>(rng.categorical(weights));
}

struct CallDrivers {
  bool has_cfo = true;
  bool has_cxo = true;
  double text_pres_level = 0.0;  // per-call scripted-tone baseline, all roles
  double cfo_stress = 0.0;       // extra Q&A shift for the CFO's text labels
  double ceo_arousal = 0.0;      // widens CEO text Q&A arousal
  double cfo_acoustic = 0.0;     // fattens CFO acoustic Q&A stability tails
  double text_tilt = 0.0;        // mild decoy variation for other text cells
  double acoustic_tilt = 0.0;    // mild decoy variation for other acoustic cells
};

// The presentation baseline varies call to call, so a Q&A-only statistic
// confounds the scripted tone with the Q&A shift; only the delta isolates
// the shift itself.
std::vector<double> text_weights(Role role, Section section, const CallDrivers& d) {
  const double pres = 0.45 * d.text_pres_level;
  if (section == Section::presentation) return blend(kTextCalm, kTextStressed, pres);
  switch (role) {
    case Role::cfo: return blend(kTextCalm, kTextStressed, pres + (1.0 - pres) * 0.8 * d.cfo_stress);
    case Role::ceo: return blend(kCeoCalm, kCeoVolatile, d.ceo_arousal);
    case Role::cxo:
      return blend(kTextCalm, kTextStressed, pres + (1.0 - pres) * (0.10 + 0.20 * d.text_tilt));
  }
  return blend(kTextCalm, kTextStressed, pres);
}

std::vector<double> acoustic_weights(Role role, Section section, const CallDrivers& d) {
  if (section == Section::presentation) return blend(kAcousticBase, kAcousticExtreme, 0.0);
  if (role == Role::cfo) return blend(kAcousticBase, kAcousticExtreme, d.cfo_acoustic);
  return blend(kAcousticBase, kAcousticExtreme, 0.10 + 0.15 * d.acoustic_tilt);
}

}  // namespace

GeneratedCorpus generate_corpus(const PlantSpec& spec, std::uint64_t seed) {
  spec.validate();

  GeneratedCorpus out;
  out.spec = spec;
  out.calls.reserve(static_cast<std::size_t>(spec.n_calls));
  out.truth.reserve(static_cast<std::size_t>(spec.n_calls));

  const int n_firms = std::max(1, spec.n_calls / 8);

  for (int i = 0; i < spec.n_calls; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));

    CallRecord call;
    {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "call_%06d", i);
      call.call_id = buf;
      std::snprintf(buf, sizeof(buf), "firm_%04d", i % n_firms);
      call.firm_id = buf;
    }

    CallDrivers d;
    d.has_cfo = rng.unit() < spec.p_cfo;
    d.has_cxo = rng.unit() < spec.p_cxo;
    d.text_pres_level = rng.unit();
    d.cfo_stress = rng.unit();
    d.ceo_arousal = rng.unit();
    d.cfo_acoustic = rng.unit();
    d.text_tilt = rng.unit();
    d.acoustic_tilt = rng.unit();

    call.hist_vol_30d = std::exp(rng.normal(std::log(0.25), 0.35));

    int order = 0;
    for (Section section : {Section::presentation, Section::qa}) {
      for (Role role : ingest::kAllRoles) {
        if (role == Role::cfo && !d.has_cfo) continue;
        if (role == Role::cxo && !d.has_cxo) continue;
        const int count = rng.uniform_int(spec.utterances_min, spec.utterances_max);
        const auto text_w = text_weights(role, section, d);
        const auto acoustic_w = acoustic_weights(role, section, d);
        for (int k = 0; k < count; ++k) {
          Utterance u;
          u.role = role;
          u.section = section;
          u.order_index = order++;
          u.text_emotion = draw_emotion(rng, text_w);
          u.acoustic_emotion = draw_emotion(rng, acoustic_w);
          call.utterances.push_back(std::move(u));
        }
      }
    }

    // Planted target: coefficients apply to the realized feature values, so
    // the relationship is exact up to the injected noise.
    const features::FeatureRow row = features::build_features(call);
    CallTruth truth;
    truth.call_id = call.call_id;
    double signal = spec.base_vol + spec.hist_coeff * call.hist_vol_30d;
    for (const auto& [name, coeff] : spec.coefficients) {
      const auto value = row.get(name);
      truth.features[name] = value.value_or(0.0);
      if (value) signal += coeff * *value;
    }
    truth.signal = signal;

    const double eps30 = rng.normal(0.0, spec.noise_sd);
    const double eps7 = rng.normal(0.0, 2.0 * spec.noise_sd);
    const double eps1 = rng.normal(0.0, 3.5 * spec.noise_sd);
    call.targets[30] = {rng.normal(0.0, spec.car_noise_sd), std::max(0.0, signal + eps30)};
    call.targets[7] = {rng.normal(0.0, spec.car_noise_sd), std::max(0.0, 0.9 * signal + eps7)};
    call.targets[1] = {rng.normal(0.0, spec.car_noise_sd), std::max(0.0, 0.8 * signal + eps1)};

    out.truth.push_back(std::move(truth));
    out.calls.push_back(std::move(call));
  }
  return out;
}

nlohmann::json truth_json(const GeneratedCorpus& corpus) {
  nlohmann::json coefficients = nlohmann::json::object();
  for (const auto& [name, coeff] : corpus.spec.coefficients) coefficients[name] = coeff;

  nlohmann::json calls = nlohmann::json::array();
  for (const CallTruth& t : corpus.truth) {
    nlohmann::json features = nlohmann::json::object();
    for (const auto& [name, value] : t.features) features[name] = value;
    calls.push_back({{"call_id", t.call_id},
                     {"features", std::move(features)},
                     {"signal", t.signal}});
  }
  return nlohmann::json{{"coefficients", std::move(coefficients)},
                        {"hist_coeff", corpus.spec.hist_coeff},
                        {"base_vol", corpus.spec.base_vol},
                        {"noise_sd", corpus.spec.noise_sd},
                        {"car_noise_sd", corpus.spec.car_noise_sd},
                        {"calls", std::move(calls)}};
}

}  // namespace callrisk::synthgen
