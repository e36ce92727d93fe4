#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "callrisk/piam.hpp"

using namespace callrisk;
using piam::ToyModel;
using piam::ToyModelConfig;
using piam::WaveformConfig;

namespace {

ToyModelConfig tiny_config() {
  ToyModelConfig cfg;
  cfg.frame_size = 16;
  cfg.hop = 8;
  cfg.encoder_hidden = 6;
  cfg.latent_dim = 4;
  cfg.pressure_hidden = 5;
  return cfg;
}

WaveformConfig tiny_wave_config() {
  WaveformConfig cfg;
  cfg.duration = 48.0 / cfg.sample_rate;  // 5 frames at 16/8
  return cfg;
}

std::string model_bytes(const ToyModel& model) {
  std::ostringstream out;
  model.save(out);
  return out.str();
}

}  // namespace

TEST_CASE("synth_waveform") {
  WaveformConfig cfg;

  SUBCASE("deterministic per (emotion, seed, config)") {
    const auto a = piam::synth_waveform(asl::Emotion::anger, 5, cfg);
    const auto b = piam::synth_waveform(asl::Emotion::anger, 5, cfg);
    CHECK(a.samples == b.samples);
    const auto c = piam::synth_waveform(asl::Emotion::anger, 6, cfg);
    CHECK(a.samples != c.samples);
  }
  SUBCASE("low drive never clips at clip_level 1") {
    cfg.clip_level = 1.0;
    cfg.amplitude = 0.3;
    for (asl::Emotion e : asl::kAllEmotions) {
      const auto wave = piam::synth_waveform(e, 1, cfg);
      double peak = 0.0;
      for (double s : wave.samples) peak = std::max(peak, std::abs(s));
      CHECK(peak < 1.0);
    }
  }
  SUBCASE("hard drive against a low ceiling clips more than a fifth of samples") {
    cfg.clip_level = 0.3;
    cfg.amplitude = 0.9;
    for (asl::Emotion e : asl::kAllEmotions) {
      const auto wave = piam::synth_waveform(e, 2, cfg);
      int clipped = 0;
      for (double s : wave.samples) {
        CHECK(std::abs(s) <= cfg.clip_level);
        if (std::abs(s) == cfg.clip_level) ++clipped;
      }
      CHECK(static_cast<double>(clipped) / wave.samples.size() > 0.2);
    }
  }
}

TEST_CASE("forward contract") {
  const auto model = ToyModel::init(tiny_config(), 3);
  const auto wave = piam::synth_waveform(asl::Emotion::fear, 4, tiny_wave_config());
  const auto fwd = piam::forward(model, wave);

  CHECK(fwd.trajectory.steps() == 5);
  CHECK(fwd.trajectory.dim() == 4);
  CHECK(fwd.attention.size() == 5);
  CHECK(fwd.attention.minCoeff() >= 0.0);
  CHECK(fwd.attention.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fwd.probabilities.size() == 7);
  CHECK(fwd.probabilities.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fwd.pressure.size() == 5);

  SUBCASE("constant scores give uniform attention") {
    auto flat = model;
    flat.attn.setZero();
    const auto uniform = piam::forward(flat, wave);
    for (Eigen::Index t = 0; t < uniform.attention.size(); ++t) {
      CHECK(uniform.attention(t) == doctest::Approx(0.2).epsilon(1e-12));
    }
  }
  SUBCASE("too few samples") {
    auto short_wave = wave;
    short_wave.samples.resize(20);
    CHECK_THROWS_AS(piam::forward(model, short_wave), piam::TooFewFrames);
  }
}

TEST_CASE("classify tie-breaks to the lower label index") {
  auto model = ToyModel::init(tiny_config(), 3);
  const auto wave = piam::synth_waveform(asl::Emotion::disgust, 4, tiny_wave_config());

  model.head_w.setZero();
  model.head_b.setZero();
  CHECK(piam::classify(model, wave) == asl::Emotion::happiness);  // index 0

  model.head_b(static_cast<int>(asl::Emotion::fear)) = 5.0;
  CHECK(piam::classify(model, wave) == asl::Emotion::fear);
}

TEST_CASE("train epochs=0 returns the seeded initialization untouched") {
  const auto dataset = piam::synth_dataset(14, 9, tiny_wave_config());
  piam::TrainHyper hyper;
  hyper.epochs = 0;
  hyper.seed = 123;
  const auto [model, report] = piam::train(dataset, tiny_config(), hyper);
  CHECK(report.epochs.empty());
  CHECK(model_bytes(model) == model_bytes(ToyModel::init(tiny_config(), derive_seed(123, 1))));
}

TEST_CASE("train rejects single-class datasets") {
  WaveformConfig cfg = tiny_wave_config();
  std::vector<piam::ToyWaveform> dataset;
  for (int i = 0; i < 6; ++i) {
    dataset.push_back(piam::synth_waveform(asl::Emotion::fear, static_cast<std::uint64_t>(i), cfg));
  }
  CHECK_THROWS_AS(piam::train(dataset, tiny_config(), piam::TrainHyper{}),
                  piam::DegenerateDataset);
}

TEST_CASE("training is deterministic per seed") {
  const auto dataset = piam::synth_dataset(21, 5, tiny_wave_config());
  piam::TrainHyper hyper;
  hyper.epochs = 2;
  hyper.seed = 7;
  const auto [m1, r1] = piam::train(dataset, tiny_config(), hyper);
  const auto [m2, r2] = piam::train(dataset, tiny_config(), hyper);
  CHECK(model_bytes(m1) == model_bytes(m2));
  REQUIRE(r1.epochs.size() == r2.epochs.size());
  for (std::size_t i = 0; i < r1.epochs.size(); ++i) {
    CHECK(r1.epochs[i].l_total == r2.epochs[i].l_total);
  }
}

TEST_CASE("end-to-end gradient passes the finite-difference check") {
  const auto model = ToyModel::init(tiny_config(), 11);
  const auto wave = piam::synth_waveform(asl::Emotion::sadness, 12, tiny_wave_config());
  const double err = piam::grad_check(model, wave, 0.05, physics::AcousticConstants{}, 1e-5);
  CHECK(err < 1e-5);

  // Gradient of the lambda-weighted branch scales linearly with lambda.
  const double err0 = piam::grad_check(model, wave, 0.0, physics::AcousticConstants{}, 1e-5);
  CHECK(err0 < 1e-5);
}

TEST_CASE("model serialization round-trips bit-exactly") {
  const auto model = ToyModel::init(tiny_config(), 19);
  std::stringstream buffer;
  model.save(buffer);
  const auto loaded = ToyModel::load(buffer);
  CHECK(model_bytes(loaded) == model_bytes(model));

  std::stringstream garbage("nope");
  CHECK_THROWS_AS(ToyModel::load(garbage), Error);
}

TEST_CASE("classification is deterministic given model and wave") {
  const auto dataset = piam::synth_dataset(21, 31, tiny_wave_config());
  piam::TrainHyper hyper;
  hyper.epochs = 3;
  hyper.seed = 2;
  const auto [model, report] = piam::train(dataset, tiny_config(), hyper);
  for (const auto& wave : dataset) {
    CHECK(piam::classify(model, wave) == piam::classify(model, wave));
  }
}

TEST_CASE("an exploding run raises the divergence flag") {
  const auto dataset = piam::synth_dataset(21, 7, tiny_wave_config());
  piam::TrainHyper hyper;
  hyper.epochs = 5;
  hyper.lr = 3.0;  // far past stable
  hyper.seed = 3;
  const auto [model, report] = piam::train(dataset, tiny_config(), hyper);
  CHECK(report.diverged);

  hyper.lr = 0.05;
  const auto [model2, report2] = piam::train(dataset, tiny_config(), hyper);
  CHECK(!report2.diverged);
}

TEST_CASE("train report flags per-epoch stats") {
  const auto dataset = piam::synth_dataset(28, 41, tiny_wave_config());
  piam::TrainHyper hyper;
  hyper.epochs = 4;
  hyper.lambda = 0.01;
  hyper.seed = 3;
  const auto [model, report] = piam::train(dataset, tiny_config(), hyper);
  REQUIRE(report.epochs.size() == 4);
  for (const auto& e : report.epochs) {
    CHECK(e.l_task >= 0.0);
    CHECK(e.l_phys >= 0.0);
    CHECK(e.l_total == doctest::Approx(e.l_task + 0.01 * e.l_phys).epsilon(1e-12));
    CHECK(e.accuracy >= 0.0);
    CHECK(e.accuracy <= 1.0);
  }
  std::ostringstream out;
  piam::write_train_report(out, report);
  const std::string text = out.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}
