#include "callrisk/piam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <ostream>
#include <set>

#include <json.hpp>

#include "callrisk/binio.hpp"
#include "callrisk/rng.hpp"

namespace callrisk::piam {

namespace {

constexpr std::uint32_t kModelMagic = 0x4d545243;  // "CRTM" little-endian
constexpr std::uint32_t kModelVersion = 1;

// Per-emotion tone parameters; index = enum value.
struct ToneParams {
  double fundamental;  // Hz
  double jitter_sd;    // phase random-walk step
  double amp_scale;
};

ToneParams tone_params(asl::Emotion e) {
  const int i = static_cast<int>(e);
  return {200.0 + 50.0 * i, 0.001 + 0.004 * i, 0.40 + 0.09 * i};
}

}  // namespace

ToyWaveform synth_waveform(asl::Emotion emotion, std::uint64_t seed,
                           const WaveformConfig& config) {
  if (!(config.clip_level > 0.0 && config.clip_level <= 1.0)) {
    throw Error("clip_level must lie in (0, 1]");
  }
  const auto n = static_cast<std::size_t>(config.duration * config.sample_rate);
  const ToneParams tone = tone_params(emotion);
  const double amp = config.amplitude * tone.amp_scale;
  const double step = 2.0 * std::numbers::pi * tone.fundamental / config.sample_rate;

  Rng rng(seed);
  ToyWaveform wave;
  wave.sample_rate = config.sample_rate;
  wave.true_emotion = emotion;
  wave.clip_level = config.clip_level;
  wave.samples.reserve(n);

  double phase = rng.unit() * 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    phase += step + rng.normal(0.0, tone.jitter_sd);
    const double raw = amp * std::sin(phase) + rng.normal(0.0, config.noise_sd);
    wave.samples.push_back(std::clamp(raw, -config.clip_level, config.clip_level));
  }
  return wave;
}

std::vector<ToyWaveform> synth_dataset(int n, std::uint64_t seed,
                                       const WaveformConfig& config) {
  std::vector<ToyWaveform> dataset;
  dataset.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto emotion = static_cast<asl::Emotion>(i % asl::kEmotionCount);
    dataset.push_back(synth_waveform(emotion, derive_seed(seed, static_cast<std::uint64_t>(i)),
                                     config));
  }
  return dataset;
}

ToyModel ToyModel::init(const ToyModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  auto fill = [&](Eigen::Ref<Eigen::MatrixXd> m, double scale) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal(0.0, scale);
    }
  };

  ToyModel model;
  model.cfg = cfg;
  model.enc_w1.resize(cfg.encoder_hidden, cfg.frame_size);
  fill(model.enc_w1, 1.0 / std::sqrt(static_cast<double>(cfg.frame_size)));
  model.enc_b1 = Eigen::VectorXd::Zero(cfg.encoder_hidden);
  model.enc_w2.resize(cfg.latent_dim, cfg.encoder_hidden);
  fill(model.enc_w2, 1.0 / std::sqrt(static_cast<double>(cfg.encoder_hidden)));
  model.enc_b2 = Eigen::VectorXd::Zero(cfg.latent_dim);
  model.attn.resize(cfg.latent_dim);
  for (Eigen::Index i = 0; i < model.attn.size(); ++i) model.attn(i) = rng.normal(0.0, 0.5);
  model.head_w.resize(asl::kEmotionCount, cfg.latent_dim);
  fill(model.head_w, 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim)));
  model.head_b = Eigen::VectorXd::Zero(asl::kEmotionCount);
  model.pressure = physics::PressureOperator::random(cfg.latent_dim, cfg.pressure_hidden, rng);
  return model;
}

namespace {

Eigen::MatrixXd frame_signal(const ToyWaveform& wave, const ToyModelConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(wave.samples.size());
  const Eigen::Index frames =
      n >= cfg.frame_size ? (n - cfg.frame_size) / cfg.hop + 1 : 0;
  if (frames < 3) throw TooFewFrames(frames);
  Eigen::MatrixXd out(frames, cfg.frame_size);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index j = 0; j < cfg.frame_size; ++j) {
      out(t, j) = wave.samples[static_cast<std::size_t>(t * cfg.hop + j)];
    }
  }
  return out;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& v) {
  const Eigen::ArrayXd shifted = v.array() - v.maxCoeff();
  const Eigen::ArrayXd e = shifted.exp();
  return (e / e.sum()).matrix();
}

}  // namespace

ForwardResult forward(const ToyModel& model, const ToyWaveform& wave) {
  ForwardResult r;
  r.frames = frame_signal(wave, model.cfg);

  r.enc_z1 = ((r.frames * model.enc_w1.transpose()).rowwise() + model.enc_b1.transpose())
                 .array()
                 .tanh();
  r.trajectory.h =
      ((r.enc_z1 * model.enc_w2.transpose()).rowwise() + model.enc_b2.transpose())
          .array()
          .tanh();
  r.trajectory.dt = 1.0;  // normalized frame time

  r.attention = softmax(r.trajectory.h * model.attn);
  r.pooled = r.trajectory.h.transpose() * r.attention;
  r.logits = model.head_w * r.pooled + model.head_b;
  r.probabilities = softmax(r.logits);
  r.pressure = model.pressure.apply(r.trajectory.h);
  return r;
}

asl::Emotion classify(const ToyModel& model, const ToyWaveform& wave) {
  const ForwardResult r = forward(model, wave);
  int best = 0;
  for (int i = 1; i < asl::kEmotionCount; ++i) {
    if (r.probabilities(i) > r.probabilities(best)) best = i;
  }
  return static_cast<asl::Emotion>(best);
}

namespace {

struct ModelGrads {
  Eigen::MatrixXd enc_w1, enc_w2, head_w, press_w1;
  Eigen::VectorXd enc_b1, enc_b2, attn, head_b, press_b1, press_w2;
  double press_b2 = 0.0;

  explicit ModelGrads(const ToyModel& m) { resize_like(m); }

  void resize_like(const ToyModel& m) {
    enc_w1.setZero(m.enc_w1.rows(), m.enc_w1.cols());
    enc_b1.setZero(m.enc_b1.size());
    enc_w2.setZero(m.enc_w2.rows(), m.enc_w2.cols());
    enc_b2.setZero(m.enc_b2.size());
    attn.setZero(m.attn.size());
    head_w.setZero(m.head_w.rows(), m.head_w.cols());
    head_b.setZero(m.head_b.size());
    press_w1.setZero(m.pressure.w1.rows(), m.pressure.w1.cols());
    press_b1.setZero(m.pressure.b1.size());
    press_w2.setZero(m.pressure.w2.size());
    press_b2 = 0.0;
  }

  void setZero() {
    enc_w1.setZero(); enc_b1.setZero(); enc_w2.setZero(); enc_b2.setZero();
    attn.setZero(); head_w.setZero(); head_b.setZero();
    press_w1.setZero(); press_b1.setZero(); press_w2.setZero();
    press_b2 = 0.0;
  }

  void scale(double s) {
    enc_w1 *= s; enc_b1 *= s; enc_w2 *= s; enc_b2 *= s;
    attn *= s; head_w *= s; head_b *= s;
    press_w1 *= s; press_b1 *= s; press_w2 *= s;
    press_b2 *= s;
  }
};

struct ExampleLosses {
  double task = 0.0;
  double phys = 0.0;
};

// Accumulates d(L_task + lambda L_phys)/d(theta) for one example into `grads`.
ExampleLosses backward(const ToyModel& model, const ForwardResult& fwd, asl::Emotion label,
                       double lambda, const physics::AcousticConstants& constants,
                       ModelGrads& grads) {
  const Eigen::MatrixXd& h = fwd.trajectory.h;
  const int y = static_cast<int>(label);

  ExampleLosses losses;
  losses.task = -std::log(std::max(fwd.probabilities(y), 1e-300));

  // Head.
  Eigen::VectorXd dlogits = fwd.probabilities;
  dlogits(y) -= 1.0;
  grads.head_w += dlogits * fwd.pooled.transpose();
  grads.head_b += dlogits;
  const Eigen::VectorXd dpooled = model.head_w.transpose() * dlogits;

  // Attention pooling: v = sum_t alpha_t h_t.
  const Eigen::VectorXd dalpha = h * dpooled;                       // T
  Eigen::MatrixXd dh = fwd.attention * dpooled.transpose();         // T x D
  const double mix = fwd.attention.dot(dalpha);
  const Eigen::VectorXd dscore =
      (fwd.attention.array() * (dalpha.array() - mix)).matrix();    // T
  grads.attn += h.transpose() * dscore;
  dh += dscore * model.attn.transpose();

  // Physics branch.
  if (lambda != 0.0) {
    const physics::PhysGradients pg =
        physics::grad_phys_loss(fwd.trajectory, model.pressure, constants);
    grads.press_w1 += lambda * pg.w1;
    grads.press_b1 += lambda * pg.b1;
    grads.press_w2 += lambda * pg.w2;
    grads.press_b2 += lambda * pg.b2;
    dh += lambda * pg.latent;
  }
  losses.phys = physics::phys_loss(fwd.trajectory, model.pressure, constants);

  // Encoder, back through both tanh layers.
  const Eigen::MatrixXd da2 = dh.array() * (1.0 - h.array().square());
  grads.enc_w2 += da2.transpose() * fwd.enc_z1;
  grads.enc_b2 += da2.colwise().sum().transpose();
  const Eigen::MatrixXd dz1 = da2 * model.enc_w2;
  const Eigen::MatrixXd da1 = dz1.array() * (1.0 - fwd.enc_z1.array().square());
  grads.enc_w1 += da1.transpose() * fwd.frames;
  grads.enc_b1 += da1.colwise().sum().transpose();
  return losses;
}

void apply_momentum(ToyModel& model, ModelGrads& velocity, const ModelGrads& grads,
                    double lr, double momentum) {
  auto update = [&](auto& param, auto& vel, const auto& grad) {
    vel = momentum * vel - lr * grad;
    param += vel;
  };
  update(model.enc_w1, velocity.enc_w1, grads.enc_w1);
  update(model.enc_b1, velocity.enc_b1, grads.enc_b1);
  update(model.enc_w2, velocity.enc_w2, grads.enc_w2);
  update(model.enc_b2, velocity.enc_b2, grads.enc_b2);
  update(model.attn, velocity.attn, grads.attn);
  update(model.head_w, velocity.head_w, grads.head_w);
  update(model.head_b, velocity.head_b, grads.head_b);
  update(model.pressure.w1, velocity.press_w1, grads.press_w1);
  update(model.pressure.b1, velocity.press_b1, grads.press_b1);
  update(model.pressure.w2, velocity.press_w2, grads.press_w2);
  velocity.press_b2 = momentum * velocity.press_b2 - lr * grads.press_b2;
  model.pressure.b2 += velocity.press_b2;
}

EpochStats evaluate_epoch(const ToyModel& model, const std::vector<ToyWaveform>& dataset,
                          double lambda, const physics::AcousticConstants& constants,
                          int epoch) {
  EpochStats stats;
  stats.epoch = epoch;
  int correct = 0;
  for (const ToyWaveform& wave : dataset) {
    const ForwardResult fwd = forward(model, wave);
    const int y = static_cast<int>(wave.true_emotion);
    stats.l_task += -std::log(std::max(fwd.probabilities(y), 1e-300));
    stats.l_phys += physics::phys_loss(fwd.trajectory, model.pressure, constants);
    int best = 0;
    for (int i = 1; i < asl::kEmotionCount; ++i) {
      if (fwd.probabilities(i) > fwd.probabilities(best)) best = i;
    }
    if (best == y) ++correct;
  }
  const auto n = static_cast<double>(dataset.size());
  stats.l_task /= n;
  stats.l_phys /= n;
  stats.l_total = physics::total_loss(stats.l_task, stats.l_phys, lambda);
  stats.accuracy = static_cast<double>(correct) / n;
  return stats;
}

}  // namespace

std::pair<ToyModel, TrainReport> train(const std::vector<ToyWaveform>& dataset,
                                       const ToyModelConfig& cfg, const TrainHyper& hyper) {
  std::set<asl::Emotion> classes;
  for (const auto& wave : dataset) classes.insert(wave.true_emotion);
  if (classes.size() < 2) throw DegenerateDataset();
  if (hyper.batch < 1 || hyper.epochs < 0) throw Error("invalid training hyperparameters");

  ToyModel model = ToyModel::init(cfg, derive_seed(hyper.seed, 1));
  TrainReport report;
  if (hyper.epochs == 0) return {std::move(model), std::move(report)};

  ModelGrads velocity(model);
  velocity.setZero();
  ModelGrads grads(model);

  Rng shuffle_rng(derive_seed(hyper.seed, 2));
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0u);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch));
      grads.setZero();
      for (std::size_t k = start; k < end; ++k) {
        const ToyWaveform& wave = dataset[order[k]];
        const ForwardResult fwd = forward(model, wave);
        backward(model, fwd, wave.true_emotion, hyper.lambda, hyper.constants, grads);
      }
      grads.scale(1.0 / static_cast<double>(end - start));
      apply_momentum(model, velocity, grads, hyper.lr, hyper.momentum);
    }

    EpochStats stats =
        evaluate_epoch(model, dataset, hyper.lambda, hyper.constants, epoch);
    if (!report.epochs.empty() && stats.l_total > 1.10 * report.epochs.back().l_total) {
      stats.divergence_flag = true;
      report.diverged = true;
    }
    report.epochs.push_back(stats);
  }
  return {std::move(model), std::move(report)};
}

double evaluate_accuracy(const ToyModel& model, const std::vector<ToyWaveform>& dataset) {
  int correct = 0;
  for (const ToyWaveform& wave : dataset) {
    if (classify(model, wave) == wave.true_emotion) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

double grad_check(const ToyModel& model, const ToyWaveform& wave, double lambda,
                  const physics::AcousticConstants& constants, double step) {
  ModelGrads grads(model);
  {
    const ForwardResult fwd = forward(model, wave);
    backward(model, fwd, wave.true_emotion, lambda, constants, grads);
  }

  ToyModel probe_model = model;
  auto loss_at = [&]() {
    const ForwardResult fwd = forward(probe_model, wave);
    const double task =
        -std::log(std::max(fwd.probabilities(static_cast<int>(wave.true_emotion)), 1e-300));
    const double phys = physics::phys_loss(fwd.trajectory, probe_model.pressure, constants);
    return physics::total_loss(task, phys, lambda);
  };

  double worst = 0.0;
  auto probe = [&](double* value, double analytic) {
    const double original = *value;
    *value = original + step;
    const double up = loss_at();
    *value = original - step;
    const double down = loss_at();
    *value = original;
    const double numeric = (up - down) / (2.0 * step);
    const double err =
        std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    worst = std::max(worst, err);
  };

  auto probe_matrix = [&](Eigen::MatrixXd& param, const Eigen::MatrixXd& grad) {
    for (Eigen::Index i = 0; i < param.rows(); ++i) {
      for (Eigen::Index j = 0; j < param.cols(); ++j) probe(&param(i, j), grad(i, j));
    }
  };
  auto probe_vector = [&](Eigen::VectorXd& param, const Eigen::VectorXd& grad) {
    for (Eigen::Index i = 0; i < param.size(); ++i) probe(&param(i), grad(i));
  };

  probe_matrix(probe_model.enc_w1, grads.enc_w1);
  probe_vector(probe_model.enc_b1, grads.enc_b1);
  probe_matrix(probe_model.enc_w2, grads.enc_w2);
  probe_vector(probe_model.enc_b2, grads.enc_b2);
  probe_vector(probe_model.attn, grads.attn);
  probe_matrix(probe_model.head_w, grads.head_w);
  probe_vector(probe_model.head_b, grads.head_b);
  probe_matrix(probe_model.pressure.w1, grads.press_w1);
  probe_vector(probe_model.pressure.b1, grads.press_b1);
  probe_vector(probe_model.pressure.w2, grads.press_w2);
  probe(&probe_model.pressure.b2, grads.press_b2);
  return worst;
}

void ToyModel::save(std::ostream& out) const {
  binio::write_u32(out, kModelMagic);
  binio::write_u32(out, kModelVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(cfg.frame_size));
  binio::write_u32(out, static_cast<std::uint32_t>(cfg.hop));
  binio::write_u32(out, static_cast<std::uint32_t>(cfg.encoder_hidden));
  binio::write_u32(out, static_cast<std::uint32_t>(cfg.latent_dim));
  binio::write_u32(out, static_cast<std::uint32_t>(cfg.pressure_hidden));
  binio::write_matrix(out, enc_w1);
  binio::write_vector(out, enc_b1);
  binio::write_matrix(out, enc_w2);
  binio::write_vector(out, enc_b2);
  binio::write_vector(out, attn);
  binio::write_matrix(out, head_w);
  binio::write_vector(out, head_b);
  pressure.save(out);
}

ToyModel ToyModel::load(std::istream& in) {
  if (binio::read_u32(in) != kModelMagic) throw Error("toy model: bad magic");
  if (binio::read_u32(in) != kModelVersion) throw Error("toy model: unsupported version");
  ToyModel model;
  model.cfg.frame_size = static_cast<int>(binio::read_u32(in));
  model.cfg.hop = static_cast<int>(binio::read_u32(in));
  model.cfg.encoder_hidden = static_cast<int>(binio::read_u32(in));
  model.cfg.latent_dim = static_cast<int>(binio::read_u32(in));
  model.cfg.pressure_hidden = static_cast<int>(binio::read_u32(in));
  model.enc_w1.resize(model.cfg.encoder_hidden, model.cfg.frame_size);
  model.enc_b1.resize(model.cfg.encoder_hidden);
  model.enc_w2.resize(model.cfg.latent_dim, model.cfg.encoder_hidden);
  model.enc_b2.resize(model.cfg.latent_dim);
  model.attn.resize(model.cfg.latent_dim);
  model.head_w.resize(asl::kEmotionCount, model.cfg.latent_dim);
  model.head_b.resize(asl::kEmotionCount);
  binio::read_matrix(in, model.enc_w1);
  binio::read_vector(in, model.enc_b1);
  binio::read_matrix(in, model.enc_w2);
  binio::read_vector(in, model.enc_b2);
  binio::read_vector(in, model.attn);
  binio::read_matrix(in, model.head_w);
  binio::read_vector(in, model.head_b);
  model.pressure = physics::PressureOperator::load(in);
  if (!in) throw Error("toy model: truncated stream");
  return model;
}

void write_train_report(std::ostream& out, const TrainReport& report) {
  for (const EpochStats& e : report.epochs) {
    const nlohmann::json j{{"epoch", e.epoch},          {"l_task", e.l_task},
                           {"l_phys", e.l_phys},        {"l_total", e.l_total},
                           {"accuracy", e.accuracy},    {"divergence_flag", e.divergence_flag}};
    out << j.dump() << '\n';
  }
}

}  // namespace callrisk::piam
