#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "callrisk/asl.hpp"
#include "callrisk/physics.hpp"

namespace callrisk::piam {

class TooFewFrames : public Error {
 public:
  explicit TooFewFrames(Eigen::Index n)
      : Error("waveform yields " + std::to_string(n) + " frames, need at least 3") {}
};
class DegenerateDataset : public Error {
 public:
  DegenerateDataset() : Error("training set must cover at least 2 emotion classes") {}
};

struct WaveformConfig {
  double duration = 0.5;  // seconds
  int sample_rate = 8000;
  double clip_level = 0.8;  // hard saturation threshold in (0, 1]
  double amplitude = 0.85;  // overall drive before per-emotion scaling
  double noise_sd = 0.02;
};

struct ToyWaveform {
  std::vector<double> samples;  // |s| <= clip_level
  int sample_rate = 8000;
  asl::Emotion true_emotion = asl::Emotion::neutral;
  double clip_level = 1.0;
};

// Emotion-indexed tone: fundamental, phase jitter and amplitude scale are
// distinct per label, so the 7 classes are separable by construction. Noise
// is added, then the waveform is hard-clipped. Deterministic per seed.
ToyWaveform synth_waveform(asl::Emotion emotion, std::uint64_t seed,
                           const WaveformConfig& config);

// n waveforms cycling through the 7 labels; element i uses substream i.
std::vector<ToyWaveform> synth_dataset(int n, std::uint64_t seed,
                                       const WaveformConfig& config);

struct ToyModelConfig {
  int frame_size = 64;
  int hop = 32;
  int encoder_hidden = 16;
  int latent_dim = 8;
  int pressure_hidden = 16;
};

// Frame encoder (two tanh layers), attention pooling, linear emotion head,
// plus the pressure operator shared with the physics loss.
struct ToyModel {
  ToyModelConfig cfg;
  Eigen::MatrixXd enc_w1;  // E x F
  Eigen::VectorXd enc_b1;  // E
  Eigen::MatrixXd enc_w2;  // D x E
  Eigen::VectorXd enc_b2;  // D
  Eigen::VectorXd attn;    // D, scoring vector
  Eigen::MatrixXd head_w;  // 7 x D
  Eigen::VectorXd head_b;  // 7
  physics::PressureOperator pressure;

  static ToyModel init(const ToyModelConfig& cfg, std::uint64_t seed);

  void save(std::ostream& out) const;
  static ToyModel load(std::istream& in);
};

struct ForwardResult {
  physics::LatentTrajectory trajectory;  // T x D, dt = 1 (normalized frame time)
  Eigen::VectorXd attention;             // T, nonnegative, sums to 1
  Eigen::VectorXd probabilities;         // 7, sums to 1
  Eigen::VectorXd pressure;              // T

  // Caches reused by the backward pass.
  Eigen::MatrixXd frames;  // T x F
  Eigen::MatrixXd enc_z1;  // T x E
  Eigen::VectorXd pooled;  // D
  Eigen::VectorXd logits;  // 7
};

ForwardResult forward(const ToyModel& model, const ToyWaveform& wave);

// Argmax of forward probabilities; exact ties resolve to the lower label index.
asl::Emotion classify(const ToyModel& model, const ToyWaveform& wave);

struct TrainHyper {
  double lambda = 0.01;
  int epochs = 30;
  double lr = 0.05;
  int batch = 16;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  physics::AcousticConstants constants{};
};

struct EpochStats {
  int epoch = 0;
  double l_task = 0.0;
  double l_phys = 0.0;
  double l_total = 0.0;
  double accuracy = 0.0;
  bool divergence_flag = false;  // total loss rose > 10% over the previous epoch
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  bool diverged = false;
};

// Mini-batch gradient descent with momentum on cross-entropy + lambda *
// phys_loss. Single-threaded and deterministic per seed; epochs = 0 returns
// the seeded initialization untouched.
std::pair<ToyModel, TrainReport> train(const std::vector<ToyWaveform>& dataset,
                                       const ToyModelConfig& cfg, const TrainHyper& hyper);

double evaluate_accuracy(const ToyModel& model, const std::vector<ToyWaveform>& dataset);

// Max relative error of the analytic d(L_total)/d(theta) against symmetric
// finite differences over every model parameter.
double grad_check(const ToyModel& model, const ToyWaveform& wave, double lambda,
                  const physics::AcousticConstants& constants, double step);

void write_train_report(std::ostream& out, const TrainReport& report);

}  // namespace callrisk::piam
