#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>

#include "callrisk/common.hpp"
#include "callrisk/rng.hpp"

namespace callrisk::physics {

class SeriesTooShort : public Error {
 public:
  explicit SeriesTooShort(Eigen::Index n)
      : Error("time series needs at least 3 points, got " + std::to_string(n)) {}
};

// Normalized-unit constants of the lossless nonlinear wave residual.
struct AcousticConstants {
  double c0 = 1.0;    // small-signal sound speed
  double rho0 = 1.0;  // ambient density
  double beta = 1.2;  // coefficient of nonlinearity
  double dt = 1.0;    // time step

  void validate() const {
    if (!(c0 > 0.0) || !(rho0 > 0.0) || !(dt > 0.0) || beta < 0.0) {
      throw Error("acoustic constants require c0, rho0, dt > 0 and beta >= 0");
    }
  }
};

// Time-major latent states h_1..T with their sampling step.
struct LatentTrajectory {
  Eigen::MatrixXd h;  // T x D
  double dt = 1.0;

  Eigen::Index steps() const { return h.rows(); }
  Eigen::Index dim() const { return h.cols(); }
};

// Two-layer tanh map from a latent state to scalar pressure:
//   p(x) = w2' tanh(w1 x + b1) + b2.
// Smooth everywhere, so differencing the induced pressure twice in time is
// well behaved during training.
struct PressureOperator {
  Eigen::MatrixXd w1;  // H x D
  Eigen::VectorXd b1;  // H
  Eigen::VectorXd w2;  // H
  double b2 = 0.0;

  Eigen::Index input_dim() const { return w1.cols(); }
  Eigen::Index hidden_dim() const { return w1.rows(); }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(w1.size() + b1.size() + w2.size()) + 1;
  }

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return w2.dot(((w1 * x + b1).array().tanh()).matrix()) + b2;
  }

  // One pressure value per row of `states`.
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::MatrixXd>& states) const;

  static PressureOperator random(Eigen::Index input_dim, Eigen::Index hidden, Rng& rng);

  // Flat little-endian IEEE-754 doubles behind a short header.
  void save(std::ostream& out) const;
  static PressureOperator load(std::istream& in);
};

// Interior second central difference (s[t+1] - 2 s[t] + s[t-1]) / dt^2;
// output has length T - 2.
Eigen::VectorXd second_time_derivative(const Eigen::Ref<const Eigen::VectorXd>& series,
                                       double dt);

// r[t] = -(1/c0^2) d2p/dt2 + (beta / (rho0 c0^4)) d2(p^2)/dt2 at interior
// points. The spatial Laplacian is zero under the plane-progressive-wave
// surrogate: a single-channel signal carries no spatial field.
Eigen::VectorXd westervelt_residual(const Eigen::Ref<const Eigen::VectorXd>& pressure,
                                    const AcousticConstants& k);

// Mean squared residual of the induced pressure series. The trajectory's dt
// governs the stencil spacing.
double phys_loss(const LatentTrajectory& traj, const PressureOperator& op,
                 const AcousticConstants& k);

// L_total = L_task + lambda * L_phys.
double total_loss(double task_loss, double physics_loss, double lambda);

struct PhysGradients {
  Eigen::MatrixXd w1;      // dL/dw1
  Eigen::VectorXd b1;      // dL/db1
  Eigen::VectorXd w2;      // dL/dw2
  double b2 = 0.0;         // dL/db2
  Eigen::MatrixXd latent;  // dL/dh, T x D
};

// Exact reverse-mode gradients of phys_loss with respect to the operator
// parameters and the latent states.
PhysGradients grad_phys_loss(const LatentTrajectory& traj, const PressureOperator& op,
                             const AcousticConstants& k);

// Max relative error between grad_phys_loss and symmetric finite differences,
// denominator max(|analytic|, |numeric|, 1e-12), over every coordinate.
double finite_diff_check(const LatentTrajectory& traj, const PressureOperator& op,
                         const AcousticConstants& k, double step);

}  // namespace callrisk::physics
