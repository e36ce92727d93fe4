#include "callrisk/physics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "callrisk/binio.hpp"

namespace callrisk::physics {

using binio::read_f64;
using binio::read_u32;
using binio::write_f64;
using binio::write_u32;

namespace {

constexpr std::uint32_t kOperatorMagic = 0x4f505243;  // "CRPO" little-endian
constexpr std::uint32_t kOperatorVersion = 1;

}  // namespace

Eigen::VectorXd PressureOperator::apply(const Eigen::Ref<const Eigen::MatrixXd>& states) const {
  // states: T x D. Hidden activations per row, then the output projection.
  const Eigen::MatrixXd z =
      ((states * w1.transpose()).rowwise() + b1.transpose()).array().tanh();
  return (z * w2).array() + b2;
}

PressureOperator PressureOperator::random(Eigen::Index input_dim, Eigen::Index hidden,
                                          Rng& rng) {
  PressureOperator op;
  op.w1.resize(hidden, input_dim);
  op.b1 = Eigen::VectorXd::Zero(hidden);
  op.w2.resize(hidden);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (Eigen::Index i = 0; i < op.w1.rows(); ++i) {
    for (Eigen::Index j = 0; j < op.w1.cols(); ++j) op.w1(i, j) = rng.normal(0.0, s1);
  }
  for (Eigen::Index i = 0; i < hidden; ++i) op.w2(i) = rng.normal(0.0, s2);
  op.b2 = 0.0;
  return op;
}

void PressureOperator::save(std::ostream& out) const {
  write_u32(out, kOperatorMagic);
  write_u32(out, kOperatorVersion);
  write_u32(out, static_cast<std::uint32_t>(input_dim()));
  write_u32(out, static_cast<std::uint32_t>(hidden_dim()));
  for (Eigen::Index i = 0; i < w1.rows(); ++i) {
    for (Eigen::Index j = 0; j < w1.cols(); ++j) write_f64(out, w1(i, j));
  }
  for (Eigen::Index i = 0; i < b1.size(); ++i) write_f64(out, b1(i));
  for (Eigen::Index i = 0; i < w2.size(); ++i) write_f64(out, w2(i));
  write_f64(out, b2);
}

PressureOperator PressureOperator::load(std::istream& in) {
  if (read_u32(in) != kOperatorMagic) throw Error("pressure operator: bad magic");
  if (read_u32(in) != kOperatorVersion) throw Error("pressure operator: unsupported version");
  const auto d = static_cast<Eigen::Index>(read_u32(in));
  const auto h = static_cast<Eigen::Index>(read_u32(in));
  PressureOperator op;
  op.w1.resize(h, d);
  op.b1.resize(h);
  op.w2.resize(h);
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) op.w1(i, j) = read_f64(in);
  }
  for (Eigen::Index i = 0; i < h; ++i) op.b1(i) = read_f64(in);
  for (Eigen::Index i = 0; i < h; ++i) op.w2(i) = read_f64(in);
  op.b2 = read_f64(in);
  if (!in) throw Error("pressure operator: truncated stream");
  return op;
}

Eigen::VectorXd second_time_derivative(const Eigen::Ref<const Eigen::VectorXd>& series,
                                       double dt) {
  const Eigen::Index n = series.size();
  if (n < 3) throw SeriesTooShort(n);
  const Eigen::Index m = n - 2;
  return (series.segment(2, m) - 2.0 * series.segment(1, m) + series.segment(0, m)) /
         (dt * dt);
}

Eigen::VectorXd westervelt_residual(const Eigen::Ref<const Eigen::VectorXd>& pressure,
                                    const AcousticConstants& k) {
  k.validate();
  const Eigen::VectorXd p_tt = second_time_derivative(pressure, k.dt);
  const Eigen::VectorXd p2_tt =
      second_time_derivative(pressure.array().square().matrix(), k.dt);
  const double c2 = k.c0 * k.c0;
  const double kappa = k.beta / (k.rho0 * c2 * c2);
  return kappa * p2_tt - p_tt / c2;
}

double phys_loss(const LatentTrajectory& traj, const PressureOperator& op,
                 const AcousticConstants& k) {
  if (traj.steps() < 3) throw SeriesTooShort(traj.steps());
  AcousticConstants local = k;
  local.dt = traj.dt;
  const Eigen::VectorXd p = op.apply(traj.h);
  const Eigen::VectorXd r = westervelt_residual(p, local);
  return r.squaredNorm() / static_cast<double>(r.size());
}

double total_loss(double task_loss, double physics_loss, double lambda) {
  return task_loss + lambda * physics_loss;
}

PhysGradients grad_phys_loss(const LatentTrajectory& traj, const PressureOperator& op,
                             const AcousticConstants& k) {
  const Eigen::Index t_steps = traj.steps();
  if (t_steps < 3) throw SeriesTooShort(t_steps);
  k.validate();

  const double dt = traj.dt;
  const double inv_dt2 = 1.0 / (dt * dt);
  const double c2 = k.c0 * k.c0;
  const double kappa = k.beta / (k.rho0 * c2 * c2);
  const Eigen::Index m = t_steps - 2;

  // Forward pass with caches.
  const Eigen::MatrixXd pre = (traj.h * op.w1.transpose()).rowwise() + op.b1.transpose();
  const Eigen::MatrixXd z = pre.array().tanh();  // T x H
  const Eigen::VectorXd p = (z * op.w2).array() + op.b2;
  const Eigen::VectorXd q = p.array().square();

  auto stencil = [&](const Eigen::VectorXd& s) {
    return ((s.segment(2, m) - 2.0 * s.segment(1, m) + s.segment(0, m)) * inv_dt2).eval();
  };
  const Eigen::VectorXd r = kappa * stencil(q) - stencil(p) / c2;

  // dL/dr for L = (1/m) sum r^2.
  const Eigen::VectorXd u = (2.0 / static_cast<double>(m)) * r;

  // Adjoint of the stencil: scatter (u_i, -2 u_i, u_i)/dt^2 onto i, i+1, i+2.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(t_steps);
  w.segment(0, m) += u;
  w.segment(1, m) -= 2.0 * u;
  w.segment(2, m) += u;
  w *= inv_dt2;

  // dL/dp through both stencil branches; d(q)/d(p) = 2p.
  const Eigen::VectorXd dp =
      (2.0 * kappa) * (p.array() * w.array()).matrix() - w / c2;

  // Back through the operator.
  PhysGradients g;
  g.w2 = z.transpose() * dp;                    // H
  g.b2 = dp.sum();
  const Eigen::MatrixXd dz = dp * op.w2.transpose();          // T x H
  const Eigen::MatrixXd da = dz.array() * (1.0 - z.array().square());
  g.w1 = da.transpose() * traj.h;               // H x D
  g.b1 = da.colwise().sum().transpose();        // H
  g.latent = da * op.w1;                        // T x D
  return g;
}

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

}  // namespace

double finite_diff_check(const LatentTrajectory& traj, const PressureOperator& op,
                         const AcousticConstants& k, double step) {
  if (!(step > 0.0)) throw Error("finite_diff_check: step must be positive");
  const PhysGradients g = grad_phys_loss(traj, op, k);

  double worst = 0.0;
  auto probe = [&](auto&& get, auto&& set, double analytic) {
    const double original = get();
    set(original + step);
    const double up = phys_loss(traj, op, k);
    set(original - step);
    const double down = phys_loss(traj, op, k);
    set(original);
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, rel_err(analytic, numeric));
  };

  auto& mutable_op = const_cast<PressureOperator&>(op);
  auto& mutable_traj = const_cast<LatentTrajectory&>(traj);

  for (Eigen::Index i = 0; i < op.w1.rows(); ++i) {
    for (Eigen::Index j = 0; j < op.w1.cols(); ++j) {
      probe([&] { return mutable_op.w1(i, j); },
            [&](double v) { mutable_op.w1(i, j) = v; }, g.w1(i, j));
    }
  }
  for (Eigen::Index i = 0; i < op.b1.size(); ++i) {
    probe([&] { return mutable_op.b1(i); }, [&](double v) { mutable_op.b1(i) = v; },
          g.b1(i));
  }
  for (Eigen::Index i = 0; i < op.w2.size(); ++i) {
    probe([&] { return mutable_op.w2(i); }, [&](double v) { mutable_op.w2(i) = v; },
          g.w2(i));
  }
  probe([&] { return mutable_op.b2; }, [&](double v) { mutable_op.b2 = v; }, g.b2);

  for (Eigen::Index t = 0; t < traj.steps(); ++t) {
    for (Eigen::Index d = 0; d < traj.dim(); ++d) {
      probe([&] { return mutable_traj.h(t, d); },
            [&](double v) { mutable_traj.h(t, d) = v; }, g.latent(t, d));
    }
  }
  return worst;
}

}  // namespace callrisk::physics
