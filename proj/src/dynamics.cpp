#include "doob/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace doob {

namespace {

bool all_positive(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0 && std::isfinite(x); });
}

}  // namespace

ReferenceDynamics::ReferenceDynamics(DynamicsOrder order, PotentialPtr potential,
                                     std::vector<double> xi_diag,
                                     std::vector<double> force_scale, LangevinParams params)
    : order_(order),
      potential_(std::move(potential)),
      xi_(std::move(xi_diag)),
      force_scale_(std::move(force_scale)),
      params_(std::move(params)) {
  if (!potential_) throw std::invalid_argument("ReferenceDynamics: null potential");
  const std::size_t d = potential_->dim();
  const std::size_t expected = order_ == DynamicsOrder::first ? d : 2 * d;
  if (xi_.size() != expected) throw std::invalid_argument("ReferenceDynamics: xi size");
  if (force_scale_.size() != d) throw std::invalid_argument("ReferenceDynamics: force scale size");
  if (!all_positive(xi_)) {
    throw std::invalid_argument("ReferenceDynamics: diffusion must be positive in every coordinate");
  }
  g_.resize(xi_.size());
  g_inv_.resize(xi_.size());
  for (std::size_t i = 0; i < xi_.size(); ++i) {
    g_[i] = 0.5 * xi_[i] * xi_[i];
    g_inv_[i] = 1.0 / g_[i];
  }
}

void ReferenceDynamics::drift(double /*t*/, std::span<const double> x,
                              std::span<double> out) const {
  const std::size_t d = config_dim();
  if (x.size() != dim() || out.size() != dim()) {
    throw std::invalid_argument("ReferenceDynamics::drift: size mismatch");
  }
  if (order_ == DynamicsOrder::first) {
    potential_->gradient(x, out);
    for (std::size_t i = 0; i < d; ++i) out[i] = -force_scale_[i] * out[i];
    return;
  }
  std::vector<double> grad(d);
  potential_->gradient(x.subspan(0, d), grad);
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = x[d + i];
    out[d + i] = -grad[i] / params_.mass[i] - params_.gamma * x[d + i];
  }
}

void ReferenceDynamics::drift_and_jacobian(double /*t*/, std::span<const double> x,
                                           std::span<double> out, std::span<double> jac) const {
  const std::size_t d = config_dim();
  const std::size_t n = dim();
  if (x.size() != n || out.size() != n || jac.size() != n * n) {
    throw std::invalid_argument("ReferenceDynamics::drift_and_jacobian: size mismatch");
  }
  if (order_ == DynamicsOrder::first) {
    potential_->gradient_and_hessian(x, out, jac);
    for (std::size_t i = 0; i < d; ++i) {
      out[i] = -force_scale_[i] * out[i];
      for (std::size_t j = 0; j < d; ++j) jac[i * n + j] = -force_scale_[i] * jac[i * n + j];
    }
    return;
  }
  std::vector<double> grad(d), hess(d * d);
  potential_->gradient_and_hessian(x.subspan(0, d), grad, hess);
  std::fill(jac.begin(), jac.end(), 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = x[d + i];
    out[d + i] = -grad[i] / params_.mass[i] - params_.gamma * x[d + i];
    jac[i * n + (d + i)] = 1.0;
    for (std::size_t j = 0; j < d; ++j) jac[(d + i) * n + j] = -hess[i * d + j] / params_.mass[i];
    jac[(d + i) * n + (d + i)] = -params_.gamma;
  }
}

ReferenceDynamics ReferenceDynamics::with_scaled_noise(double factor) const {
  if (!(factor > 0.0)) throw std::invalid_argument("with_scaled_noise: factor must be > 0");
  std::vector<double> xi = xi_;
  for (double& v : xi) v *= factor;
  return ReferenceDynamics(order_, potential_, std::move(xi), force_scale_, params_);
}

ReferenceDynamics ReferenceDynamics::with_potential(PotentialPtr potential) const {
  if (!potential || potential->dim() != config_dim()) {
    throw std::invalid_argument("with_potential: dimension mismatch");
  }
  return ReferenceDynamics(order_, std::move(potential), xi_, force_scale_, params_);
}

ReferenceDynamics first_order_toy(PotentialPtr potential, double xi) {
  if (!(xi > 0.0)) throw std::invalid_argument("first_order_toy: xi must be > 0");
  const std::size_t d = potential->dim();
  return ReferenceDynamics(DynamicsOrder::first, std::move(potential), std::vector<double>(d, xi),
                           std::vector<double>(d, 1.0), LangevinParams{});
}

ReferenceDynamics overdamped_langevin(PotentialPtr potential, double gamma,
                                      std::vector<double> mass, double kT) {
  const std::size_t d = potential->dim();
  if (!(gamma > 0.0) || !(kT > 0.0) || mass.size() != d || !all_positive(mass)) {
    throw std::invalid_argument("overdamped_langevin: gamma, kT and masses must be > 0");
  }
  std::vector<double> xi(d), scale(d);
  for (std::size_t i = 0; i < d; ++i) {
    scale[i] = 1.0 / (gamma * mass[i]);
    xi[i] = std::sqrt(2.0 * kT * scale[i]);
  }
  LangevinParams p{gamma, kT, 0.0, std::move(mass)};
  return ReferenceDynamics(DynamicsOrder::first, std::move(potential), std::move(xi),
                           std::move(scale), std::move(p));
}

ReferenceDynamics second_order(PotentialPtr potential, double gamma, std::vector<double> mass,
                               double kT, double xi_min) {
  const std::size_t d = potential->dim();
  if (!(gamma > 0.0) || !(kT > 0.0) || !(xi_min > 0.0) || mass.size() != d ||
      !all_positive(mass)) {
    throw std::invalid_argument("second_order: gamma, kT, xi_min and masses must be > 0");
  }
  std::vector<double> xi(2 * d);
  for (std::size_t i = 0; i < d; ++i) {
    xi[i] = xi_min;
    xi[d + i] = std::sqrt(2.0 * gamma * kT / mass[i]);
  }
  LangevinParams p{gamma, kT, xi_min, std::move(mass)};
  return ReferenceDynamics(DynamicsOrder::second, std::move(potential), std::move(xi),
                           std::vector<double>(d, 1.0), std::move(p));
}

void Trajectory::push(double t, std::span<const double> x) {
  if (dim == 0) dim = x.size();
  if (x.size() != dim) throw std::invalid_argument("Trajectory::push: dim mismatch");
  times.push_back(t);
  states.insert(states.end(), x.begin(), x.end());
}

void euler_maruyama_step(const ReferenceDynamics& dyn, double t, std::span<const double> x,
                         double dt, std::span<const double> noise, std::span<double> out,
                         std::size_t step_index) {
  if (!(dt > 0.0)) throw std::invalid_argument("euler_maruyama_step: dt must be > 0");
  const std::size_t n = dyn.dim();
  if (noise.size() != n || out.size() != n) {
    throw std::invalid_argument("euler_maruyama_step: size mismatch");
  }
  std::vector<double> b(n);
  dyn.drift(t, x, b);
  const double sqdt = std::sqrt(dt);
  const auto xi = dyn.xi_diag();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = x[i] + dt * b[i] + sqdt * xi[i] * noise[i];
    if (!std::isfinite(out[i])) {
      throw IntegrationBlowup(step_index,
                              "integration blew up at step " + std::to_string(step_index));
    }
  }
}

std::vector<double> euler_maruyama_step(const ReferenceDynamics& dyn, double t,
                                        std::span<const double> x, double dt, Rng& rng,
                                        std::size_t step_index) {
  std::vector<double> noise(dyn.dim()), out(dyn.dim());
  fill_standard_normal(rng, noise);
  euler_maruyama_step(dyn, t, x, dt, noise, out, step_index);
  return out;
}

Trajectory simulate(const ReferenceDynamics& dyn, std::span<const double> x0,
                    std::size_t n_steps, double dt, Rng& rng, double t0) {
  if (n_steps < 1) throw std::invalid_argument("simulate: n_steps must be >= 1");
  if (x0.size() != dyn.dim()) throw std::invalid_argument("simulate: x0 size mismatch");
  Trajectory traj;
  traj.dim = dyn.dim();
  traj.method_tag = "reference";
  traj.times.reserve(n_steps + 1);
  traj.states.reserve((n_steps + 1) * dyn.dim());
  traj.push(t0, x0);
  std::vector<double> x(x0.begin(), x0.end()), next(dyn.dim()), noise(dyn.dim());
  for (std::size_t i = 0; i < n_steps; ++i) {
    fill_standard_normal(rng, noise);
    const double t = t0 + static_cast<double>(i) * dt;
    euler_maruyama_step(dyn, t, x, dt, noise, next, i);
    x.swap(next);
    traj.push(t0 + static_cast<double>(i + 1) * dt, x);
  }
  return traj;
}

}  // namespace doob
