#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "doob/potentials.hpp"
#include "doob/rng.hpp"

namespace doob {

enum class DynamicsOrder { first, second };

struct LangevinParams {
  double gamma = 1.0;         // friction, 1/time
  double kT = 1.0;            // thermal energy
  double xi_min = 0.0;        // positional diffusion for second order
  std::vector<double> mass;   // diagonal, one entry per configuration coordinate
};

/// Reference SDE dx = b(t, x) dt + Xi dW with time-constant diagonal Xi.
///
/// First order: state is the configuration x, b = -S grad U(x) where S is a
/// per-coordinate force scale (1 for the toy convention, (gamma M)^-1 for
/// overdamped Langevin). Second order: state is (x, v) with
/// b = (v, -M^-1 grad U(x) - gamma v) and Xi = diag(xi_min, M^-1/2 sqrt(2 gamma kT)).
class ReferenceDynamics {
 public:
  ReferenceDynamics(DynamicsOrder order, PotentialPtr potential, std::vector<double> xi_diag,
                    std::vector<double> force_scale, LangevinParams params);

  DynamicsOrder order() const { return order_; }
  std::size_t dim() const { return xi_.size(); }
  std::size_t config_dim() const { return potential_->dim(); }
  const PotentialPtr& potential() const { return potential_; }
  const LangevinParams& params() const { return params_; }

  std::span<const double> xi_diag() const { return xi_; }
  std::span<const double> g_diag() const { return g_; }
  std::span<const double> g_inv_diag() const { return g_inv_; }

  // One potential-gradient evaluation per call.
  void drift(double t, std::span<const double> x, std::span<double> out) const;
  // Drift plus its row-major dim x dim Jacobian; still one gradient evaluation.
  void drift_and_jacobian(double t, std::span<const double> x, std::span<double> out,
                          std::span<double> jac) const;

  /// Same drift, every diffusion coefficient multiplied by `factor`.
  ReferenceDynamics with_scaled_noise(double factor) const;
  /// Same dynamics driven by another potential of equal dimension.
  ReferenceDynamics with_potential(PotentialPtr potential) const;

 private:
  DynamicsOrder order_;
  PotentialPtr potential_;
  std::vector<double> xi_, g_, g_inv_;
  std::vector<double> force_scale_;
  LangevinParams params_;
};

/// b = -grad U, Xi = xi * I.
ReferenceDynamics first_order_toy(PotentialPtr potential, double xi);
/// b = -(gamma M)^-1 grad U, Xi = (gamma M)^-1/2 sqrt(2 kT).
ReferenceDynamics overdamped_langevin(PotentialPtr potential, double gamma,
                                      std::vector<double> mass, double kT);
ReferenceDynamics second_order(PotentialPtr potential, double gamma, std::vector<double> mass,
                               double kT, double xi_min);

/// Time-indexed state sequence on a uniform grid. States are stored row-major.
struct Trajectory {
  std::size_t dim = 0;
  std::vector<double> times;
  std::vector<double> states;
  std::string method_tag;
  std::uint64_t seed = 0;

  std::size_t size() const { return times.size(); }
  std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
  double dt() const { return times.size() < 2 ? 0.0 : times[1] - times[0]; }
  std::span<const double> state(std::size_t i) const { return {states.data() + i * dim, dim}; }
  std::span<double> state(std::size_t i) { return {states.data() + i * dim, dim}; }
  std::span<const double> front() const { return state(0); }
  std::span<const double> back() const { return state(size() - 1); }
  void push(double t, std::span<const double> x);
};

class IntegrationBlowup : public std::runtime_error {
 public:
  IntegrationBlowup(std::size_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// x' = x + dt b(t, x) + sqrt(dt) Xi noise, with caller-supplied standard normal noise.
void euler_maruyama_step(const ReferenceDynamics& dyn, double t, std::span<const double> x,
                         double dt, std::span<const double> noise, std::span<double> out,
                         std::size_t step_index = 0);
std::vector<double> euler_maruyama_step(const ReferenceDynamics& dyn, double t,
                                        std::span<const double> x, double dt, Rng& rng,
                                        std::size_t step_index = 0);

Trajectory simulate(const ReferenceDynamics& dyn, std::span<const double> x0,
                    std::size_t n_steps, double dt, Rng& rng, double t0 = 0.0);

}  // namespace doob
