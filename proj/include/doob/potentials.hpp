#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace doob {

struct CounterSnapshot {
  std::uint64_t energy = 0;
  std::uint64_t gradient = 0;
};

/// Differentiable scalar energy over R^dim.
///
/// Every call to energy() bumps the energy counter; every call to gradient()
/// or gradient_and_hessian() bumps the gradient counter. The Hessian is the
/// derivative of the same force evaluation that reverse-mode training needs
/// and is accounted as part of that single gradient call. Counters are atomic
/// so a Potential may be shared between threads.
class Potential {
 public:
  using EnergyFn = std::function<double(std::span<const double>)>;
  using GradientFn = std::function<void(std::span<const double>, std::span<double>)>;
  // Writes gradient and row-major dim x dim Hessian.
  using HessianFn =
      std::function<void(std::span<const double>, std::span<double>, std::span<double>)>;

  Potential(std::string name, std::size_t dim, EnergyFn energy, GradientFn gradient,
            HessianFn hessian);

  Potential(const Potential&) = delete;
  Potential& operator=(const Potential&) = delete;

  const std::string& name() const { return name_; }
  std::size_t dim() const { return dim_; }

  double energy(std::span<const double> x) const;
  void gradient(std::span<const double> x, std::span<double> out) const;
  std::vector<double> gradient(std::span<const double> x) const;
  void gradient_and_hessian(std::span<const double> x, std::span<double> grad,
                            std::span<double> hess) const;

  /// Same surface with its own zeroed counters.
  std::shared_ptr<Potential> fresh_copy() const;

  CounterSnapshot counters() const {
    return {energy_calls_.load(std::memory_order_relaxed),
            gradient_calls_.load(std::memory_order_relaxed)};
  }

 private:
  void check_input(std::span<const double> x) const;

  std::string name_;
  std::size_t dim_;
  EnergyFn energy_;
  GradientFn gradient_;
  HessianFn hessian_;
  mutable std::atomic<std::uint64_t> energy_calls_{0};
  mutable std::atomic<std::uint64_t> gradient_calls_{0};
};

using PotentialPtr = std::shared_ptr<const Potential>;

std::shared_ptr<Potential> mueller_brown();
std::shared_ptr<Potential> dual_channel();
// U = 0 on R^dim. Not registered; used for free-diffusion (Brownian bridge) studies.
std::shared_ptr<Potential> flat_potential(std::size_t dim);

std::shared_ptr<Potential> make_potential(const std::string& name);
std::vector<std::string> potential_names();

}  // namespace doob
