#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "doob/dynamics.hpp"
#include "doob/sampler.hpp"

namespace doob {

/// Ball-shaped metastable state.
struct StateSet {
  std::vector<double> center;
  double radius = 0.1;

  bool contains(std::span<const double> x) const;
};

enum class TpsMode { fixed_length, variable_length };

struct TpsConfig {
  TpsMode mode = TpsMode::variable_length;
  std::size_t n_steps = 275;     // path length in fixed-length mode
  std::size_t max_steps = 2000;  // proposal cap in variable-length mode
  StateSet set_a, set_b;
  std::shared_ptr<const ReferenceDynamics> dynamics;
  double dt = 1e-4;
  std::size_t n_paths = 1000;
  std::uint64_t seed = 0;
  double warmup_fraction = 0.1;
  // Noise multiplier for the initial-path search.
  double init_noise_multiplier = 2.0;
  std::size_t init_attempts = 1000;
  std::uint64_t max_proposals = 50'000'000;

  void validate() const;
};

class InitialPathError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Path with x_0 in A and x_end in B, found by repeated simulation from the
/// center of A at inflated noise. In fixed-length mode the transition segment
/// is resampled onto exactly n_steps steps.
Trajectory initial_path(const TpsConfig& config, Rng& rng);

/// Interior index in [1, n_states - 2], uniform.
std::size_t uniform_shooting_index(std::size_t n_states, Rng& rng);

struct ShootingProposal {
  Trajectory path;
  std::size_t shooting_index = 0;
  bool connected = false;  // starts in A and ends in B
  bool failed = false;     // exceeded max_steps (variable-length mode)
  std::uint64_t integration_steps = 0;
};

/// Two-way shooting move: re-integrate backward (fresh noise, velocities
/// flipped for second-order dynamics) and forward from a uniformly chosen
/// interior point. A backward segment that does not end in A rejects early.
ShootingProposal two_way_propose(const Trajectory& current, const TpsConfig& config, Rng& rng);

/// Fixed length: accept iff connected. Variable length: connected and
/// u < min(1, L_current / L_proposal) in steps.
bool mh_accept(const Trajectory& current, const ShootingProposal& proposal, TpsMode mode, Rng& rng);

struct TpsResult {
  Ensemble ensemble;
  std::uint64_t gradient_evaluations = 0;
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  double acceptance_rate = 0.0;
  // Log-likelihood of every accepted path in chain order (warmup included).
  std::vector<double> chain_log_likelihood;
  // Lag-k autocorrelation of chain_log_likelihood, k = 0..max_lag.
  std::vector<double> log_likelihood_autocorrelation;
};

TpsResult run_tps(const TpsConfig& config);

std::vector<double> autocorrelation(std::span<const double> series, std::size_t max_lag);

}  // namespace doob
