#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "doob/bridge_model.hpp"
#include "doob/dynamics.hpp"

namespace doob {

struct PathFailure {
  std::size_t path_id = 0;
  std::size_t step = 0;
  std::string message;
};

/// A set of trajectories produced by one method, with its provenance.
struct Ensemble {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<Trajectory> paths;
  std::vector<PathFailure> failures;
  std::uint64_t gradient_evaluations = 0;
  std::uint64_t proposals = 0;
  double acceptance_rate = 0.0;
};

/// Component marginals on the uniform grid t_i = i T / n_steps, i = 0..n_steps.
/// Every path of an ensemble shares one table, since the marginals depend on t only.
class MarginalTable {
 public:
  MarginalTable(const BridgeModel& model, std::size_t n_steps);
  std::size_t n_steps() const { return n_steps_; }
  double dt() const { return dt_; }
  const std::vector<PathMarginal>& at(std::size_t step) const { return rows_.at(step); }

 private:
  std::size_t n_steps_;
  double dt_;
  std::vector<std::vector<PathMarginal>> rows_;
};

/// Euler-Maruyama integration of dx = u(t, x) dt + Xi dW from x_0 ~ N(A, sigma_min^2 I).
/// Touches no potential: the drift comes from the path statistics alone.
Trajectory generate_path(const BridgeModel& model, const MarginalTable& table, Rng& rng);
Trajectory generate_path(const BridgeModel& model, std::size_t n_steps, Rng& rng);

/// Path i uses stream_rng(seed, i). Failures are recorded, not thrown.
Ensemble generate_ensemble(const BridgeModel& model, std::size_t n_paths, std::size_t n_steps,
                           std::uint64_t seed);
Ensemble generate_ensemble_serial(const BridgeModel& model, std::size_t n_paths,
                                  std::size_t n_steps, std::uint64_t seed);

}  // namespace doob
