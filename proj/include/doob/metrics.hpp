#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "doob/dynamics.hpp"
#include "doob/potentials.hpp"
#include "doob/rng.hpp"
#include "doob/sampler.hpp"

namespace doob {

/// Highest energy over the stored configurations of a path.
double max_energy(const Trajectory& traj, const Potential& p);
/// Lowest per-path maximum energy across an ensemble.
double ensemble_minmax(const Ensemble& ensemble, const Potential& p);

/// Gaussian start density N(mean, var I) for pinned starts.
struct StartDensity {
  std::vector<double> mean;
  double var = 1e-4;
};

/// log rho(x_0) + sum_i log N(x_{i+1} | x_i + dt b(x_i), dt Xi^2). Without a
/// start density only the transition terms are summed.
double path_log_likelihood(const Trajectory& traj, const ReferenceDynamics& dyn,
                           const std::optional<StartDensity>& start = std::nullopt);

/// Equal-count point clouds stored row-major.
struct PointSet {
  std::size_t dim = 0;
  std::vector<double> data;

  std::size_t size() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const double> point(std::size_t i) const { return {data.data() + i * dim, dim}; }
  void push(std::span<const double> x);
};

/// Euclidean cost matrix, row-major n x n.
std::vector<double> cost_matrix_serial(const PointSet& p, const PointSet& q);
std::vector<double> cost_matrix_parallel(const PointSet& p, const PointSet& q);

/// Exact empirical W1 between equal-size sets via optimal assignment.
double w1_marginal(const PointSet& p, const PointSet& q);
/// As above; the larger set is subsampled without replacement first.
double w1_marginal(const PointSet& p, const PointSet& q, Rng& rng);

/// States of every path at step `step`; paths shorter than that are skipped.
PointSet states_at(const Ensemble& ensemble, std::size_t step, std::size_t n_coords = 0);

/// n draws from the model's mixture marginal q_t (component by weight, then mu + sqrt(Sigma) eps).
PointSet sample_model_marginal(const BridgeModel& model, double t, std::size_t n, Rng& rng);

struct W1Point {
  std::size_t step = 0;
  double t = 0.0;
  double w1 = 0.0;
};

/// W1 between the model marginal and the reference ensemble's states at
/// steps 0, stride, 2 stride, ..., always including n_steps. Both sides use
/// n_samples points; step k draws from stream_rng(seed, k).
std::vector<W1Point> w1_series(const BridgeModel& model, const Ensemble& reference,
                               std::size_t n_steps, std::size_t stride, std::size_t n_samples,
                               std::uint64_t seed);
double mean_w1(const std::vector<W1Point>& series);

/// Sign (+1 / -1) of coordinate `axis` at each path's middle state.
std::vector<int> channel_labels(const Ensemble& ensemble, std::size_t axis = 1);

struct ReportRow {
  std::string method;
  std::uint64_t evaluations = 0;
  double max_energy_mean = 0.0;
  double max_energy_std = 0.0;
  double minmax_energy = 0.0;
  double log_likelihood_mean = 0.0;
  double log_likelihood_std = 0.0;
  double max_log_likelihood = 0.0;
  // False for variable-length ensembles: their likelihoods are shown but not
  // comparable with fixed-length ones.
  bool likelihood_comparable = true;
  std::size_t n_paths = 0;
  std::size_t failures = 0;
  // Mean distance of the final state from the target, when one is given.
  double endpoint_error_mean = 0.0;
};

inline constexpr int kReportSchemaVersion = 1;

const std::array<std::string, 6>& table1_header();

struct ReportTable {
  std::string potential;
  std::vector<ReportRow> rows;

  std::string to_csv() const;
  std::string to_json() const;
  /// Markdown table with the report headings; non-comparable likelihoods shown as "-".
  std::string to_markdown() const;
  static ReportTable from_json(const std::string& text);
};

/// Sample statistics for one ensemble. Throws on an empty ensemble.
ReportRow ensemble_report(const Ensemble& ensemble, const Potential& p, const ReferenceDynamics& dyn,
                          const std::optional<StartDensity>& start = std::nullopt,
                          std::span<const double> target = {});

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};
MeanStd mean_std(std::span<const double> v);

}  // namespace doob
