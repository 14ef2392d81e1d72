#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "doob/bridge_model.hpp"
#include "doob/metrics.hpp"
#include "doob/shooting.hpp"
#include "doob/trainer.hpp"

namespace doob {

/// Config rejected by validation; `path` names the offending field, e.g. "training.batch_size".
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class ExperimentKind { train, sample, tps_baseline, compare, w1_study, spline_ablation };

std::string to_string(ExperimentKind k);

struct DynamicsSpec {
  std::string type = "first_order";  // "first_order" | "overdamped_langevin"
  double xi = 1.0;
  double gamma = 1.0;
  double kT = 1.0;
  std::vector<double> mass;
};

struct TrainingSpec {
  std::size_t iterations = 2500;
  std::size_t batch_size = 512;
  double learning_rate = 1e-3;
  LrSchedule lr_schedule = LrSchedule::constant;
  double grad_clip = 0.0;
  std::optional<double> t_margin;  // default: half an integration step
  double ema_alpha = 0.001;
  std::size_t chunk_size = 32;
};

struct SamplingSpec {
  std::size_t n_paths = 1000;
  bool write_csv = true;
};

struct TpsSpec {
  TpsMode mode = TpsMode::variable_length;
  double radius = 0.1;
  std::size_t n_paths = 1000;
  std::size_t max_steps = 2000;
  double warmup_fraction = 0.1;
  double init_noise_multiplier = 2.0;
  std::size_t init_attempts = 1000;
  std::uint64_t max_proposals = 50'000'000;
};

struct W1Spec {
  std::size_t n_samples = 500;
  std::size_t stride = 5;
  // Reference ensemble file (binary format). Empty: run fixed-length shooting with `tps`.
  std::filesystem::path reference;
};

struct AblationSpec {
  std::vector<std::string> backends = {"mlp", "spline_cubic", "spline_linear"};
  // Per-backend learning rate; missing entries use training.learning_rate.
  std::map<std::string, double> learning_rates;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::train;
  std::string name;
  std::uint64_t seed = 0;
  std::string potential;
  DynamicsSpec dynamics;
  BoundaryPair boundary;
  std::size_t steps = 0;
  BackendSpec backend;
  MixtureSpec mixture;
  TrainingSpec training;
  SamplingSpec sampling;
  TpsSpec tps;
  W1Spec w1;
  AblationSpec ablation;
  std::filesystem::path checkpoint;
  std::vector<std::filesystem::path> dirs;
  nlohmann::json raw;

  double dt() const { return boundary.T / static_cast<double>(steps); }
};

/// Validates and parses a config document. Relative paths resolve against base_dir.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& file);

std::shared_ptr<const ReferenceDynamics> make_dynamics(const DynamicsSpec& spec, PotentialPtr potential);
TrainConfig make_train_config(const ExperimentConfig& cfg,
                              std::shared_ptr<const ReferenceDynamics> dynamics);
TpsConfig make_tps_config(const ExperimentConfig& cfg, std::shared_ptr<const ReferenceDynamics> dynamics);

/// Seeds derived from the run seed.
struct RunSeeds {
  std::uint64_t train, sample, tps, w1;
};
RunSeeds derive_seeds(std::uint64_t seed);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<int> threads;
};

/// Runs one experiment into its artifact directory. Exit codes: 0 success,
/// 1 runtime failure (partial artifacts and a failed manifest are kept),
/// 2 invalid config (nothing is written).
int run_experiment(const std::filesystem::path& config_file, const RunOptions& options,
                   std::ostream& log, std::ostream& err);

/// Merges the report tables of several artifact directories into one table.
/// Throws std::runtime_error on mismatched potentials or boundaries.
ReportTable compare_dirs(const std::vector<std::filesystem::path>& dirs);

int run_compare(const std::vector<std::filesystem::path>& dirs,
                const std::optional<std::filesystem::path>& out, std::ostream& log,
                std::ostream& err);

}  // namespace doob
