#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "doob/adam.hpp"
#include "doob/batch_loss.hpp"
#include "doob/bridge_model.hpp"
#include "doob/dynamics.hpp"

namespace doob {

enum class LrSchedule { constant, cosine };

std::string to_string(LrSchedule s);
LrSchedule lr_schedule_from_string(const std::string& s);

struct TrainConfig {
  std::size_t iterations = 2500;
  std::size_t batch_size = 512;
  AdamOptions adam;
  std::uint64_t seed = 0;
  BackendSpec backend;
  MixtureSpec mixture;
  BoundaryPair boundary;
  std::shared_ptr<const ReferenceDynamics> dynamics;
  // t ~ U(t_margin, T - t_margin); callers use half the integration step.
  double t_margin = 0.0;
  // Global-norm gradient clipping threshold, 0 disables.
  double grad_clip = 0.0;
  double ema_alpha = 0.001;
  // Cosine decays the learning rate to zero over `iterations`.
  LrSchedule lr_schedule = LrSchedule::constant;
  std::size_t chunk_size = 32;
  bool serial_kernel = false;

  void validate() const;
};

struct TrainReport {
  std::vector<double> raw_loss;
  std::vector<double> ema_loss;
  std::uint64_t gradient_evaluations = 0;
  double wall_time_s = 0.0;
  std::size_t fallbacks = 0;
};

struct TrainState {
  BridgeModel model;
  AdamState adam;
  Rng rng;
  std::size_t step = 0;
};

TrainState init_train_state(const TrainConfig& config);

/// Learning rate used at (0-based) step `step`.
double learning_rate_at(const TrainConfig& config, std::size_t step);

/// One Adam update on a fresh batch; returns the mean batch loss.
double train_step(TrainState& state, const TrainConfig& config, std::size_t* fallbacks = nullptr);

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, BridgeModel partial, std::size_t step)
      : std::runtime_error(what), partial_(std::move(partial)), step_(step) {}
  const BridgeModel& partial_model() const { return partial_; }
  std::size_t step() const { return step_; }

 private:
  BridgeModel partial_;
  std::size_t step_;
};

using TrainCallback = std::function<void(std::size_t step, double loss, double ema)>;

std::pair<BridgeModel, TrainReport> train(const TrainConfig& config,
                                          const TrainCallback& on_step = {});

}  // namespace doob
