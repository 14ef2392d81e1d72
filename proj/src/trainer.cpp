#include "doob/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

namespace doob {

std::string to_string(LrSchedule s) { return s == LrSchedule::cosine ? "cosine" : "constant"; }

LrSchedule lr_schedule_from_string(const std::string& s) {
  if (s == "constant") return LrSchedule::constant;
  if (s == "cosine") return LrSchedule::cosine;
  throw std::invalid_argument("unknown learning-rate schedule '" + s + "'");
}

double learning_rate_at(const TrainConfig& config, std::size_t step) {
  const double base = config.adam.learning_rate;
  if (config.lr_schedule == LrSchedule::constant) return base;
  const double frac = static_cast<double>(step) / static_cast<double>(config.iterations);
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * frac));
}

void TrainConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("TrainConfig: iterations must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!dynamics) throw std::invalid_argument("TrainConfig: dynamics missing");
  boundary.validate();
  if (boundary.dim() != dynamics->dim()) {
    throw std::invalid_argument("TrainConfig: boundary and dynamics dimensions differ");
  }
  if (!(adam.learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: learning rate < 0");
  if (!(t_margin >= 0.0) || 2.0 * t_margin >= boundary.T) {
    throw std::invalid_argument("TrainConfig: t_margin must lie in [0, T/2)");
  }
  if (!(grad_clip >= 0.0)) throw std::invalid_argument("TrainConfig: grad_clip must be >= 0");
  if (mixture.K < 1) throw std::invalid_argument("TrainConfig: K must be >= 1");
}

TrainState init_train_state(const TrainConfig& config) {
  config.validate();
  Rng init_rng = stream_rng(config.seed, 0);
  BridgeModel model = BridgeModel::create(config.boundary, config.dynamics->xi_diag(),
                                          config.backend, config.mixture, init_rng);
  AdamState adam(model.num_params(), config.adam);
  return TrainState{std::move(model), std::move(adam), stream_rng(config.seed, 1), 0};
}

double train_step(TrainState& state, const TrainConfig& config, std::size_t* fallbacks) {
  const auto draws = draw_batch(state.model, config.batch_size, config.t_margin, state.rng);
  BatchLoss batch = config.serial_kernel
                        ? batch_loss_serial(state.model, *config.dynamics, draws)
                        : batch_loss_parallel(state.model, *config.dynamics, draws, config.chunk_size);
  if (fallbacks != nullptr) *fallbacks += batch.fallbacks;
  if (state.model.freeze_logits()) {
    for (std::size_t k = 0; k < state.model.K(); ++k) batch.grad[state.model.logits_offset() + k] = 0.0;
  }
  if (config.grad_clip > 0.0) {
    double n2 = 0.0;
    for (double g : batch.grad) n2 += g * g;
    const double norm = std::sqrt(n2);
    if (norm > config.grad_clip) {
      for (double& g : batch.grad) g *= config.grad_clip / norm;
    }
  }
  state.adam.options.learning_rate = learning_rate_at(config, state.step);
  auto params = state.model.flat_params();
  adam_step(state.adam, params, batch.grad);
  state.model.set_flat_params(params);
  ++state.step;
  return batch.mean_loss;
}

std::pair<BridgeModel, TrainReport> train(const TrainConfig& config, const TrainCallback& on_step) {
  TrainState state = init_train_state(config);
  TrainReport report;
  report.raw_loss.reserve(config.iterations);
  report.ema_loss.reserve(config.iterations);
  const auto before = config.dynamics->potential()->counters();
  const auto t0 = std::chrono::steady_clock::now();
  double ema = 0.0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    double loss = 0.0;
    try {
      loss = train_step(state, config, &report.fallbacks);
    } catch (const NonFiniteLoss& e) {
      throw TrainingError(std::string("training step ") + std::to_string(it) + ": " + e.what(),
                          state.model, it);
    }
    ema = it == 0 ? loss : (1.0 - config.ema_alpha) * ema + config.ema_alpha * loss;
    report.raw_loss.push_back(loss);
    report.ema_loss.push_back(ema);
    if (on_step) on_step(it, loss, ema);
  }
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.gradient_evaluations =
      config.dynamics->potential()->counters().gradient - before.gradient;
  return {std::move(state.model), std::move(report)};
}

}  // namespace doob
