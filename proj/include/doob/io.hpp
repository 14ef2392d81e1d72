#pragma once

#include <filesystem>
#include <string>

#include "doob/bridge_model.hpp"
#include "doob/sampler.hpp"
#include "doob/trainer.hpp"

namespace doob {

inline constexpr int kCheckpointVersion = 1;
inline constexpr int kEnsembleBinaryVersion = 1;

/// Checkpoint blob: JSON with format tag, version, boundary, diffusion,
/// backend description and flat parameters.
std::string checkpoint_to_json(const BridgeModel& model);
BridgeModel checkpoint_from_json(const std::string& text);
void save_checkpoint(const BridgeModel& model, const std::filesystem::path& file);
BridgeModel load_checkpoint(const std::filesystem::path& file);

/// step,raw_loss,ema_loss
void write_loss_history(const TrainReport& report, const std::filesystem::path& file);

/// path_id,step,t,x0,x1,...
void write_ensemble_csv(const Ensemble& ensemble, const std::filesystem::path& file);

/// Little-endian binary ensemble, see docs/formats.md.
void write_ensemble_binary(const Ensemble& ensemble, const std::filesystem::path& file);
Ensemble read_ensemble_binary(const std::filesystem::path& file);

void write_text(const std::filesystem::path& file, const std::string& text);
std::string read_text(const std::filesystem::path& file);

}  // namespace doob
