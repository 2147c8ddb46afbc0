#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hafrm/model.hpp"
#include "hafrm/optim.hpp"

namespace hafrm {

inline constexpr const char* kCheckpointFormat = "hafrm-ckpt-v1";

// Persisted training state. On disk: the format tag line, a little-endian u64
// header length, a JSON header (config, tensor manifest, step, metrics), then
// every tensor as raw little-endian f64 in manifest order.
struct Checkpoint {
  ModelConfig model_config;
  std::vector<std::pair<std::string, std::vector<double>>> parameters;
  std::optional<OptimState> optim;
  std::int64_t step = 0;
  double val_accuracy = 0.0;
  double val_mean_reward = 0.0;
  std::string config_hash;
  // Free-form metadata (training objective, alpha, data tag, ...).
  nlohmann::json meta = nlohmann::json::object();

  static Checkpoint capture(const DualHeadModel& model, const OptimState* optim);
  DualHeadModel restore_model() const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hafrm
