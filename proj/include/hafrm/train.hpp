#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hafrm/checkpoint.hpp"
#include "hafrm/data.hpp"
#include "hafrm/losses.hpp"
#include "hafrm/model.hpp"
#include "hafrm/optim.hpp"

namespace hafrm {

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 16;
  int max_steps = 2000;
  double eval_every_frac = 0.025;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-5;
  double weight_decay = 0.0;
  double max_grad_norm = 1.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;
  HybridConfig hybrid;
  Objective objective = Objective::kHybrid;
  // Evaluations without improvement before stopping; 0 never stops early.
  int early_stop_patience = 10;
  bool allow_negative_alpha = false;

  void validate() const;
  // ceil(eval_every_frac * max_steps), at least 1.
  int eval_every() const;
  AdamWConfig adamw() const;
  // "baseline" whenever the policy loss carries no weight.
  std::string mode() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct StepResult {
  LossBreakdown breakdown;
  double grad_norm = 0.0;          // before clipping
  double clipped_grad_norm = 0.0;  // after clipping
};

// One forward/backward of the configured objective, gradient clipping and an
// AdamW update. A non-finite loss raises NumericError naming the batch ids.
StepResult train_step(DualHeadModel& model, std::span<const EncodedPreference> batch,
                      std::span<const ReferenceLogProbs> reference, const TrainConfig& cfg,
                      AdamW& optim);
StepResult train_step(DualHeadModel& model, const DualHeadModel& reference,
                      std::span<const EncodedPreference> batch, const TrainConfig& cfg,
                      AdamW& optim);

struct EvalEntry {
  std::int64_t step = 0;
  double val_accuracy = 0.0;
  double val_mean_reward = 0.0;
  double val_margin = 0.0;
};

nlohmann::json eval_log_entry(const EvalEntry& e);

struct TrainLog {
  std::string mode;
  std::vector<std::pair<std::int64_t, LossBreakdown>> steps;
  std::vector<EvalEntry> evals;
  std::int64_t best_step = 0;
  bool stopped_early = false;
};

// Single writer of a run directory: config.json, train_log.jsonl,
// checkpoints/step_N.ckpt, best.ckpt and final.ckpt. Holds `.lock` for its lifetime.
class RunWriter {
 public:
  // A non-empty directory is refused unless `force` is set.
  RunWriter(std::filesystem::path dir, bool force);
  ~RunWriter();
  RunWriter(const RunWriter&) = delete;
  RunWriter& operator=(const RunWriter&) = delete;

  const std::filesystem::path& dir() const { return dir_; }
  void write_config(const nlohmann::json& config);
  void log(const nlohmann::json& line);
  void save(const Checkpoint& ckpt);
  void save_best(const Checkpoint& ckpt);
  void save_final(const Checkpoint& ckpt);

 private:
  std::filesystem::path dir_;
  std::filesystem::path lock_;
  std::ofstream log_;
};

// Claims `dir` for writing: creates it, refuses a non-empty one without
// `force`, and takes the lockfile. Returns the lock path.
std::filesystem::path claim_run_dir(const std::filesystem::path& dir, bool force);

struct FitOptions {
  RunWriter* writer = nullptr;
  // Tag stored in checkpoint metadata.
  std::string data_tag;
};

struct FitResult {
  Checkpoint best;
  TrainLog log;
  DualHeadModel best_model;
  // Parameters after the last executed step.
  DualHeadModel final_model;
};

std::vector<EncodedPreference> encode_records(std::span<const PreferenceRecord> records,
                                              const ModelConfig& cfg);

// Hash of the resolved model + train configuration.
std::string config_hash(const ModelConfig& model, const TrainConfig& train);

// Draw order from Rng(cfg.seed): model init, then one derived seed per epoch
// shuffle. The reference snapshot is taken before step 0. Validation runs at
// step 0, every eval_every() steps and after the last step; the best
// validation accuracy wins, ties keeping the earliest step.
FitResult fit(const ModelConfig& model_cfg, const DatasetSplit& data, const TrainConfig& cfg,
              const FitOptions& options = {});
// Same loop from an already initialised model (the init draw is skipped).
FitResult fit(DualHeadModel model, const DatasetSplit& data, const TrainConfig& cfg,
              const FitOptions& options = {});

struct SweepRun {
  double alpha = 0.0;
  FitResult result;
  double final_accuracy = 0.0;
};

struct SweepResult {
  std::vector<double> alphas;
  std::vector<std::int64_t> steps;  // shared evaluation grid
  std::vector<std::vector<double>> margin;    // [alpha][step]
  std::vector<std::vector<double>> accuracy;  // [alpha][step]
  std::vector<SweepRun> runs;
};

struct SweepOptions {
  // When set, each alpha runs into <out_dir>/alpha_<value>/.
  std::optional<std::filesystem::path> out_dir;
  bool force = false;
  std::string data_tag;
};

// fit per alpha with identical seed and data. Early stopping is disabled so
// every run shares one step grid.
SweepResult alpha_sweep(const ModelConfig& model_cfg, const DatasetSplit& data,
                        const TrainConfig& base, const std::vector<double>& alphas,
                        const SweepOptions& options = {});

std::string alpha_label(double alpha);

// Wide tables: step, then one column per alpha.
void write_sweep_series(const std::filesystem::path& dir, const SweepResult& sweep);

}  // namespace hafrm
