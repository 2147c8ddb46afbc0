#include "hafrm/train.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <iomanip>
#include <memory>
#include <numeric>
#include <sstream>

#include "hafrm/errors.hpp"
#include "hafrm/eval.hpp"
#include "hafrm/hash.hpp"
#include "hafrm/rng.hpp"

namespace hafrm {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (!(eval_every_frac > 0.0 && eval_every_frac <= 1.0)) {
    throw ConfigError("eval_every_frac must lie in (0, 1]");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!std::isfinite(max_grad_norm)) throw ConfigError("max_grad_norm must be finite");
  if (early_stop_patience < 0) throw ConfigError("early_stop_patience must be >= 0");
  hybrid.validate(allow_negative_alpha);
}

int TrainConfig::eval_every() const {
  const double raw = std::ceil(eval_every_frac * static_cast<double>(max_steps));
  return std::max(1, static_cast<int>(raw));
}

AdamWConfig TrainConfig::adamw() const {
  return {lr, adam_beta1, adam_beta2, adam_eps, weight_decay};
}

std::string TrainConfig::mode() const {
  if (objective == Objective::kHybrid && hybrid.alpha == 0.0) return "baseline";
  return to_string(objective);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr", c.lr},
                     {"batch_size", c.batch_size},
                     {"max_steps", c.max_steps},
                     {"eval_every_frac", c.eval_every_frac},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps},
                     {"weight_decay", c.weight_decay},
                     {"max_grad_norm", c.max_grad_norm},
                     {"seed", c.seed},
                     {"alpha", c.hybrid.alpha},
                     {"tau", c.hybrid.tau},
                     {"objective", to_string(c.objective)},
                     {"early_stop_patience", c.early_stop_patience},
                     {"allow_negative_alpha", c.allow_negative_alpha}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.lr = j.value("lr", d.lr);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.eval_every_frac = j.value("eval_every_frac", d.eval_every_frac);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.max_grad_norm = j.value("max_grad_norm", d.max_grad_norm);
  c.seed = j.value("seed", d.seed);
  c.hybrid.alpha = j.value("alpha", d.hybrid.alpha);
  c.hybrid.tau = j.value("tau", d.hybrid.tau);
  c.objective = objective_from_string(j.value("objective", to_string(d.objective)));
  c.early_stop_patience = j.value("early_stop_patience", d.early_stop_patience);
  c.allow_negative_alpha = j.value("allow_negative_alpha", d.allow_negative_alpha);
}

namespace {

std::string batch_ids(std::span<const EncodedPreference> batch) {
  std::string ids;
  for (const auto& p : batch) {
    if (!ids.empty()) ids += ", ";
    ids += p.id;
  }
  return ids;
}

}  // namespace

StepResult train_step(DualHeadModel& model, std::span<const EncodedPreference> batch,
                      std::span<const ReferenceLogProbs> reference, const TrainConfig& cfg,
                      AdamW& optim) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  if (!model.trainable()) throw ContractError("train_step: model is frozen");
  StepResult out;
  optim.zero_grad();
  {
    Tape tape;
    Tape::Scope scope(&tape);
    HybridLoss loss;
    try {
      loss = hybrid_loss(batch, model, reference, cfg.hybrid, cfg.objective);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + "; batch ids: " + batch_ids(batch));
    }
    out.breakdown = loss.breakdown;
    if (!std::isfinite(out.breakdown.l_h)) {
      throw NumericError("non-finite training loss; batch ids: " + batch_ids(batch));
    }
    backward(loss.objective, tape);
  }
  std::vector<Tensor> params = optim.params();
  out.grad_norm = clip_grad_norm(params, cfg.max_grad_norm);
  if (!std::isfinite(out.grad_norm)) {
    throw NumericError("non-finite gradient norm; batch ids: " + batch_ids(batch));
  }
  out.clipped_grad_norm = global_grad_norm(params);
  optim.step();
  return out;
}

StepResult train_step(DualHeadModel& model, const DualHeadModel& reference,
                      std::span<const EncodedPreference> batch, const TrainConfig& cfg,
                      AdamW& optim) {
  std::vector<ReferenceLogProbs> ref;
  if (cfg.objective != Objective::kBaseline) {
    for (const auto& p : batch) ref.push_back(reference_log_probs(reference, p));
  }
  return train_step(model, batch, ref, cfg, optim);
}

nlohmann::json eval_log_entry(const EvalEntry& e) {
  return {{"step", e.step},
          {"val_accuracy", e.val_accuracy},
          {"val_mean_reward", e.val_mean_reward},
          {"val_margin", e.val_margin}};
}

fs::path claim_run_dir(const fs::path& dir, bool force) {
  fs::create_directories(dir);
  const fs::path lock = dir / ".lock";
  if (fs::exists(lock) && !force) {
    throw ConfigError("run directory " + dir.string() + " is locked by another writer (" +
                      lock.string() + ")");
  }
  if (!force && fs::directory_iterator(dir) != fs::directory_iterator()) {
    throw ConfigError("run directory " + dir.string() + " is not empty; pass --force to reuse it");
  }
  if (force) fs::remove(lock);
  const int fd = ::open(lock.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) throw ConfigError("cannot take lock " + lock.string());
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
  return lock;
}

RunWriter::RunWriter(fs::path dir, bool force) : dir_(std::move(dir)) {
  lock_ = claim_run_dir(dir_, force);
  // A forced rerun replaces the previous run's checkpoints.
  fs::remove_all(dir_ / "checkpoints");
  fs::remove(dir_ / "best.ckpt");
  log_.open(dir_ / "train_log.jsonl", std::ios::trunc);
  if (!log_) throw ConfigError("cannot write " + (dir_ / "train_log.jsonl").string());
}

RunWriter::~RunWriter() {
  log_.close();
  std::error_code ec;
  fs::remove(lock_, ec);
}

void RunWriter::write_config(const nlohmann::json& config) {
  std::ofstream out(dir_ / "config.json", std::ios::trunc);
  out << config.dump(2) << '\n';
  if (!out) throw ConfigError("cannot write " + (dir_ / "config.json").string());
}

void RunWriter::log(const nlohmann::json& line) {
  log_ << line.dump() << '\n';
  log_.flush();
}

void RunWriter::save(const Checkpoint& ckpt) {
  fs::create_directories(dir_ / "checkpoints");
  save_checkpoint(dir_ / "checkpoints" / ("step_" + std::to_string(ckpt.step) + ".ckpt"), ckpt);
}

void RunWriter::save_best(const Checkpoint& ckpt) { save_checkpoint(dir_ / "best.ckpt", ckpt); }
void RunWriter::save_final(const Checkpoint& ckpt) { save_checkpoint(dir_ / "final.ckpt", ckpt); }

std::vector<EncodedPreference> encode_records(std::span<const PreferenceRecord> records,
                                              const ModelConfig& cfg) {
  std::vector<EncodedPreference> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    try {
      out.push_back({r.id, encode_pair(r.prompt, r.chosen, cfg),
                     encode_pair(r.prompt, r.rejected, cfg)});
    } catch (const LengthError& e) {
      throw LengthError("record " + r.id + ": " + e.what());
    }
  }
  return out;
}

std::string config_hash(const ModelConfig& model, const TrainConfig& train) {
  const nlohmann::json j{{"model", model}, {"train", train}};
  return hex64(fnv1a64(j.dump()));
}

namespace {

FitResult fit_impl(DualHeadModel model, const DatasetSplit& data, const TrainConfig& cfg,
                   const FitOptions& options, Rng& rng) {
  cfg.validate();
  if (data.train.empty()) throw ContractError("fit: empty training set");
  if (data.validation.empty()) throw ContractError("fit: empty validation set");

  const ModelConfig& mcfg = model.config();
  const auto train = encode_records(data.train, mcfg);
  const auto val = encode_records(data.validation, mcfg);
  const std::string hash = config_hash(mcfg, cfg);
  RunWriter* writer = options.writer;

  const DualHeadModel reference = model.snapshot_reference();
  const bool needs_reference = cfg.objective != Objective::kBaseline;
  std::vector<std::optional<ReferenceLogProbs>> ref_cache(train.size());

  AdamW optim(cfg.adamw(), model.parameters());

  TrainLog log;
  log.mode = cfg.mode();
  if (writer != nullptr) {
    writer->log({{"format", "hafrm-trainlog-v1"},
                 {"mode", log.mode},
                 {"config_hash", hash},
                 {"n_train", train.size()},
                 {"n_validation", val.size()}});
  }

  auto capture = [&](std::int64_t step, const EvalEntry& e) {
    Checkpoint c = Checkpoint::capture(model, &optim.state());
    c.step = step;
    c.val_accuracy = e.val_accuracy;
    c.val_mean_reward = e.val_mean_reward;
    c.config_hash = hash;
    c.meta = {{"mode", log.mode},
              {"objective", to_string(cfg.objective)},
              {"alpha", cfg.hybrid.alpha},
              {"tau", cfg.hybrid.tau},
              {"data", options.data_tag},
              {"train", cfg}};
    return c;
  };

  std::optional<Checkpoint> best;
  std::optional<DualHeadModel> best_model;
  double best_accuracy = -1.0;
  int since_best = 0;

  // Returns true when training should stop early.
  auto evaluate = [&](std::int64_t step) {
    const auto report = pairwise_accuracy(model, val);
    EvalEntry e{step, report.accuracy, report.mean_reward, report.mean_margin};
    log.evals.push_back(e);
    if (writer != nullptr) writer->log(eval_log_entry(e));
    if (report.accuracy > best_accuracy) {
      best_accuracy = report.accuracy;
      best = capture(step, e);
      best_model = model.clone();
      log.best_step = step;
      since_best = 0;
      if (writer != nullptr) writer->save(*best);
      return false;
    }
    ++since_best;
    return cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience;
  };

  const std::size_t n = train.size();
  const std::size_t batch_size = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  std::vector<std::size_t> order(n);
  std::size_t cursor = n;  // forces a shuffle before the first batch

  const std::int64_t max_steps = cfg.max_steps;
  const std::int64_t every = cfg.eval_every();
  bool stop = evaluate(0);
  std::vector<EncodedPreference> batch;
  std::vector<ReferenceLogProbs> batch_ref;
  for (std::int64_t step = 0; step < max_steps && !stop;) {
    if (cursor + batch_size > n) {
      std::iota(order.begin(), order.end(), 0);
      Rng epoch(rng.next());
      epoch.shuffle(order);
      cursor = 0;
    }
    batch.clear();
    batch_ref.clear();
    for (std::size_t i = 0; i < batch_size; ++i) {
      const std::size_t idx = order[cursor + i];
      batch.push_back(train[idx]);
      if (needs_reference) {
        if (!ref_cache[idx]) ref_cache[idx] = reference_log_probs(reference, train[idx]);
        batch_ref.push_back(*ref_cache[idx]);
      }
    }
    cursor += batch_size;

    const StepResult r = train_step(model, batch, batch_ref, cfg, optim);
    log.steps.emplace_back(step, r.breakdown);
    if (writer != nullptr) writer->log(loss_log_entry(step, r.breakdown));
    ++step;
    if (step % every == 0 || step == max_steps) {
      stop = evaluate(step);
      if (stop) log.stopped_early = step < max_steps;
    }
  }

  if (writer != nullptr) {
    writer->save_best(*best);
    // The last evaluation always follows the last executed step.
    writer->save_final(capture(log.evals.back().step, log.evals.back()));
  }
  return FitResult{std::move(*best), std::move(log), std::move(*best_model), std::move(model)};
}

}  // namespace

FitResult fit(const ModelConfig& model_cfg, const DatasetSplit& data, const TrainConfig& cfg,
              const FitOptions& options) {
  cfg.validate();
  Rng rng(cfg.seed);
  DualHeadModel model = DualHeadModel::init(model_cfg, rng);
  return fit_impl(std::move(model), data, cfg, options, rng);
}

FitResult fit(DualHeadModel model, const DatasetSplit& data, const TrainConfig& cfg,
              const FitOptions& options) {
  Rng rng(cfg.seed);
  return fit_impl(std::move(model), data, cfg, options, rng);
}

std::string alpha_label(double alpha) {
  std::ostringstream out;
  out << alpha;
  return out.str();
}

SweepResult alpha_sweep(const ModelConfig& model_cfg, const DatasetSplit& data,
                        const TrainConfig& base, const std::vector<double>& alphas,
                        const SweepOptions& options) {
  if (alphas.empty()) throw ConfigError("alpha_sweep: no alphas given");
  for (double a : alphas) {
    if (a < 0.0 && !base.allow_negative_alpha) {
      throw ConfigError("negative alpha " + alpha_label(a) + " requires --allow-negative");
    }
  }
  SweepResult sweep;
  sweep.alphas = alphas;
  for (double a : alphas) {
    TrainConfig cfg = base;
    cfg.objective = Objective::kHybrid;
    cfg.hybrid.alpha = a;
    cfg.early_stop_patience = 0;
    std::unique_ptr<RunWriter> writer;
    if (options.out_dir) {
      writer = std::make_unique<RunWriter>(*options.out_dir / ("alpha_" + alpha_label(a)),
                                           options.force);
      writer->write_config({{"model", model_cfg}, {"train", cfg}, {"data", options.data_tag}});
    }
    FitOptions fo;
    fo.writer = writer.get();
    fo.data_tag = options.data_tag;
    FitResult r = fit(model_cfg, data, cfg, fo);

    std::vector<std::int64_t> steps;
    std::vector<double> margin, accuracy;
    for (const auto& e : r.log.evals) {
      steps.push_back(e.step);
      margin.push_back(e.val_margin);
      accuracy.push_back(e.val_accuracy);
    }
    if (sweep.runs.empty()) {
      sweep.steps = steps;
    } else if (steps != sweep.steps) {
      throw ContractError("alpha_sweep: evaluation grids differ across alphas");
    }
    sweep.margin.push_back(std::move(margin));
    sweep.accuracy.push_back(std::move(accuracy));
    const double final_acc = r.log.evals.back().val_accuracy;
    sweep.runs.push_back(SweepRun{a, std::move(r), final_acc});
  }
  return sweep;
}

void write_sweep_series(const fs::path& dir, const SweepResult& sweep) {
  fs::create_directories(dir);
  auto write = [&](const std::string& name, const std::vector<std::vector<double>>& series) {
    std::ofstream out(dir / name, std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + (dir / name).string());
    out << "step";
    for (double a : sweep.alphas) out << ",alpha_" << alpha_label(a);
    out << '\n';
    for (std::size_t i = 0; i < sweep.steps.size(); ++i) {
      out << sweep.steps[i];
      for (const auto& s : series) out << ',' << format_double(s[i]);
      out << '\n';
    }
  };
  write("margin_vs_step.csv", sweep.margin);
  write("acc_vs_step.csv", sweep.accuracy);
}

}  // namespace hafrm
