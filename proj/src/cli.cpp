#include "hafrm/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hafrm/checkpoint.hpp"
#include "hafrm/data.hpp"
#include "hafrm/errors.hpp"
#include "hafrm/eval.hpp"
#include "hafrm/hash.hpp"
#include "hafrm/synth.hpp"
#include "hafrm/train.hpp"

namespace hafrm {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Options of one subcommand. Values resolve as flag > HAFRM_SEED (seed only)
// > --config file > built-in default; the resolved set is what config.json
// records and what a replay reads back.
struct Command {
  explicit Command(std::string command) : name(std::move(command)) {}

  std::string name;
  CLI::App* app = nullptr;
  json defaults = json::object();
  json flags = json::object();
  std::string config_path;

  template <typename T>
  void option(const std::string& flag, const std::string& key, T fallback,
              const std::string& help) {
    defaults[key] = fallback;
    app->add_option_function<T>(
        flag, [this, key](const T& v) { flags[key] = v; }, help);
  }

  void toggle(const std::string& flag, const std::string& key, const std::string& help) {
    defaults[key] = false;
    app->add_flag_callback(flag, [this, key]() { flags[key] = true; }, help);
  }

  void add_config_option() {
    app->add_option("--config", config_path, "JSON config; flags override its values");
  }

  json resolve() const {
    json r = defaults;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot open config " + config_path);
      json file;
      try {
        file = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ConfigError("config " + config_path + " is not valid JSON: " + e.what());
      }
      if (file.contains("command") && file["command"] != name) {
        throw ConfigError("config " + config_path + " was written by '" +
                          file["command"].get<std::string>() + "', not '" + name + "'");
      }
      const json& options = file.contains("options") ? file["options"] : file;
      if (!options.is_object()) throw ConfigError("config options must be a JSON object");
      for (const auto& [key, value] : options.items()) {
        if (key == "command") continue;
        if (!defaults.contains(key)) {
          throw ConfigError("unknown option '" + key + "' in config " + config_path);
        }
        r[key] = value;
      }
    }
    if (defaults.contains("seed")) {
      if (const char* env = std::getenv("HAFRM_SEED"); env != nullptr && *env != '\0') {
        std::uint64_t seed = 0;
        std::istringstream in(env);
        if (!(in >> seed) || !in.eof()) {
          throw ConfigError(std::string("HAFRM_SEED is not an unsigned integer: ") + env);
        }
        r["seed"] = seed;
      }
    }
    for (const auto& [key, value] : flags.items()) r[key] = value;
    return r;
  }
};

template <typename T>
T get(const json& r, const std::string& key) {
  try {
    return r.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("option '" + key + "' has the wrong type: " + e.what());
  }
}

json command_config(const std::string& name, const json& options) {
  return {{"command", name}, {"options", options}};
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw ConfigError("cannot write " + path.string());
}

// Lockfile guard for output directories not managed by a RunWriter.
class DirClaim {
 public:
  DirClaim(const fs::path& dir, bool force) : lock_(claim_run_dir(dir, force)) {}
  ~DirClaim() {
    std::error_code ec;
    fs::remove(lock_, ec);
  }
  DirClaim(const DirClaim&) = delete;
  DirClaim& operator=(const DirClaim&) = delete;

 private:
  fs::path lock_;
};

void add_model_options(Command& c) {
  ModelConfig d;
  c.option<int>("--d-model", "d_model", d.d_model, "Hidden width");
  c.option<int>("--layers", "n_layers", d.n_layers, "Transformer blocks");
  c.option<int>("--heads", "n_heads", d.n_heads, "Attention heads");
  c.option<int>("--max-seq-len", "max_seq_len", d.max_seq_len, "Maximum sequence length");
}

void add_train_options(Command& c) {
  TrainConfig d;
  c.option<std::vector<std::string>>("--data", "data", {}, "Preference JSONL file(s)");
  c.option<double>("--alpha", "alpha", d.hybrid.alpha, "Policy-loss weight");
  c.option<double>("--tau", "tau", d.hybrid.tau, "DPO log-ratio scale");
  c.option<std::string>("--objective", "objective", to_string(d.objective),
                        "hybrid, baseline or dpo");
  c.option<double>("--lr", "lr", d.lr, "AdamW learning rate");
  c.option<int>("--batch-size", "batch_size", d.batch_size, "Pairs per step");
  c.option<int>("--max-steps", "max_steps", d.max_steps, "Optimizer steps");
  c.option<double>("--eval-every-frac", "eval_every_frac", d.eval_every_frac,
                   "Validation interval as a fraction of max steps");
  c.option<double>("--beta1", "adam_beta1", d.adam_beta1, "AdamW beta1");
  c.option<double>("--beta2", "adam_beta2", d.adam_beta2, "AdamW beta2");
  c.option<double>("--adam-eps", "adam_eps", d.adam_eps, "AdamW epsilon");
  c.option<double>("--weight-decay", "weight_decay", d.weight_decay, "Decoupled weight decay");
  c.option<double>("--max-grad-norm", "max_grad_norm", d.max_grad_norm,
                   "Global gradient norm bound (<= 0 disables)");
  c.option<int>("--patience", "early_stop_patience", d.early_stop_patience,
                "Evaluations without improvement before stopping (0 = never)");
  c.option<std::uint64_t>("--seed", "seed", d.seed, "Seed for init, split and shuffles");
  c.option<double>("--test-frac", "test_frac", 0.1, "Held-out test fraction");
  c.option<double>("--val-frac", "val_frac", 0.05, "Validation fraction");
  add_model_options(c);
}

ModelConfig model_config_from(const json& r) {
  ModelConfig m;
  m.d_model = get<int>(r, "d_model");
  m.n_layers = get<int>(r, "n_layers");
  m.n_heads = get<int>(r, "n_heads");
  m.max_seq_len = get<int>(r, "max_seq_len");
  m.seed = get<std::uint64_t>(r, "seed");
  m.validate();
  return m;
}

TrainConfig train_config_from(const json& r) {
  TrainConfig t;
  t.lr = get<double>(r, "lr");
  t.batch_size = get<int>(r, "batch_size");
  t.max_steps = get<int>(r, "max_steps");
  t.eval_every_frac = get<double>(r, "eval_every_frac");
  t.adam_beta1 = get<double>(r, "adam_beta1");
  t.adam_beta2 = get<double>(r, "adam_beta2");
  t.adam_eps = get<double>(r, "adam_eps");
  t.weight_decay = get<double>(r, "weight_decay");
  t.max_grad_norm = get<double>(r, "max_grad_norm");
  t.seed = get<std::uint64_t>(r, "seed");
  t.hybrid.alpha = get<double>(r, "alpha");
  t.hybrid.tau = get<double>(r, "tau");
  t.objective = objective_from_string(get<std::string>(r, "objective"));
  t.early_stop_patience = get<int>(r, "early_stop_patience");
  if (r.contains("allow_negative")) t.allow_negative_alpha = get<bool>(r, "allow_negative");
  return t;
}

struct LoadedData {
  std::vector<PreferenceRecord> records;
  std::string tag;
};

LoadedData load_data(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ConfigError("--data is required");
  LoadedData d;
  for (const auto& p : paths) {
    auto recs = load_jsonl(p);
    d.records.insert(d.records.end(), recs.begin(), recs.end());
    if (!d.tag.empty()) d.tag += "+";
    d.tag += fs::path(p).stem().string();
  }
  return d;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << v;
  return out.str();
}

int cmd_train(const Command& c, const std::string& out_dir, bool force, std::ostream& out) {
  const json r = c.resolve();
  const ModelConfig mcfg = model_config_from(r);
  const TrainConfig tcfg = train_config_from(r);
  tcfg.validate();
  if (out_dir.empty()) throw ConfigError("--out is required");
  const auto data = load_data(get<std::vector<std::string>>(r, "data"));
  const DatasetSplit sp = split(data.records, tcfg.seed, get<double>(r, "test_frac"),
                                get<double>(r, "val_frac"));

  RunWriter writer(out_dir, force);
  writer.write_config(command_config(c.name, r));
  FitOptions fo;
  fo.writer = &writer;
  fo.data_tag = data.tag;
  const FitResult res = fit(mcfg, sp, tcfg, fo);

  json summary{{"mode", res.log.mode},
               {"best_step", res.best.step},
               {"best_val_accuracy", res.best.val_accuracy},
               {"stopped_early", res.log.stopped_early},
               {"steps_run", res.log.steps.size()},
               {"n_train", sp.train.size()},
               {"n_validation", sp.validation.size()},
               {"n_test", sp.test.size()}};
  if (!sp.test.empty()) {
    const auto test = encode_records(sp.test, mcfg);
    summary["test_accuracy"] = pairwise_accuracy(res.best_model, test).accuracy;
  }
  write_json_file(fs::path(out_dir) / "summary.json", summary);
  out << "mode " << res.log.mode << ", best step " << res.best.step << ", validation accuracy "
      << fmt(res.best.val_accuracy) << '\n';
  return 0;
}

// The reference policy of a run is its initial model, which a checkpoint
// reproduces from the model config and the training seed.
DualHeadModel reference_for(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("train") || !ckpt.meta["train"].contains("seed")) {
    throw ConfigError("checkpoint has no training seed; cannot rebuild its reference model");
  }
  Rng rng(ckpt.meta["train"]["seed"].get<std::uint64_t>());
  return DualHeadModel::init(ckpt.model_config, rng);
}

struct LoadedModel {
  std::string tag;
  DualHeadModel model;
  std::optional<DualHeadModel> reference;
  std::unique_ptr<RewardScorer> scorer;
};

std::vector<std::unique_ptr<LoadedModel>> load_models(const std::vector<std::string>& paths,
                                                      const std::string& scorer) {
  if (scorer != "reward" && scorer != "implicit") {
    throw ConfigError("--scorer must be reward or implicit (got '" + scorer + "')");
  }
  std::vector<std::unique_ptr<LoadedModel>> models;
  for (const auto& p : paths) {
    const Checkpoint ckpt = load_checkpoint(p);
    std::string tag = ckpt.meta.value("data", std::string());
    if (tag.empty()) tag = fs::path(p).stem().string();
    auto m = std::make_unique<LoadedModel>(LoadedModel{tag, ckpt.restore_model(), std::nullopt, {}});
    if (scorer == "implicit") {
      m->reference = reference_for(ckpt);
      m->scorer = std::make_unique<ImplicitRewardScorer>(m->model, *m->reference);
    } else {
      m->scorer = std::make_unique<ModelScorer>(m->model);
    }
    models.push_back(std::move(m));
  }
  return models;
}

int cmd_eval(const Command& c, const std::string& report_dir, bool force, std::ostream& out) {
  const json r = c.resolve();
  const auto ckpts = get<std::vector<std::string>>(r, "ckpt");
  const auto data_paths = get<std::vector<std::string>>(r, "data");
  const auto ood_path = get<std::string>(r, "ood");
  if (ckpts.empty()) throw ConfigError("--ckpt is required");
  if (data_paths.empty()) throw ConfigError("--data is required");
  if (report_dir.empty()) throw ConfigError("--report is required");

  std::vector<std::pair<std::string, std::vector<PreferenceRecord>>> datasets;
  for (const auto& p : data_paths) datasets.emplace_back(fs::path(p).stem().string(), load_jsonl(p));
  std::map<std::string, std::string> groups;
  if (!ood_path.empty()) {
    std::ifstream in(ood_path);
    if (!in) throw ConfigError("cannot open group map " + ood_path);
    try {
      groups = json::parse(in).get<std::map<std::string, std::string>>();
    } catch (const json::exception& e) {
      throw ConfigError("group map " + ood_path + " must map tags to group names: " + e.what());
    }
  }
  const auto models = load_models(ckpts, get<std::string>(r, "scorer"));
  std::vector<std::pair<std::string, const RewardScorer*>> scorers;
  for (const auto& m : models) scorers.emplace_back(m->tag, m->scorer.get());
  // Validate the group map before any output is written.
  if (!ood_path.empty()) {
    for (const auto& [tag, s] : scorers) {
      if (!groups.count(tag)) throw ConfigError("group map has no entry for tag '" + tag + "'");
    }
    for (const auto& [tag, recs] : datasets) {
      if (!groups.count(tag)) throw ConfigError("group map has no entry for tag '" + tag + "'");
    }
  }

  DirClaim claim(report_dir, force);
  write_json_file(fs::path(report_dir) / "config.json", command_config(c.name, r));
  std::vector<std::pair<std::string, AccuracyReport>> rows;
  for (const auto& [tag, scorer] : scorers) {
    for (const auto& [dtag, recs] : datasets) {
      rows.emplace_back(tag, pairwise_accuracy(*scorer, recs, dtag));
      out << tag << " on " << dtag << ": accuracy " << fmt(rows.back().second.accuracy)
          << ", margin " << fmt(rows.back().second.mean_margin) << '\n';
    }
  }
  write_accuracy_csv(fs::path(report_dir) / "accuracy.csv", rows);
  if (!ood_path.empty()) {
    const OODMatrix m = ood_matrix(scorers, datasets, groups);
    write_ood_csv(fs::path(report_dir) / "ood_matrix.csv", m);
    write_json_file(fs::path(report_dir) / "ood_matrix.json", ood_json(m));
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
      out << "rAcc " << m.rows[i] << ": " << fmt(m.racc[i])
          << (m.racc_in_distribution_only[i] ? " (in-distribution only)" : "") << '\n';
    }
  }
  return 0;
}

std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t pos = 0;
    long v = 0;
    try {
      v = std::stol(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v < 1) throw ConfigError("--k entries must be positive integers");
    ks.push_back(static_cast<std::size_t>(v));
  }
  if (ks.empty()) throw ConfigError("--k is empty");
  return ks;
}

int cmd_bon(const Command& c, const std::string& out_dir, bool force, std::ostream& out,
            std::ostream& err) {
  const json r = c.resolve();
  const auto ckpt_path = get<std::string>(r, "ckpt");
  const auto prompts_path = get<std::string>(r, "prompts");
  const auto n = get<int>(r, "n");
  const auto temperature = get<double>(r, "temperature");
  const auto judge_spec = get<std::string>(r, "judge");
  const auto candidates_mode = get<std::string>(r, "candidates");
  const auto scorer_name = get<std::string>(r, "scorer");
  const auto seed = get<std::uint64_t>(r, "seed");
  SampleOptions sample_opts;
  sample_opts.max_new_tokens = static_cast<std::size_t>(get<int>(r, "max_new_tokens"));

  if (prompts_path.empty()) throw ConfigError("--prompts is required");
  if (out_dir.empty()) throw ConfigError("--out is required");
  if (n < 2) throw ConfigError("--n must be >= 2");
  if (candidates_mode != "sample" && candidates_mode != "synth") {
    throw ConfigError("--candidates must be sample or synth");
  }
  const auto ks = parse_k_list(get<std::string>(r, "k"));

  std::optional<Checkpoint> ckpt;
  std::optional<DualHeadModel> model, reference;
  const bool needs_model = candidates_mode == "sample" || scorer_name == "reward" ||
                           scorer_name == "implicit";
  if (needs_model) {
    if (ckpt_path.empty()) throw ConfigError("--ckpt is required for this scorer/candidate mode");
    ckpt = load_checkpoint(ckpt_path);
    model = ckpt->restore_model();
  }
  std::unique_ptr<RewardScorer> scorer;
  if (scorer_name == "reward") {
    scorer = std::make_unique<ModelScorer>(*model);
  } else if (scorer_name == "implicit") {
    reference = reference_for(*ckpt);
    scorer = std::make_unique<ImplicitRewardScorer>(*model, *reference);
  } else if (scorer_name == "oracle") {
    scorer = std::make_unique<OracleScorer>();
  } else if (scorer_name == "random") {
    scorer = std::make_unique<RandomScorer>(seed);
  } else {
    throw ConfigError("--scorer must be reward, implicit, oracle or random");
  }

  std::unique_ptr<Judge> judge;
  if (judge_spec == "oracle") {
    judge = std::make_unique<OracleJudge>();
  } else if (judge_spec.rfind("file:", 0) == 0) {
    judge = std::make_unique<FileJudge>(judge_spec.substr(5));
  } else if (!judge_spec.empty()) {
    throw ConfigError("--judge must be oracle or file:<path>");
  }
  for (std::size_t k : ks) {
    if (k >= static_cast<std::size_t>(n)) {
      throw ConfigError("--k " + std::to_string(k) + " must be smaller than --n " +
                        std::to_string(n));
    }
  }

  const auto prompts = load_prompts(prompts_path);
  if (prompts.empty()) throw ConfigError("prompt file " + prompts_path + " is empty");
  if (auto* fj = dynamic_cast<FileJudge*>(judge.get())) {
    for (const auto& p : prompts) {
      if (!fj->has(p.id)) throw ConfigError("judge file has no ranking for prompt '" + p.id + "'");
    }
  }

  DirClaim claim(out_dir, force);
  write_json_file(fs::path(out_dir) / "config.json", command_config(c.name, r));
  std::ofstream bon(fs::path(out_dir) / "bon.jsonl", std::ios::trunc);
  Rng master(seed);
  std::vector<BestOfNResult> results;
  for (const auto& p : prompts) {
    const std::uint64_t prompt_seed = master.next();
    std::vector<std::string> cands;
    if (candidates_mode == "sample") {
      cands = sample_candidates(*model, p.prompt, static_cast<std::size_t>(n), temperature,
                                prompt_seed, sample_opts);
    } else {
      Rng rng(prompt_seed);
      cands = synth_candidates(p.source, static_cast<std::size_t>(n), rng);
    }
    BestOfNResult res = best_of_n(*scorer, p.id, p.prompt, cands, p.source);
    if (judge) res.judge_ranking = judge_ranking(*judge, p.id, p.prompt, cands, p.source);
    json line = bon_json(res);
    line["candidates"] = cands;
    bon << line.dump() << '\n';
    results.push_back(std::move(res));
  }
  bon.close();
  if (!judge) {
    err << "notice: no --judge given; recall skipped\n";
    out << "scored " << results.size() << " prompts\n";
    return 0;
  }
  std::vector<RecallReport> recall;
  for (std::size_t k : ks) {
    recall.push_back(top_k_recall(results, k, get<bool>(r, "overlap") ? RecallMode::kOverlap
                                                                      : RecallMode::kMembership));
    out << "top-" << k << " recall " << fmt(recall.back().recall) << '\n';
  }
  write_recall_csv(fs::path(out_dir) / "recall.csv", recall);
  return 0;
}

std::vector<double> parse_alphas(const std::string& text) {
  std::vector<double> alphas;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (item.empty() || pos != item.size() || !std::isfinite(v)) {
      throw ConfigError("--alphas entry '" + item + "' is not a number");
    }
    alphas.push_back(v);
  }
  if (alphas.empty()) throw ConfigError("--alphas is empty");
  return alphas;
}

int cmd_sweep(const Command& c, const std::string& out_dir, bool force, std::ostream& out) {
  const json r = c.resolve();
  const ModelConfig mcfg = model_config_from(r);
  TrainConfig base = train_config_from(r);
  const auto alphas = parse_alphas(get<std::string>(r, "alphas"));
  for (double a : alphas) {
    if (a < 0.0 && !base.allow_negative_alpha) {
      throw ConfigError("negative alpha " + alpha_label(a) + " requires --allow-negative");
    }
  }
  base.validate();
  if (out_dir.empty()) throw ConfigError("--out is required");
  const auto data = load_data(get<std::vector<std::string>>(r, "data"));
  const DatasetSplit sp = split(data.records, base.seed, get<double>(r, "test_frac"),
                                get<double>(r, "val_frac"));

  SweepResult sweep;
  {
    DirClaim claim(out_dir, force);
    write_json_file(fs::path(out_dir) / "config.json", command_config(c.name, r));
    SweepOptions so;
    so.out_dir = out_dir;
    so.force = force;
    so.data_tag = data.tag;
    sweep = alpha_sweep(mcfg, sp, base, alphas, so);
    write_sweep_series(out_dir, sweep);

    json summary = json::array();
    for (const auto& run : sweep.runs) {
      const auto& log = run.result.log;
      double best_margin = 0.0;
      for (const auto& e : log.evals) {
        if (e.step == log.best_step) best_margin = e.val_margin;
      }
      summary.push_back({{"alpha", run.alpha},
                         {"negative", run.alpha < 0.0},
                         {"mode", log.mode},
                         {"best_step", log.best_step},
                         {"best_val_accuracy", run.result.best.val_accuracy},
                         {"best_margin", best_margin},
                         {"final_val_accuracy", run.final_accuracy}});
      out << "alpha " << alpha_label(run.alpha) << (run.alpha < 0.0 ? " [negative]" : "")
          << ": best accuracy " << fmt(run.result.best.val_accuracy) << " at step "
          << log.best_step << ", final accuracy " << fmt(run.final_accuracy) << '\n';
    }
    write_json_file(fs::path(out_dir) / "sweep.json", {{"runs", summary}, {"steps", sweep.steps}});
  }
  return 0;
}

int cmd_stats(const Command& c, const std::vector<std::string>& files, const std::string& out_dir,
              bool force, std::ostream& out) {
  const json r = c.resolve();
  if (files.empty()) throw ConfigError("stats needs at least one data file");
  std::vector<DatasetStats> rows;
  for (const auto& f : files) rows.push_back(compute_stats(load_jsonl(f), fs::path(f).stem().string()));
  const std::string table = render_stats_table(rows);
  const json j = stats_json(rows);
  if (get<bool>(r, "json")) {
    out << j.dump(2) << '\n';
  } else {
    out << table;
  }
  if (!out_dir.empty()) {
    DirClaim claim(out_dir, force);
    json resolved = r;
    resolved["files"] = files;
    write_json_file(fs::path(out_dir) / "config.json", command_config(c.name, resolved));
    write_json_file(fs::path(out_dir) / "stats.json", j);
    std::ofstream(fs::path(out_dir) / "stats.txt", std::ios::trunc) << table;
  }
  return 0;
}

int cmd_synth(const std::string& rule, long long n, long long seed, const std::string& out_path,
              std::ostream& out) {
  require_synth_rule(rule);
  if (n < 1) throw ConfigError("synth: n must be >= 1");
  if (seed < 0) throw ConfigError("synth: seed must be >= 0");
  const auto corpus = synth_generate(rule, static_cast<std::size_t>(n),
                                     static_cast<std::uint64_t>(seed));
  const fs::path path(out_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_jsonl(path, corpus.records);
  const fs::path stem = path.parent_path() / path.stem();
  write_scores_jsonl(stem.string() + ".scores.jsonl", corpus.scores);
  write_json_file(stem.string() + ".config.json",
                  command_config("synth", {{"rule", rule}, {"n", n}, {"seed", seed}}));
  out << "wrote " << corpus.records.size() << " records to " << path.string() << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hybrid-aligned reward model training and evaluation"};
  app.name("hafrm");
  app.require_subcommand(1);

  std::string out_dir;
  bool force = false;

  Command train{"train"};
  train.app = app.add_subcommand("train", "Train a dual-head reward model");
  add_train_options(train);
  train.add_config_option();
  train.app->add_option("--out", out_dir, "Run directory");
  train.app->add_flag("--force", force, "Reuse a non-empty run directory");
  train.toggle("--allow-negative", "allow_negative", "Accept a negative --alpha");

  Command eval{"eval"};
  eval.app = app.add_subcommand("eval", "Pairwise accuracy and the OOD matrix");
  eval.option<std::vector<std::string>>("--ckpt", "ckpt", {}, "Checkpoint(s)");
  eval.option<std::vector<std::string>>("--data", "data", {}, "Evaluation JSONL file(s)");
  eval.option<std::string>("--ood", "ood", "", "Group map JSON {tag: group}");
  eval.option<std::string>("--scorer", "scorer", "reward", "reward or implicit (DPO)");
  eval.add_config_option();
  eval.app->add_option("--report", out_dir, "Report directory");
  eval.app->add_flag("--force", force, "Reuse a non-empty report directory");

  Command bon{"bon"};
  bon.app = app.add_subcommand("bon", "Best-of-N selection and top-k recall");
  bon.option<std::string>("--ckpt", "ckpt", "", "Checkpoint");
  bon.option<std::string>("--prompts", "prompts", "", "Prompt JSONL");
  bon.option<int>("--n", "n", 4, "Candidates per prompt");
  bon.option<double>("--temperature", "temperature", 1.0, "Sampling temperature");
  bon.option<std::string>("--judge", "judge", "", "oracle or file:<path>");
  bon.option<std::string>("--k", "k", "1,2", "Comma-separated k values for recall");
  bon.option<std::string>("--candidates", "candidates", "sample",
                          "sample (policy head) or synth (rule grammar)");
  bon.option<std::string>("--scorer", "scorer", "reward", "reward, implicit, oracle or random");
  bon.option<int>("--max-new-tokens", "max_new_tokens", 32, "Sampling length cap");
  bon.option<std::uint64_t>("--seed", "seed", 0, "Sampling seed");
  bon.toggle("--overlap", "overlap", "Recall as top-k overlap instead of membership");
  bon.add_config_option();
  bon.app->add_option("--out", out_dir, "Output directory");
  bon.app->add_flag("--force", force, "Reuse a non-empty output directory");

  Command sweep{"sweep"};
  sweep.app = app.add_subcommand("sweep", "Policy-ratio sweep with aligned series");
  add_train_options(sweep);
  sweep.option<std::string>("--alphas", "alphas", "0,0.1,0.2", "Comma-separated alphas");
  sweep.toggle("--allow-negative", "allow_negative", "Accept negative alphas");
  sweep.add_config_option();
  sweep.app->add_option("--out", out_dir, "Sweep directory");
  sweep.app->add_flag("--force", force, "Reuse a non-empty sweep directory");

  Command stats{"stats"};
  std::vector<std::string> stats_files;
  stats.app = app.add_subcommand("stats", "Dataset statistics table");
  stats.app->add_option("files", stats_files, "Preference JSONL file(s)");
  stats.toggle("--json", "json", "Print JSON instead of the table");
  stats.app->add_option("--out", out_dir, "Also write stats.txt, stats.json and config.json here");
  stats.app->add_flag("--force", force, "Reuse a non-empty output directory");

  std::string synth_rule, synth_out;
  long long synth_n = 0, synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic preference corpus");
  synth->add_option("rule", synth_rule, "marker-count, length-band or safety")->required();
  synth->add_option("n", synth_n, "Number of records")->required();
  synth->add_option("seed", synth_seed, "Generator seed")->required();
  synth->add_option("out", synth_out, "Output JSONL path")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (*train.app) return cmd_train(train, out_dir, force, out);
    if (*eval.app) return cmd_eval(eval, out_dir, force, out);
    if (*bon.app) return cmd_bon(bon, out_dir, force, out, err);
    if (*sweep.app) return cmd_sweep(sweep, out_dir, force, out);
    if (*stats.app) return cmd_stats(stats, stats_files, out_dir, force, out);
    if (*synth) return cmd_synth(synth_rule, synth_n, synth_seed, synth_out, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

}  // namespace hafrm
