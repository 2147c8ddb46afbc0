#include "hafrm/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "hafrm/errors.hpp"
#include "hafrm/hash.hpp"
#include "hafrm/ops.hpp"
#include "hafrm/rng.hpp"
#include "hafrm/synth.hpp"

namespace hafrm {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

double ModelScorer::score(const std::string& prompt, const std::string& response,
                          const std::string&) const {
  return model_.reward_value(encode_pair(prompt, response, model_.config()));
}

double ImplicitRewardScorer::score(const std::string& prompt, const std::string& response,
                                   const std::string&) const {
  return implicit_dpo_reward(policy_, reference_, prompt, response);
}

OracleScorer::OracleScorer(std::optional<std::string> rule) : rule_(std::move(rule)) {
  if (rule_) require_synth_rule(*rule_);
}

double OracleScorer::score(const std::string&, const std::string& response,
                           const std::string& source) const {
  return truth_score(rule_ ? *rule_ : source, response);
}

double RandomScorer::score(const std::string& prompt, const std::string& response,
                           const std::string&) const {
  std::uint64_t h = fnv1a64(prompt, splitmix64(seed_));
  h = fnv1a64(std::string_view("\0", 1), h);
  h = splitmix64(fnv1a64(response, h));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

namespace {

AccuracyReport finish_report(std::string dataset, std::size_t n, std::size_t correct,
                             double margin_sum, double reward_sum) {
  AccuracyReport r;
  r.dataset = std::move(dataset);
  r.n_pairs = n;
  r.n_correct = correct;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  r.mean_margin = margin_sum / static_cast<double>(n);
  r.mean_reward = reward_sum / (2.0 * static_cast<double>(n));
  return r;
}

}  // namespace

AccuracyReport pairwise_accuracy(const RewardScorer& scorer,
                                 std::span<const PreferenceRecord> records,
                                 const std::string& dataset) {
  if (records.empty()) throw ContractError("pairwise_accuracy: no records");
  std::size_t correct = 0;
  double margin = 0.0, reward = 0.0;
  for (const auto& r : records) {
    const double w = scorer.score(r.prompt, r.chosen, r.source);
    const double l = scorer.score(r.prompt, r.rejected, r.source);
    correct += (w > l);
    margin += w - l;
    reward += w + l;
  }
  return finish_report(dataset, records.size(), correct, margin, reward);
}

AccuracyReport pairwise_accuracy(const DualHeadModel& model,
                                 std::span<const EncodedPreference> pairs,
                                 const std::string& dataset) {
  if (pairs.empty()) throw ContractError("pairwise_accuracy: no records");
  std::size_t correct = 0;
  double margin = 0.0, reward = 0.0;
  for (const auto& p : pairs) {
    const double w = model.reward_value(p.chosen);
    const double l = model.reward_value(p.rejected);
    correct += (w > l);
    margin += w - l;
    reward += w + l;
  }
  return finish_report(dataset, pairs.size(), correct, margin, reward);
}

OODMatrix ood_matrix(
    const std::vector<std::pair<std::string, const RewardScorer*>>& models,
    const std::vector<std::pair<std::string, std::vector<PreferenceRecord>>>& datasets,
    const std::map<std::string, std::string>& groups) {
  if (models.empty() || datasets.empty()) {
    throw ConfigError("ood_matrix: need at least one model and one dataset");
  }
  auto group_of = [&](const std::string& tag) {
    auto it = groups.find(tag);
    if (it == groups.end()) throw ConfigError("group map has no entry for tag '" + tag + "'");
    return it->second;
  };
  for (const auto& [tag, scorer] : models) {
    if (scorer == nullptr) throw ConfigError("ood_matrix: no model for tag '" + tag + "'");
    group_of(tag);
  }
  for (const auto& [tag, recs] : datasets) group_of(tag);

  OODMatrix m;
  for (const auto& [tag, recs] : datasets) m.columns.push_back(tag);
  for (const auto& [row_tag, scorer] : models) {
    m.rows.push_back(row_tag);
    const std::string row_group = group_of(row_tag);
    std::vector<OODCell> row;
    double off_sum = 0.0, rel_sum = 0.0, diag = 0.0;
    std::size_t off_n = 0, rel_n = 0;
    bool has_diag = false;
    for (const auto& [col_tag, recs] : datasets) {
      OODCell cell;
      cell.accuracy = pairwise_accuracy(*scorer, recs, col_tag).accuracy;
      cell.in_distribution = col_tag == row_tag;
      cell.relevant = !cell.in_distribution && group_of(col_tag) == row_group;
      if (cell.in_distribution) {
        has_diag = true;
        diag = cell.accuracy;
      } else {
        off_sum += cell.accuracy;
        ++off_n;
      }
      if (cell.relevant) {
        rel_sum += cell.accuracy;
        ++rel_n;
      }
      row.push_back(cell);
    }
    m.cells.push_back(std::move(row));
    m.row_average.push_back(off_n > 0 ? off_sum / static_cast<double>(off_n) : diag);
    if (rel_n > 0) {
      m.racc.push_back(rel_sum / static_cast<double>(rel_n));
      m.racc_in_distribution_only.push_back(false);
    } else {
      m.racc.push_back(has_diag ? diag : std::numeric_limits<double>::quiet_NaN());
      m.racc_in_distribution_only.push_back(true);
    }
  }
  return m;
}

BestOfNResult best_of_n(const RewardScorer& scorer, const std::string& prompt_id,
                        const std::string& prompt, std::span<const std::string> candidates,
                        const std::string& source) {
  if (candidates.size() < 2) throw ContractError("best_of_n: need at least 2 candidates");
  BestOfNResult r;
  r.prompt_id = prompt_id;
  for (const auto& c : candidates) r.rewards.push_back(scorer.score(prompt, c, source));
  r.selected = 0;
  for (std::size_t i = 1; i < r.rewards.size(); ++i) {
    if (r.rewards[i] > r.rewards[r.selected]) r.selected = i;
  }
  for (std::size_t i = 0; i < r.rewards.size(); ++i) {
    if (i != r.selected && r.rewards[i] == r.rewards[r.selected]) r.tie = true;
  }
  return r;
}

std::vector<std::size_t> OracleJudge::rank(const std::string&, const std::string& prompt,
                                           std::span<const std::string> candidates,
                                           const std::string& source) const {
  std::vector<double> scores;
  for (const auto& c : candidates) scores.push_back(scorer_.score(prompt, c, source));
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

FileJudge::FileJudge(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open judge file " + path.string());
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(text);
      rankings_[j.at("prompt_id").get<std::string>()] =
          j.at("ranking").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": line " + std::to_string(line) + ": " + e.what());
    }
  }
}

std::vector<std::size_t> FileJudge::rank(const std::string& prompt_id, const std::string&,
                                         std::span<const std::string>,
                                         const std::string&) const {
  auto it = rankings_.find(prompt_id);
  if (it == rankings_.end()) {
    throw ContractError("judge file has no ranking for prompt '" + prompt_id + "'");
  }
  return it->second;
}

std::vector<std::size_t> judge_ranking(const Judge& judge, const std::string& prompt_id,
                                       const std::string& prompt,
                                       std::span<const std::string> candidates,
                                       const std::string& source) {
  auto ranking = judge.rank(prompt_id, prompt, candidates, source);
  std::vector<bool> seen(candidates.size(), false);
  bool ok = ranking.size() == candidates.size();
  for (auto i : ranking) {
    if (!ok) break;
    if (i >= candidates.size() || seen[i]) {
      ok = false;
    } else {
      seen[i] = true;
    }
  }
  if (!ok) {
    throw ValidationError("judge ranking for prompt '" + prompt_id +
                          "' is not a permutation of the candidate indices");
  }
  return ranking;
}

RecallReport top_k_recall(std::span<const BestOfNResult> results, std::size_t k, RecallMode mode) {
  if (results.empty()) throw ContractError("top_k_recall: no results");
  RecallReport rep;
  rep.k = k;
  rep.mode = mode;
  rep.n_prompts = results.size();
  for (const auto& r : results) {
    if (!r.judge_ranking) {
      throw ContractError("top_k_recall: prompt '" + r.prompt_id + "' has no judge ranking");
    }
    const auto& ranking = *r.judge_ranking;
    if (k < 1 || k >= ranking.size()) {
      throw ContractError("top_k_recall: k must satisfy 1 <= k < N (k=" + std::to_string(k) +
                          ", N=" + std::to_string(ranking.size()) + ")");
    }
    std::set<std::size_t> judge_top(ranking.begin(), ranking.begin() + static_cast<long>(k));
    if (mode == RecallMode::kMembership) {
      rep.hits += judge_top.count(r.selected) ? 1.0 : 0.0;
    } else {
      // Model top-k by reward, ties to the lower index.
      std::vector<std::size_t> order(r.rewards.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return r.rewards[a] > r.rewards[b]; });
      std::size_t common = 0;
      for (std::size_t i = 0; i < k; ++i) common += judge_top.count(order[i]);
      rep.hits += static_cast<double>(common) / static_cast<double>(k);
    }
  }
  rep.recall = rep.hits / static_cast<double>(rep.n_prompts);
  return rep;
}

double implicit_dpo_reward(const DualHeadModel& policy, const DualHeadModel& reference,
                           const std::string& prompt, const std::string& response) {
  const auto pair = encode_pair(prompt, response, policy.config());
  return policy.sequence_log_prob_value(pair) - reference.sequence_log_prob_value(pair);
}

std::vector<std::string> sample_candidates(const DualHeadModel& model, const std::string& prompt,
                                           std::size_t n, double temperature, std::uint64_t seed,
                                           const SampleOptions& options) {
  if (n < 2) throw ContractError("sample_candidates: n must be >= 2");
  if (!(temperature > 0.0)) throw ContractError("sample_candidates: temperature must be > 0");
  const auto max_len = static_cast<std::size_t>(model.config().max_seq_len);
  if (max_len < 3) throw LengthError("sample_candidates: max_seq_len too small to sample");
  auto prompt_ids = tokenize(prompt);
  // Keep room for at least one response token.
  const std::size_t budget = max_len - 3;
  if (prompt_ids.size() > budget) {
    prompt_ids.erase(prompt_ids.begin(),
                     prompt_ids.begin() + static_cast<long>(prompt_ids.size() - budget));
  }
  std::vector<std::int32_t> prefix{Vocab::kBos};
  prefix.insert(prefix.end(), prompt_ids.begin(), prompt_ids.end());
  prefix.push_back(Vocab::kSep);

  NoGrad no_grad;
  Rng rng(seed);
  std::vector<std::string> out;
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<std::int32_t> tokens = prefix;
    std::vector<std::int32_t> response;
    while (response.size() < options.max_new_tokens && tokens.size() < max_len) {
      Tensor logits = scale(model.next_token_logits(tokens), 1.0 / temperature);
      std::vector<double> lv(logits.data().begin(), logits.data().end());
      // Bytes >= 0x80 are masked so candidates are always valid UTF-8 (ASCII).
      for (std::size_t i = 128; i < 256 && i < lv.size(); ++i) lv[i] = -1e300;
      if (response.empty()) {
        for (std::size_t i = 256; i < lv.size(); ++i) lv[i] = -1e300;
      }
      Tensor logp = log_softmax(Tensor::vector(lv));
      const double u = rng.uniform();
      double cum = 0.0;
      std::size_t pick = 0;
      for (std::size_t i = 0; i < lv.size(); ++i) {
        cum += std::exp(logp.at(i));
        pick = i;
        if (u < cum) break;
      }
      // Skip zero-probability tail picks caused by rounding in `cum`.
      while (std::exp(logp.at(pick)) == 0.0 && pick > 0) --pick;
      const auto id = static_cast<std::int32_t>(pick);
      if (Vocab::is_special(id)) break;
      response.push_back(id);
      tokens.push_back(id);
    }
    out.push_back(detokenize(response));
  }
  return out;
}

namespace {

std::ofstream open_report(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

std::string num(double v) { return format_double(v); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

}  // namespace

void write_accuracy_csv(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, AccuracyReport>>& rows) {
  auto out = open_report(path);
  out << "model,dataset,n,correct,accuracy,margin\n";
  for (const auto& [model, r] : rows) {
    out << csv_field(model) << ',' << csv_field(r.dataset) << ',' << r.n_pairs << ','
        << r.n_correct << ',' << num(r.accuracy) << ',' << num(r.mean_margin) << '\n';
  }
}

void write_ood_csv(const std::filesystem::path& path, const OODMatrix& m) {
  auto out = open_report(path);
  out << "train";
  for (const auto& c : m.columns) out << ',' << csv_field(c);
  out << ",avg,racc,racc_in_distribution_only\n";
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    out << csv_field(m.rows[i]);
    for (const auto& cell : m.cells[i]) out << ',' << num(cell.accuracy);
    out << ',' << num(m.row_average[i]) << ',' << num(m.racc[i]) << ','
        << (m.racc_in_distribution_only[i] ? "true" : "false") << '\n';
  }
}

nlohmann::json ood_json(const OODMatrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows;
  j["columns"] = m.columns;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& row : m.cells) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& c : row) {
      r.push_back({{"accuracy", c.accuracy},
                   {"in_distribution", c.in_distribution},
                   {"relevant", c.relevant}});
    }
    cells.push_back(r);
  }
  j["cells"] = cells;
  j["avg"] = m.row_average;
  nlohmann::json racc = nlohmann::json::array();
  for (double v : m.racc) racc.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json());
  j["racc"] = racc;
  j["racc_in_distribution_only"] = m.racc_in_distribution_only;
  return j;
}

nlohmann::json bon_json(const BestOfNResult& r) {
  nlohmann::json j{{"prompt_id", r.prompt_id},
                   {"rewards", r.rewards},
                   {"selected", r.selected},
                   {"tie", r.tie}};
  j["judge_ranking"] = r.judge_ranking ? nlohmann::json(*r.judge_ranking) : nlohmann::json();
  return j;
}

void write_recall_csv(const std::filesystem::path& path, const std::vector<RecallReport>& rows) {
  auto out = open_report(path);
  out << "k,mode,n_prompts,hits,recall\n";
  for (const auto& r : rows) {
    out << r.k << ',' << (r.mode == RecallMode::kMembership ? "membership" : "overlap") << ','
        << r.n_prompts << ',' << num(r.hits) << ',' << num(r.recall) << '\n';
  }
}

void write_comparison_manifest(const std::filesystem::path& path,
                               const std::vector<ComparisonItem>& items) {
  auto out = open_report(path);
  for (const auto& item : items) {
    out << nlohmann::json{{"prompt_id", item.prompt_id},
                          {"prompt", item.prompt},
                          {"response_a", item.response_a},
                          {"response_b", item.response_b}}
               .dump()
        << '\n';
  }
}

WinRate win_rate_from_verdicts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open verdict file " + path.string());
  WinRate w;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string winner;
    try {
      winner = nlohmann::json::parse(text).at("winner").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": line " + std::to_string(line) + ": " + e.what());
    }
    if (winner == "A") {
      ++w.wins;
    } else if (winner == "B") {
      ++w.losses;
    } else if (winner == "tie") {
      ++w.ties;
    } else {
      throw SchemaError(path.string() + ": line " + std::to_string(line) +
                        ": winner must be A, B or tie");
    }
  }
  const auto decided = w.wins + w.losses;
  w.win_rate = decided > 0 ? static_cast<double>(w.wins) / static_cast<double>(decided) : 0.0;
  return w;
}

}  // namespace hafrm
