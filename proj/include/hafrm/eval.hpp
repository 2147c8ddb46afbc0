#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hafrm/data.hpp"
#include "hafrm/losses.hpp"
#include "hafrm/model.hpp"

namespace hafrm {

// Anything that assigns a scalar reward to a (prompt, response) pair.
// `source` is the dataset tag of the item being scored; only the oracle
// scorer uses it.
class RewardScorer {
 public:
  virtual ~RewardScorer() = default;
  virtual double score(const std::string& prompt, const std::string& response,
                       const std::string& source) const = 0;
};

// r = F(phi(x, y)) of a trained model.
class ModelScorer : public RewardScorer {
 public:
  explicit ModelScorer(const DualHeadModel& model) : model_(model) {}
  double score(const std::string& prompt, const std::string& response,
               const std::string& source) const override;

 private:
  const DualHeadModel& model_;
};

// log pi(x, y) - log pi_ref(x, y), i.e. a policy read as a reward model.
class ImplicitRewardScorer : public RewardScorer {
 public:
  ImplicitRewardScorer(const DualHeadModel& policy, const DualHeadModel& reference)
      : policy_(policy), reference_(reference) {}
  double score(const std::string& prompt, const std::string& response,
               const std::string& source) const override;

 private:
  const DualHeadModel& policy_;
  const DualHeadModel& reference_;
};

// Ground-truth synthetic score. With no fixed rule, the item's source tag
// names the rule.
class OracleScorer : public RewardScorer {
 public:
  explicit OracleScorer(std::optional<std::string> rule = std::nullopt);
  double score(const std::string& prompt, const std::string& response,
               const std::string& source) const override;

 private:
  std::optional<std::string> rule_;
};

// Uniform [0, 1) score that is a pure hash of (seed, prompt, response).
class RandomScorer : public RewardScorer {
 public:
  explicit RandomScorer(std::uint64_t seed) : seed_(seed) {}
  double score(const std::string& prompt, const std::string& response,
               const std::string& source) const override;

 private:
  std::uint64_t seed_;
};

// Adds a constant to another scorer (invariance checks). Optional positive
// factor is applied first.
class AffineScorer : public RewardScorer {
 public:
  AffineScorer(const RewardScorer& base, double factor, double offset)
      : base_(base), factor_(factor), offset_(offset) {}
  double score(const std::string& prompt, const std::string& response,
               const std::string& source) const override {
    return factor_ * base_.score(prompt, response, source) + offset_;
  }

 private:
  const RewardScorer& base_;
  double factor_;
  double offset_;
};

struct AccuracyReport {
  std::string dataset;
  std::size_t n_pairs = 0;
  std::size_t n_correct = 0;
  double accuracy = 0.0;
  double mean_margin = 0.0;
  double mean_reward = 0.0;  // mean over chosen and rejected
};

// Correct iff score(chosen) > score(rejected); ties count as incorrect.
AccuracyReport pairwise_accuracy(const RewardScorer& scorer,
                                 std::span<const PreferenceRecord> records,
                                 const std::string& dataset = "");
// Same on already-encoded pairs, scored by the model's reward head.
AccuracyReport pairwise_accuracy(const DualHeadModel& model,
                                 std::span<const EncodedPreference> pairs,
                                 const std::string& dataset = "");

struct OODCell {
  double accuracy = 0.0;
  bool in_distribution = false;
  bool relevant = false;  // same preference group, different dataset
};

struct OODMatrix {
  std::vector<std::string> rows;     // training dataset tags
  std::vector<std::string> columns;  // evaluation dataset tags
  std::vector<std::vector<OODCell>> cells;
  std::vector<double> row_average;
  // Mean over the row's relevant cells; when a row has none, the diagonal
  // accuracy is reported and the in-distribution-only flag is set.
  std::vector<double> racc;
  std::vector<bool> racc_in_distribution_only;
};

OODMatrix ood_matrix(const std::vector<std::pair<std::string, const RewardScorer*>>& models,
                     const std::vector<std::pair<std::string, std::vector<PreferenceRecord>>>& datasets,
                     const std::map<std::string, std::string>& groups);

struct BestOfNResult {
  std::string prompt_id;
  std::vector<double> rewards;
  std::size_t selected = 0;
  bool tie = false;
  // Candidate indices best-first, when a judge was consulted.
  std::optional<std::vector<std::size_t>> judge_ranking;
};

// Argmax reward; ties resolve to the lowest index and are flagged.
BestOfNResult best_of_n(const RewardScorer& scorer, const std::string& prompt_id,
                        const std::string& prompt, std::span<const std::string> candidates,
                        const std::string& source = "");

class Judge {
 public:
  virtual ~Judge() = default;
  // Candidate indices ordered best-first.
  virtual std::vector<std::size_t> rank(const std::string& prompt_id, const std::string& prompt,
                                        std::span<const std::string> candidates,
                                        const std::string& source) const = 0;
};

// Ranks by the synthetic ground truth (stable: equal scores keep index order).
class OracleJudge : public Judge {
 public:
  explicit OracleJudge(std::optional<std::string> rule = std::nullopt) : scorer_(std::move(rule)) {}
  std::vector<std::size_t> rank(const std::string& prompt_id, const std::string& prompt,
                                std::span<const std::string> candidates,
                                const std::string& source) const override;

 private:
  OracleScorer scorer_;
};

// Precomputed rankings, JSONL {prompt_id, ranking: [indices]}.
class FileJudge : public Judge {
 public:
  explicit FileJudge(const std::filesystem::path& path);
  std::vector<std::size_t> rank(const std::string& prompt_id, const std::string& prompt,
                                std::span<const std::string> candidates,
                                const std::string& source) const override;
  bool has(const std::string& prompt_id) const { return rankings_.count(prompt_id) > 0; }

 private:
  std::map<std::string, std::vector<std::size_t>> rankings_;
};

// Calls the judge and checks that the answer is a permutation of the
// candidate indices.
std::vector<std::size_t> judge_ranking(const Judge& judge, const std::string& prompt_id,
                                       const std::string& prompt,
                                       std::span<const std::string> candidates,
                                       const std::string& source = "");

enum class RecallMode {
  kMembership,  // selected candidate is inside the judge's top-k
  kOverlap,     // |model top-k intersect judge top-k| / k
};

struct RecallReport {
  std::size_t k = 0;
  std::size_t n_prompts = 0;
  double hits = 0.0;
  double recall = 0.0;
  RecallMode mode = RecallMode::kMembership;
};

RecallReport top_k_recall(std::span<const BestOfNResult> results, std::size_t k,
                          RecallMode mode = RecallMode::kMembership);

double implicit_dpo_reward(const DualHeadModel& policy, const DualHeadModel& reference,
                           const std::string& prompt, const std::string& response);

struct SampleOptions {
  std::size_t max_new_tokens = 32;
};

// Ancestral sampling from the policy head over ASCII byte tokens. Generation stops
// when a special token is drawn (never as the first token) or at
// max_new_tokens / max_seq_len.
std::vector<std::string> sample_candidates(const DualHeadModel& model, const std::string& prompt,
                                           std::size_t n, double temperature, std::uint64_t seed,
                                           const SampleOptions& options = {});

// Report writers.
void write_accuracy_csv(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, AccuracyReport>>& rows);
void write_ood_csv(const std::filesystem::path& path, const OODMatrix& m);
nlohmann::json ood_json(const OODMatrix& m);
nlohmann::json bon_json(const BestOfNResult& r);
void write_recall_csv(const std::filesystem::path& path, const std::vector<RecallReport>& rows);

// Pairwise comparison manifest for an external judge, and verdict ingestion.
struct ComparisonItem {
  std::string prompt_id;
  std::string prompt;
  std::string response_a;
  std::string response_b;
};
void write_comparison_manifest(const std::filesystem::path& path,
                               const std::vector<ComparisonItem>& items);
struct WinRate {
  std::size_t wins = 0, losses = 0, ties = 0;
  double win_rate = 0.0;  // wins / (wins + losses)
};
// Verdict JSONL {prompt_id, winner: "A" | "B" | "tie"}.
WinRate win_rate_from_verdicts(const std::filesystem::path& path);

}  // namespace hafrm
