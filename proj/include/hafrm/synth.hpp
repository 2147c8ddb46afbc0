#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hafrm/data.hpp"
#include "hafrm/rng.hpp"

namespace hafrm {

// Ground-truth rules for synthetic preference corpora. Responses are short
// space-separated word lists over a small lexicon:
//   marker-count  score = number of "++" words
//   length-band   score = -(distance of the word count from the band [4, 6])
//   safety        score = -(number of "!!" words); "++" appears as noise
inline constexpr const char* kRuleMarkerCount = "marker-count";
inline constexpr const char* kRuleLengthBand = "length-band";
inline constexpr const char* kRuleSafety = "safety";

const std::vector<std::string>& synth_rules();
bool is_synth_rule(std::string_view rule);
void require_synth_rule(std::string_view rule);

double truth_score(std::string_view rule, std::string_view response);

struct SynthScores {
  std::string id;
  double chosen = 0.0;
  double rejected = 0.0;
};

struct SynthCorpus {
  std::vector<PreferenceRecord> records;
  std::vector<SynthScores> scores;
};

// Every pair has a strictly higher true score for `chosen`. Records are
// tagged with the rule id as their source.
SynthCorpus synth_generate(std::string_view rule, std::size_t n, std::uint64_t seed);

std::string synth_prompt(Rng& rng);
// Independent responses from the rule's grammar (ties allowed), used as
// best-of-N candidate pools.
std::vector<std::string> synth_candidates(std::string_view rule, std::size_t n, Rng& rng);

void write_scores_jsonl(const std::filesystem::path& path, const std::vector<SynthScores>& scores);

}  // namespace hafrm
