#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace hafrm {

// One (prompt, chosen, rejected) triple; `source` tags the dataset of origin.
struct PreferenceRecord {
  std::string id;
  std::string prompt;
  std::string chosen;
  std::string rejected;
  std::string source;

  bool operator==(const PreferenceRecord&) const = default;
};

void to_json(nlohmann::json& j, const PreferenceRecord& r);

// Throws ValidationError when a field is empty or chosen == rejected.
void validate_record(const PreferenceRecord& r);

struct LoadOptions {
  // Used for records without a "source" key; defaults to the file stem.
  std::string default_source;
  // Drop exact duplicate (prompt, chosen, rejected) triples with a warning.
  bool drop_duplicates = true;
};

// One JSON object per line with keys prompt/chosen/rejected and optional
// id/source. Missing ids become "<stem>:<line>".
std::vector<PreferenceRecord> load_jsonl(const std::filesystem::path& path,
                                         const LoadOptions& options = {});
void write_jsonl(const std::filesystem::path& path, const std::vector<PreferenceRecord>& records);

struct DatasetSplit {
  std::vector<PreferenceRecord> train;
  std::vector<PreferenceRecord> validation;
  std::vector<PreferenceRecord> test;
  std::uint64_t seed = 0;
  double test_frac = 0.1;
  double val_frac = 0.05;
};

// Seeded shuffle, then floor(test_frac * n) test records, floor(val_frac * n)
// validation records, remainder train.
DatasetSplit split(const std::vector<PreferenceRecord>& records, std::uint64_t seed,
                   double test_frac = 0.1, double val_frac = 0.05);

struct MixSpec {
  std::vector<std::pair<std::string, std::vector<PreferenceRecord>>> sources;
  std::size_t per_source_count = 0;
  std::uint64_t seed = 0;
};

// Exactly per_source_count records sampled from every source, then shuffled.
std::vector<PreferenceRecord> mix_even(const MixSpec& spec);

struct DatasetStats {
  std::string name;
  std::size_t size = 0;
  double words_per_qa = 0.0;
  double tokens_per_qa = 0.0;
};

// Every record contributes two QA instances: prompt + chosen and prompt +
// rejected. Words are whitespace-separated; tokens are byte-level tokens.
DatasetStats compute_stats(const std::vector<PreferenceRecord>& records, std::string name = "");

// Columns: Name, Size, Words/QA, Tokens/QA.
std::string render_stats_table(const std::vector<DatasetStats>& rows);
nlohmann::json stats_json(const std::vector<DatasetStats>& rows);

// Prompt-only input for best-of-N: keys prompt (required), id, source.
struct PromptRecord {
  std::string id;
  std::string prompt;
  std::string source;
};
std::vector<PromptRecord> load_prompts(const std::filesystem::path& path);

}  // namespace hafrm
