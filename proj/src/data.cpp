#include "hafrm/data.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "hafrm/errors.hpp"
#include "hafrm/model.hpp"
#include "hafrm/rng.hpp"

namespace hafrm {

void to_json(nlohmann::json& j, const PreferenceRecord& r) {
  j = nlohmann::json{{"id", r.id},
                     {"prompt", r.prompt},
                     {"chosen", r.chosen},
                     {"rejected", r.rejected},
                     {"source", r.source}};
}

void validate_record(const PreferenceRecord& r) {
  if (r.prompt.empty() || r.chosen.empty() || r.rejected.empty()) {
    throw ValidationError("record '" + r.id + "' has an empty prompt, chosen or rejected field");
  }
  if (r.chosen == r.rejected) {
    throw ValidationError("record '" + r.id + "' has chosen == rejected");
  }
}

namespace {

std::string required_string(const nlohmann::json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw SchemaError("line " + std::to_string(line) + ": missing key '" + key + "'");
  }
  if (!it->is_string()) {
    throw SchemaError("line " + std::to_string(line) + ": key '" + key + "' must be a string");
  }
  return it->get<std::string>();
}

std::string optional_string(const nlohmann::json& obj, const char* key, std::size_t line,
                            std::string fallback) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_string()) {
    throw SchemaError("line " + std::to_string(line) + ": key '" + key + "' must be a string");
  }
  return it->get<std::string>();
}

template <typename F>
void for_each_json_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string() + ": line " + std::to_string(line) + ": " + e.what());
    }
    if (!obj.is_object()) {
      throw SchemaError(path.string() + ": line " + std::to_string(line) + ": expected an object");
    }
    f(obj, line);
  }
}

}  // namespace

std::vector<PreferenceRecord> load_jsonl(const std::filesystem::path& path,
                                         const LoadOptions& options) {
  const std::string stem = path.stem().string();
  const std::string source = options.default_source.empty() ? stem : options.default_source;
  std::vector<PreferenceRecord> records;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  std::size_t dropped = 0;
  for_each_json_line(path, [&](const nlohmann::json& obj, std::size_t line) {
    PreferenceRecord r;
    r.prompt = required_string(obj, "prompt", line);
    r.chosen = required_string(obj, "chosen", line);
    r.rejected = required_string(obj, "rejected", line);
    r.id = optional_string(obj, "id", line, stem + ":" + std::to_string(line));
    r.source = optional_string(obj, "source", line, source);
    try {
      validate_record(r);
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(line) + ": " + e.what());
    }
    if (options.drop_duplicates && !seen.emplace(r.prompt, r.chosen, r.rejected).second) {
      ++dropped;
      return;
    }
    records.push_back(std::move(r));
  });
  if (dropped > 0) {
    std::cerr << "warning: " << path.string() << ": dropped " << dropped
              << " duplicate preference triple(s)\n";
  }
  return records;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<PreferenceRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& r : records) out << nlohmann::json(r).dump() << '\n';
}

DatasetSplit split(const std::vector<PreferenceRecord>& records, std::uint64_t seed,
                   double test_frac, double val_frac) {
  if (!(test_frac >= 0.0) || !(val_frac >= 0.0) || test_frac + val_frac >= 1.0) {
    throw ConfigError("split fractions must be >= 0 and sum to less than 1");
  }
  if (records.size() < 3) throw ContractError("split needs at least 3 records");
  const std::size_t n = records.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_test = static_cast<std::size_t>(std::floor(test_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n)));

  DatasetSplit s;
  s.seed = seed;
  s.test_frac = test_frac;
  s.val_frac = val_frac;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = records[order[i]];
    if (i < n_test) {
      s.test.push_back(r);
    } else if (i < n_test + n_val) {
      s.validation.push_back(r);
    } else {
      s.train.push_back(r);
    }
  }
  return s;
}

std::vector<PreferenceRecord> mix_even(const MixSpec& spec) {
  for (const auto& [tag, recs] : spec.sources) {
    if (recs.size() < spec.per_source_count) {
      throw ValidationError("source '" + tag + "' has " + std::to_string(recs.size()) +
                            " records, " + std::to_string(spec.per_source_count) + " requested");
    }
  }
  Rng rng(spec.seed);
  std::vector<PreferenceRecord> out;
  for (const auto& [tag, recs] : spec.sources) {
    std::vector<std::size_t> order(recs.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t i = 0; i < spec.per_source_count; ++i) {
      PreferenceRecord r = recs[order[i]];
      r.source = tag;
      out.push_back(std::move(r));
    }
  }
  rng.shuffle(out);
  return out;
}

namespace {

std::size_t count_words(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0;
  std::string word;
  while (in >> word) ++n;
  return n;
}

}  // namespace

DatasetStats compute_stats(const std::vector<PreferenceRecord>& records, std::string name) {
  DatasetStats s;
  s.name = std::move(name);
  s.size = records.size();
  if (records.empty()) return s;
  double words = 0.0, tokens = 0.0;
  for (const auto& r : records) {
    const auto pw = static_cast<double>(count_words(r.prompt));
    const auto pt = static_cast<double>(tokenize(r.prompt).size());
    for (const auto* response : {&r.chosen, &r.rejected}) {
      words += pw + static_cast<double>(count_words(*response));
      tokens += pt + static_cast<double>(tokenize(*response).size());
    }
  }
  const double qa = 2.0 * static_cast<double>(records.size());
  s.words_per_qa = words / qa;
  s.tokens_per_qa = tokens / qa;
  return s;
}

std::string render_stats_table(const std::vector<DatasetStats>& rows) {
  std::size_t name_w = 4;
  for (const auto& r : rows) name_w = std::max(name_w, r.name.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_w)) << "Name" << "  " << std::right
      << std::setw(10) << "Size" << "  " << std::setw(9) << "Words/QA" << "  " << std::setw(10)
      << "Tokens/QA" << '\n';
  out << std::fixed << std::setprecision(1);
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(name_w)) << r.name << "  " << std::right
        << std::setw(10) << r.size << "  " << std::setw(9) << r.words_per_qa << "  "
        << std::setw(10) << r.tokens_per_qa << '\n';
  }
  return out.str();
}

nlohmann::json stats_json(const std::vector<DatasetStats>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"name", r.name},
                   {"size", r.size},
                   {"words_per_qa", r.words_per_qa},
                   {"tokens_per_qa", r.tokens_per_qa}});
  }
  return out;
}

std::vector<PromptRecord> load_prompts(const std::filesystem::path& path) {
  const std::string stem = path.stem().string();
  std::vector<PromptRecord> prompts;
  for_each_json_line(path, [&](const nlohmann::json& obj, std::size_t line) {
    PromptRecord p;
    p.prompt = required_string(obj, "prompt", line);
    p.id = optional_string(obj, "id", line, stem + ":" + std::to_string(line));
    p.source = optional_string(obj, "source", line, stem);
    prompts.push_back(std::move(p));
  });
  return prompts;
}

}  // namespace hafrm
