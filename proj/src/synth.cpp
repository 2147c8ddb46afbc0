#include "hafrm/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hafrm/errors.hpp"

namespace hafrm {

namespace {

constexpr std::array<const char*, 10> kFiller = {"ok", "so", "we", "it", "go",
                                                 "up", "be", "do", "me", "an"};
constexpr std::array<const char*, 8> kTopics = {"cats", "rain", "math", "food",
                                                "jobs", "code", "maps", "tea"};
constexpr const char* kMarker = "++";
constexpr const char* kHarm = "!!";
constexpr int kBandLo = 4;
constexpr int kBandHi = 6;

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::vector<std::string> filler(int n, Rng& rng) {
  std::vector<std::string> words(static_cast<std::size_t>(n));
  for (auto& w : words) w = kFiller[rng.below(kFiller.size())];
  return words;
}

// Overwrites `count` distinct random positions with `word`, skipping
// positions already holding `avoid`.
void place(std::vector<std::string>& words, int count, const char* word, Rng& rng,
           const char* avoid = nullptr) {
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (avoid == nullptr || words[i] != avoid) free.push_back(i);
  }
  rng.shuffle(free);
  for (int i = 0; i < count && static_cast<std::size_t>(i) < free.size(); ++i) {
    words[free[static_cast<std::size_t>(i)]] = word;
  }
}

std::size_t count_word(std::string_view text, std::string_view word) {
  std::size_t n = 0;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) n += (w == word);
  return n;
}

std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) ++n;
  return n;
}

int band_distance(int n) {
  if (n < kBandLo) return kBandLo - n;
  if (n > kBandHi) return n - kBandHi;
  return 0;
}

std::string marker_response(int words, int markers, Rng& rng) {
  auto w = filler(words, rng);
  place(w, markers, kMarker, rng);
  return join(w);
}

std::string safety_response(int words, int harms, Rng& rng) {
  auto w = filler(words, rng);
  place(w, harms, kHarm, rng);
  place(w, rng.between(0, 2), kMarker, rng, kHarm);
  return join(w);
}

// Two distinct values from [lo, hi], larger first.
std::pair<int, int> distinct_pair(int lo, int hi, Rng& rng) {
  int a = rng.between(lo, hi);
  int b = rng.between(lo, hi - 1);
  if (b >= a) ++b;
  return {std::max(a, b), std::min(a, b)};
}

}  // namespace

const std::vector<std::string>& synth_rules() {
  static const std::vector<std::string> rules = {kRuleMarkerCount, kRuleLengthBand, kRuleSafety};
  return rules;
}

bool is_synth_rule(std::string_view rule) {
  for (const auto& r : synth_rules()) {
    if (r == rule) return true;
  }
  return false;
}

void require_synth_rule(std::string_view rule) {
  if (!is_synth_rule(rule)) {
    throw ConfigError("unknown synthetic rule '" + std::string(rule) +
                      "' (expected marker-count, length-band or safety)");
  }
}

double truth_score(std::string_view rule, std::string_view response) {
  require_synth_rule(rule);
  if (rule == kRuleMarkerCount) return static_cast<double>(count_word(response, kMarker));
  if (rule == kRuleSafety) return -static_cast<double>(count_word(response, kHarm));
  return -static_cast<double>(band_distance(static_cast<int>(word_count(response))));
}

std::string synth_prompt(Rng& rng) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d", rng.between(0, 99));
  return std::string("Q") + buf + " " + kTopics[rng.below(kTopics.size())] + "?";
}

SynthCorpus synth_generate(std::string_view rule, std::size_t n, std::uint64_t seed) {
  require_synth_rule(rule);
  if (n == 0) throw ContractError("synth_generate: n must be >= 1");
  Rng rng(seed);
  SynthCorpus corpus;
  const std::string tag(rule);
  for (std::size_t i = 0; i < n; ++i) {
    PreferenceRecord r;
    r.id = tag + "-" + std::to_string(seed) + "-" + std::to_string(i);
    r.source = tag;
    r.prompt = synth_prompt(rng);
    if (rule == kRuleMarkerCount) {
      const int words = rng.between(4, 7);
      auto [hi, lo] = distinct_pair(0, std::min(words, 4), rng);
      r.chosen = marker_response(words, hi, rng);
      r.rejected = marker_response(words, lo, rng);
    } else if (rule == kRuleSafety) {
      const int words = rng.between(4, 7);
      auto [hi, lo] = distinct_pair(0, 3, rng);
      r.chosen = safety_response(words, lo, rng);
      r.rejected = safety_response(words, hi, rng);
    } else {
      int a = rng.between(1, 10), b = rng.between(1, 10);
      while (band_distance(a) == band_distance(b)) b = rng.between(1, 10);
      if (band_distance(a) > band_distance(b)) std::swap(a, b);
      r.chosen = join(filler(a, rng));
      r.rejected = join(filler(b, rng));
    }
    const double sc = truth_score(rule, r.chosen), sr = truth_score(rule, r.rejected);
    if (!(sc > sr) || r.chosen == r.rejected) {
      throw Error("synth_generate: internal tie for rule " + tag);
    }
    corpus.scores.push_back({r.id, sc, sr});
    corpus.records.push_back(std::move(r));
  }
  return corpus;
}

std::vector<std::string> synth_candidates(std::string_view rule, std::size_t n, Rng& rng) {
  require_synth_rule(rule);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (rule == kRuleMarkerCount) {
      const int words = rng.between(4, 7);
      out.push_back(marker_response(words, rng.between(0, std::min(words, 4)), rng));
    } else if (rule == kRuleSafety) {
      out.push_back(safety_response(rng.between(4, 7), rng.between(0, 3), rng));
    } else {
      out.push_back(join(filler(rng.between(1, 10), rng)));
    }
  }
  return out;
}

void write_scores_jsonl(const std::filesystem::path& path, const std::vector<SynthScores>& scores) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& s : scores) {
    out << nlohmann::json{{"id", s.id}, {"chosen_score", s.chosen}, {"rejected_score", s.rejected}}
               .dump()
        << '\n';
  }
}

}  // namespace hafrm
