#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "hafrm/checkpoint.hpp"
#include "hafrm/cli.hpp"
#include "test_util.hpp"

using namespace hafrm;
using hafrm::testing::read_file;
using hafrm::testing::scratch_dir;
using hafrm::testing::write_file;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> tiny_train(const fs::path& data, const fs::path& out) {
  return {"train", "--data", data.string(), "--out", out.string(), "--d-model", "16",
          "--layers", "1", "--heads", "2", "--max-seq-len", "64", "--max-steps", "8",
          "--batch-size", "8", "--eval-every-frac", "0.5"};
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("synth and stats") {
  auto dir = scratch_dir("cli_synth");
  Run r = cli({"synth", "marker-count", "50", "0", (dir / "m.jsonl").string()});
  REQUIRE(r.code == 0);
  CHECK(count_lines(read_file(dir / "m.jsonl")) == 50);
  CHECK(count_lines(read_file(dir / "m.scores.jsonl")) == 50);
  std::string first = read_file(dir / "m.jsonl");
  REQUIRE(cli({"synth", "marker-count", "50", "0", (dir / "m.jsonl").string()}).code == 0);
  CHECK(read_file(dir / "m.jsonl") == first);
  CHECK(cli({"synth", "no-such-rule", "5", "0", (dir / "x.jsonl").string()}).code == 2);

  REQUIRE(cli({"synth", "safety", "30", "1", (dir / "s.jsonl").string()}).code == 0);
  Run one = cli({"stats", (dir / "m.jsonl").string()});
  CHECK(one.code == 0);
  CHECK(count_lines(one.out) == 2);
  CHECK(one.out.find("Name") == 0);
  CHECK(one.out.find("Tokens/QA") != std::string::npos);

  Run two = cli({"stats", (dir / "s.jsonl").string(), (dir / "m.jsonl").string(), "--out",
                 (dir / "stats").string()});
  CHECK(two.code == 0);
  CHECK(count_lines(two.out) == 3);
  CHECK(two.out.find("s ") < two.out.find("m "));
  CHECK(fs::exists(dir / "stats" / "stats.json"));
  CHECK(fs::exists(dir / "stats" / "config.json"));

  Run js = cli({"stats", "--json", (dir / "m.jsonl").string()});
  CHECK(nlohmann::json::parse(js.out)[0]["size"] == 50);
}

TEST_CASE("train, replay and exit codes") {
  auto dir = scratch_dir("cli_train");
  REQUIRE(cli({"synth", "marker-count", "80", "0", (dir / "m.jsonl").string()}).code == 0);

  Run r = cli(tiny_train(dir / "m.jsonl", dir / "run1"));
  REQUIRE(r.code == 0);
  for (const char* f : {"config.json", "train_log.jsonl", "best.ckpt", "summary.json"}) {
    CHECK(fs::exists(dir / "run1" / f));
  }
  std::string log = read_file(dir / "run1" / "train_log.jsonl");
  CHECK(nlohmann::json::parse(log.substr(0, log.find('\n')))["mode"] == "hybrid");

  // Same flags into a non-empty directory need --force.
  CHECK(cli(tiny_train(dir / "m.jsonl", dir / "run1")).code == 2);
  auto forced = tiny_train(dir / "m.jsonl", dir / "run1");
  forced.push_back("--force");
  CHECK(cli(forced).code == 0);
  CHECK(read_file(dir / "run1" / "train_log.jsonl") == log);

  // Replaying config.json reproduces the log byte for byte.
  Run replay = cli({"train", "--config", (dir / "run1" / "config.json").string(), "--out",
                    (dir / "run2").string()});
  REQUIRE(replay.code == 0);
  CHECK(read_file(dir / "run2" / "train_log.jsonl") == log);

  auto base = tiny_train(dir / "m.jsonl", dir / "base");
  base.insert(base.end(), {"--alpha", "0"});
  REQUIRE(cli(base).code == 0);
  std::string blog = read_file(dir / "base" / "train_log.jsonl");
  CHECK(nlohmann::json::parse(blog.substr(0, blog.find('\n')))["mode"] == "baseline");

  auto neg = tiny_train(dir / "m.jsonl", dir / "neg");
  neg.insert(neg.end(), {"--alpha", "-0.1"});
  CHECK(cli(neg).code == 2);
  auto badlr = tiny_train(dir / "m.jsonl", dir / "badlr");
  badlr.insert(badlr.end(), {"--lr", "-1"});
  CHECK(cli(badlr).code == 2);
  CHECK(cli({"train", "--bogus"}).code == 2);
  CHECK(cli({"train", "--data", (dir / "absent.jsonl").string(), "--out", (dir / "x").string()})
            .code == 2);

  nlohmann::json cfg = nlohmann::json::parse(read_file(dir / "run1" / "config.json"));
  cfg["options"]["unknown_key"] = 1;
  write_file(dir / "bad_config.json", cfg.dump());
  CHECK(cli({"train", "--config", (dir / "bad_config.json").string(), "--out",
             (dir / "run3").string()})
            .code == 2);
}

TEST_CASE("seed precedence: flag, then environment, then config") {
  auto dir = scratch_dir("cli_seed");
  REQUIRE(cli({"synth", "marker-count", "60", "0", (dir / "m.jsonl").string()}).code == 0);
  REQUIRE(cli(tiny_train(dir / "m.jsonl", dir / "cfg")).code == 0);
  const std::string config = (dir / "cfg" / "config.json").string();
  auto seed_of = [&](const fs::path& run) {
    return nlohmann::json::parse(read_file(run / "config.json"))["options"]["seed"].get<int>();
  };
  ::setenv("HAFRM_SEED", "5", 1);
  REQUIRE(cli({"train", "--config", config, "--out", (dir / "env").string()}).code == 0);
  CHECK(seed_of(dir / "env") == 5);
  REQUIRE(cli({"train", "--config", config, "--seed", "7", "--out", (dir / "flag").string()}).code == 0);
  CHECK(seed_of(dir / "flag") == 7);
  ::unsetenv("HAFRM_SEED");
  REQUIRE(cli({"train", "--config", config, "--out", (dir / "plain").string()}).code == 0);
  CHECK(seed_of(dir / "plain") == 0);
}

TEST_CASE("eval reports and the OOD grid") {
  auto dir = scratch_dir("cli_eval");
  for (auto [rule, name] : {std::pair{"marker-count", "marker"}, std::pair{"safety", "safe"},
                            std::pair{"length-band", "band"}}) {
    REQUIRE(cli({"synth", rule, "60", "3", (dir / (std::string(name) + ".jsonl")).string()}).code == 0);
  }
  REQUIRE(cli(tiny_train(dir / "marker.jsonl", dir / "r_marker")).code == 0);
  REQUIRE(cli(tiny_train(dir / "safe.jsonl", dir / "r_safe")).code == 0);
  const std::string ck1 = (dir / "r_marker" / "best.ckpt").string();
  const std::string ck2 = (dir / "r_safe" / "best.ckpt").string();

  Run one = cli({"eval", "--ckpt", ck1, "--data", (dir / "marker.jsonl").string(), "--report",
                 (dir / "rep1").string()});
  REQUIRE(one.code == 0);
  CHECK(count_lines(read_file(dir / "rep1" / "accuracy.csv")) == 2);

  write_file(dir / "groups.json", R"({"marker": "better", "band": "better", "safe": "safer"})");
  Run grid = cli({"eval", "--ckpt", ck1, "--ckpt", ck2, "--data", (dir / "marker.jsonl").string(),
                  "--data", (dir / "safe.jsonl").string(), "--data", (dir / "band.jsonl").string(),
                  "--ood", (dir / "groups.json").string(), "--report", (dir / "rep2").string()});
  REQUIRE(grid.code == 0);
  std::string csv = read_file(dir / "rep2" / "ood_matrix.csv");
  CHECK(count_lines(csv) == 3);
  CHECK(csv.rfind("train,marker,safe,band,avg,racc,racc_in_distribution_only\n", 0) == 0);
  auto j = nlohmann::json::parse(read_file(dir / "rep2" / "ood_matrix.json"));
  CHECK(j["rows"].size() == 2);
  CHECK(j["columns"].size() == 3);

  write_file(dir / "partial.json", R"({"marker": "better", "band": "better"})");
  Run missing = cli({"eval", "--ckpt", ck1, "--ckpt", ck2, "--data", (dir / "marker.jsonl").string(),
                     "--data", (dir / "safe.jsonl").string(), "--ood",
                     (dir / "partial.json").string(), "--report", (dir / "rep3").string()});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("safe") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "rep3" / "accuracy.csv"));

  write_file(dir / "junk.ckpt", "hafrm-ckpt-v0\njunk");
  CHECK(cli({"eval", "--ckpt", (dir / "junk.ckpt").string(), "--data",
             (dir / "marker.jsonl").string(), "--report", (dir / "rep4").string()})
            .code == 2);
}

TEST_CASE("best-of-N and sweep commands") {
  auto dir = scratch_dir("cli_bon");
  REQUIRE(cli({"synth", "marker-count", "60", "0", (dir / "m.jsonl").string()}).code == 0);
  write_file(dir / "prompts.jsonl",
             "{\"id\":\"a\",\"prompt\":\"Q01 x?\",\"source\":\"marker-count\"}\n"
             "{\"id\":\"b\",\"prompt\":\"Q02 y?\",\"source\":\"marker-count\"}\n");

  Run oracle = cli({"bon", "--prompts", (dir / "prompts.jsonl").string(), "--candidates", "synth",
                    "--scorer", "oracle", "--judge", "oracle", "--out", (dir / "b1").string()});
  REQUIRE(oracle.code == 0);
  CHECK(count_lines(read_file(dir / "b1" / "bon.jsonl")) == 2);
  std::string recall = read_file(dir / "b1" / "recall.csv");
  CHECK(recall.find("1,membership,2,2,1\n") != std::string::npos);
  CHECK(recall.find("2,membership,2,2,1\n") != std::string::npos);

  Run nojudge = cli({"bon", "--prompts", (dir / "prompts.jsonl").string(), "--candidates", "synth",
                     "--scorer", "random", "--out", (dir / "b2").string()});
  CHECK(nojudge.code == 0);
  CHECK(fs::exists(dir / "b2" / "bon.jsonl"));
  CHECK_FALSE(fs::exists(dir / "b2" / "recall.csv"));
  CHECK_FALSE(nojudge.err.empty());

  write_file(dir / "judge.jsonl", "{\"prompt_id\":\"a\",\"ranking\":[0,1,2,3]}\n");
  CHECK(cli({"bon", "--prompts", (dir / "prompts.jsonl").string(), "--candidates", "synth",
             "--scorer", "oracle", "--judge", "file:" + (dir / "judge.jsonl").string(), "--out",
             (dir / "b3").string()})
            .code == 2);

  REQUIRE(cli(tiny_train(dir / "m.jsonl", dir / "run")).code == 0);
  Run sampled = cli({"bon", "--ckpt", (dir / "run" / "best.ckpt").string(), "--prompts",
                     (dir / "prompts.jsonl").string(), "--n", "4", "--max-new-tokens", "8",
                     "--judge", "oracle", "--out", (dir / "b4").string()});
  CHECK(sampled.code == 0);
  CHECK(count_lines(read_file(dir / "b4" / "recall.csv")) == 3);

  std::vector<std::string> sweep{"sweep", "--data", (dir / "m.jsonl").string(), "--alphas", "0,0.2",
                                 "--out", (dir / "sw").string(), "--d-model", "16", "--layers", "1",
                                 "--heads", "2", "--max-seq-len", "64", "--max-steps", "6",
                                 "--batch-size", "8", "--eval-every-frac", "0.5"};
  REQUIRE(cli(sweep).code == 0);
  CHECK(fs::exists(dir / "sw" / "alpha_0" / "best.ckpt"));
  CHECK(fs::exists(dir / "sw" / "alpha_0.2" / "best.ckpt"));
  std::string series = read_file(dir / "sw" / "acc_vs_step.csv");
  CHECK(series.rfind("step,alpha_0,alpha_0.2\n", 0) == 0);
  CHECK(count_lines(series) == 4);
  CHECK(count_lines(read_file(dir / "sw" / "margin_vs_step.csv")) == 4);

  sweep[4] = "-0.1";
  sweep[6] = (dir / "neg").string();
  CHECK(cli(sweep).code == 2);
  sweep.push_back("--allow-negative");
  Run neg = cli(sweep);
  CHECK(neg.code == 0);
  CHECK(neg.out.find("negative") != std::string::npos);
}

TEST_CASE("help exits cleanly") {
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({}).code == 2);
}
