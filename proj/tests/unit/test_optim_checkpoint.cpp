#include <doctest.h>

#include <cmath>

#include "hafrm/checkpoint.hpp"
#include "hafrm/errors.hpp"
#include "hafrm/optim.hpp"
#include "test_util.hpp"

using namespace hafrm;
using hafrm::testing::read_file;
using hafrm::testing::scratch_dir;
using hafrm::testing::write_file;

namespace {

// Sets grad of `p` for the quadratic 0.5 (p - target)^2.
void quadratic_grad(Tensor& p, double target) {
  p.zero_grad();
  p.mutable_grad()[0] = p.at(0) - target;
}

}  // namespace

TEST_CASE("AdamW matches the hand-derived update") {
  AdamWConfig c{0.1, 0.9, 0.999, 1e-5, 0.01};
  Tensor p = Tensor::vector({1.0}, true);
  AdamW opt(c, {p});

  double x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    quadratic_grad(p, 3.0);
    double g = x - 3.0;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
    x *= 1.0 - 0.1 * 0.01;
    x -= 0.1 * mh / (std::sqrt(vh) + 1e-5);
    opt.step();
    CHECK(std::abs(p.at(0) - x) <= 1e-12);
  }
  CHECK(opt.state().step == 3);
  CHECK_THROWS_AS(AdamW(AdamWConfig{0.0}, {p}), ConfigError);
}

TEST_CASE("gradient clipping") {
  Tensor a = Tensor::vector({0.0, 0.0}, true), b = Tensor::vector({0.0}, true);
  a.mutable_grad()[0] = 3.0;
  b.mutable_grad()[0] = 4.0;
  std::vector<Tensor> ps{a, b};
  double pre = clip_grad_norm(ps, 1.0);
  CHECK(pre == 5.0);
  CHECK(std::abs(global_grad_norm(ps) - 1.0) <= 1e-12);
  CHECK(std::abs(a.grad()[0] - 0.6) <= 1e-15);

  // Within bound: the update is identical with and without clipping.
  auto run = [](double max_norm) {
    Tensor p = Tensor::vector({0.5, -0.25}, true);
    AdamW opt(AdamWConfig{}, {p});
    for (int i = 0; i < 4; ++i) {
      p.zero_grad();
      p.mutable_grad()[0] = 0.3 * p.at(0);
      p.mutable_grad()[1] = -0.2;
      std::vector<Tensor> ps{p};
      if (max_norm > 0) clip_grad_norm(ps, max_norm);
      opt.step();
    }
    return std::vector<double>(p.data().begin(), p.data().end());
  };
  CHECK(run(1.0) == run(0.0));
}

TEST_CASE("checkpoint file format") {
  auto dir = scratch_dir("ckpt");
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.max_seq_len = 16;
  DualHeadModel m = DualHeadModel::init(cfg);
  AdamW opt(AdamWConfig{}, m.parameters());
  for (Tensor& t : m.parameters()) t.mutable_grad()[0] = 0.5;
  opt.step();

  Checkpoint c = Checkpoint::capture(m, &opt.state());
  c.step = 42;
  c.val_accuracy = 0.9375;
  c.val_mean_reward = -0.125;
  c.config_hash = "abc";
  c.meta["mode"] = "hybrid";
  save_checkpoint(dir / "a.ckpt", c);

  std::string bytes = read_file(dir / "a.ckpt");
  CHECK(bytes.rfind(std::string(kCheckpointFormat) + "\n", 0) == 0);

  Checkpoint back = load_checkpoint(dir / "a.ckpt");
  CHECK(back.step == 42);
  CHECK(back.val_accuracy == 0.9375);
  CHECK(back.val_mean_reward == -0.125);
  CHECK(back.config_hash == "abc");
  CHECK(back.meta["mode"] == "hybrid");
  CHECK(back.parameters == c.parameters);
  REQUIRE(back.optim.has_value());
  CHECK(back.optim->step == 1);
  CHECK(back.optim->first_moment == opt.state().first_moment);
  CHECK(back.optim->second_moment == opt.state().second_moment);

  write_file(dir / "wrong.ckpt", "hafrm-ckpt-v0\n" + bytes.substr(14));
  CHECK_THROWS_AS(load_checkpoint(dir / "wrong.ckpt"), FormatError);
  write_file(dir / "short.ckpt", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), FormatError);

  AdamW other(AdamWConfig{}, m.parameters());
  CHECK_NOTHROW(other.set_state(*back.optim));
  OptimState broken = *back.optim;
  broken.first_moment.pop_back();
  CHECK_THROWS_AS(other.set_state(broken), FormatError);
}
