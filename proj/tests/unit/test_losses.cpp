#include <doctest.h>

#include <cmath>

#include "hafrm/errors.hpp"
#include "hafrm/losses.hpp"
#include "test_util.hpp"

using namespace hafrm;

namespace {

const double kLn2 = std::log(2.0);

// ln(1 + e^-m) in extended precision.
double softplus_neg(long double m) { return static_cast<double>(std::log1p(std::exp(-m))); }

std::vector<double> v(std::initializer_list<double> x) { return x; }

ModelConfig tiny_cfg() {
  ModelConfig c;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.max_seq_len = 24;
  return c;
}

}  // namespace

TEST_CASE("reward loss closed forms") {
  CHECK(std::abs(reward_loss(v({0.3}), v({0.3})) - kLn2) <= 1e-12);
  CHECK(std::abs(reward_loss(v({1.0, -4.0}), v({1.0, -4.0})) - kLn2) <= 1e-12);
  CHECK(std::abs(reward_loss(v({2.0}), v({0.0})) - 0.126928011) <= 1e-9);
  CHECK(std::abs(reward_loss(v({2.0}), v({0.0})) - softplus_neg(2.0L)) <= 1e-15);
  CHECK_THROWS_AS(reward_loss(std::vector<double>{}, std::vector<double>{}), ContractError);
  CHECK_THROWS_AS(reward_loss(v({NAN}), v({0.0})), NumericError);

  Tensor t = reward_loss(Tensor::vector({0.5, 2.5}), Tensor::vector({0.5, 0.5}));
  CHECK(std::abs(t.item() - 0.5 * (kLn2 + softplus_neg(2.0L))) <= 1e-15);
}

TEST_CASE("DPO loss closed forms") {
  // pd_win = pd_lose
  CHECK(std::abs(policy_loss_dpo(v({-3.0}), v({-5.0}), v({-3.0}), v({-5.0}), 0.1) - kLn2) <= 1e-12);
  // pd_win - pd_lose = 10 with tau 0.1
  double l = policy_loss_dpo(v({-2.0}), v({-9.0}), v({-7.0}), v({-4.0}), 0.1);
  CHECK(std::abs(l - 0.313261687) <= 1e-9);
  CHECK(std::abs(l - softplus_neg(1.0L)) <= 1e-15);
  CHECK_THROWS_AS(policy_loss_dpo(v({-1.0}), v({-1.0}), v({-1.0}), v({-1.0}), 0.0), ConfigError);
  CHECK_THROWS_AS(policy_loss_dpo(v({-INFINITY}), v({-1.0}), v({-1.0}), v({-1.0}), 0.1),
                  NumericError);
}

TEST_CASE("loss invariances") {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    double a = rng.normal(0, 3), b = rng.normal(0, 3), c = rng.normal(0, 100);
    CHECK(std::abs(reward_loss(v({a + c}), v({b + c})) - reward_loss(v({a}), v({b}))) <= 1e-9);

    double w = -std::abs(rng.normal(0, 20)), lo = -std::abs(rng.normal(0, 20));
    double rw = -std::abs(rng.normal(0, 20)), rl = -std::abs(rng.normal(0, 20));
    double s = -std::abs(rng.normal(0, 10));
    double base = policy_loss_dpo(v({w}), v({lo}), v({rw}), v({rl}), 0.1);
    double shifted = policy_loss_dpo(v({w + s}), v({lo + s}), v({rw + s}), v({rl + s}), 0.1);
    CHECK(std::abs(base - shifted) <= 1e-9);

    // -log s(-m) = m - log s(m)
    double m = rng.normal(0, 5);
    double fwd = reward_loss(v({m}), v({0.0})), swapped = reward_loss(v({0.0}), v({m}));
    CHECK(std::abs(swapped - (m + fwd)) <= 1e-9);
  }
}

TEST_CASE("reward loss decreases strictly in the margin") {
  double prev = INFINITY;
  for (double m = -20.0; m <= 20.0; m += 0.25) {
    double l = reward_loss(v({m}), v({0.0}));
    CHECK(l > 0.0);
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("reward loss gradient is sigmoid(m) - 1") {
  for (double m : {-8.0, -1.0, 0.0, 0.5, 3.0, 12.0}) {
    Tensor rw = Tensor::vector({m}, true), rl = Tensor::vector({0.0}, true);
    Tape tape;
    Tape::Scope scope(&tape);
    backward(reward_loss(rw, rl), tape);
    double expected = 1.0 / (1.0 + std::exp(-m)) - 1.0;
    CHECK(std::abs(rw.grad()[0] - expected) <= 1e-10);
    CHECK(std::abs(rl.grad()[0] + expected) <= 1e-10);
    CHECK(rw.grad()[0] < 0.0);
    CHECK(rw.grad()[0] > -1.0);
  }
}

TEST_CASE("hybrid loss on a freshly initialised model") {
  ModelConfig cfg = tiny_cfg();
  DualHeadModel m = DualHeadModel::init(cfg);
  DualHeadModel ref = m.snapshot_reference();
  Rng rng(2);
  std::vector<EncodedPreference> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(hafrm::testing::random_preference(rng, cfg, 6, 3));

  HybridConfig hc;
  HybridLoss h = hybrid_loss(batch, m, ref, hc);
  CHECK(h.breakdown.l_s == kLn2);
  CHECK(h.breakdown.l_p == kLn2);
  CHECK(std::abs(h.breakdown.l_h - 1.2 * kLn2) <= 1e-12);
  CHECK(std::abs(h.breakdown.l_h - 0.831776617) <= 1e-9);
  CHECK(h.breakdown.margin == 0.0);
  CHECK(h.objective.item() == h.breakdown.l_h);

  CHECK_THROWS_AS(hybrid_loss(std::span<const EncodedPreference>{}, m, ref, hc), ContractError);
}

TEST_CASE("hybrid loss composition and alpha monotonicity") {
  ModelConfig cfg = tiny_cfg();
  auto [m, ref] = hafrm::testing::perturbed_pair(cfg, 9);
  Rng rng(3);
  std::vector<EncodedPreference> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(hafrm::testing::random_preference(rng, cfg, 5, 4));

  double prev = -INFINITY;
  double l_s = 0.0;
  for (double alpha : {0.0, 0.1, 0.2, 0.5, 1.0}) {
    HybridConfig hc{alpha, 0.1};
    LossBreakdown b = hybrid_loss(batch, m, ref, hc).breakdown;
    CHECK(std::abs(b.l_h - (b.l_s + alpha * b.l_p)) <= 1e-12);
    CHECK(b.l_p > 0.0);
    CHECK(b.l_h >= prev);
    if (alpha == 0.0) {
      l_s = b.l_s;
      CHECK(b.l_h == b.l_s);
    } else {
      CHECK(b.l_h > l_s);
    }
    prev = b.l_h;
  }

  // Values from the tensor path agree with the scalar functions.
  std::vector<double> rw, rl, lw, ll, fw, fl;
  for (const auto& p : batch) {
    rw.push_back(m.reward_value(p.chosen));
    rl.push_back(m.reward_value(p.rejected));
    lw.push_back(m.sequence_log_prob_value(p.chosen));
    ll.push_back(m.sequence_log_prob_value(p.rejected));
    fw.push_back(ref.sequence_log_prob_value(p.chosen));
    fl.push_back(ref.sequence_log_prob_value(p.rejected));
  }
  LossBreakdown b = hybrid_loss(batch, m, ref, HybridConfig{0.2, 0.1}).breakdown;
  CHECK(std::abs(b.l_s - reward_loss(rw, rl)) <= 1e-12);
  CHECK(std::abs(b.l_p - policy_loss_dpo(lw, ll, fw, fl, 0.1)) <= 1e-12);
}

TEST_CASE("objectives select their terms") {
  ModelConfig cfg = tiny_cfg();
  auto [m, ref] = hafrm::testing::perturbed_pair(cfg, 4);
  Rng rng(8);
  std::vector<EncodedPreference> batch;
  for (int i = 0; i < 2; ++i) batch.push_back(hafrm::testing::random_preference(rng, cfg, 4, 2));
  HybridConfig hc;
  LossBreakdown base = hybrid_loss(batch, m, ref, hc, Objective::kBaseline).breakdown;
  CHECK(std::isnan(base.l_p));
  CHECK(base.l_h == base.l_s);
  LossBreakdown dpo = hybrid_loss(batch, m, ref, hc, Objective::kPolicyOnly).breakdown;
  CHECK(dpo.l_h == dpo.l_p);
  CHECK(dpo.l_s == base.l_s);

  CHECK(objective_from_string(to_string(Objective::kPolicyOnly)) == Objective::kPolicyOnly);
  CHECK_THROWS_AS(objective_from_string("ppo"), ConfigError);
  CHECK_THROWS_AS((HybridConfig{-0.1, 0.1}.validate()), ConfigError);
  CHECK_NOTHROW((HybridConfig{-0.1, 0.1}.validate(true)));
  CHECK_THROWS_AS((HybridConfig{0.2, 0.0}.validate()), ConfigError);
}

TEST_CASE("alpha 0 builds the same graph as the baseline") {
  ModelConfig cfg = tiny_cfg();
  Rng rng(6);
  std::vector<EncodedPreference> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(hafrm::testing::random_preference(rng, cfg, 5, 3));

  auto grads = [&](Objective obj, double alpha) {
    auto [m, ref] = hafrm::testing::perturbed_pair(cfg, 10);
    Tape tape;
    Tape::Scope scope(&tape);
    HybridLoss h = hybrid_loss(batch, m, ref, HybridConfig{alpha, 0.1}, obj);
    backward(h.objective, tape);
    std::vector<std::vector<double>> g;
    for (const Tensor& t : m.parameters()) g.push_back(t.grad());
    return std::make_tuple(h.objective.item(), g, tape.size());
  };
  auto [l0, g0, n0] = grads(Objective::kHybrid, 0.0);
  auto [lb, gb, nb] = grads(Objective::kBaseline, 0.2);
  CHECK(l0 == lb);
  CHECK(g0 == gb);
  CHECK(n0 == nb);
}

TEST_CASE("loss log line") {
  LossBreakdown b;
  b.l_s = 0.5;
  auto j = loss_log_entry(3, b);
  CHECK(j["step"] == 3);
  CHECK(j["l_s"] == 0.5);
  CHECK(j["l_p"].is_null());
  CHECK(j.contains("pd_lose_mean"));
}
