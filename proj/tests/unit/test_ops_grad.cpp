#include <doctest.h>

#include "hafrm/errors.hpp"
#include "hafrm/grad_check.hpp"
#include "test_util.hpp"

using namespace hafrm;

TEST_CASE("every primitive op passes a finite-difference check") {
  for (const auto& c : hafrm::testing::primitive_op_cases()) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      CAPTURE(c.name);
      CAPTURE(seed);
      GradCheckReport r = c.run(seed, 1e-6);
      CHECK(r.passed);
      CHECK(r.coords_checked > 0);
    }
  }
}

TEST_CASE("gradient through attention-style composition") {
  Rng rng(9);
  Tensor q = hafrm::testing::random_tensor({4, 3}, rng);
  Tensor k = hafrm::testing::random_tensor({4, 3}, rng);
  Tensor v = hafrm::testing::random_tensor({4, 3}, rng);
  GradCheckOptions o;
  auto r = grad_check(
      [&] {
        Tensor att = causal_softmax(scale(matmul(q, transpose(k)), 0.5));
        return hafrm::testing::project(matmul(att, v), 1);
      },
      {q, k, v}, o);
  CHECK(r.passed);
}

TEST_CASE("explicit coordinates restrict the check") {
  Rng rng(1);
  Tensor x = hafrm::testing::random_tensor({10}, rng);
  GradCheckOptions o;
  o.coords = {{1, 7}};
  auto r = grad_check([&] { return sum(mul(x, x)); }, {x}, o);
  CHECK(r.passed);
  CHECK(r.coords_checked == 2);
  o.coords = {{10}};
  CHECK_THROWS_AS(grad_check([&] { return sum(x); }, {x}, o), ContractError);
}
