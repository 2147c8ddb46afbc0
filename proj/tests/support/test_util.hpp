#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hafrm/grad_check.hpp"
#include "hafrm/losses.hpp"
#include "hafrm/model.hpp"
#include "hafrm/ops.hpp"
#include "hafrm/rng.hpp"
#include "hafrm/tensor.hpp"

namespace hafrm::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double sd = 1.0, bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.normal(0.0, sd);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hafrm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Projects an op output onto a fixed random direction so every output
// coordinate contributes to the checked gradient.
inline Tensor project(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed ^ 0x5bd1e995ULL);
  Tensor w = random_tensor(y.shape(), rng, 1.0, false);
  return sum(mul(y, w));
}

struct OpCase {
  std::string name;
  std::function<GradCheckReport(std::uint64_t seed, double tol)> run;
};

// One grad check per primitive op on random inputs drawn from `seed`.
inline std::vector<OpCase> primitive_op_cases() {
  auto check = [](std::function<Tensor()> f, std::vector<Tensor> inputs, double tol) {
    GradCheckOptions o;
    o.h = 1e-5;
    o.tol = tol;
    return grad_check(f, std::move(inputs), o);
  };
  std::vector<OpCase> cases;
  auto add_case = [&](std::string name,
                      std::function<GradCheckReport(Rng&, std::uint64_t, double)> body) {
    cases.push_back({name, [body](std::uint64_t seed, double tol) {
                       Rng rng(seed);
                       return body(rng, seed, tol);
                     }});
  };

  add_case("matmul", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
    return check([=] { return project(matmul(a, b), s); }, {a, b}, tol);
  });
  add_case("transpose", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({3, 4}, rng);
    return check([=] { return project(transpose(a), s); }, {a}, tol);
  });
  add_case("add", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
    return check([=] { return project(add(a, b), s); }, {a, b}, tol);
  });
  add_case("add_shared_input", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({2, 3}, rng);
    return check([=] { return project(add(a, mul(a, a)), s); }, {a}, tol);
  });
  add_case("sub", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
    return check([=] { return project(sub(a, b), s); }, {a, b}, tol);
  });
  add_case("mul", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
    return check([=] { return project(mul(a, b), s); }, {a, b}, tol);
  });
  add_case("scale", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({5}, rng);
    return check([=] { return project(scale(a, -1.7), s); }, {a}, tol);
  });
  add_case("add_scalar", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({5}, rng);
    return check([=] { return project(mul(add_scalar(a, 0.3), a), s); }, {a}, tol);
  });
  add_case("add_row_bias", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor x = random_tensor({3, 4}, rng), b = random_tensor({4}, rng);
    return check([=] { return project(add_row_bias(x, b), s); }, {x, b}, tol);
  });
  add_case("gelu", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({3, 4}, rng, 2.0);
    return check([=] { return project(gelu(a), s); }, {a}, tol);
  });
  add_case("log_sigmoid", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({8}, rng, 4.0);
    return check([=] { return project(log_sigmoid(a), s); }, {a}, tol);
  });
  add_case("log_softmax", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({3, 5}, rng, 2.0);
    return check([=] { return project(log_softmax(a), s); }, {a}, tol);
  });
  add_case("causal_softmax", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({4, 4}, rng, 2.0);
    return check([=] { return project(causal_softmax(a), s); }, {a}, tol);
  });
  add_case("layer_norm", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor x = random_tensor({3, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
    return check([=] { return project(layer_norm(x, g, b, 1e-5), s); }, {x, g, b}, tol);
  });
  add_case("embedding", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor table = random_tensor({5, 3}, rng);
    std::vector<std::int32_t> ids{4, 0, 4, 2};
    return check([=] { return project(embedding(table, ids), s); }, {table}, tol);
  });
  add_case("slice_rows", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({5, 3}, rng);
    return check([=] { return project(slice_rows(a, 1, 3), s); }, {a}, tol);
  });
  add_case("slice_cols", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({3, 6}, rng);
    return check([=] { return project(slice_cols(a, 2, 3), s); }, {a}, tol);
  });
  add_case("concat_cols", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({3, 2}, rng), b = random_tensor({3, 4}, rng);
    return check([=] { return project(concat_cols({a, b, a}), s); }, {a, b}, tol);
  });
  add_case("stack", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({4}, rng);
    return check([=] { return project(stack({sum(a), mean(a), sum(mul(a, a))}), s); }, {a}, tol);
  });
  add_case("gather", [check](Rng& rng, std::uint64_t s, double tol) {
    Tensor a = random_tensor({3, 4}, rng);
    std::vector<std::size_t> rows{0, 2, 2, 1}, cols{3, 0, 0, 1};
    return check([=] { return project(gather(a, rows, cols), s); }, {a}, tol);
  });
  add_case("sum", [check](Rng& rng, std::uint64_t, double tol) {
    Tensor a = random_tensor({2, 3}, rng);
    return check([=] { return sum(mul(a, a)); }, {a}, tol);
  });
  add_case("mean", [check](Rng& rng, std::uint64_t, double tol) {
    Tensor a = random_tensor({2, 3}, rng);
    return check([=] { return mean(mul(a, a)); }, {a}, tol);
  });
  return cases;
}

// Random token pair with the given response; prompt drawn from printable ASCII.
inline EncodedPreference random_preference(Rng& rng, const ModelConfig& cfg, std::size_t prompt_len,
                                           std::size_t response_len) {
  auto text = [&](std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char>(rng.between(97, 122)));
    return s;
  };
  std::string prompt = text(prompt_len);
  std::string a = text(response_len), b = text(response_len + 1);
  EncodedPreference p;
  p.id = "r" + std::to_string(rng.next() % 1000);
  p.chosen = encode_pair(prompt, a, cfg);
  p.rejected = encode_pair(prompt, b, cfg);
  return p;
}

// Model with every head active: non-zero reward head and a reference that
// differs from the policy, so every loss term has a non-trivial gradient.
inline std::pair<DualHeadModel, DualHeadModel> perturbed_pair(const ModelConfig& cfg,
                                                              std::uint64_t seed) {
  Rng rng(seed);
  DualHeadModel model = DualHeadModel::init(cfg, rng);
  DualHeadModel reference = DualHeadModel::init(cfg, rng).snapshot_reference();
  for (double& w : model.reward_weight().mutable_data()) w = rng.normal(0.0, 0.5);
  model.reward_bias().mutable_data()[0] = 0.1;
  for (auto& [name, t] : model.named_parameters()) {
    if (name.find("bias") != std::string::npos) {
      for (double& b : t.mutable_data()) b += rng.normal(0.0, 0.05);
    }
  }
  return {std::move(model), std::move(reference)};
}

// Offsets to check in each parameter: for the token embedding, entries of
// rows that the batch uses; elsewhere a seeded sample.
inline std::vector<std::vector<std::size_t>> model_check_coords(
    const DualHeadModel& model, const std::vector<EncodedPreference>& batch, std::size_t per_tensor,
    std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> coords;
  const std::size_t d = static_cast<std::size_t>(model.config().d_model);
  std::vector<std::int32_t> used;
  for (const auto& p : batch) {
    for (const EncodedPair* e : {&p.chosen, &p.rejected}) {
      used.insert(used.end(), e->tokens.begin(), e->tokens.begin() + e->length);
    }
  }
  for (const auto& [name, t] : model.named_parameters()) {
    std::vector<std::size_t> c;
    if (name == "embed.token") {
      for (std::size_t i = 0; i < per_tensor; ++i) {
        auto row = static_cast<std::size_t>(used[rng.below(used.size())]);
        c.push_back(row * d + rng.below(d));
      }
    } else if (name == "embed.position") {
      for (std::size_t i = 0; i < per_tensor; ++i) c.push_back(rng.below(8) * d + rng.below(d));
    } else {
      for (std::size_t i = 0; i < per_tensor && i < t.size(); ++i) c.push_back(rng.below(t.size()));
    }
    coords.push_back(std::move(c));
  }
  return coords;
}

}  // namespace hafrm::testing
