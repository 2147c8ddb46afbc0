#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "hafrm/checkpoint.hpp"
#include "hafrm/cli.hpp"
#include "hafrm/errors.hpp"
#include "hafrm/eval.hpp"
#include "hafrm/losses.hpp"
#include "hafrm/synth.hpp"

namespace py = pybind11;
using namespace hafrm;

namespace {

// A checkpoint restored for scoring.
class RewardModel {
 public:
  explicit RewardModel(const std::string& path)
      : ckpt_(load_checkpoint(path)), model_(ckpt_.restore_model()) {}

  double score(const std::string& prompt, const std::string& response) const {
    return model_.reward_value(encode_pair(prompt, response, model_.config()));
  }
  double log_prob(const std::string& prompt, const std::string& response) const {
    return model_.sequence_log_prob_value(encode_pair(prompt, response, model_.config()));
  }
  std::size_t best_of_n(const std::string& prompt, const std::vector<std::string>& candidates) const {
    return hafrm::best_of_n(ModelScorer(model_), "", prompt, candidates).selected;
  }
  std::int64_t step() const { return ckpt_.step; }
  double val_accuracy() const { return ckpt_.val_accuracy; }
  std::size_t parameter_count() const { return model_.parameter_count(); }

 private:
  Checkpoint ckpt_;
  DualHeadModel model_;
};

}  // namespace

PYBIND11_MODULE(_hafrm, m) {
  m.doc() = "Hybrid reward-model training core";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());

  m.def("reward_loss",
        [](const std::vector<double>& r_w, const std::vector<double>& r_l) {
          return reward_loss(r_w, r_l);
        },
        py::arg("r_w"), py::arg("r_l"), "Mean -log sigmoid(r_w - r_l).");
  m.def("policy_loss_dpo",
        [](const std::vector<double>& w, const std::vector<double>& l, const std::vector<double>& rw,
           const std::vector<double>& rl, double tau) { return policy_loss_dpo(w, l, rw, rl, tau); },
        py::arg("logp_w"), py::arg("logp_l"), py::arg("ref_w"), py::arg("ref_l"), py::arg("tau"));

  m.def("synth_generate",
        [](const std::string& rule, std::size_t n, std::uint64_t seed) {
          py::list out;
          for (const auto& r : synth_generate(rule, n, seed).records) {
            py::dict d;
            d["id"] = r.id;
            d["prompt"] = r.prompt;
            d["chosen"] = r.chosen;
            d["rejected"] = r.rejected;
            d["source"] = r.source;
            out.append(d);
          }
          return out;
        },
        py::arg("rule"), py::arg("n"), py::arg("seed") = 0);
  m.def("truth_score", [](const std::string& rule, const std::string& y) { return truth_score(rule, y); });

  // Runs the command line in-process; returns (exit code, stdout, stderr).
  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  });

  py::class_<RewardModel>(m, "RewardModel")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("score", &RewardModel::score)
      .def("log_prob", &RewardModel::log_prob)
      .def("best_of_n", &RewardModel::best_of_n)
      .def_property_readonly("step", &RewardModel::step)
      .def_property_readonly("val_accuracy", &RewardModel::val_accuracy)
      .def_property_readonly("parameter_count", &RewardModel::parameter_count);
}
