#include "hafrm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "hafrm/errors.hpp"

namespace hafrm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

Checkpoint Checkpoint::capture(const DualHeadModel& model, const OptimState* optim) {
  Checkpoint c;
  c.model_config = model.config();
  for (const auto& [name, t] : model.named_parameters()) {
    c.parameters.emplace_back(name, std::vector<double>(t.data().begin(), t.data().end()));
  }
  if (optim != nullptr) c.optim = *optim;
  return c;
}

DualHeadModel Checkpoint::restore_model() const {
  ModelConfig cfg = model_config;
  DualHeadModel m = DualHeadModel::init(cfg);
  m.load_parameters(parameters);
  return m;
}

namespace {

void write_array(std::ofstream& out, const std::vector<double>& values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

std::vector<double> read_array(std::ifstream& in, std::size_t n, const std::string& what) {
  std::vector<double> values(n);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw FormatError("checkpoint truncated while reading " + what);
  return values;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = kCheckpointFormat;
  header["model_config"] = ckpt.model_config;
  header["step"] = ckpt.step;
  header["val_accuracy"] = ckpt.val_accuracy;
  header["val_mean_reward"] = ckpt.val_mean_reward;
  header["config_hash"] = ckpt.config_hash;
  header["meta"] = ckpt.meta;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, values] : ckpt.parameters) {
    tensors.push_back({{"name", name}, {"size", values.size()}});
  }
  header["tensors"] = tensors;
  if (ckpt.optim) {
    header["optim"] = {{"step", ckpt.optim->step}, {"tensors", ckpt.optim->first_moment.size()}};
  } else {
    header["optim"] = nullptr;
  }
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out << kCheckpointFormat << '\n';
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, values] : ckpt.parameters) write_array(out, values);
  if (ckpt.optim) {
    for (const auto& m : ckpt.optim->first_moment) write_array(out, m);
    for (const auto& v : ckpt.optim->second_moment) write_array(out, v);
  }
  if (!out) throw FormatError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::string tag;
  std::getline(in, tag);
  if (tag != kCheckpointFormat) {
    throw FormatError("checkpoint " + path.string() + " has format tag '" + tag.substr(0, 32) +
                      "', expected '" + kCheckpointFormat + "'");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 30)) throw FormatError("checkpoint header is corrupt");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("checkpoint header is truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (header.value("format", "") != kCheckpointFormat) {
    throw FormatError("checkpoint header format mismatch");
  }

  Checkpoint c;
  try {
    c.model_config = header.at("model_config").get<ModelConfig>();
    c.step = header.at("step").get<std::int64_t>();
    c.val_accuracy = header.at("val_accuracy").get<double>();
    c.val_mean_reward = header.at("val_mean_reward").get<double>();
    c.config_hash = header.at("config_hash").get<std::string>();
    c.meta = header.value("meta", nlohmann::json::object());
    std::vector<std::size_t> sizes;
    for (const auto& t : header.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto size = t.at("size").get<std::size_t>();
      sizes.push_back(size);
      c.parameters.emplace_back(name, read_array(in, size, name));
    }
    const auto& optim = header.at("optim");
    if (!optim.is_null()) {
      OptimState state;
      state.step = optim.at("step").get<std::int64_t>();
      const auto n = optim.at("tensors").get<std::size_t>();
      if (n != sizes.size()) throw FormatError("optimizer state does not match tensor manifest");
      for (std::size_t i = 0; i < n; ++i) state.first_moment.push_back(read_array(in, sizes[i], "m"));
      for (std::size_t i = 0; i < n; ++i) state.second_moment.push_back(read_array(in, sizes[i], "v"));
      c.optim = std::move(state);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is missing fields: ") + e.what());
  }
  return c;
}

}  // namespace hafrm
