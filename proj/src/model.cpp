#include "hafrm/model.hpp"

#include <cmath>
#include <unordered_map>

#include "hafrm/errors.hpp"
#include "hafrm/ops.hpp"

namespace hafrm {

std::vector<std::int32_t> tokenize(std::string_view text) {
  std::vector<std::int32_t> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(static_cast<std::int32_t>(static_cast<unsigned char>(c)));
  return ids;
}

std::string detokenize(std::span<const std::int32_t> ids) {
  std::string out;
  out.reserve(ids.size());
  for (auto id : ids) {
    if (id >= 0 && id < 256) out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
  }
  return out;
}

void ModelConfig::validate() const {
  if (d_model <= 0 || n_layers <= 0 || n_heads <= 0) {
    throw ConfigError("model: d_model, n_layers and n_heads must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("model: n_heads (" + std::to_string(n_heads) + ") must divide d_model (" +
                      std::to_string(d_model) + ")");
  }
  if (max_seq_len < 2) throw ConfigError("model: max_seq_len must be at least 2");
  if (vocab_size <= 0) throw ConfigError("model: vocab_size must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d_model", c.d_model},         {"n_layers", c.n_layers},
                     {"n_heads", c.n_heads},         {"max_seq_len", c.max_seq_len},
                     {"vocab_size", c.vocab_size},   {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.d_model = j.value("d_model", d.d_model);
  c.n_layers = j.value("n_layers", d.n_layers);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.max_seq_len = j.value("max_seq_len", d.max_seq_len);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.seed = j.value("seed", d.seed);
}

EncodedPair encode_pair(std::string_view prompt, std::string_view response, const ModelConfig& cfg) {
  if (response.empty()) throw ContractError("encode_pair: response is empty");
  const std::size_t max_len = static_cast<std::size_t>(cfg.max_seq_len);
  if (response.size() + 2 > max_len) {
    throw LengthError("encode_pair: response of " + std::to_string(response.size()) +
                      " tokens plus BOS/SEP exceeds max_seq_len " + std::to_string(max_len));
  }
  const std::size_t budget = max_len - 2 - response.size();
  if (prompt.size() > budget) prompt.remove_prefix(prompt.size() - budget);

  EncodedPair pair;
  pair.tokens.reserve(prompt.size() + response.size() + 2);
  pair.tokens.push_back(Vocab::kBos);
  for (auto id : tokenize(prompt)) pair.tokens.push_back(id);
  pair.tokens.push_back(Vocab::kSep);
  for (auto id : tokenize(response)) pair.tokens.push_back(id);
  pair.prompt_len = prompt.size();
  pair.response_begin = prompt.size() + 2;
  pair.response_end = pair.tokens.size();
  pair.length = pair.tokens.size();
  return pair;
}

EncodedPair with_padding(EncodedPair pair, std::size_t extra) {
  pair.tokens.insert(pair.tokens.end(), extra, Vocab::kPad);
  return pair;
}

namespace {

Tensor normal_param(Shape shape, Rng& rng) {
  const auto n = shape_numel(shape);
  std::vector<double> values(n);
  for (auto& v : values) v = rng.normal(0.0, 0.02);
  return Tensor(std::move(shape), std::move(values), true);
}

}  // namespace

DualHeadModel DualHeadModel::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  const auto p = static_cast<std::size_t>(cfg.max_seq_len);
  const auto f = static_cast<std::size_t>(cfg.d_ff());

  DualHeadModel m;
  m.cfg_ = cfg;
  m.token_embedding_ = normal_param({v, d}, rng);
  m.position_embedding_ = normal_param({p, d}, rng);
  for (int l = 0; l < cfg.n_layers; ++l) {
    Block b;
    b.ln1_gain = Tensor::full({d}, 1.0, true);
    b.ln1_bias = Tensor::zeros({d}, true);
    b.qkv_weight = normal_param({d, 3 * d}, rng);
    b.qkv_bias = Tensor::zeros({3 * d}, true);
    b.out_weight = normal_param({d, d}, rng);
    b.out_bias = Tensor::zeros({d}, true);
    b.ln2_gain = Tensor::full({d}, 1.0, true);
    b.ln2_bias = Tensor::zeros({d}, true);
    b.mlp_in_weight = normal_param({d, f}, rng);
    b.mlp_in_bias = Tensor::zeros({f}, true);
    b.mlp_out_weight = normal_param({f, d}, rng);
    b.mlp_out_bias = Tensor::zeros({d}, true);
    m.blocks_.push_back(std::move(b));
  }
  m.final_gain_ = Tensor::full({d}, 1.0, true);
  m.final_bias_ = Tensor::zeros({d}, true);
  m.reward_weight_ = Tensor::zeros({d, 1}, true);
  m.reward_bias_ = Tensor::zeros({1}, true);
  m.policy_weight_ = normal_param({d, v}, rng);
  m.policy_bias_ = Tensor::zeros({v}, true);
  return m;
}

DualHeadModel DualHeadModel::init(const ModelConfig& cfg) {
  Rng rng(cfg.seed);
  return init(cfg, rng);
}

void DualHeadModel::check_tokens(const EncodedPair& pair) const {
  if (pair.tokens.size() > static_cast<std::size_t>(cfg_.max_seq_len)) {
    throw LengthError("sequence of " + std::to_string(pair.tokens.size()) +
                      " tokens exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
  }
  if (pair.length == 0 || pair.length > pair.tokens.size()) {
    throw ContractError("encoded pair has an invalid non-PAD length");
  }
  if (pair.response_begin >= pair.response_end || pair.response_end > pair.length ||
      pair.response_begin == 0) {
    throw ContractError("encoded pair has an empty or out-of-range response span");
  }
}

Tensor DualHeadModel::hidden(std::span<const std::int32_t> tokens) const {
  const std::size_t t = tokens.size();
  const std::size_t d = static_cast<std::size_t>(cfg_.d_model);
  const std::size_t heads = static_cast<std::size_t>(cfg_.n_heads);
  const std::size_t dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  constexpr double kEps = 1e-5;

  for (auto id : tokens) {
    if (id < 0 || id >= cfg_.vocab_size) {
      throw DimensionError("token id " + std::to_string(id) + " outside vocabulary of " +
                           std::to_string(cfg_.vocab_size));
    }
  }

  Tensor x = add(embedding(token_embedding_, tokens), slice_rows(position_embedding_, 0, t));
  for (const auto& b : blocks_) {
    Tensor h = layer_norm(x, b.ln1_gain, b.ln1_bias, kEps);
    Tensor qkv = add_row_bias(matmul(h, b.qkv_weight), b.qkv_bias);
    std::vector<Tensor> head_out;
    head_out.reserve(heads);
    for (std::size_t i = 0; i < heads; ++i) {
      Tensor q = slice_cols(qkv, i * dh, dh);
      Tensor k = slice_cols(qkv, d + i * dh, dh);
      Tensor v = slice_cols(qkv, 2 * d + i * dh, dh);
      Tensor attn = causal_softmax(scale(matmul(q, transpose(k)), inv_sqrt_dh));
      head_out.push_back(matmul(attn, v));
    }
    Tensor merged = heads == 1 ? head_out.front() : concat_cols(head_out);
    x = add(x, add_row_bias(matmul(merged, b.out_weight), b.out_bias));
    Tensor h2 = layer_norm(x, b.ln2_gain, b.ln2_bias, kEps);
    Tensor mlp = gelu(add_row_bias(matmul(h2, b.mlp_in_weight), b.mlp_in_bias));
    x = add(x, add_row_bias(matmul(mlp, b.mlp_out_weight), b.mlp_out_bias));
  }
  return layer_norm(x, final_gain_, final_bias_, kEps);
}

Tensor DualHeadModel::forward_hidden(const EncodedPair& pair) const {
  check_tokens(pair);
  return hidden(pair.tokens);
}

Tensor DualHeadModel::reward_from_hidden(const Tensor& h, const EncodedPair& pair) const {
  Tensor last = slice_rows(h, pair.length - 1, 1);
  return add_row_bias(matmul(last, reward_weight_), reward_bias_);
}

Tensor DualHeadModel::log_prob_from_hidden(const Tensor& h, const EncodedPair& pair) const {
  const std::size_t n = pair.response_end - pair.response_begin;
  // Logits at position t - 1 predict token t; only response targets are scored.
  Tensor rows = slice_rows(h, pair.response_begin - 1, n);
  Tensor logp = log_softmax(add_row_bias(matmul(rows, policy_weight_), policy_bias_));
  std::vector<std::size_t> row_idx(n), col_idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    row_idx[i] = i;
    col_idx[i] = static_cast<std::size_t>(pair.tokens[pair.response_begin + i]);
  }
  return sum(gather(logp, row_idx, col_idx));
}

DualHeadModel::HeadOutputs DualHeadModel::forward_heads(const EncodedPair& pair, HeadMode reward,
                                                        HeadMode log_prob) const {
  check_tokens(pair);
  // Positions after `length` are PAD and cannot influence earlier positions
  // under the causal mask, so only the non-PAD prefix is run.
  const bool track = reward == HeadMode::kTracked || log_prob == HeadMode::kTracked;
  std::optional<NoGrad> no_grad;
  if (!track) no_grad.emplace();
  Tensor h = hidden(std::span(pair.tokens).first(pair.length));
  HeadOutputs out;
  auto run = [&](HeadMode mode, auto&& head) -> std::optional<Tensor> {
    if (mode == HeadMode::kSkip) return std::nullopt;
    if (mode == HeadMode::kDetached) {
      NoGrad detached;
      return head();
    }
    return head();
  };
  out.reward = run(reward, [&] { return reward_from_hidden(h, pair); });
  out.log_prob = run(log_prob, [&] { return log_prob_from_hidden(h, pair); });
  return out;
}

Tensor DualHeadModel::reward(const EncodedPair& pair) const {
  return *forward_heads(pair, HeadMode::kTracked, HeadMode::kSkip).reward;
}

Tensor DualHeadModel::policy_logits(const EncodedPair& pair) const {
  Tensor h = forward_hidden(pair);
  return add_row_bias(matmul(h, policy_weight_), policy_bias_);
}

Tensor DualHeadModel::next_token_logits(std::span<const std::int32_t> tokens) const {
  if (tokens.empty() || tokens.size() > static_cast<std::size_t>(cfg_.max_seq_len)) {
    throw LengthError("next_token_logits: prefix of " + std::to_string(tokens.size()) +
                      " tokens is empty or exceeds max_seq_len");
  }
  Tensor h = hidden(tokens);
  Tensor last = slice_rows(h, tokens.size() - 1, 1);
  return add_row_bias(matmul(last, policy_weight_), policy_bias_);
}

Tensor DualHeadModel::sequence_log_prob(const EncodedPair& pair) const {
  return *forward_heads(pair, HeadMode::kSkip, HeadMode::kTracked).log_prob;
}

double DualHeadModel::reward_value(const EncodedPair& pair) const {
  NoGrad no_grad;
  return reward(pair).item();
}

double DualHeadModel::sequence_log_prob_value(const EncodedPair& pair) const {
  NoGrad no_grad;
  return sequence_log_prob(pair).item();
}

std::vector<std::pair<std::string, Tensor>> DualHeadModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embed.token", token_embedding_);
  out.emplace_back("embed.position", position_embedding_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto& b = blocks_[l];
    const std::string p = "blocks." + std::to_string(l) + ".";
    out.emplace_back(p + "ln1.gain", b.ln1_gain);
    out.emplace_back(p + "ln1.bias", b.ln1_bias);
    out.emplace_back(p + "attn.qkv.weight", b.qkv_weight);
    out.emplace_back(p + "attn.qkv.bias", b.qkv_bias);
    out.emplace_back(p + "attn.out.weight", b.out_weight);
    out.emplace_back(p + "attn.out.bias", b.out_bias);
    out.emplace_back(p + "ln2.gain", b.ln2_gain);
    out.emplace_back(p + "ln2.bias", b.ln2_bias);
    out.emplace_back(p + "mlp.in.weight", b.mlp_in_weight);
    out.emplace_back(p + "mlp.in.bias", b.mlp_in_bias);
    out.emplace_back(p + "mlp.out.weight", b.mlp_out_weight);
    out.emplace_back(p + "mlp.out.bias", b.mlp_out_bias);
  }
  out.emplace_back("final_ln.gain", final_gain_);
  out.emplace_back("final_ln.bias", final_bias_);
  out.emplace_back("reward_head.weight", reward_weight_);
  out.emplace_back("reward_head.bias", reward_bias_);
  out.emplace_back("policy_head.weight", policy_weight_);
  out.emplace_back("policy_head.bias", policy_bias_);
  return out;
}

std::vector<Tensor> DualHeadModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<Tensor> DualHeadModel::backbone_parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) {
    if (name.rfind("reward_head.", 0) != 0 && name.rfind("policy_head.", 0) != 0) out.push_back(t);
  }
  return out;
}

std::vector<Tensor> DualHeadModel::reward_head_parameters() const {
  return {reward_weight_, reward_bias_};
}

std::vector<Tensor> DualHeadModel::policy_head_parameters() const {
  return {policy_weight_, policy_bias_};
}

void DualHeadModel::load_parameters(
    const std::vector<std::pair<std::string, std::vector<double>>>& named) {
  std::unordered_map<std::string, const std::vector<double>*> by_name;
  for (const auto& [name, values] : named) by_name[name] = &values;
  for (auto& [name, t] : named_parameters()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("missing parameter '" + name + "'");
    if (it->second->size() != t.size()) {
      throw FormatError("parameter '" + name + "' has " + std::to_string(it->second->size()) +
                        " values, expected " + std::to_string(t.size()));
    }
    Tensor handle = t;
    std::copy(it->second->begin(), it->second->end(), handle.mutable_data().begin());
  }
}

void DualHeadModel::set_trainable(bool value) {
  trainable_ = value;
  for (auto& t : parameters()) {
    Tensor handle = t;
    handle.set_requires_grad(value);
  }
}

DualHeadModel DualHeadModel::clone() const {
  DualHeadModel m = *this;
  m.token_embedding_ = token_embedding_.clone();
  m.position_embedding_ = position_embedding_.clone();
  for (auto& b : m.blocks_) {
    for (Tensor* t : {&b.ln1_gain, &b.ln1_bias, &b.qkv_weight, &b.qkv_bias, &b.out_weight,
                      &b.out_bias, &b.ln2_gain, &b.ln2_bias, &b.mlp_in_weight, &b.mlp_in_bias,
                      &b.mlp_out_weight, &b.mlp_out_bias}) {
      *t = t->clone();
    }
  }
  for (Tensor* t : {&m.final_gain_, &m.final_bias_, &m.reward_weight_, &m.reward_bias_,
                    &m.policy_weight_, &m.policy_bias_}) {
    *t = t->clone();
  }
  return m;
}

DualHeadModel DualHeadModel::snapshot_reference() const {
  DualHeadModel m = clone();
  m.set_trainable(false);
  return m;
}

std::size_t DualHeadModel::parameter_count() const {
  std::size_t n = 0;
  for (auto& t : parameters()) n += t.size();
  return n;
}

std::size_t DualHeadModel::parameter_count(const ModelConfig& cfg) {
  const std::size_t v = cfg.vocab_size, d = cfg.d_model, p = cfg.max_seq_len, l = cfg.n_layers;
  return v * d + p * d + l * (12 * d * d + 13 * d) + 3 * d + 1 + d * v + v;
}

}  // namespace hafrm
