#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hafrm/rng.hpp"
#include "hafrm/tensor.hpp"

namespace hafrm {

// Byte-level vocabulary: ids 0..255 are raw bytes, followed by three specials.
struct Vocab {
  static constexpr std::int32_t kPad = 256;
  static constexpr std::int32_t kBos = 257;
  static constexpr std::int32_t kSep = 258;
  static constexpr std::size_t kSize = 259;

  static bool is_special(std::int32_t id) { return id >= 256; }
};

std::vector<std::int32_t> tokenize(std::string_view text);
// Inverse of tokenize; special ids are skipped.
std::string detokenize(std::span<const std::int32_t> ids);

struct ModelConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int max_seq_len = 128;
  int vocab_size = static_cast<int>(Vocab::kSize);
  std::uint64_t seed = 0;

  int d_ff() const { return 4 * d_model; }
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// BOS + prompt + SEP + response, optionally followed by PAD.
struct EncodedPair {
  std::vector<std::int32_t> tokens;
  std::size_t prompt_len = 0;
  std::size_t response_begin = 0;
  std::size_t response_end = 0;
  // Tokens before the first PAD.
  std::size_t length = 0;
};

// Left-truncates the prompt when the sequence is too long; the response is
// never truncated.
EncodedPair encode_pair(std::string_view prompt, std::string_view response, const ModelConfig& cfg);
EncodedPair with_padding(EncodedPair pair, std::size_t extra);

// Shared backbone (token + learned position embedding, pre-norm causal
// transformer blocks, final layer norm) with two linear heads: a scalar
// reward head and a next-token policy head.
class DualHeadModel {
 public:
  struct Block {
    Tensor ln1_gain, ln1_bias;
    Tensor qkv_weight, qkv_bias;  // [d x 3d], [3d]
    Tensor out_weight, out_bias;  // [d x d], [d]
    Tensor ln2_gain, ln2_bias;
    Tensor mlp_in_weight, mlp_in_bias;    // [d x 4d], [4d]
    Tensor mlp_out_weight, mlp_out_bias;  // [4d x d], [d]
  };

  // Weights ~ N(0, 0.02) drawn from `rng` in parameter order; biases zero,
  // layer-norm gains one, reward head weight zero (initial rewards are 0).
  static DualHeadModel init(const ModelConfig& cfg, Rng& rng);
  static DualHeadModel init(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  bool trainable() const { return trainable_; }

  Tensor forward_hidden(const EncodedPair& pair) const;
  Tensor reward(const EncodedPair& pair) const;
  Tensor policy_logits(const EncodedPair& pair) const;
  // Policy logits [vocab] at the last position of an arbitrary token prefix.
  Tensor next_token_logits(std::span<const std::int32_t> tokens) const;
  // Sum over response positions t of log softmax(logits[t - 1])[token t].
  Tensor sequence_log_prob(const EncodedPair& pair) const;

  enum class HeadMode { kSkip, kTracked, kDetached };
  struct HeadOutputs {
    std::optional<Tensor> reward;
    std::optional<Tensor> log_prob;
  };
  // One backbone pass feeding both heads. kDetached computes the value
  // without recording it on the active tape.
  HeadOutputs forward_heads(const EncodedPair& pair, HeadMode reward, HeadMode log_prob) const;

  double reward_value(const EncodedPair& pair) const;
  double sequence_log_prob_value(const EncodedPair& pair) const;

  // Deep copy with every parameter frozen.
  DualHeadModel snapshot_reference() const;
  DualHeadModel clone() const;

  // Parameter handles in a fixed order; the handles share storage with the
  // model.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::vector<Tensor> backbone_parameters() const;
  std::vector<Tensor> reward_head_parameters() const;
  std::vector<Tensor> policy_head_parameters() const;

  // Copies values from `named` (matching names and shapes) into this model.
  void load_parameters(const std::vector<std::pair<std::string, std::vector<double>>>& named);

  std::size_t parameter_count() const;
  // V*d + P*d + L*(12 d^2 + 13 d) + 3d + 1 + d*V + V
  static std::size_t parameter_count(const ModelConfig& cfg);

  Block& block(std::size_t i) { return blocks_.at(i); }
  Tensor& reward_weight() { return reward_weight_; }
  Tensor& reward_bias() { return reward_bias_; }
  Tensor& policy_weight() { return policy_weight_; }
  Tensor& policy_bias() { return policy_bias_; }

 private:
  DualHeadModel() = default;
  Tensor hidden(std::span<const std::int32_t> tokens) const;
  Tensor reward_from_hidden(const Tensor& h, const EncodedPair& pair) const;
  Tensor log_prob_from_hidden(const Tensor& h, const EncodedPair& pair) const;
  void check_tokens(const EncodedPair& pair) const;
  void set_trainable(bool value);

  ModelConfig cfg_;
  bool trainable_ = true;
  Tensor token_embedding_, position_embedding_;
  std::vector<Block> blocks_;
  Tensor final_gain_, final_bias_;
  Tensor reward_weight_, reward_bias_;
  Tensor policy_weight_, policy_bias_;
};

}  // namespace hafrm
