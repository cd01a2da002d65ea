#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pharmvig/nn.hpp"
#include "pharmvig/textprep.hpp"

namespace pharmvig::finetune {

struct EncoderConfig {
  int vocab_size = 0;
  int hidden_dim = 0;
  int num_layers = 0;
  int num_heads = 0;
  int ffn_dim = 0;
  int max_position = 0;
};

// Post-norm transformer encoder: embeddings + layer norm, then per layer
// multi-head self-attention and a GELU feed-forward block, each with a
// residual connection and layer norm.
class Encoder {
 public:
  Encoder(const EncoderConfig& config, uint64_t init_seed);

  // Deep copies: the new encoder owns fresh parameter nodes.
  Encoder(const Encoder& other);
  Encoder& operator=(const Encoder& other);
  Encoder(Encoder&&) = default;
  Encoder& operator=(Encoder&&) = default;

  // Final hidden states, one row per input id. Builds an autodiff graph
  // rooted at the persistent parameter nodes.
  nn::NodePtr forward(const std::vector<int>& ids) const;

  std::vector<nn::NodePtr> parameters() const;
  const EncoderConfig& config() const { return config_; }

  void save_weights(const std::filesystem::path& path) const;
  void load_weights(const std::filesystem::path& path);

 private:
  struct Layer {
    nn::NodePtr wq, bq, wk, bk, wv, bv, wo, bo;
    nn::NodePtr ln1_gamma, ln1_beta;
    nn::NodePtr w1, b1, w2, b2;
    nn::NodePtr ln2_gamma, ln2_beta;
  };

  std::vector<std::pair<std::string, nn::NodePtr>> named_parameters() const;

  EncoderConfig config_;
  nn::NodePtr token_embeddings_, position_embeddings_;
  nn::NodePtr embedding_ln_gamma_, embedding_ln_beta_;
  std::vector<Layer> layers_;
};

// On-disk checkpoint: config.json + vocab.txt + weights.bin in one directory.
struct Checkpoint {
  EncoderConfig config;
  bool cased = true;
  textprep::SubwordVocab vocab;
  Encoder encoder;
};

void save_checkpoint(const std::filesystem::path& dir, const Encoder& encoder,
                     const textprep::SubwordVocab& vocab, bool cased);
Checkpoint load_checkpoint(const std::filesystem::path& dir);
bool checkpoint_exists(const std::filesystem::path& dir);

}  // namespace pharmvig::finetune
