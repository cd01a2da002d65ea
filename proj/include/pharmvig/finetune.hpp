#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pharmvig/corpus.hpp"
#include "pharmvig/encoder.hpp"
#include "pharmvig/eval.hpp"
#include "pharmvig/nn.hpp"
#include "pharmvig/textprep.hpp"

namespace pharmvig::finetune {

enum class VariantKey { BC, BU, BB10, BB11, CBA, CBD, CBBA, CBBD };

inline constexpr std::array<VariantKey, 8> kAllVariantKeys = {
    VariantKey::BC,  VariantKey::BU,  VariantKey::BB10, VariantKey::BB11,
    VariantKey::CBA, VariantKey::CBD, VariantKey::CBBA, VariantKey::CBBD};

std::string to_string(VariantKey key);
std::optional<VariantKey> parse_variant_key(const std::string& s);  // case-insensitive

struct ModelVariant {
  VariantKey key = VariantKey::BC;
  std::string checkpoint_ref;
  bool cased = true;
  int hidden_dim = 0;
};

// Registry config: {"variants": [{"key": "B-C", "checkpoint": <dir>, "cased": true}, ...]}.
// All 8 keys must be present exactly once with a resolvable checkpoint; the
// ELMo slot is reserved and rejected if configured. Relative checkpoint paths
// resolve against the registry file's directory.
std::map<VariantKey, ModelVariant> registry_load(const std::filesystem::path& path);

enum class TaskHead { Classify3, Classify2, TagBio };

std::string to_string(TaskHead head);
TaskHead task_head_from_string(const std::string& s);

struct FinetuneConfig {
  int max_seq_len = 128;
  int batch_size = 32;
  double learning_rate = 2e-5;
  int epochs = 1;
  uint64_t seed = 0;
  TaskHead task_head = TaskHead::Classify3;

  nlohmann::json to_json() const;
  static FinetuneConfig from_json(const nlohmann::json& j);
};

struct TextClassExample {
  std::string text;
  std::string label;
};

struct TokenTagExample {
  std::string text;
  std::vector<textprep::BioTag> tags;  // aligned with word_tokenize(text)
};

class TrainedModel {
 public:
  TrainedModel(Checkpoint state, ModelVariant variant, FinetuneConfig config);

  ModelVariant variant;
  FinetuneConfig config;
  std::vector<std::string> class_names;  // classification heads only
  std::vector<eval::EpochMetric> epoch_metrics;

  const Encoder& encoder() const { return state_.encoder; }
  Encoder& encoder() { return state_.encoder; }
  const textprep::SubwordVocab& vocab() const { return state_.vocab; }
  bool cased() const { return state_.cased; }
  int effective_seq_len() const;

  nn::NodePtr head_weights;  // hidden x classes (or x 3 tags)
  nn::NodePtr head_bias;     // 1 x classes

  void save(const std::filesystem::path& dir) const;
  static TrainedModel load(const std::filesystem::path& dir);

 private:
  Checkpoint state_;
};

TrainedModel fine_tune_classifier(const Checkpoint& checkpoint, const ModelVariant& variant,
                                  const std::vector<TextClassExample>& train,
                                  const std::vector<TextClassExample>& dev,
                                  const FinetuneConfig& config);

TrainedModel fine_tune_tagger(const Checkpoint& checkpoint, const ModelVariant& variant,
                              const std::vector<TokenTagExample>& train,
                              const std::vector<TokenTagExample>& dev,
                              const FinetuneConfig& config);

// Bundle adapters for the three tasks.
TrainedModel fine_tune(const Checkpoint& checkpoint, const ModelVariant& variant,
                       const corpus::SentimentBundle& bundle, FinetuneConfig config);
TrainedModel fine_tune(const Checkpoint& checkpoint, const ModelVariant& variant,
                       const corpus::PresenceBundle& bundle, FinetuneConfig config);
TrainedModel fine_tune(const Checkpoint& checkpoint, const ModelVariant& variant,
                       const corpus::NerBundle& bundle, FinetuneConfig config);

std::vector<TextClassExample> to_class_examples(const corpus::SentimentBundle& bundle,
                                                const std::vector<corpus::SentimentExample>& split);
std::vector<TextClassExample> to_class_examples(const std::vector<corpus::TweetRecord>& split);
std::vector<TokenTagExample> to_tag_examples(const std::vector<corpus::NerRecord>& split);

inline constexpr const char* kAdrLabel = "adr";
inline constexpr const char* kNoAdrLabel = "no_adr";

struct ClassifyPrediction {
  std::vector<std::string> labels;
  Eigen::MatrixXd probabilities;  // n x classes, rows sum to 1
};

ClassifyPrediction predict_classify(const TrainedModel& model,
                                    const std::vector<std::string>& texts);

std::vector<std::vector<textprep::BioTag>> predict_tags(const TrainedModel& model,
                                                        const std::vector<std::string>& texts);

struct ExtractedFeatures {
  Eigen::MatrixXd cls_vectors;  // n x hidden_dim
  std::vector<textprep::PaddedEmbeddingMatrix> token_matrices;  // uniform row count
  VariantKey source_variant = VariantKey::BC;
  bool from_finetuned = false;
};

ExtractedFeatures extract_embeddings(const Encoder& encoder, const textprep::SubwordVocab& vocab,
                                     bool cased, VariantKey key, bool from_finetuned,
                                     const std::vector<std::string>& texts, int max_seq_len = 128);
ExtractedFeatures extract_embeddings(const Checkpoint& checkpoint, VariantKey key,
                                     const std::vector<std::string>& texts, int max_seq_len = 128);
ExtractedFeatures extract_embeddings(const TrainedModel& model,
                                     const std::vector<std::string>& texts);

}  // namespace pharmvig::finetune
