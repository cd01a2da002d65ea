#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "pharmvig/textprep.hpp"

namespace pharmvig::baselines {

using textprep::BioTag;
inline constexpr int kCrfTags = textprep::kNumBioTags;  // fixed {B, I, O}

// Position-local template: previous/current/next lowercased word, shape flags
// at i, character prefixes/suffixes of length 1-3, sentence-boundary markers.
// Deterministic and duplicate-free.
std::vector<std::string> crf_features(const std::vector<std::string>& words, size_t i);

using TagWeights = std::array<double, kCrfTags>;

struct CrfModel {
  std::unordered_map<std::string, TagWeights> feature_weights;
  std::array<TagWeights, kCrfTags> transition_weights{};  // [from][to]
  double l2 = 1e-4;

  nlohmann::json to_json() const;
  static CrfModel from_json(const nlohmann::json& j);
};

struct CrfSequence {
  std::vector<std::string> words;
  std::vector<BioTag> tags;
};

using FeatureSeq = std::vector<std::vector<std::string>>;

FeatureSeq featurize_sequence(const std::vector<std::string>& words);

struct CrfGradient {
  double objective = 0.0;  // log p(gold | x) - (l2/2) * ||w||^2
  std::unordered_map<std::string, TagWeights> feature_grad;
  std::array<TagWeights, kCrfTags> transition_grad{};
};

// Exact gradient of the per-sequence regularized log-likelihood: empirical
// features minus forward-backward expectations minus l2 * w.
CrfGradient crf_log_likelihood_and_gradient(const CrfModel& model, const FeatureSeq& features,
                                            const std::vector<BioTag>& gold);

struct CrfTrainConfig {
  double l2 = 1e-4;
  int epochs = 30;
  double learning_rate = 0.05;
  uint64_t seed = 0;
};

struct CrfTrainResult {
  CrfModel model;
  std::vector<double> epoch_mean_objective;
};

CrfTrainResult crf_train(const std::vector<CrfSequence>& corpus, const CrfTrainConfig& config);

// Viterbi argmax; backpointer ties resolve to the lowest tag index (B < I < O).
std::vector<BioTag> crf_decode(const CrfModel& model, const std::vector<std::string>& words);

// Exposed internals for numerical cross-checks.
double crf_sequence_score(const CrfModel& model, const FeatureSeq& features,
                          const std::vector<BioTag>& tags);
double crf_log_partition(const CrfModel& model, const FeatureSeq& features);           // forward
double crf_log_partition_backward(const CrfModel& model, const FeatureSeq& features);  // backward
std::vector<TagWeights> crf_position_marginals(const CrfModel& model, const FeatureSeq& features);
double crf_viterbi_score(const CrfModel& model, const FeatureSeq& features);

}  // namespace pharmvig::baselines
