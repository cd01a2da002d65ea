#include "pharmvig/crf.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "pharmvig/rng.hpp"

namespace pharmvig::baselines {

namespace {

double log_sum_exp(const TagWeights& v) {
  const double max = std::max({v[0], v[1], v[2]});
  if (!std::isfinite(max)) return max;
  return max + std::log(std::exp(v[0] - max) + std::exp(v[1] - max) + std::exp(v[2] - max));
}

bool is_all_caps(const std::string& w) {
  bool has_alpha = false;
  for (const char c : w) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      has_alpha = true;
      if (!std::isupper(static_cast<unsigned char>(c))) return false;
    }
  }
  return has_alpha;
}

bool is_digit_word(const std::string& w) {
  if (w.empty()) return false;
  for (const char c : w) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

// emission score for tag y at position t
TagWeights emission_scores(const CrfModel& model, const std::vector<std::string>& features) {
  TagWeights scores{};
  for (const auto& f : features) {
    const auto it = model.feature_weights.find(f);
    if (it == model.feature_weights.end()) continue;
    for (int y = 0; y < kCrfTags; ++y) scores[y] += it->second[y];
  }
  return scores;
}

}  // namespace

std::vector<std::string> crf_features(const std::vector<std::string>& words, size_t i) {
  if (i >= words.size()) throw std::out_of_range("crf_features: index out of range");
  const std::string& w = words[i];
  const std::string lower = textprep::ascii_lower(w);

  std::vector<std::string> feats;
  feats.push_back("w0=" + lower);
  if (i > 0) {
    feats.push_back("w-1=" + textprep::ascii_lower(words[i - 1]));
  } else {
    feats.push_back("BOS");
  }
  if (i + 1 < words.size()) {
    feats.push_back("w+1=" + textprep::ascii_lower(words[i + 1]));
  } else {
    feats.push_back("EOS");
  }
  if (!w.empty() && std::isupper(static_cast<unsigned char>(w[0]))) feats.push_back("cap=1");
  if (is_all_caps(w)) feats.push_back("allcaps=1");
  if (is_digit_word(w)) feats.push_back("digit=1");
  for (size_t n = 1; n <= 3 && n <= lower.size(); ++n) {
    feats.push_back("pre" + std::to_string(n) + "=" + lower.substr(0, n));
    feats.push_back("suf" + std::to_string(n) + "=" + lower.substr(lower.size() - n));
  }
  return feats;
}

FeatureSeq featurize_sequence(const std::vector<std::string>& words) {
  FeatureSeq out;
  out.reserve(words.size());
  for (size_t i = 0; i < words.size(); ++i) out.push_back(crf_features(words, i));
  return out;
}

double crf_sequence_score(const CrfModel& model, const FeatureSeq& features,
                          const std::vector<BioTag>& tags) {
  if (features.size() != tags.size() || features.empty()) {
    throw std::invalid_argument("crf_sequence_score: empty or misaligned sequence");
  }
  double score = 0.0;
  for (size_t t = 0; t < features.size(); ++t) {
    score += emission_scores(model, features[t])[static_cast<int>(tags[t])];
    if (t > 0) {
      score += model.transition_weights[static_cast<int>(tags[t - 1])][static_cast<int>(tags[t])];
    }
  }
  return score;
}

namespace {

std::vector<TagWeights> all_emissions(const CrfModel& model, const FeatureSeq& features) {
  std::vector<TagWeights> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(emission_scores(model, f));
  return out;
}

std::vector<TagWeights> forward_lattice(const CrfModel& model,
                                        const std::vector<TagWeights>& emit) {
  const size_t n = emit.size();
  std::vector<TagWeights> alpha(n);
  alpha[0] = emit[0];
  for (size_t t = 1; t < n; ++t) {
    for (int y = 0; y < kCrfTags; ++y) {
      TagWeights terms;
      for (int p = 0; p < kCrfTags; ++p) {
        terms[p] = alpha[t - 1][p] + model.transition_weights[p][y];
      }
      alpha[t][y] = emit[t][y] + log_sum_exp(terms);
    }
  }
  return alpha;
}

std::vector<TagWeights> backward_lattice(const CrfModel& model,
                                         const std::vector<TagWeights>& emit) {
  const size_t n = emit.size();
  std::vector<TagWeights> beta(n);
  beta[n - 1] = {0.0, 0.0, 0.0};
  for (size_t t = n - 1; t > 0; --t) {
    for (int y = 0; y < kCrfTags; ++y) {
      TagWeights terms;
      for (int q = 0; q < kCrfTags; ++q) {
        terms[q] = model.transition_weights[y][q] + emit[t][q] + beta[t][q];
      }
      beta[t - 1][y] = log_sum_exp(terms);
    }
  }
  return beta;
}

}  // namespace

double crf_log_partition(const CrfModel& model, const FeatureSeq& features) {
  if (features.empty()) throw std::invalid_argument("crf_log_partition: empty sequence");
  const auto emit = all_emissions(model, features);
  const auto alpha = forward_lattice(model, emit);
  return log_sum_exp(alpha.back());
}

double crf_log_partition_backward(const CrfModel& model, const FeatureSeq& features) {
  if (features.empty()) throw std::invalid_argument("crf_log_partition_backward: empty sequence");
  const auto emit = all_emissions(model, features);
  const auto beta = backward_lattice(model, emit);
  TagWeights first;
  for (int y = 0; y < kCrfTags; ++y) first[y] = emit[0][y] + beta[0][y];
  return log_sum_exp(first);
}

std::vector<TagWeights> crf_position_marginals(const CrfModel& model, const FeatureSeq& features) {
  const auto emit = all_emissions(model, features);
  const auto alpha = forward_lattice(model, emit);
  const auto beta = backward_lattice(model, emit);
  const double log_z = log_sum_exp(alpha.back());
  std::vector<TagWeights> marginals(features.size());
  for (size_t t = 0; t < features.size(); ++t) {
    for (int y = 0; y < kCrfTags; ++y) {
      marginals[t][y] = std::exp(alpha[t][y] + beta[t][y] - log_z);
    }
  }
  return marginals;
}

namespace {

CrfGradient gradient_impl(const CrfModel& model, const FeatureSeq& features,
                          const std::vector<BioTag>& gold, double l2) {
  if (features.empty()) throw std::invalid_argument("crf gradient: empty sequence");
  if (features.size() != gold.size()) {
    throw std::invalid_argument("crf gradient: feature/tag length mismatch");
  }
  const size_t n = features.size();
  for (size_t t = 1; t < n; ++t) {
    if (gold[t] == BioTag::I && gold[t - 1] == BioTag::O) {
      throw std::invalid_argument("crf gradient: invalid BIO gold sequence (I after O)");
    }
  }

  const auto emit = all_emissions(model, features);
  const auto alpha = forward_lattice(model, emit);
  const auto beta = backward_lattice(model, emit);
  const double log_z = log_sum_exp(alpha.back());

  CrfGradient out;
  // regularizer first: -l2 * w over every weight in the model
  if (l2 != 0.0) {
    for (const auto& [f, w] : model.feature_weights) {
      auto& g = out.feature_grad[f];
      for (int y = 0; y < kCrfTags; ++y) g[y] -= l2 * w[y];
    }
    for (int p = 0; p < kCrfTags; ++p) {
      for (int q = 0; q < kCrfTags; ++q) {
        out.transition_grad[p][q] -= l2 * model.transition_weights[p][q];
      }
    }
  }

  // empirical minus expected feature counts
  for (size_t t = 0; t < n; ++t) {
    TagWeights marginal;
    for (int y = 0; y < kCrfTags; ++y) {
      marginal[y] = std::exp(alpha[t][y] + beta[t][y] - log_z);
    }
    const int gold_tag = static_cast<int>(gold[t]);
    for (const auto& f : features[t]) {
      auto& g = out.feature_grad[f];
      g[gold_tag] += 1.0;
      for (int y = 0; y < kCrfTags; ++y) g[y] -= marginal[y];
    }
    if (t > 0) {
      out.transition_grad[static_cast<int>(gold[t - 1])][gold_tag] += 1.0;
      for (int p = 0; p < kCrfTags; ++p) {
        for (int q = 0; q < kCrfTags; ++q) {
          const double pair_marginal = std::exp(alpha[t - 1][p] + model.transition_weights[p][q] +
                                                emit[t][q] + beta[t][q] - log_z);
          out.transition_grad[p][q] -= pair_marginal;
        }
      }
    }
  }

  double norm_sq = 0.0;
  for (const auto& [f, w] : model.feature_weights) {
    for (int y = 0; y < kCrfTags; ++y) norm_sq += w[y] * w[y];
  }
  for (int p = 0; p < kCrfTags; ++p) {
    for (int q = 0; q < kCrfTags; ++q) {
      norm_sq += model.transition_weights[p][q] * model.transition_weights[p][q];
    }
  }
  out.objective = crf_sequence_score(model, features, gold) - log_z - 0.5 * l2 * norm_sq;
  if (!std::isfinite(out.objective)) {
    throw std::runtime_error("crf gradient: non-finite objective");
  }
  return out;
}

}  // namespace

CrfGradient crf_log_likelihood_and_gradient(const CrfModel& model, const FeatureSeq& features,
                                            const std::vector<BioTag>& gold) {
  return gradient_impl(model, features, gold, model.l2);
}

CrfTrainResult crf_train(const std::vector<CrfSequence>& corpus, const CrfTrainConfig& config) {
  if (corpus.empty()) throw std::invalid_argument("crf_train: empty corpus");
  if (config.epochs < 1) throw std::invalid_argument("crf_train: epochs must be >= 1");

  std::vector<FeatureSeq> features;
  features.reserve(corpus.size());
  for (const auto& seq : corpus) {
    if (seq.words.empty() || seq.words.size() != seq.tags.size()) {
      throw std::invalid_argument("crf_train: empty or misaligned sequence");
    }
    features.push_back(featurize_sequence(seq.words));
  }

  CrfTrainResult result;
  result.model.l2 = config.l2;
  const double step_l2 = config.l2 / static_cast<double>(corpus.size());

  Rng rng(config.seed);
  std::vector<size_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double objective_sum = 0.0;
    for (const size_t i : order) {
      const auto grad = gradient_impl(result.model, features[i], corpus[i].tags, step_l2);
      objective_sum += grad.objective;
      for (const auto& [f, g] : grad.feature_grad) {
        auto& w = result.model.feature_weights[f];
        for (int y = 0; y < kCrfTags; ++y) w[y] += config.learning_rate * g[y];
      }
      for (int p = 0; p < kCrfTags; ++p) {
        for (int q = 0; q < kCrfTags; ++q) {
          result.model.transition_weights[p][q] += config.learning_rate * grad.transition_grad[p][q];
        }
      }
    }
    const double mean = objective_sum / static_cast<double>(corpus.size());
    if (!std::isfinite(mean)) throw std::runtime_error("crf_train: training diverged");
    result.epoch_mean_objective.push_back(mean);
  }
  return result;
}

std::vector<BioTag> crf_decode(const CrfModel& model, const std::vector<std::string>& words) {
  if (words.empty()) return {};
  const auto features = featurize_sequence(words);
  const auto emit = all_emissions(model, features);
  const size_t n = emit.size();

  std::vector<TagWeights> score(n);
  std::vector<std::array<int, kCrfTags>> backpointer(n);
  score[0] = emit[0];
  for (size_t t = 1; t < n; ++t) {
    for (int y = 0; y < kCrfTags; ++y) {
      double best = -std::numeric_limits<double>::infinity();
      int best_prev = 0;
      for (int p = 0; p < kCrfTags; ++p) {
        const double s = score[t - 1][p] + model.transition_weights[p][y];
        if (s > best) {  // strict: ties keep the lowest tag index
          best = s;
          best_prev = p;
        }
      }
      score[t][y] = best + emit[t][y];
      backpointer[t][y] = best_prev;
    }
  }

  int last = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (int y = 0; y < kCrfTags; ++y) {
    if (score[n - 1][y] > best) {
      best = score[n - 1][y];
      last = y;
    }
  }
  std::vector<BioTag> tags(n);
  tags[n - 1] = static_cast<BioTag>(last);
  for (size_t t = n - 1; t > 0; --t) {
    last = backpointer[t][last];
    tags[t - 1] = static_cast<BioTag>(last);
  }
  return tags;
}

double crf_viterbi_score(const CrfModel& model, const FeatureSeq& features) {
  if (features.empty()) throw std::invalid_argument("crf_viterbi_score: empty sequence");
  const auto emit = all_emissions(model, features);
  TagWeights score = emit[0];
  for (size_t t = 1; t < emit.size(); ++t) {
    TagWeights next;
    for (int y = 0; y < kCrfTags; ++y) {
      double best = -std::numeric_limits<double>::infinity();
      for (int p = 0; p < kCrfTags; ++p) {
        best = std::max(best, score[p] + model.transition_weights[p][y]);
      }
      next[y] = best + emit[t][y];
    }
    score = next;
  }
  return std::max({score[0], score[1], score[2]});
}

nlohmann::json CrfModel::to_json() const {
  nlohmann::json j;
  j["format"] = "pharmvig.crf";
  j["version"] = 1;
  j["l2"] = l2;
  // sorted keys keep the serialization diffable
  std::map<std::string, TagWeights> sorted(feature_weights.begin(), feature_weights.end());
  nlohmann::json fw = nlohmann::json::object();
  for (const auto& [f, w] : sorted) fw[f] = w;
  j["feature_weights"] = fw;
  j["transition_weights"] = transition_weights;
  return j;
}

CrfModel CrfModel::from_json(const nlohmann::json& j) {
  if (j.at("format") != "pharmvig.crf" || j.at("version") != 1) {
    throw std::runtime_error("unrecognized crf model format");
  }
  CrfModel m;
  m.l2 = j.at("l2").get<double>();
  for (const auto& [f, w] : j.at("feature_weights").items()) {
    m.feature_weights[f] = w.get<TagWeights>();
  }
  m.transition_weights = j.at("transition_weights").get<std::array<TagWeights, kCrfTags>>();
  return m;
}

}  // namespace pharmvig::baselines
