#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "pharmvig/textprep.hpp"

namespace pharmvig::baselines {

// Always predicts the modal training label; ties break lexicographically.
struct MostCommonClass {
  std::string label;

  static MostCommonClass fit(const std::vector<std::string>& labels);
  const std::string& predict() const { return label; }
};

// Multinomial Naive Bayes with add-alpha smoothing over n-gram counts.
struct NaiveBayesModel {
  std::vector<std::string> classes;
  std::vector<double> class_log_priors;
  // per class: log P(gram | class) for grams seen in that class
  std::vector<std::map<std::string, double>> token_log_likelihoods;
  // per class: log P(gram | class) for vocabulary grams unseen in that class
  std::vector<double> unseen_log_likelihood;
  std::set<std::string> vocabulary;
  double alpha = 1.0;

  double log_likelihood(const std::string& gram, size_t class_index) const;
  nlohmann::json to_json() const;
  static NaiveBayesModel from_json(const nlohmann::json& j);
};

NaiveBayesModel nb_train(const std::vector<std::pair<textprep::NgramVector, std::string>>& examples,
                         double alpha = 1.0, const std::vector<std::string>& classes = {});

struct NbPrediction {
  std::string label;
  std::map<std::string, double> log_posterior;  // per class, unnormalized
};

// Grams outside the training vocabulary are ignored; vocabulary grams unseen
// in a class contribute the smoothed mass.
NbPrediction nb_predict(const NaiveBayesModel& model, const textprep::NgramVector& x);

struct LrConfig {
  double l2 = 0.0;
  double learning_rate = 0.1;
  int epochs = 100;
  int batch_size = 32;
  uint64_t seed = 0;
};

struct LogisticRegressionModel {
  Eigen::MatrixXd weights;  // dim x classes
  Eigen::VectorXd bias;     // classes
  std::vector<std::string> classes;
  double l2 = 0.0;
  std::vector<double> epoch_losses;  // mean regularized loss per epoch

  nlohmann::json to_json() const;
  static LogisticRegressionModel from_json(const nlohmann::json& j);
};

// Seeded mini-batch gradient descent on multinomial cross-entropy plus
// (l2/2)*||W||^2 (bias unregularized).
LogisticRegressionModel lr_train(const std::vector<Eigen::VectorXd>& features,
                                 const std::vector<std::string>& labels, const LrConfig& config);

struct LrPrediction {
  std::string label;
  Eigen::VectorXd probabilities;  // aligned with model.classes
};

LrPrediction lr_predict(const LogisticRegressionModel& model, const Eigen::VectorXd& x);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

}  // namespace pharmvig::baselines
