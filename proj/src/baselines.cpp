#include "pharmvig/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pharmvig/rng.hpp"

namespace pharmvig::baselines {

MostCommonClass MostCommonClass::fit(const std::vector<std::string>& labels) {
  if (labels.empty()) throw std::invalid_argument("MostCommonClass::fit: empty labels");
  std::map<std::string, long> counts;
  for (const auto& label : labels) ++counts[label];
  // std::map iterates lexicographically, so the first strict maximum wins ties
  MostCommonClass model;
  long best = -1;
  for (const auto& [label, count] : counts) {
    if (count > best) {
      best = count;
      model.label = label;
    }
  }
  return model;
}

double NaiveBayesModel::log_likelihood(const std::string& gram, size_t class_index) const {
  const auto& table = token_log_likelihoods.at(class_index);
  auto it = table.find(gram);
  return it != table.end() ? it->second : unseen_log_likelihood.at(class_index);
}

nlohmann::json NaiveBayesModel::to_json() const {
  nlohmann::json j;
  j["format"] = "pharmvig.nb";
  j["version"] = 1;
  j["alpha"] = alpha;
  j["classes"] = classes;
  j["class_log_priors"] = class_log_priors;
  j["unseen_log_likelihood"] = unseen_log_likelihood;
  j["vocabulary"] = std::vector<std::string>(vocabulary.begin(), vocabulary.end());
  j["token_log_likelihoods"] = token_log_likelihoods;
  return j;
}

NaiveBayesModel NaiveBayesModel::from_json(const nlohmann::json& j) {
  if (j.at("format") != "pharmvig.nb" || j.at("version") != 1) {
    throw std::runtime_error("unrecognized naive bayes model format");
  }
  NaiveBayesModel m;
  m.alpha = j.at("alpha").get<double>();
  m.classes = j.at("classes").get<std::vector<std::string>>();
  m.class_log_priors = j.at("class_log_priors").get<std::vector<double>>();
  m.unseen_log_likelihood = j.at("unseen_log_likelihood").get<std::vector<double>>();
  const auto vocab = j.at("vocabulary").get<std::vector<std::string>>();
  m.vocabulary = std::set<std::string>(vocab.begin(), vocab.end());
  m.token_log_likelihoods =
      j.at("token_log_likelihoods").get<std::vector<std::map<std::string, double>>>();
  return m;
}

NaiveBayesModel nb_train(const std::vector<std::pair<textprep::NgramVector, std::string>>& examples,
                         double alpha, const std::vector<std::string>& classes) {
  if (alpha <= 0.0) throw std::invalid_argument("nb_train: alpha must be positive");
  if (examples.empty()) throw std::invalid_argument("nb_train: empty training data");

  NaiveBayesModel model;
  model.alpha = alpha;
  if (classes.empty()) {
    std::set<std::string> distinct;
    for (const auto& [vec, label] : examples) distinct.insert(label);
    model.classes.assign(distinct.begin(), distinct.end());
  } else {
    model.classes = classes;
    std::sort(model.classes.begin(), model.classes.end());
  }

  const size_t k = model.classes.size();
  auto class_index = [&](const std::string& label) {
    const auto it = std::lower_bound(model.classes.begin(), model.classes.end(), label);
    if (it == model.classes.end() || *it != label) {
      throw std::invalid_argument("nb_train: label '" + label + "' not in the class list");
    }
    return static_cast<size_t>(it - model.classes.begin());
  };

  std::vector<long> doc_counts(k, 0);
  std::vector<std::map<std::string, long>> gram_counts(k);
  std::vector<long> totals(k, 0);
  for (const auto& [vec, label] : examples) {
    const size_t c = class_index(label);
    ++doc_counts[c];
    for (const auto& [gram, count] : vec.counts) {
      gram_counts[c][gram] += count;
      totals[c] += count;
      model.vocabulary.insert(gram);
    }
  }
  for (size_t c = 0; c < k; ++c) {
    if (doc_counts[c] == 0) {
      throw std::invalid_argument("nb_train: class '" + model.classes[c] + "' has no examples");
    }
  }

  const auto v = static_cast<double>(model.vocabulary.size());
  model.class_log_priors.resize(k);
  model.unseen_log_likelihood.resize(k);
  model.token_log_likelihoods.resize(k);
  for (size_t c = 0; c < k; ++c) {
    model.class_log_priors[c] = std::log(static_cast<double>(doc_counts[c]) /
                                         static_cast<double>(examples.size()));
    const double denom = static_cast<double>(totals[c]) + alpha * v;
    model.unseen_log_likelihood[c] = std::log(alpha / denom);
    for (const auto& [gram, count] : gram_counts[c]) {
      model.token_log_likelihoods[c][gram] = std::log((static_cast<double>(count) + alpha) / denom);
    }
  }
  return model;
}

NbPrediction nb_predict(const NaiveBayesModel& model, const textprep::NgramVector& x) {
  if (model.classes.empty()) throw std::invalid_argument("nb_predict: untrained model");
  NbPrediction out;
  double best = -std::numeric_limits<double>::infinity();
  for (size_t c = 0; c < model.classes.size(); ++c) {
    double score = model.class_log_priors[c];
    for (const auto& [gram, count] : x.counts) {
      if (!model.vocabulary.count(gram)) continue;
      score += static_cast<double>(count) * model.log_likelihood(gram, c);
    }
    out.log_posterior[model.classes[c]] = score;
    if (score > best) {
      best = score;
      out.label = model.classes[c];
    }
  }
  return out;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double max = logits.maxCoeff();
  Eigen::VectorXd exps = (logits.array() - max).exp();
  return exps / exps.sum();
}

namespace {

// mean cross-entropy over all examples plus the l2 term
double lr_full_loss(const Eigen::MatrixXd& w, const Eigen::VectorXd& b,
                    const std::vector<Eigen::VectorXd>& xs, const std::vector<int>& ys, double l2) {
  double loss = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const Eigen::VectorXd logits = w.transpose() * xs[i] + b;
    const double max = logits.maxCoeff();
    const double lse = max + std::log((logits.array() - max).exp().sum());
    loss += lse - logits(ys[i]);
  }
  loss /= static_cast<double>(xs.size());
  loss += 0.5 * l2 * w.squaredNorm();
  return loss;
}

}  // namespace

LogisticRegressionModel lr_train(const std::vector<Eigen::VectorXd>& features,
                                 const std::vector<std::string>& labels, const LrConfig& config) {
  if (features.empty()) throw std::invalid_argument("lr_train: empty training data");
  if (features.size() != labels.size()) {
    throw std::invalid_argument("lr_train: feature/label count mismatch");
  }
  if (config.epochs < 1) throw std::invalid_argument("lr_train: epochs must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("lr_train: batch_size must be >= 1");

  const Eigen::Index dim = features.front().size();
  for (const auto& x : features) {
    if (x.size() != dim) throw std::invalid_argument("lr_train: inconsistent feature dims");
  }

  LogisticRegressionModel model;
  {
    std::set<std::string> distinct(labels.begin(), labels.end());
    model.classes.assign(distinct.begin(), distinct.end());
  }
  const auto k = static_cast<Eigen::Index>(model.classes.size());
  if (k < 2) throw std::invalid_argument("lr_train: need at least two classes");
  model.l2 = config.l2;
  model.weights = Eigen::MatrixXd::Zero(dim, k);
  model.bias = Eigen::VectorXd::Zero(k);

  std::vector<int> ys(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    const auto it = std::lower_bound(model.classes.begin(), model.classes.end(), labels[i]);
    ys[i] = static_cast<int>(it - model.classes.begin());
  }

  Rng rng(config.seed);
  std::vector<size_t> order(features.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  model.epoch_losses.push_back(lr_full_loss(model.weights, model.bias, features, ys, config.l2));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      Eigen::MatrixXd grad_w = config.l2 * model.weights;
      Eigen::VectorXd grad_b = Eigen::VectorXd::Zero(k);
      const auto batch = static_cast<double>(stop - start);
      for (size_t i = start; i < stop; ++i) {
        const auto& x = features[order[i]];
        Eigen::VectorXd p = softmax(model.weights.transpose() * x + model.bias);
        p(ys[order[i]]) -= 1.0;
        grad_w += x * p.transpose() / batch;
        grad_b += p / batch;
      }
      model.weights -= config.learning_rate * grad_w;
      model.bias -= config.learning_rate * grad_b;
    }
    const double loss = lr_full_loss(model.weights, model.bias, features, ys, config.l2);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("lr_train: loss diverged (learning rate too high?)");
    }
    model.epoch_losses.push_back(loss);
  }
  return model;
}

LrPrediction lr_predict(const LogisticRegressionModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.weights.rows()) {
    throw std::invalid_argument("lr_predict: feature dim " + std::to_string(x.size()) +
                                " != model dim " + std::to_string(model.weights.rows()));
  }
  LrPrediction out;
  out.probabilities = softmax(model.weights.transpose() * x + model.bias);
  Eigen::Index best = 0;
  out.probabilities.maxCoeff(&best);
  out.label = model.classes[static_cast<size_t>(best)];
  return out;
}

nlohmann::json LogisticRegressionModel::to_json() const {
  nlohmann::json j;
  j["format"] = "pharmvig.lr";
  j["version"] = 1;
  j["classes"] = classes;
  j["l2"] = l2;
  j["dim"] = weights.rows();
  std::vector<double> w(weights.data(), weights.data() + weights.size());
  j["weights"] = w;  // column-major, dim x classes
  j["bias"] = std::vector<double>(bias.data(), bias.data() + bias.size());
  return j;
}

LogisticRegressionModel LogisticRegressionModel::from_json(const nlohmann::json& j) {
  if (j.at("format") != "pharmvig.lr" || j.at("version") != 1) {
    throw std::runtime_error("unrecognized logistic regression model format");
  }
  LogisticRegressionModel m;
  m.classes = j.at("classes").get<std::vector<std::string>>();
  m.l2 = j.at("l2").get<double>();
  const auto dim = j.at("dim").get<Eigen::Index>();
  const auto w = j.at("weights").get<std::vector<double>>();
  const auto k = static_cast<Eigen::Index>(m.classes.size());
  if (static_cast<Eigen::Index>(w.size()) != dim * k) {
    throw std::runtime_error("logistic regression model: weight size mismatch");
  }
  m.weights = Eigen::Map<const Eigen::MatrixXd>(w.data(), dim, k);
  const auto b = j.at("bias").get<std::vector<double>>();
  m.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  return m;
}

}  // namespace pharmvig::baselines
