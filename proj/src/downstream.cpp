#include "pharmvig/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace pharmvig::downstream {

namespace {

void check_uniform(const std::vector<textprep::PaddedEmbeddingMatrix>& features,
                   const std::vector<std::string>& labels) {
  if (features.empty()) throw std::invalid_argument("train: empty feature list");
  if (features.size() != labels.size()) {
    throw std::invalid_argument("train: feature/label count mismatch");
  }
  const auto rows = features.front().matrix.rows();
  const auto cols = features.front().matrix.cols();
  for (const auto& f : features) {
    if (f.matrix.rows() != rows || f.matrix.cols() != cols) {
      throw std::invalid_argument("train: token matrices must share one padded shape");
    }
  }
}

std::vector<std::string> distinct_sorted(const std::vector<std::string>& labels) {
  std::set<std::string> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw std::invalid_argument("train: need at least two classes");
  return {distinct.begin(), distinct.end()};
}

std::vector<int> label_indices(const std::vector<std::string>& labels,
                               const std::vector<std::string>& classes) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& label : labels) {
    const auto it = std::lower_bound(classes.begin(), classes.end(), label);
    out.push_back(static_cast<int>(it - classes.begin()));
  }
  return out;
}

Prediction predict_from_logits(const Eigen::RowVectorXd& logits,
                               const std::vector<std::string>& classes) {
  Prediction p;
  p.probabilities = baselines::softmax(logits.transpose());
  Eigen::Index best = 0;
  p.probabilities.maxCoeff(&best);
  p.label = classes[static_cast<size_t>(best)];
  return p;
}

// Seeded epochs of Adam on per-batch cross-entropy; returns per-epoch mean loss.
template <typename ForwardLogits>
std::vector<double> run_training(const std::vector<int>& ys, size_t n, int epochs, int batch_size,
                                 ForwardLogits&& forward_logits,
                                 const std::vector<nn::NodePtr>& params, nn::Adam& adam, Rng& rng) {
  std::vector<double> epoch_losses;
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
      const size_t stop = std::min(n, start + static_cast<size_t>(batch_size));
      std::vector<nn::NodePtr> logits;
      std::vector<int> labels;
      for (size_t i = start; i < stop; ++i) {
        logits.push_back(forward_logits(order[i]));
        labels.push_back(ys[order[i]]);
      }
      const auto loss = nn::cross_entropy_with_logits(nn::concat_rows(logits), labels);
      if (!std::isfinite(loss->value(0, 0))) {
        throw std::runtime_error("train: non-finite training loss");
      }
      loss_sum += loss->value(0, 0) * static_cast<double>(stop - start);
      nn::zero_grads(params);
      nn::backward(loss);
      adam.step(params);
    }
    epoch_losses.push_back(loss_sum / static_cast<double>(n));
  }
  return epoch_losses;
}

nn::NodePtr cnn_logits_graph(const CnnClassifier& model, const nn::NodePtr& input,
                             const nn::NodePtr& dropout_mask) {
  std::vector<nn::NodePtr> pooled_parts;
  for (const auto& block : model.blocks) {
    const auto windows = nn::im2col(input, block.width);
    const auto activations = nn::relu(nn::add_rowvec(nn::matmul(windows, block.filters), block.bias));
    pooled_parts.push_back(nn::max_rows(activations));
  }
  auto pooled = nn::concat_cols(pooled_parts);
  if (dropout_mask) pooled = nn::hadamard(pooled, dropout_mask);
  return nn::add(nn::matmul(pooled, model.output_weights), model.output_bias);
}

nn::NodePtr lstm_logits_graph(const LstmClassifier& model, const nn::NodePtr& input,
                              Eigen::Index valid_from, Eigen::Index hidden) {
  auto h = nn::constant(nn::Matrix::Zero(1, hidden));
  auto c = nn::constant(nn::Matrix::Zero(1, hidden));
  for (Eigen::Index t = valid_from; t < input->value.rows(); ++t) {
    const auto x_t = nn::rows(input, t, 1);
    const auto z = nn::add(nn::add(nn::matmul(x_t, model.input_weights),
                                   nn::matmul(h, model.recurrent_weights)),
                           model.gate_bias);
    const auto i = nn::sigmoid(nn::cols(z, 0, hidden));
    const auto f = nn::sigmoid(nn::cols(z, hidden, hidden));
    const auto g = nn::tanh_op(nn::cols(z, 2 * hidden, hidden));
    const auto o = nn::sigmoid(nn::cols(z, 3 * hidden, hidden));
    c = nn::add(nn::hadamard(f, c), nn::hadamard(i, g));
    h = nn::hadamard(o, nn::tanh_op(c));
  }
  return nn::add(nn::matmul(h, model.output_weights), model.output_bias);
}

}  // namespace

CnnClassifier CnnClassifier::train(const std::vector<textprep::PaddedEmbeddingMatrix>& features,
                                   const std::vector<std::string>& labels,
                                   const CnnClassifierConfig& config) {
  check_uniform(features, labels);
  if (config.epochs < 1) throw std::invalid_argument("CnnClassifier: epochs must be >= 1");
  if (config.filters_per_width < 1) {
    throw std::invalid_argument("CnnClassifier: filters_per_width must be >= 1");
  }
  if (config.dropout < 0.0 || config.dropout >= 1.0) {
    throw std::invalid_argument("CnnClassifier: dropout must be in [0, 1)");
  }
  const auto seq_len = features.front().matrix.rows();
  const auto dim = features.front().matrix.cols();
  if (config.filter_widths.empty()) throw std::invalid_argument("CnnClassifier: no filter widths");
  for (const int w : config.filter_widths) {
    if (w < 1 || w > seq_len) {
      throw std::invalid_argument("CnnClassifier: filter width " + std::to_string(w) +
                                  " exceeds sequence length " + std::to_string(seq_len));
    }
  }

  CnnClassifier model;
  model.config = config;
  model.classes = distinct_sorted(labels);
  const auto k = static_cast<Eigen::Index>(model.classes.size());
  const auto ys = label_indices(labels, model.classes);

  Rng rng(config.seed);
  std::vector<nn::NodePtr> params;
  for (const int w : config.filter_widths) {
    WidthBlock block;
    block.width = w;
    block.filters = nn::parameter(nn::random_normal(rng, w * dim, config.filters_per_width, 0.1));
    block.bias = nn::parameter(nn::Matrix::Zero(1, config.filters_per_width));
    params.push_back(block.filters);
    params.push_back(block.bias);
    model.blocks.push_back(std::move(block));
  }
  const auto total_filters =
      static_cast<Eigen::Index>(config.filter_widths.size()) * config.filters_per_width;
  model.output_weights = nn::parameter(nn::random_normal(rng, total_filters, k, 0.1));
  model.output_bias = nn::parameter(nn::Matrix::Zero(1, k));
  params.push_back(model.output_weights);
  params.push_back(model.output_bias);

  std::vector<nn::NodePtr> inputs;
  inputs.reserve(features.size());
  for (const auto& f : features) inputs.push_back(nn::constant(f.matrix));

  nn::Adam adam(config.learning_rate);
  auto forward = [&](size_t i) {
    nn::NodePtr mask;
    if (config.dropout > 0.0) {
      nn::Matrix m(1, total_filters);
      const double keep = 1.0 - config.dropout;
      for (Eigen::Index j = 0; j < total_filters; ++j) {
        m(0, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
      }
      mask = nn::constant(std::move(m));
    }
    return cnn_logits_graph(model, inputs[i], mask);
  };
  model.epoch_losses = run_training(ys, features.size(), config.epochs, config.batch_size, forward,
                                    params, adam, rng);
  return model;
}

Eigen::RowVectorXd CnnClassifier::logits(const textprep::PaddedEmbeddingMatrix& input) const {
  const auto node = cnn_logits_graph(*this, nn::constant(input.matrix), nullptr);
  return node->value.row(0);
}

Prediction CnnClassifier::predict(const textprep::PaddedEmbeddingMatrix& input) const {
  return predict_from_logits(logits(input), classes);
}

LstmClassifier LstmClassifier::train(const std::vector<textprep::PaddedEmbeddingMatrix>& features,
                                     const std::vector<std::string>& labels,
                                     const LstmClassifierConfig& config) {
  check_uniform(features, labels);
  if (config.epochs < 1) throw std::invalid_argument("LstmClassifier: epochs must be >= 1");
  if (config.hidden_dim < 1) throw std::invalid_argument("LstmClassifier: hidden_dim must be >= 1");
  const auto dim = features.front().matrix.cols();
  const auto hidden = static_cast<Eigen::Index>(config.hidden_dim);

  LstmClassifier model;
  model.config = config;
  model.classes = distinct_sorted(labels);
  const auto k = static_cast<Eigen::Index>(model.classes.size());
  const auto ys = label_indices(labels, model.classes);

  Rng rng(config.seed);
  model.input_weights = nn::parameter(nn::random_normal(rng, dim, 4 * hidden, 0.1));
  model.recurrent_weights = nn::parameter(nn::random_normal(rng, hidden, 4 * hidden, 0.1));
  nn::Matrix bias = nn::Matrix::Zero(1, 4 * hidden);
  bias.middleCols(hidden, hidden).setOnes();  // forget gate bias starts open
  model.gate_bias = nn::parameter(std::move(bias));
  model.output_weights = nn::parameter(nn::random_normal(rng, hidden, k, 0.1));
  model.output_bias = nn::parameter(nn::Matrix::Zero(1, k));
  const std::vector<nn::NodePtr> params = {model.input_weights, model.recurrent_weights,
                                           model.gate_bias, model.output_weights,
                                           model.output_bias};

  std::vector<nn::NodePtr> inputs;
  std::vector<Eigen::Index> valid_from;
  for (const auto& f : features) {
    inputs.push_back(nn::constant(f.matrix));
    valid_from.push_back(f.valid_from);
  }

  nn::Adam adam(config.learning_rate);
  auto forward = [&](size_t i) { return lstm_logits_graph(model, inputs[i], valid_from[i], hidden); };
  model.epoch_losses = run_training(ys, features.size(), config.epochs, config.batch_size, forward,
                                    params, adam, rng);
  return model;
}

Eigen::RowVectorXd LstmClassifier::logits(const textprep::PaddedEmbeddingMatrix& input) const {
  const auto node = lstm_logits_graph(*this, nn::constant(input.matrix), input.valid_from,
                                      static_cast<Eigen::Index>(config.hidden_dim));
  return node->value.row(0);
}

Prediction LstmClassifier::predict(const textprep::PaddedEmbeddingMatrix& input) const {
  return predict_from_logits(logits(input), classes);
}

baselines::LogisticRegressionModel train_lr_on_cls(const Eigen::MatrixXd& cls_vectors,
                                                   const std::vector<std::string>& labels,
                                                   const baselines::LrConfig& config) {
  if (cls_vectors.rows() == 0) throw std::invalid_argument("train_lr_on_cls: no feature rows");
  if (static_cast<size_t>(cls_vectors.rows()) != labels.size()) {
    throw std::invalid_argument("train_lr_on_cls: feature/label count mismatch");
  }
  std::vector<Eigen::VectorXd> rows;
  rows.reserve(static_cast<size_t>(cls_vectors.rows()));
  for (Eigen::Index r = 0; r < cls_vectors.rows(); ++r) {
    rows.push_back(cls_vectors.row(r).transpose());
  }
  return baselines::lr_train(rows, labels, config);
}

}  // namespace pharmvig::downstream
