#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "pharmvig/baselines.hpp"
#include "pharmvig/nn.hpp"
#include "pharmvig/textprep.hpp"

namespace pharmvig::downstream {

struct Prediction {
  std::string label;
  Eigen::VectorXd probabilities;  // aligned with model classes
};

struct CnnClassifierConfig {
  std::vector<int> filter_widths{3, 4, 5};
  int filters_per_width = 64;
  double dropout = 0.1;
  int epochs = 50;
  double learning_rate = 3e-3;
  int batch_size = 16;
  uint64_t seed = 0;
};

// 1-D convolutions over the token axis per filter width, global max-pool per
// filter, concatenation, then a dense softmax head.
class CnnClassifier {
 public:
  struct WidthBlock {
    int width = 0;
    nn::NodePtr filters;  // (width * dim) x filters_per_width
    nn::NodePtr bias;     // 1 x filters_per_width
  };

  std::vector<WidthBlock> blocks;
  nn::NodePtr output_weights;  // total_filters x classes
  nn::NodePtr output_bias;     // 1 x classes
  std::vector<std::string> classes;
  CnnClassifierConfig config;
  std::vector<double> epoch_losses;

  static CnnClassifier train(const std::vector<textprep::PaddedEmbeddingMatrix>& features,
                             const std::vector<std::string>& labels,
                             const CnnClassifierConfig& config);

  Prediction predict(const textprep::PaddedEmbeddingMatrix& input) const;
  Eigen::RowVectorXd logits(const textprep::PaddedEmbeddingMatrix& input) const;
};

struct LstmClassifierConfig {
  int hidden_dim = 128;
  int epochs = 50;
  double learning_rate = 1e-2;
  int batch_size = 16;
  uint64_t seed = 0;
};

// Single recurrent layer consuming rows in order. Pad rows (everything before
// valid_from) are skipped, so the final state depends only on the real
// tokens; the final hidden state feeds a dense softmax head.
class LstmClassifier {
 public:
  nn::NodePtr input_weights;      // dim x 4*hidden, gate order [i f g o]
  nn::NodePtr recurrent_weights;  // hidden x 4*hidden
  nn::NodePtr gate_bias;          // 1 x 4*hidden
  nn::NodePtr output_weights;     // hidden x classes
  nn::NodePtr output_bias;        // 1 x classes
  std::vector<std::string> classes;
  LstmClassifierConfig config;
  std::vector<double> epoch_losses;

  static LstmClassifier train(const std::vector<textprep::PaddedEmbeddingMatrix>& features,
                              const std::vector<std::string>& labels,
                              const LstmClassifierConfig& config);

  Prediction predict(const textprep::PaddedEmbeddingMatrix& input) const;
  Eigen::RowVectorXd logits(const textprep::PaddedEmbeddingMatrix& input) const;
};

// [CLS]-vector classifier; delegates to baselines::lr_train.
baselines::LogisticRegressionModel train_lr_on_cls(const Eigen::MatrixXd& cls_vectors,
                                                   const std::vector<std::string>& labels,
                                                   const baselines::LrConfig& config);

}  // namespace pharmvig::downstream
