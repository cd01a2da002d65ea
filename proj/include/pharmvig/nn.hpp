#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "pharmvig/rng.hpp"

namespace pharmvig::nn {

using Matrix = Eigen::MatrixXd;

// Define-by-run reverse-mode autodiff over dense matrices. Parameter nodes
// persist across steps; every other node is rebuilt per forward pass.
struct Node {
  Matrix value;
  Matrix grad;  // allocated on first use, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;

  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
      grad = Matrix::Zero(value.rows(), value.cols());
    }
  }
};

using NodePtr = std::shared_ptr<Node>;

NodePtr constant(Matrix value);
NodePtr parameter(Matrix value);

NodePtr matmul(const NodePtr& a, const NodePtr& b);
NodePtr matmul_nt(const NodePtr& a, const NodePtr& b);  // a * b^T
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr add_rowvec(const NodePtr& a, const NodePtr& row);  // broadcast 1 x d over rows
NodePtr hadamard(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& a, double s);
NodePtr rows(const NodePtr& a, Eigen::Index begin, Eigen::Index count);
NodePtr cols(const NodePtr& a, Eigen::Index begin, Eigen::Index count);
NodePtr concat_rows(const std::vector<NodePtr>& parts);
NodePtr concat_cols(const std::vector<NodePtr>& parts);
NodePtr softmax_rows(const NodePtr& a);
NodePtr tanh_op(const NodePtr& a);
NodePtr sigmoid(const NodePtr& a);
NodePtr relu(const NodePtr& a);
NodePtr gelu(const NodePtr& a);
NodePtr layer_norm_rows(const NodePtr& a, const NodePtr& gamma, const NodePtr& beta,
                        double eps = 1e-12);
NodePtr embedding_rows(const NodePtr& table, const std::vector<int>& ids);
// Column-wise max over rows -> 1 x cols; gradient flows to the first argmax row.
NodePtr max_rows(const NodePtr& a);
// Sliding windows of `width` rows flattened side by side: (L-width+1) x (width*D).
NodePtr im2col(const NodePtr& a, Eigen::Index width);
// Mean cross-entropy from logits; labels use -1 to skip a row.
NodePtr cross_entropy_with_logits(const NodePtr& logits, const std::vector<int>& labels);

// root must be 1x1; fills grads of every reachable node that requires them.
void backward(const NodePtr& root);
void zero_grads(const std::vector<NodePtr>& params);

struct Adam {
  double learning_rate;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit Adam(double lr) : learning_rate(lr) {}
  void step(const std::vector<NodePtr>& params);

 private:
  struct State {
    Matrix m, v;
  };
  std::vector<State> state_;
  long t_ = 0;
};

Matrix random_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev);

}  // namespace pharmvig::nn
