#include "pharmvig/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace pharmvig::nn {

namespace {

NodePtr make(Matrix value, std::vector<NodePtr> parents, std::function<void(Node&)> bp) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& p : parents) {
    if (p->requires_grad) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) {
    node->parents = std::move(parents);
    Node* raw = node.get();
    node->backprop = [raw, bp = std::move(bp)] { bp(*raw); };
  }
  return node;
}

void accumulate(const NodePtr& target, const Matrix& delta) {
  if (!target->requires_grad) return;
  target->ensure_grad();
  target->grad += delta;
}

}  // namespace

NodePtr constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

NodePtr parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return node;
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  if (a->value.cols() != b->value.rows()) throw std::invalid_argument("matmul: shape mismatch");
  return make(a->value * b->value, {a, b}, [a, b](Node& out) {
    if (a->requires_grad) accumulate(a, out.grad * b->value.transpose());
    if (b->requires_grad) accumulate(b, a->value.transpose() * out.grad);
  });
}

NodePtr matmul_nt(const NodePtr& a, const NodePtr& b) {
  if (a->value.cols() != b->value.cols()) throw std::invalid_argument("matmul_nt: shape mismatch");
  return make(a->value * b->value.transpose(), {a, b}, [a, b](Node& out) {
    if (a->requires_grad) accumulate(a, out.grad * b->value);
    if (b->requires_grad) accumulate(b, out.grad.transpose() * a->value);
  });
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols()) {
    throw std::invalid_argument("add: shape mismatch");
  }
  return make(a->value + b->value, {a, b}, [a, b](Node& out) {
    accumulate(a, out.grad);
    accumulate(b, out.grad);
  });
}

NodePtr add_rowvec(const NodePtr& a, const NodePtr& row) {
  if (row->value.rows() != 1 || row->value.cols() != a->value.cols()) {
    throw std::invalid_argument("add_rowvec: expected a 1 x cols row vector");
  }
  Matrix value = a->value;
  value.rowwise() += Eigen::RowVectorXd(row->value.row(0));
  return make(std::move(value), {a, row}, [a, row](Node& out) {
    accumulate(a, out.grad);
    if (row->requires_grad) {
      row->ensure_grad();
      row->grad.row(0) += out.grad.colwise().sum();
    }
  });
}

NodePtr hadamard(const NodePtr& a, const NodePtr& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols()) {
    throw std::invalid_argument("hadamard: shape mismatch");
  }
  return make(a->value.cwiseProduct(b->value), {a, b}, [a, b](Node& out) {
    if (a->requires_grad) accumulate(a, out.grad.cwiseProduct(b->value));
    if (b->requires_grad) accumulate(b, out.grad.cwiseProduct(a->value));
  });
}

NodePtr scale(const NodePtr& a, double s) {
  return make(s * a->value, {a}, [a, s](Node& out) { accumulate(a, s * out.grad); });
}

NodePtr rows(const NodePtr& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a->value.rows()) {
    throw std::invalid_argument("rows: slice out of range");
  }
  return make(a->value.middleRows(begin, count), {a}, [a, begin, count](Node& out) {
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad.middleRows(begin, count) += out.grad;
    }
  });
}

NodePtr cols(const NodePtr& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a->value.cols()) {
    throw std::invalid_argument("cols: slice out of range");
  }
  return make(a->value.middleCols(begin, count), {a}, [a, begin, count](Node& out) {
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad.middleCols(begin, count) += out.grad;
    }
  });
}

NodePtr concat_rows(const std::vector<NodePtr>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  Eigen::Index total = 0;
  const Eigen::Index width = parts.front()->value.cols();
  for (const auto& p : parts) {
    if (p->value.cols() != width) throw std::invalid_argument("concat_rows: width mismatch");
    total += p->value.rows();
  }
  Matrix value(total, width);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    value.middleRows(offset, p->value.rows()) = p->value;
    offset += p->value.rows();
  }
  return make(std::move(value), parts, [parts](Node& out) {
    Eigen::Index offset = 0;
    for (const auto& p : parts) {
      if (p->requires_grad) {
        p->ensure_grad();
        p->grad += out.grad.middleRows(offset, p->value.rows());
      }
      offset += p->value.rows();
    }
  });
}

NodePtr concat_cols(const std::vector<NodePtr>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  Eigen::Index total = 0;
  const Eigen::Index height = parts.front()->value.rows();
  for (const auto& p : parts) {
    if (p->value.rows() != height) throw std::invalid_argument("concat_cols: height mismatch");
    total += p->value.cols();
  }
  Matrix value(height, total);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    value.middleCols(offset, p->value.cols()) = p->value;
    offset += p->value.cols();
  }
  return make(std::move(value), parts, [parts](Node& out) {
    Eigen::Index offset = 0;
    for (const auto& p : parts) {
      if (p->requires_grad) {
        p->ensure_grad();
        p->grad += out.grad.middleCols(offset, p->value.cols());
      }
      offset += p->value.cols();
    }
  });
}

NodePtr softmax_rows(const NodePtr& a) {
  Matrix value = a->value;
  for (Eigen::Index r = 0; r < value.rows(); ++r) {
    const double max = value.row(r).maxCoeff();
    value.row(r) = (value.row(r).array() - max).exp();
    value.row(r) /= value.row(r).sum();
  }
  return make(std::move(value), {a}, [a](Node& out) {
    if (!a->requires_grad) return;
    Matrix delta(out.value.rows(), out.value.cols());
    for (Eigen::Index r = 0; r < out.value.rows(); ++r) {
      const double dot = out.grad.row(r).dot(out.value.row(r));
      delta.row(r) = (out.grad.row(r).array() - dot) * out.value.row(r).array();
    }
    accumulate(a, delta);
  });
}

NodePtr tanh_op(const NodePtr& a) {
  return make(a->value.array().tanh(), {a}, [a](Node& out) {
    if (a->requires_grad) {
      accumulate(a, (out.grad.array() * (1.0 - out.value.array().square())).matrix());
    }
  });
}

NodePtr sigmoid(const NodePtr& a) {
  Matrix value = (1.0 / (1.0 + (-a->value.array()).exp())).matrix();
  return make(std::move(value), {a}, [a](Node& out) {
    if (a->requires_grad) {
      accumulate(a, (out.grad.array() * out.value.array() * (1.0 - out.value.array())).matrix());
    }
  });
}

NodePtr relu(const NodePtr& a) {
  return make(a->value.cwiseMax(0.0), {a}, [a](Node& out) {
    if (a->requires_grad) {
      accumulate(a, (out.grad.array() * (a->value.array() > 0.0).cast<double>()).matrix());
    }
  });
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

NodePtr gelu(const NodePtr& a) {
  Matrix value = a->value.unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
  return make(std::move(value), {a}, [a](Node& out) {
    if (!a->requires_grad) return;
    Matrix d = a->value.unaryExpr([](double x) {
      return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
    });
    accumulate(a, out.grad.cwiseProduct(d));
  });
}

NodePtr layer_norm_rows(const NodePtr& a, const NodePtr& gamma, const NodePtr& beta, double eps) {
  const Eigen::Index d = a->value.cols();
  if (gamma->value.rows() != 1 || gamma->value.cols() != d || beta->value.rows() != 1 ||
      beta->value.cols() != d) {
    throw std::invalid_argument("layer_norm_rows: gamma/beta must be 1 x cols");
  }
  auto xhat = std::make_shared<Matrix>(a->value.rows(), d);
  auto inv_std = std::make_shared<Eigen::VectorXd>(a->value.rows());
  Matrix value(a->value.rows(), d);
  for (Eigen::Index r = 0; r < a->value.rows(); ++r) {
    const double mean = a->value.row(r).mean();
    const double var = (a->value.row(r).array() - mean).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)(r) = is;
    xhat->row(r) = (a->value.row(r).array() - mean) * is;
    value.row(r) =
        (xhat->row(r).array() * gamma->value.row(0).array()) + beta->value.row(0).array();
  }
  return make(std::move(value), {a, gamma, beta}, [a, gamma, beta, xhat, inv_std](Node& out) {
    if (gamma->requires_grad) {
      gamma->ensure_grad();
      gamma->grad.row(0) += out.grad.cwiseProduct(*xhat).colwise().sum();
    }
    if (beta->requires_grad) {
      beta->ensure_grad();
      beta->grad.row(0) += out.grad.colwise().sum();
    }
    if (a->requires_grad) {
      const Eigen::Index d = out.value.cols();
      Matrix delta(out.value.rows(), d);
      for (Eigen::Index r = 0; r < out.value.rows(); ++r) {
        const Eigen::ArrayXd dxhat =
            out.grad.row(r).array() * gamma->value.row(0).array();
        const double mean_dxhat = dxhat.mean();
        const double mean_dxhat_xhat = (dxhat * xhat->row(r).transpose().array()).mean();
        delta.row(r) = ((*inv_std)(r) *
                        (dxhat - mean_dxhat - xhat->row(r).transpose().array() * mean_dxhat_xhat))
                           .matrix()
                           .transpose();
      }
      accumulate(a, delta);
    }
  });
}

NodePtr embedding_rows(const NodePtr& table, const std::vector<int>& ids) {
  Matrix value(static_cast<Eigen::Index>(ids.size()), table->value.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table->value.rows()) {
      throw std::invalid_argument("embedding_rows: id out of range");
    }
    value.row(static_cast<Eigen::Index>(i)) = table->value.row(ids[i]);
  }
  return make(std::move(value), {table}, [table, ids](Node& out) {
    if (!table->requires_grad) return;
    table->ensure_grad();
    for (size_t i = 0; i < ids.size(); ++i) {
      table->grad.row(ids[i]) += out.grad.row(static_cast<Eigen::Index>(i));
    }
  });
}

NodePtr max_rows(const NodePtr& a) {
  if (a->value.rows() == 0) throw std::invalid_argument("max_rows: empty input");
  const Eigen::Index c = a->value.cols();
  Matrix value(1, c);
  auto argmax = std::make_shared<std::vector<Eigen::Index>>(static_cast<size_t>(c), 0);
  for (Eigen::Index j = 0; j < c; ++j) {
    double best = a->value(0, j);
    Eigen::Index best_row = 0;
    for (Eigen::Index i = 1; i < a->value.rows(); ++i) {
      if (a->value(i, j) > best) {  // first maximum wins
        best = a->value(i, j);
        best_row = i;
      }
    }
    value(0, j) = best;
    (*argmax)[static_cast<size_t>(j)] = best_row;
  }
  return make(std::move(value), {a}, [a, argmax](Node& out) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (Eigen::Index j = 0; j < out.value.cols(); ++j) {
      a->grad((*argmax)[static_cast<size_t>(j)], j) += out.grad(0, j);
    }
  });
}

NodePtr im2col(const NodePtr& a, Eigen::Index width) {
  const Eigen::Index len = a->value.rows();
  const Eigen::Index d = a->value.cols();
  if (width < 1 || width > len) {
    throw std::invalid_argument("im2col: window width " + std::to_string(width) +
                                " invalid for " + std::to_string(len) + " rows");
  }
  const Eigen::Index windows = len - width + 1;
  Matrix value(windows, width * d);
  for (Eigen::Index i = 0; i < windows; ++i) {
    for (Eigen::Index k = 0; k < width; ++k) {
      value.block(i, k * d, 1, d) = a->value.row(i + k);
    }
  }
  return make(std::move(value), {a}, [a, width, d](Node& out) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (Eigen::Index i = 0; i < out.value.rows(); ++i) {
      for (Eigen::Index k = 0; k < width; ++k) {
        a->grad.row(i + k) += out.grad.block(i, k * d, 1, d);
      }
    }
  });
}

NodePtr cross_entropy_with_logits(const NodePtr& logits, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits->value.rows()) {
    throw std::invalid_argument("cross_entropy_with_logits: one label per row required");
  }
  const Eigen::Index c = logits->value.cols();
  auto probs = std::make_shared<Matrix>(logits->value.rows(), c);
  double loss = 0.0;
  long counted = 0;
  for (Eigen::Index r = 0; r < logits->value.rows(); ++r) {
    const double max = logits->value.row(r).maxCoeff();
    const Eigen::ArrayXd shifted = logits->value.row(r).transpose().array() - max;
    const double lse = std::log(shifted.exp().sum());
    probs->row(r) = (shifted - lse).exp().transpose();
    const int y = labels[static_cast<size_t>(r)];
    if (y < 0) continue;
    if (y >= c) throw std::invalid_argument("cross_entropy_with_logits: label out of range");
    loss -= shifted(y) - lse;
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("cross_entropy_with_logits: no labeled rows");
  loss /= static_cast<double>(counted);

  Matrix value(1, 1);
  value(0, 0) = loss;
  return make(std::move(value), {logits}, [logits, labels, probs, counted](Node& out) {
    if (!logits->requires_grad) return;
    logits->ensure_grad();
    const double upstream = out.grad(0, 0) / static_cast<double>(counted);
    for (Eigen::Index r = 0; r < logits->value.rows(); ++r) {
      const int y = labels[static_cast<size_t>(r)];
      if (y < 0) continue;
      logits->grad.row(r) += upstream * probs->row(r);
      logits->grad(r, y) -= upstream;
    }
  });
}

void backward(const NodePtr& root) {
  if (root->value.rows() != 1 || root->value.cols() != 1) {
    throw std::invalid_argument("backward: root must be a 1x1 scalar");
  }
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    size_t next_parent = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({root.get()});
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& frame = stack.back();
    if (frame.next_parent < frame.node->parents.size()) {
      Node* parent = frame.node->parents[frame.next_parent++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.push_back({parent});
      }
    } else {
      order.push_back(frame.node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop) {
      node->ensure_grad();
      node->backprop();
    }
  }
}

void zero_grads(const std::vector<NodePtr>& params) {
  for (const auto& p : params) {
    p->ensure_grad();
    p->grad.setZero();
  }
}

void Adam::step(const std::vector<NodePtr>& params) {
  if (state_.empty()) {
    state_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state_[i].m = Matrix::Zero(params[i]->value.rows(), params[i]->value.cols());
      state_[i].v = Matrix::Zero(params[i]->value.rows(), params[i]->value.cols());
    }
  }
  if (state_.size() != params.size()) {
    throw std::invalid_argument("Adam::step: parameter list changed size");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    p.ensure_grad();
    auto& s = state_[i];
    s.m = beta1 * s.m + (1.0 - beta1) * p.grad;
    s.v = beta2 * s.v + (1.0 - beta2) * p.grad.cwiseProduct(p.grad);
    const Matrix m_hat = s.m / bc1;
    const Matrix v_hat = s.v / bc2;
    p.value -= learning_rate * (m_hat.array() / (v_hat.array().sqrt() + eps)).matrix();
  }
}

Matrix random_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(i, j) = rng.normal(0.0, stddev);
    }
  }
  return m;
}

}  // namespace pharmvig::nn
