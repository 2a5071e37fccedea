#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace storytag::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A named model tensor. Non-trainable tensors (batch-norm running
/// statistics) are carried in checkpoints but never receive gradients.
struct Parameter {
  Matrix value;
  bool decay = true;
  bool trainable = true;
};

struct Node;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  explicit Var(Node* node) : node_(node) {}
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Node* node() const { return node_; }

 private:
  Node* node_ = nullptr;
};

class Tape;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::function<void(Node&)> backward;
  Tape* tape = nullptr;
};

/// Gradients collected by one backward pass. Embedding tables get sparse
/// per-column gradients.
struct Gradients {
  std::unordered_map<const Parameter*, Matrix> dense;
  std::unordered_map<const Parameter*, std::unordered_map<int, Vector>> sparse_columns;

  /// Gradient of `p` as a dense matrix (zeros when untouched).
  Matrix dense_of(const Parameter& p) const;
};

/// Batch-norm statistics observed in a training-mode forward pass.
struct BatchStatistics {
  const Parameter* running_mean = nullptr;
  const Parameter* running_var = nullptr;
  Vector mean;
  Vector unbiased_var;
};

/// Reverse-mode recording of one forward pass. Parameters are read-only;
/// gradients land in `gradients()` after `backward`.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value);
  Var param(const Parameter& p);
  /// Columns of `table` (width x vocab) selected by `ids`.
  Var embed(const Parameter& table, std::span<const int> ids);

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and back-propagates.
  void backward(Var root);

  const Gradients& gradients() const { return gradients_; }
  Gradients take_gradients() { return std::move(gradients_); }
  std::vector<BatchStatistics>& batch_statistics() { return batch_stats_; }

  // Internal helpers used by operations.
  Var make(Matrix value, std::vector<Node*> inputs, std::function<void(Node&)> backward);
  static void accumulate(Node* node, const Matrix& grad);

 private:
  bool grad_enabled_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, Node*> param_nodes_;
  std::vector<std::pair<Node*, const Parameter*>> param_links_;
  Gradients gradients_;
  std::vector<BatchStatistics> batch_stats_;
};

// Elementwise and linear algebra.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// Adds column vector `bias` to every column of `m`.
Var add_bias(Var m, Var bias);
Var mul(Var a, Var b);
Var one_minus(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var scale(Var a, double factor);

// Shape.
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);

/// Column-wise softmax.
Var softmax_cols(Var a);

/// Softmax of a 1 x N row taken independently over consecutive segments
/// of the given lengths.
Var segment_softmax(Var scores, std::span<const int> lengths);

/// For each segment s: sum over its columns of weights(0, t) * values.col(t).
/// Returns rows(values) x lengths.size().
Var segment_weighted_sum(Var values, Var weights, std::span<const int> lengths);

/// Inverted dropout with keep probability 1 - rate. Identity when rate == 0.
Var dropout(Var a, double rate, std::mt19937_64& rng);

struct LstmParams {
  const Parameter* input_weights;      // 4H x D, gate order i f g o
  const Parameter* recurrent_weights;  // 4H x H
  const Parameter* bias;               // 4H x 1
};

/// Bidirectional LSTM over packed sequences. `inputs` holds the sequences
/// side by side (D x sum(lengths)); the result stacks forward and backward
/// states (2H x sum(lengths)), each sequence starting from zero state.
Var bilstm(Var inputs, std::span<const int> lengths, const LstmParams& forward, const LstmParams& backward);

struct BatchNormParams {
  const Parameter* gamma;
  const Parameter* beta;
  const Parameter* running_mean;
  const Parameter* running_var;
  double eps = 1e-5;
};

/// Normalizes each row over the columns (training) or with running
/// statistics (inference).
Var batch_norm(Var a, const BatchNormParams& params, bool training);

/// Sum over columns of KL(target_col || predicted_col), predicted clamped at
/// 1e-12 and 0 log 0 = 0. Returns 1x1.
Var kl_divergence(Var predicted, const Matrix& target);

}  // namespace storytag::nn
