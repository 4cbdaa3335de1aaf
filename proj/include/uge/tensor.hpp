#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "uge/matrix.hpp"
#include "uge/rng.hpp"

namespace uge {

class Tape;

// A matrix payload plus optional linkage to the tape node that produced it.
// Payloads are shared, so copying a Tensor never copies data. A Tensor with
// no tape linkage acts as a constant in every op.
class Tensor {
 public:
  Tensor() : m_(std::make_shared<Matrix>()) {}
  explicit Tensor(Matrix m) : m_(std::make_shared<Matrix>(std::move(m))) {}
  Tensor(int rows, int cols) : m_(std::make_shared<Matrix>(rows, cols)) {}

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.value()(0, 0) = v;
    return t;
  }

  const Matrix& value() const { return *m_; }
  Matrix& value() { return *m_; }
  int rows() const { return m_->rows(); }
  int cols() const { return m_->cols(); }

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

 private:
  std::shared_ptr<Matrix> m_;
  Tape* tape_ = nullptr;
  int node_ = -1;
  friend class Tape;
};

// Running statistics for batch_norm; updated in train mode, read in eval.
struct BatchNormState {
  Matrix running_mean;  // 1 x channels
  Matrix running_var;   // 1 x channels
  explicit BatchNormState(int channels = 0)
      : running_mean(1, channels, 0.0), running_var(1, channels, 1.0) {}
};

// Reverse-mode tape over dense matrices. Nodes are recorded in construction
// order, which is a topological order, so backward() is a single reverse
// sweep. All accumulation is sequential: identical forward+backward passes
// with the same dropout seed produce bit-identical gradients.
//
// Leaf values may be mutated only after backward() has consumed them;
// training loops must run backward before applying optimizer updates.
class Tape {
 public:
  explicit Tape(uint64_t dropout_seed = 0) : dropout_rng_(dropout_seed, 0x9D0u) {}

  // Registers a differentiable leaf sharing the argument's payload.
  Tensor watch(const Tensor& t);

  // Runs the reverse sweep from a scalar (1x1) loss recorded on this tape.
  void backward(const Tensor& loss);

  // Gradient of the last backward() with respect to a tensor on this tape.
  // Tensors the loss never touched get a zero gradient of matching shape.
  Matrix grad(const Tensor& t) const;

  using BackFn = std::function<void(Tape&, const Matrix& upstream)>;
  Tensor make_node(Matrix value, BackFn back);
  void accumulate(int node, const Matrix& g);
  const Matrix* node_grad(int node) const;

  CounterRng& dropout_rng() { return dropout_rng_; }
  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    BackFn back;
    int rows = 0;
    int cols = 0;
  };
  std::vector<Node> nodes_;
  std::vector<std::unique_ptr<Matrix>> grads_;
  bool ran_backward_ = false;
  CounterRng dropout_rng_;
};

// --- ops ------------------------------------------------------------------
// Every op accepts constants (tensors without tape linkage) for any input;
// tensors that are on a tape must all be on the same one.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
// a + row vector b broadcast over rows of a (bias term).
Tensor add_rowvec(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double s);
// Elementwise integer power, p >= 1. p = 0 would collapse every entry to a
// constant and is rejected.
Tensor elementwise_pow(const Tensor& a, int p);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor sum_over_axis(const Tensor& a, int axis);
Tensor mean_over_axis(const Tensor& a, int axis);
Tensor transpose(const Tensor& a);
// z_i W z_j^T for row vectors z_i, z_j; composed from matmul/transpose so the
// gradient flows through the primitives.
Tensor bilinear(const Tensor& zi, const Tensor& w, const Tensor& zj);

// Mean binary cross-entropy over all entries. probs must hold probabilities
// (e.g. sigmoid output); they are clamped to [1e-12, 1 - 1e-12] before the
// logs, with zero gradient in the clamped region. targets must be a constant
// tensor with entries in [0, 1].
Tensor bce(const Tensor& probs, const Tensor& targets);
// Mean squared error over all entries; both sides may carry gradients.
Tensor mse(const Tensor& a, const Tensor& b);
// Mean over rows of -log softmax(logits)[label]; labels are class indices.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Inverted dropout driven by the tape's counter RNG: eval mode or rate 0
// passes the tensor through untouched. rate must be in [0, 1).
Tensor dropout(const Tensor& a, double rate, bool train);

// Normalizes each column over the rows selected by mask (all rows when mask
// is null): train mode uses the masked batch statistics and folds them into
// state with momentum; eval mode uses the stored running statistics. Output
// has mean 0 / variance 1 per channel over the masked rows in train mode.
Tensor batch_norm(const Tensor& a, BatchNormState& state, bool train,
                  const std::vector<double>* mask = nullptr, double momentum = 0.9);

// Block-diagonal propagation: rows [offsets[i], offsets[i]+filters[i].rows())
// of the output are filters[i] times the same rows of a; rows outside every
// block become zero. Filters are constants (no gradient).
Tensor graph_conv(const Tensor& a, const std::vector<Matrix>& filters,
                  const std::vector<int>& offsets);
// Rows [r0, r1) of a.
Tensor row_slice(const Tensor& a, int r0, int r1);
// Row-block sums: output row b is the sum of rows [offsets[b],
// offsets[b]+sizes[b]) of a.
Tensor segment_pool(const Tensor& a, const std::vector<int>& offsets,
                    const std::vector<int>& sizes);

// Max over coordinates of |analytic - central difference| / max(1,
// |central difference|) for a scalar-valued f. f must be deterministic; it is
// re-evaluated on fresh tapes for every perturbation.
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Matrix& x0,
                  double eps = 1e-5);

}  // namespace uge
