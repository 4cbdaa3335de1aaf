#pragma once

#include <map>
#include <string>
#include <vector>

#include "uge/tensor.hpp"

namespace uge {

// Named parameter collection. Parameter payloads are shared Tensors so the
// optimizer can update them in place; batch-norm running statistics live
// alongside as named non-trainable state. Copying is available only through
// clone()/assign_values() to keep snapshot semantics explicit.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(const ModelParams&) = delete;
  ModelParams& operator=(const ModelParams&) = delete;
  ModelParams(ModelParams&&) = default;
  ModelParams& operator=(ModelParams&&) = default;

  Tensor& create(const std::string& name, Matrix init, bool trainable = true);
  bool has(const std::string& name) const { return params_.count(name) > 0; }
  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;
  bool trainable(const std::string& name) const;

  // Creates the state on first use; channel count must stay consistent.
  BatchNormState& bn_state(const std::string& name, int channels);
  const BatchNormState& bn(const std::string& name) const;
  bool has_bn(const std::string& name) const { return bn_.count(name) > 0; }

  std::vector<std::string> param_names() const;
  std::vector<std::string> bn_names() const;
  size_t scalar_count() const;

  // Deep copy of every payload and statistic.
  ModelParams clone() const;
  // Copies values from a clone with the identical structure back in place.
  void assign_values(const ModelParams& other);

 private:
  struct Entry {
    Tensor value;
    bool trainable = true;
  };
  std::map<std::string, Entry> params_;
  std::map<std::string, BatchNormState> bn_;
};

// Per-tape view of the parameter store: parameters are watched on first use,
// so after backward() the gradient map covers exactly the parameters this
// pass touched. Per-dataset parameters that never enter a batch therefore
// receive no optimizer step at all.
struct ParamContext {
  Tape& tape;
  ModelParams& params;
  bool train = false;

  ParamContext(Tape& t, ModelParams& p, bool train_mode)
      : tape(t), params(p), train(train_mode) {}

  Tensor use(const std::string& name);
  // Gradients of every watched trainable parameter; call after backward().
  std::map<std::string, Matrix> grads() const;

 private:
  std::map<std::string, Tensor> used_;
};

struct MlpDims {
  int in = 0;
  int hidden = 0;
  int out = 0;
  int depth = 1;
};

// Creates prefix.fc<j>.w / prefix.fc<j>.b (Glorot-uniform weights, zero
// biases, seeded per parameter name) plus batch-norm state per hidden level
// when use_bn is set. Idempotent: existing entries are left untouched.
void ensure_mlp(ModelParams& params, const std::string& prefix, const MlpDims& dims,
                uint64_t seed, bool use_bn);

// Linear stack with batch_norm -> relu -> dropout after every hidden level;
// the final layer stays linear. depth 1 is a single linear map. mask (when
// given) selects the rows that count toward batch-norm statistics.
Tensor mlp_forward(ParamContext& ctx, const std::string& prefix, const MlpDims& dims,
                   const Tensor& x, double dropout_rate, bool use_bn,
                   const std::vector<double>* mask = nullptr);

Matrix glorot_uniform(int rows, int cols, CounterRng rng);

}  // namespace uge
