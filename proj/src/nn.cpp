#include "uge/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace uge {

Tensor& ModelParams::create(const std::string& name, Matrix init, bool trainable) {
  if (params_.count(name))
    throw std::invalid_argument("ModelParams: parameter '" + name + "' already exists");
  auto& e = params_[name];
  e.value = Tensor{std::move(init)};
  e.trainable = trainable;
  return e.value;
}

Tensor& ModelParams::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::out_of_range("ModelParams: unknown parameter '" + name + "'");
  return it->second.value;
}

const Tensor& ModelParams::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::out_of_range("ModelParams: unknown parameter '" + name + "'");
  return it->second.value;
}

bool ModelParams::trainable(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::out_of_range("ModelParams: unknown parameter '" + name + "'");
  return it->second.trainable;
}

const BatchNormState& ModelParams::bn(const std::string& name) const {
  auto it = bn_.find(name);
  if (it == bn_.end())
    throw std::out_of_range("ModelParams: unknown batch-norm state '" + name + "'");
  return it->second;
}

BatchNormState& ModelParams::bn_state(const std::string& name, int channels) {
  auto it = bn_.find(name);
  if (it == bn_.end()) {
    auto [pos, ok] = bn_.emplace(name, BatchNormState(channels));
    return pos->second;
  }
  if (it->second.running_mean.cols() != channels)
    throw std::invalid_argument("ModelParams: batch-norm state '" + name + "' tracks " +
                                std::to_string(it->second.running_mean.cols()) +
                                " channels, requested " + std::to_string(channels));
  return it->second;
}

std::vector<std::string> ModelParams::param_names() const {
  std::vector<std::string> names;
  names.reserve(params_.size());
  for (const auto& [k, v] : params_) names.push_back(k);
  return names;
}

std::vector<std::string> ModelParams::bn_names() const {
  std::vector<std::string> names;
  names.reserve(bn_.size());
  for (const auto& [k, v] : bn_) names.push_back(k);
  return names;
}

size_t ModelParams::scalar_count() const {
  size_t n = 0;
  for (const auto& [k, v] : params_) n += v.value.value().size();
  return n;
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  for (const auto& [k, v] : params_) {
    auto& e = out.params_[k];
    e.value = Tensor{v.value.value()};  // deep copy of the payload
    e.trainable = v.trainable;
  }
  out.bn_ = bn_;
  return out;
}

void ModelParams::assign_values(const ModelParams& other) {
  if (params_.size() != other.params_.size())
    throw std::invalid_argument("assign_values: parameter sets differ in size");
  for (auto& [k, v] : params_) {
    auto it = other.params_.find(k);
    if (it == other.params_.end())
      throw std::invalid_argument("assign_values: parameter '" + k + "' missing from source");
    if (!v.value.value().same_shape(it->second.value.value()))
      throw std::invalid_argument("assign_values: shape mismatch for '" + k + "'");
    v.value.value() = it->second.value.value();
  }
  bn_ = other.bn_;
}

Tensor ParamContext::use(const std::string& name) {
  auto it = used_.find(name);
  if (it != used_.end()) return it->second;
  Tensor watched = tape.watch(params.param(name));
  used_.emplace(name, watched);
  return watched;
}

std::map<std::string, Matrix> ParamContext::grads() const {
  std::map<std::string, Matrix> out;
  for (const auto& [name, tensor] : used_) {
    if (!params.trainable(name)) continue;
    out.emplace(name, tape.grad(tensor));
  }
  return out;
}

Matrix glorot_uniform(int rows, int cols, CounterRng rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  Matrix w(rows, cols);
  for (double& v : w.values()) v = limit * (2.0 * rng.next_uniform() - 1.0);
  return w;
}

namespace {

int layer_out(const MlpDims& d, int j) { return j == d.depth - 1 ? d.out : d.hidden; }
int layer_in(const MlpDims& d, int j) { return j == 0 ? d.in : d.hidden; }

}  // namespace

void ensure_mlp(ModelParams& params, const std::string& prefix, const MlpDims& dims,
                uint64_t seed, bool use_bn) {
  if (dims.depth < 1) throw std::invalid_argument("ensure_mlp: depth must be >= 1");
  CounterRng root(seed);
  for (int j = 0; j < dims.depth; ++j) {
    const std::string w = prefix + ".fc" + std::to_string(j) + ".w";
    const std::string b = prefix + ".fc" + std::to_string(j) + ".b";
    if (!params.has(w))
      params.create(w, glorot_uniform(layer_in(dims, j), layer_out(dims, j), root.split(w)));
    if (!params.has(b)) params.create(b, Matrix(1, layer_out(dims, j)));
    if (use_bn && j < dims.depth - 1)
      params.bn_state(prefix + ".bn" + std::to_string(j), dims.hidden);
  }
}

Tensor mlp_forward(ParamContext& ctx, const std::string& prefix, const MlpDims& dims,
                   const Tensor& x, double dropout_rate, bool use_bn,
                   const std::vector<double>* mask) {
  if (x.cols() != dims.in)
    throw std::invalid_argument("mlp_forward: '" + prefix + "' expects " +
                                std::to_string(dims.in) + " input columns, got " +
                                std::to_string(x.cols()));
  Tensor h = x;
  for (int j = 0; j < dims.depth; ++j) {
    const std::string tag = std::to_string(j);
    h = add_rowvec(matmul(h, ctx.use(prefix + ".fc" + tag + ".w")),
                   ctx.use(prefix + ".fc" + tag + ".b"));
    if (j < dims.depth - 1) {
      if (use_bn)
        h = batch_norm(h, ctx.params.bn_state(prefix + ".bn" + tag, dims.hidden), ctx.train,
                       mask);
      h = relu(h);
      h = dropout(h, dropout_rate, ctx.train);
    }
  }
  return h;
}

}  // namespace uge
