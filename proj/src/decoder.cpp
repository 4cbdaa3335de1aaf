#include "uge/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uge {

void LossWeights::validate() const {
  if (lambda_A < 0 || lambda_K < 0 || lambda_class < 0)
    throw std::invalid_argument("LossWeights: weights must be >= 0");
  for (double v : lambda_k)
    if (v < 0) throw std::invalid_argument("LossWeights: per-kernel weights must be >= 0");
}

double LossWeights::kernel_weight(size_t k, size_t num_kernels) const {
  if (lambda_k.empty()) return num_kernels ? 1.0 / double(num_kernels) : 0.0;
  if (lambda_k.size() != num_kernels)
    throw std::invalid_argument("LossWeights: " + std::to_string(lambda_k.size()) +
                                " per-kernel weights for " + std::to_string(num_kernels) +
                                " kernels");
  return lambda_k[k];
}

void ensure_decoder_params(ModelParams& params, const std::vector<KernelKind>& kinds,
                           int hidden, uint64_t seed) {
  CounterRng root(seed);
  auto ensure = [&](const std::string& name) {
    if (!params.has(name)) params.create(name, glorot_uniform(hidden, hidden, root.split(name)));
  };
  for (KernelKind k : kinds) ensure("dec.k." + std::string(kernel_kind_name(k)) + ".W");
  ensure("dec.k.adaptive.W");
}

void ensure_head_params(ModelParams& params, const std::string& ds_name, int hidden,
                        int num_classes, uint64_t seed) {
  if (num_classes < 2)
    throw std::invalid_argument("classification head needs >= 2 classes");
  ensure_mlp(params, "ds." + ds_name + ".head",
             MlpDims{hidden, hidden, num_classes, 3}, seed, /*use_bn=*/false);
}

Tensor adjacency_loss(const Tensor& y, const Batch& b, double lambda_A) {
  const int B = b.size();
  Tensor acc;
  for (int i = 0; i < B; ++i) {
    const int n = b.sizes[i];
    if (b.adj[i].rows() != n || b.adj[i].cols() != n)
      throw std::invalid_argument("adjacency_loss: target of graph " + std::to_string(i) +
                                  " is " + b.adj[i].shape_str() + ", expected " +
                                  std::to_string(n) + "x" + std::to_string(n));
    const Tensor yi = row_slice(y, b.offsets[i], b.offsets[i] + n);
    const Tensor li = bce(sigmoid(matmul(yi, transpose(yi))), Tensor(b.adj[i]));
    acc = i == 0 ? li : add(acc, li);
  }
  return scalar_mul(acc, lambda_A / double(B));
}

namespace {

void check_slices(const std::vector<Matrix>& slices, int B, size_t expected) {
  if (slices.size() != expected)
    throw std::invalid_argument("kernel loss: " + std::to_string(slices.size()) +
                                " slices for " + std::to_string(expected) + " kernels");
  for (const Matrix& s : slices)
    if (s.rows() != B || s.cols() != B)
      throw std::invalid_argument("kernel loss: slice is " + s.shape_str() + ", batch is " +
                                  std::to_string(B));
}

Tensor bilinear_gram(ParamContext& ctx, const Tensor& z, const std::string& w_name) {
  return sigmoid(matmul(matmul(z, ctx.use(w_name)), transpose(z)));
}

}  // namespace

Tensor kernel_loss_unsup(ParamContext& ctx, const Tensor& z,
                         const std::vector<KernelKind>& kinds,
                         const std::vector<Matrix>& slices, const LossWeights& w) {
  if (kinds.empty()) throw std::invalid_argument("kernel_loss_unsup: no kernels");
  check_slices(slices, z.rows(), kinds.size());
  Tensor acc;
  for (size_t k = 0; k < kinds.size(); ++k) {
    const Tensor pred = bilinear_gram(ctx, z, "dec.k." + std::string(kernel_kind_name(kinds[k])) + ".W");
    const Tensor term = scalar_mul(mse(pred, Tensor(slices[k])), w.kernel_weight(k, kinds.size()));
    acc = k == 0 ? term : add(acc, term);
  }
  return scalar_mul(acc, w.lambda_K);
}

Matrix adaptive_targets(const std::vector<Matrix>& slices, const std::vector<int>& labels) {
  if (slices.empty()) throw std::invalid_argument("adaptive_targets: no kernel slices");
  const int B = static_cast<int>(labels.size());
  check_slices(slices, B, slices.size());
  Matrix t(B, B);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < B; ++j) {
      double best = slices[0](i, j);
      for (size_t k = 1; k < slices.size(); ++k) {
        const double v = slices[k](i, j);
        best = labels[i] == labels[j] ? std::max(best, v) : std::min(best, v);
      }
      t(i, j) = best;
    }
  return t;
}

Tensor kernel_loss_adaptive(ParamContext& ctx, const Tensor& z,
                            const std::vector<Matrix>& slices, const std::vector<int>& labels,
                            double lambda_K) {
  if (static_cast<int>(labels.size()) != z.rows())
    throw std::invalid_argument("kernel_loss_adaptive: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(z.rows()) + " embeddings");
  for (int lab : labels)
    if (lab < 0) throw std::invalid_argument("kernel_loss_adaptive: missing label");
  const Matrix target = adaptive_targets(slices, labels);
  const Tensor pred = bilinear_gram(ctx, z, "dec.k.adaptive.W");
  return scalar_mul(mse(pred, Tensor(target)), lambda_K);
}

Tensor head_logits(ParamContext& ctx, const std::string& ds_name, const Tensor& z,
                   int hidden, int num_classes, double dropout_rate) {
  return mlp_forward(ctx, "ds." + ds_name + ".head",
                     MlpDims{hidden, hidden, num_classes, 3}, z, dropout_rate,
                     /*use_bn=*/false);
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (int i = 0; i < logits.rows(); ++i) {
    double mx = logits(i, 0);
    for (int j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
    double sum = 0.0;
    for (int j = 0; j < logits.cols(); ++j) {
      out(i, j) = std::exp(logits(i, j) - mx);
      sum += out(i, j);
    }
    for (int j = 0; j < logits.cols(); ++j) out(i, j) /= sum;
  }
  return out;
}

Matrix classify(ParamContext& ctx, const std::string& ds_name, const Tensor& z, int hidden,
                int num_classes, double dropout_rate) {
  return softmax_rows(head_logits(ctx, ds_name, z, hidden, num_classes, dropout_rate).value());
}

Tensor total_loss(ParamContext& ctx, const std::string& ds_name, const Batch& b,
                  const EncodeOut& enc, const std::vector<KernelKind>& kinds,
                  const std::vector<Matrix>& slices, const LossWeights& w, LossMode mode,
                  const FinetuneLossToggles& toggles, int num_classes, double dropout_rate,
                  LossBreakdown* breakdown) {
  w.validate();
  const bool finetune = mode == LossMode::Finetune;
  const bool want_class = finetune && toggles.classification && w.lambda_class > 0;
  const bool want_adaptive = finetune && toggles.adaptive && w.lambda_K > 0;
  const bool want_adj = (!finetune || toggles.adjacency) && w.lambda_A > 0;
  const bool want_unsup = (!finetune || toggles.unsup_kernels) && w.lambda_K > 0;

  if (want_class || want_adaptive)
    for (int lab : b.labels)
      if (lab < 0)
        throw std::invalid_argument("total_loss: fine-tuning losses need labels for every "
                                    "graph in the batch");

  LossBreakdown parts;
  Tensor total = Tensor::scalar(0.0);
  bool first = true;
  auto take = [&](const Tensor& term, double& slot) {
    slot = term.value()(0, 0);
    total = first ? term : add(total, term);
    first = false;
  };

  if (want_adj) take(adjacency_loss(enc.y, b, w.lambda_A), parts.adjacency);
  if (want_unsup)
    take(kernel_loss_unsup(ctx, enc.z, kinds, slices, w), parts.kernel_unsup);
  if (want_adaptive)
    take(kernel_loss_adaptive(ctx, enc.z, slices, b.labels, w.lambda_K),
         parts.kernel_adaptive);
  if (want_class) {
    const Tensor logits = head_logits(ctx, ds_name, enc.z, enc.z.cols(), num_classes,
                                      dropout_rate);
    take(scalar_mul(softmax_cross_entropy(logits, b.labels), w.lambda_class),
         parts.classification);
  }

  parts.total = total.value()(0, 0);
  if (breakdown) *breakdown = parts;
  return total;
}

}  // namespace uge
