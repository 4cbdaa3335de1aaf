#pragma once

#include <string>
#include <vector>

#include "uge/batch.hpp"
#include "uge/encoder.hpp"
#include "uge/kernels.hpp"
#include "uge/nn.hpp"

namespace uge {

struct LossWeights {
  double lambda_A = 1.0;      // adjacency reconstruction
  double lambda_K = 1.0;      // kernel-block weight
  std::vector<double> lambda_k;  // per-kernel; empty means 1/K each
  double lambda_class = 1.0;  // classification cross-entropy

  void validate() const;
  // Per-kernel weight for k of num_kernels, applying the 1/K default.
  double kernel_weight(size_t k, size_t num_kernels) const;
};

// Which loss terms fine-tuning optimizes. Classification plus the adaptive
// kernel loss is the default; the reconstruction terms can be re-enabled for
// ablations.
struct FinetuneLossToggles {
  bool classification = true;
  bool adaptive = true;
  bool adjacency = false;
  bool unsup_kernels = false;
};

enum class LossMode { Pretrain, Finetune };

// Weighted value of every computed term; parts sum to total exactly as
// accumulated (same additions, same order).
struct LossBreakdown {
  double adjacency = 0.0;
  double kernel_unsup = 0.0;
  double kernel_adaptive = 0.0;
  double classification = 0.0;
  double total = 0.0;
};

// Bilinear kernel heads dec.k.<kind>.W (one per kernel) plus the dedicated
// adaptive head dec.k.adaptive.W, all hidden x hidden.
void ensure_decoder_params(ModelParams& params, const std::vector<KernelKind>& kinds,
                           int hidden, uint64_t seed);

// Per-dataset classification head ds.<name>.head.fc<j>.{w,b}: two hidden
// levels of width hidden, output width num_classes.
void ensure_head_params(ModelParams& params, const std::string& ds_name, int hidden,
                        int num_classes, uint64_t seed);

// lambda_A * mean over graphs of the per-graph mean BCE between sigma(Y Yt)
// and A over all n^2 entries (diagonal target 0).
Tensor adjacency_loss(const Tensor& y, const Batch& b, double lambda_A);

// lambda_K * sum_k lambda_k * mean_{ij} (sigma(z_i W_k z_j^T) - K^(k)_ij)^2.
Tensor kernel_loss_unsup(ParamContext& ctx, const Tensor& z,
                         const std::vector<KernelKind>& kinds,
                         const std::vector<Matrix>& slices, const LossWeights& w);

// Entry ij is max_k K^(k)_ij when labels match, min_k otherwise.
Matrix adaptive_targets(const std::vector<Matrix>& slices, const std::vector<int>& labels);

// lambda_K * mean_{ij} (sigma(z_i W_adapt z_j^T) - target_ij)^2.
Tensor kernel_loss_adaptive(ParamContext& ctx, const Tensor& z,
                            const std::vector<Matrix>& slices, const std::vector<int>& labels,
                            double lambda_K);

// Head logits for a block of embeddings (rows).
Tensor head_logits(ParamContext& ctx, const std::string& ds_name, const Tensor& z,
                   int hidden, int num_classes, double dropout_rate);

// Row-wise softmax; each row sums to 1.
Matrix softmax_rows(const Matrix& logits);

// Head forward + softmax (eval-style probability output).
Matrix classify(ParamContext& ctx, const std::string& ds_name, const Tensor& z, int hidden,
                int num_classes, double dropout_rate);

// Mode-dependent weighted sum. Pretrain: adjacency + unsupervised kernels.
// Finetune: classification + adaptive (+ the pretraining terms per toggles);
// label-dependent terms require every batch label to be >= 0. Pass the
// kernel slices aligned with `kinds`. Terms whose weight is zero (or toggled
// off) are skipped entirely. breakdown (optional) receives the weighted
// parts.
Tensor total_loss(ParamContext& ctx, const std::string& ds_name, const Batch& b,
                  const EncodeOut& enc, const std::vector<KernelKind>& kinds,
                  const std::vector<Matrix>& slices, const LossWeights& w, LossMode mode,
                  const FinetuneLossToggles& toggles, int num_classes, double dropout_rate,
                  LossBreakdown* breakdown = nullptr);

}  // namespace uge
