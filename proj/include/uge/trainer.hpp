#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "uge/batch.hpp"
#include "uge/decoder.hpp"
#include "uge/encoder.hpp"
#include "uge/kernels.hpp"
#include "uge/nn.hpp"

namespace uge {

struct TrainConfig {
  int max_epoch = 3000;  // schedule horizon and hard epoch cap
  int warmup_epochs = 2;
  double lr_init = 1e-4;
  double lr_max = 1e-3;
  double lr_final = 1e-4;
  int batch_size = 32;
  double weight_decay = 5e-4;
  int patience = 50;       // epochs without smoothed-val improvement
  int smooth_window = 5;   // validation-loss smoothing
  uint64_t seed = 0;

  void validate() const;
};

// Linear ramp lr_init -> lr_max over warmup_epochs, then cosine decay to
// lr_final at max_epoch. Continuous at the boundary; epoch may be fractional.
double lr_at(double epoch, const TrainConfig& cfg);

// Adam with per-parameter named state and an L2 term folded into the
// gradient. Parameters absent from a step's gradient map keep their state
// untouched; bias correction counts each parameter's own steps.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Throws on a non-finite gradient, naming the parameter.
  void step(ModelParams& params, const std::map<std::string, Matrix>& grads, double lr,
            double weight_decay);

 private:
  struct State {
    Matrix m, v;
    int t = 0;
  };
  double beta1_, beta2_, eps_;
  std::map<std::string, State> state_;
};

// One dataset plus its precomputed kernel matrices (aligned with kinds).
struct DatasetBundle {
  const PreparedDataset* data = nullptr;
  std::vector<KernelKind> kinds;
  std::vector<const KernelMatrix*> kernels;

  void validate() const;
  std::vector<Matrix> slices(const std::vector<int>& indices) const;
};

struct EpochRecord {
  std::string dataset;  // "*" for interleaved pretraining epochs
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  LossBreakdown parts;  // summed over the epoch's batches, then averaged
  double val_loss = -1.0;      // raw; negative when not evaluated
  double val_smoothed = -1.0;
  double val_accuracy = -1.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Unsupervised pretraining of the shared encoder on several datasets at
// once: per epoch every dataset is shuffled and chunked into batches, and
// the batch queues are interleaved round-robin (d0 b0, d1 b0, ..., d0 b1,
// ...). Each batch optimizes adjacency + unsupervised kernel losses; a
// dataset's input transformer only receives gradients from its own batches.
// Missing/misaligned kernel matrices are rejected up front. Returns one
// record per epoch; `epochs` must stay within cfg.max_epoch.
std::vector<EpochRecord> pretrain(const std::vector<DatasetBundle>& datasets,
                                  ModelParams& params, const EncoderConfig& enc,
                                  const LossWeights& weights, const TrainConfig& cfg,
                                  int epochs, const EpochCallback& cb = {});

struct FinetuneResult {
  double test_accuracy = 0.0;
  double best_val_loss = 0.0;  // smoothed loss of the kept snapshot
  int best_epoch = -1;
  int epochs_run = 0;
  std::vector<EpochRecord> history;
};

// Supervised fine-tuning on one dataset split. Optimizes the finetune-mode
// total loss on the train indices; after every epoch evaluates the raw
// validation loss, smooths it over the trailing window, and snapshots the
// parameters whenever the smoothed value improves. Stops once the count of
// consecutive non-improving epochs exceeds patience (or at max_epoch).
// params is left at the best snapshot; the reported accuracy is that
// snapshot's on the test indices.
FinetuneResult finetune(const DatasetBundle& ds, ModelParams& params,
                        const EncoderConfig& enc, const LossWeights& weights,
                        const FinetuneLossToggles& toggles, const TrainConfig& cfg,
                        const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                        const std::vector<int>& test_idx, const EpochCallback& cb = {});

// Disjoint index folds covering 0..n-1. Stratified by label (per-class
// shuffle, then round-robin deal) unless any class has fewer members than k,
// in which case the deal ignores labels and `stratified` reports false.
struct FoldPlan {
  std::vector<std::vector<int>> folds;
  bool stratified = true;
};
FoldPlan make_folds(const std::vector<int>& labels, int k, uint64_t seed);

struct FoldResult {
  std::vector<double> fold_accuracies;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

// Receives each fold's result and the snapshot parameters it ended with.
using FoldCallback = std::function<void(int fold, const FinetuneResult&, const ModelParams&)>;

// k-fold protocol: fold i tests on fold i, validates on fold (i+1) % k,
// trains on the rest. Starts each fold from a clone of `pretrained` when
// given (encoder transfers; missing transformer/head parameters are created
// fresh) or from scratch otherwise. Fold RNG streams are derived from
// cfg.seed and the fold index.
FoldResult cross_validate(const DatasetBundle& ds, const EncoderConfig& enc,
                          const LossWeights& weights, const FinetuneLossToggles& toggles,
                          const TrainConfig& cfg, int k, const ModelParams* pretrained,
                          const FoldCallback& fold_cb = {}, const EpochCallback& cb = {});

// Argmax-classification accuracy over the given indices (eval mode).
double evaluate_accuracy(const DatasetBundle& ds, ModelParams& params,
                         const EncoderConfig& enc, const std::vector<int>& indices,
                         int batch_size);

}  // namespace uge
