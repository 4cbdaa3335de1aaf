#include "uge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace uge {

void TrainConfig::validate() const {
  if (lr_init <= 0 || lr_max <= 0 || lr_final <= 0)
    throw std::invalid_argument("TrainConfig: learning rates must be positive");
  if (warmup_epochs < 0 || warmup_epochs >= max_epoch)
    throw std::invalid_argument("TrainConfig: warmup_epochs must be in [0, max_epoch)");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (patience < 0) throw std::invalid_argument("TrainConfig: patience must be >= 0");
  if (smooth_window < 1)
    throw std::invalid_argument("TrainConfig: smooth_window must be >= 1");
  if (weight_decay < 0)
    throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
}

double lr_at(double epoch, const TrainConfig& cfg) {
  cfg.validate();
  if (epoch < 0 || epoch > cfg.max_epoch)
    throw std::invalid_argument("lr_at: epoch " + std::to_string(epoch) +
                                " outside [0, " + std::to_string(cfg.max_epoch) + "]");
  if (epoch < cfg.warmup_epochs)
    return cfg.lr_init + (cfg.lr_max - cfg.lr_init) * epoch / cfg.warmup_epochs;
  const double span = double(cfg.max_epoch - cfg.warmup_epochs);
  const double t = (epoch - cfg.warmup_epochs) / span;
  return cfg.lr_final + (cfg.lr_max - cfg.lr_final) * 0.5 * (1.0 + std::cos(M_PI * t));
}

void Adam::step(ModelParams& params, const std::map<std::string, Matrix>& grads, double lr,
                double weight_decay) {
  for (const auto& [name, g] : grads) {
    Matrix& w = params.param(name).value();
    if (g.rows() != w.rows() || g.cols() != w.cols())
      throw std::invalid_argument("Adam: gradient for '" + name + "' is " + g.shape_str() +
                                  ", parameter is " + w.shape_str());
    for (int i = 0; i < g.size(); ++i)
      if (!std::isfinite(g.data()[i]))
        throw std::runtime_error("Adam: non-finite gradient for parameter '" + name + "'");
    State& st = state_[name];
    if (st.t == 0) {
      st.m = Matrix(g.rows(), g.cols());
      st.v = Matrix(g.rows(), g.cols());
    }
    st.t += 1;
    const double bc1 = 1.0 - std::pow(beta1_, st.t);
    const double bc2 = 1.0 - std::pow(beta2_, st.t);
    for (int i = 0; i < g.size(); ++i) {
      const double ge = g.data()[i] + weight_decay * w.data()[i];
      st.m.data()[i] = beta1_ * st.m.data()[i] + (1.0 - beta1_) * ge;
      st.v.data()[i] = beta2_ * st.v.data()[i] + (1.0 - beta2_) * ge * ge;
      const double mhat = st.m.data()[i] / bc1;
      const double vhat = st.v.data()[i] / bc2;
      w.data()[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void DatasetBundle::validate() const {
  if (!data) throw std::invalid_argument("DatasetBundle: no dataset");
  if (kinds.empty()) throw std::invalid_argument("DatasetBundle: no kernels configured");
  if (kernels.size() != kinds.size())
    throw std::runtime_error("dataset '" + data->name + "': " +
                             std::to_string(kernels.size()) + " kernel matrices for " +
                             std::to_string(kinds.size()) +
                             " kernel kinds; precompute the kernels first");
  for (size_t i = 0; i < kinds.size(); ++i) {
    if (!kernels[i])
      throw std::runtime_error("dataset '" + data->name + "': kernel matrix for " +
                               kernel_kind_name(kinds[i]) +
                               " missing; precompute the kernels first");
    if (kernels[i]->kind != kinds[i])
      throw std::runtime_error("dataset '" + data->name + "': kernel matrix " +
                               std::to_string(i) + " is " +
                               kernel_kind_name(kernels[i]->kind) + ", expected " +
                               kernel_kind_name(kinds[i]));
    if (kernels[i]->size() != data->size())
      throw std::runtime_error("dataset '" + data->name + "': kernel matrix for " +
                               std::string(kernel_kind_name(kinds[i])) + " covers " +
                               std::to_string(kernels[i]->size()) + " graphs, dataset has " +
                               std::to_string(data->size()));
  }
}

std::vector<Matrix> DatasetBundle::slices(const std::vector<int>& indices) const {
  std::vector<Matrix> out;
  out.reserve(kernels.size());
  for (const KernelMatrix* k : kernels) out.push_back(batch_slice(*k, indices));
  return out;
}

namespace {

uint64_t derive_seed(uint64_t seed, const std::string& label, uint64_t a, uint64_t b) {
  return CounterRng(seed).split(label).split(a).split(b).next_u64();
}

std::vector<std::vector<int>> chunk(const std::vector<int>& idx, int batch_size) {
  std::vector<std::vector<int>> out;
  for (size_t at = 0; at < idx.size(); at += batch_size) {
    const size_t end = std::min(idx.size(), at + batch_size);
    out.emplace_back(idx.begin() + at, idx.begin() + end);
  }
  return out;
}

void add_weighted(LossBreakdown& acc, const LossBreakdown& p, double w) {
  acc.adjacency += p.adjacency * w;
  acc.kernel_unsup += p.kernel_unsup * w;
  acc.kernel_adaptive += p.kernel_adaptive * w;
  acc.classification += p.classification * w;
  acc.total += p.total * w;
}

void scale_parts(LossBreakdown& acc, double s) {
  acc.adjacency *= s;
  acc.kernel_unsup *= s;
  acc.kernel_adaptive *= s;
  acc.classification *= s;
  acc.total *= s;
}

// One optimizer step on one batch; returns the weighted-loss breakdown.
LossBreakdown train_batch(const DatasetBundle& ds, ModelParams& params,
                          const EncoderConfig& enc, const LossWeights& weights,
                          LossMode mode, const FinetuneLossToggles& toggles,
                          const std::vector<int>& indices, uint64_t tape_seed, Adam& adam,
                          double lr, double weight_decay) {
  Tape tape(tape_seed);
  ParamContext ctx(tape, params, /*train=*/true);
  const Batch b = make_batch(*ds.data, indices);
  const EncodeOut out = encode_batch(ctx, ds.data->name, b, enc);
  LossBreakdown parts;
  const Tensor loss = total_loss(ctx, ds.data->name, b, out, ds.kinds, ds.slices(indices),
                                 weights, mode, toggles, ds.data->num_classes,
                                 enc.dropout_rate, &parts);
  if (loss.on_tape()) {
    tape.backward(loss);
    adam.step(params, ctx.grads(), lr, weight_decay);
  }
  return parts;
}

// Mean finetune-mode loss over the given indices, eval mode, fixed order.
double eval_loss(const DatasetBundle& ds, ModelParams& params, const EncoderConfig& enc,
                 const LossWeights& weights, const FinetuneLossToggles& toggles,
                 const std::vector<int>& indices, int batch_size) {
  double sum = 0.0;
  size_t count = 0;
  for (const auto& part : chunk(indices, batch_size)) {
    Tape tape(0);
    ParamContext ctx(tape, params, /*train=*/false);
    const Batch b = make_batch(*ds.data, part);
    const EncodeOut out = encode_batch(ctx, ds.data->name, b, enc);
    LossBreakdown parts;
    total_loss(ctx, ds.data->name, b, out, ds.kinds, ds.slices(part), weights,
               LossMode::Finetune, toggles, ds.data->num_classes, enc.dropout_rate, &parts);
    sum += parts.total * double(part.size());
    count += part.size();
  }
  return sum / double(count);
}

void ensure_all(const DatasetBundle& ds, ModelParams& params, const EncoderConfig& enc,
                uint64_t seed, bool with_head) {
  ensure_encoder_params(params, enc, seed);
  ensure_transformer_params(params, ds.data->name, ds.data->feature_dim, enc, seed);
  ensure_decoder_params(params, ds.kinds, enc.hidden, seed);
  if (with_head)
    ensure_head_params(params, ds.data->name, enc.hidden, ds.data->num_classes, seed);
}

}  // namespace

std::vector<EpochRecord> pretrain(const std::vector<DatasetBundle>& datasets,
                                  ModelParams& params, const EncoderConfig& enc,
                                  const LossWeights& weights, const TrainConfig& cfg,
                                  int epochs, const EpochCallback& cb) {
  cfg.validate();
  enc.validate();
  weights.validate();
  if (datasets.empty()) throw std::invalid_argument("pretrain: no datasets");
  if (epochs < 1 || epochs > cfg.max_epoch)
    throw std::invalid_argument("pretrain: epochs must be in [1, max_epoch]");
  for (const DatasetBundle& ds : datasets) {
    ds.validate();
    ensure_all(ds, params, enc, cfg.seed, /*with_head=*/false);
  }

  Adam adam;
  std::vector<EpochRecord> history;
  const FinetuneLossToggles no_toggles{};
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    // Per-dataset shuffled batch queues, consumed round-robin.
    std::vector<std::vector<std::vector<int>>> queues;
    for (size_t d = 0; d < datasets.size(); ++d) {
      std::vector<int> idx(datasets[d].data->size());
      std::iota(idx.begin(), idx.end(), 0);
      CounterRng rng(derive_seed(cfg.seed, "pre-shuffle." + datasets[d].data->name, epoch, 0));
      rng.shuffle(idx);
      queues.push_back(chunk(idx, cfg.batch_size));
    }
    EpochRecord rec;
    rec.dataset = "*";
    rec.epoch = epoch;
    rec.lr = lr;
    size_t graphs_done = 0;
    uint64_t step = 0;
    for (size_t at = 0; true; ++at) {
      bool any = false;
      for (size_t d = 0; d < datasets.size(); ++d) {
        if (at >= queues[d].size()) continue;
        any = true;
        const auto& batch_idx = queues[d][at];
        const LossBreakdown parts =
            train_batch(datasets[d], params, enc, weights, LossMode::Pretrain, no_toggles,
                        batch_idx, derive_seed(cfg.seed, "pre-tape", epoch, step++), adam,
                        lr, cfg.weight_decay);
        add_weighted(rec.parts, parts, double(batch_idx.size()));
        graphs_done += batch_idx.size();
      }
      if (!any) break;
    }
    scale_parts(rec.parts, 1.0 / double(graphs_done));
    rec.train_loss = rec.parts.total;
    history.push_back(rec);
    if (cb) cb(rec);
  }
  return history;
}

FinetuneResult finetune(const DatasetBundle& ds, ModelParams& params,
                        const EncoderConfig& enc, const LossWeights& weights,
                        const FinetuneLossToggles& toggles, const TrainConfig& cfg,
                        const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                        const std::vector<int>& test_idx, const EpochCallback& cb) {
  cfg.validate();
  enc.validate();
  weights.validate();
  ds.validate();
  if (train_idx.empty()) throw std::invalid_argument("finetune: empty training set");
  if (val_idx.empty()) throw std::invalid_argument("finetune: empty validation set");
  ensure_all(ds, params, enc, cfg.seed, /*with_head=*/true);

  Adam adam;
  FinetuneResult res;
  ModelParams best;
  double best_smoothed = std::numeric_limits<double>::infinity();
  std::vector<double> raw_vals;
  int bad_epochs = 0;
  for (int epoch = 0; epoch < cfg.max_epoch; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    std::vector<int> order = train_idx;
    CounterRng rng(derive_seed(cfg.seed, "ft-shuffle." + ds.data->name, epoch, 0));
    rng.shuffle(order);
    EpochRecord rec;
    rec.dataset = ds.data->name;
    rec.epoch = epoch;
    rec.lr = lr;
    uint64_t step = 0;
    for (const auto& batch_idx : chunk(order, cfg.batch_size))
      add_weighted(rec.parts,
                   train_batch(ds, params, enc, weights, LossMode::Finetune, toggles,
                               batch_idx, derive_seed(cfg.seed, "ft-tape", epoch, step++),
                               adam, lr, cfg.weight_decay),
                   double(batch_idx.size()));
    scale_parts(rec.parts, 1.0 / double(order.size()));
    rec.train_loss = rec.parts.total;

    rec.val_loss = eval_loss(ds, params, enc, weights, toggles, val_idx, cfg.batch_size);
    raw_vals.push_back(rec.val_loss);
    const size_t win = std::min<size_t>(cfg.smooth_window, raw_vals.size());
    rec.val_smoothed =
        std::accumulate(raw_vals.end() - win, raw_vals.end(), 0.0) / double(win);
    rec.val_accuracy = evaluate_accuracy(ds, params, enc, val_idx, cfg.batch_size);
    res.history.push_back(rec);
    if (cb) cb(rec);
    res.epochs_run = epoch + 1;

    if (rec.val_smoothed < best_smoothed) {
      best_smoothed = rec.val_smoothed;
      best = params.clone();
      res.best_epoch = epoch;
      bad_epochs = 0;
    } else {
      bad_epochs += 1;
      if (bad_epochs > cfg.patience) break;
    }
  }
  params.assign_values(best);
  res.best_val_loss = best_smoothed;
  res.test_accuracy =
      test_idx.empty() ? -1.0 : evaluate_accuracy(ds, params, enc, test_idx, cfg.batch_size);
  return res;
}

FoldPlan make_folds(const std::vector<int>& labels, int k, uint64_t seed) {
  const int n = static_cast<int>(labels.size());
  if (k < 2) throw std::invalid_argument("make_folds: fold count must be >= 2");
  if (n < k)
    throw std::invalid_argument("make_folds: " + std::to_string(n) + " samples for " +
                                std::to_string(k) + " folds");
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < n; ++i) by_class[labels[i]].push_back(i);

  FoldPlan plan;
  plan.folds.assign(k, {});
  plan.stratified = std::all_of(by_class.begin(), by_class.end(), [&](const auto& kv) {
    return static_cast<int>(kv.second.size()) >= k;
  });
  CounterRng root = CounterRng(seed).split("folds");
  int cursor = 0;
  if (plan.stratified) {
    for (auto& [cls, members] : by_class) {
      CounterRng rng = root.split(uint64_t(cls));
      rng.shuffle(members);
      for (int idx : members) plan.folds[cursor++ % k].push_back(idx);
    }
  } else {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    root.shuffle(idx);
    for (int i : idx) plan.folds[cursor++ % k].push_back(i);
  }
  return plan;
}

FoldResult cross_validate(const DatasetBundle& ds, const EncoderConfig& enc,
                          const LossWeights& weights, const FinetuneLossToggles& toggles,
                          const TrainConfig& cfg, int k, const ModelParams* pretrained,
                          const FoldCallback& fold_cb, const EpochCallback& cb) {
  ds.validate();
  if (ds.data->size() < k)
    throw std::invalid_argument("cross_validate: dataset smaller than fold count");
  const FoldPlan plan = make_folds(ds.data->labels, k, cfg.seed);
  if (!plan.stratified)
    std::cerr << "warning: some class has fewer than " << k
              << " members; falling back to unstratified folds\n";

  FoldResult result;
  for (int i = 0; i < k; ++i) {
    const std::vector<int>& test = plan.folds[i];
    const std::vector<int>& val = plan.folds[(i + 1) % k];
    std::vector<int> train;
    for (int f = 0; f < k; ++f)
      if (f != i && f != (i + 1) % k)
        train.insert(train.end(), plan.folds[f].begin(), plan.folds[f].end());

    ModelParams params = pretrained ? pretrained->clone() : ModelParams();
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = derive_seed(cfg.seed, "fold", uint64_t(i), 0);
    const FinetuneResult fr =
        finetune(ds, params, enc, weights, toggles, fold_cfg, train, val, test, cb);
    result.fold_accuracies.push_back(fr.test_accuracy);
    if (fold_cb) fold_cb(i, fr, params);
  }
  const double n = double(result.fold_accuracies.size());
  result.mean = std::accumulate(result.fold_accuracies.begin(),
                                result.fold_accuracies.end(), 0.0) /
                n;
  double ss = 0.0;
  for (double a : result.fold_accuracies) ss += (a - result.mean) * (a - result.mean);
  result.stddev = std::sqrt(ss / n);
  return result;
}

double evaluate_accuracy(const DatasetBundle& ds, ModelParams& params,
                         const EncoderConfig& enc, const std::vector<int>& indices,
                         int batch_size) {
  if (indices.empty()) throw std::invalid_argument("evaluate_accuracy: no indices");
  int hits = 0;
  for (const auto& part : chunk(indices, batch_size)) {
    Tape tape(0);
    ParamContext ctx(tape, params, /*train=*/false);
    const Batch b = make_batch(*ds.data, part);
    const EncodeOut out = encode_batch(ctx, ds.data->name, b, enc);
    const Tensor logits = head_logits(ctx, ds.data->name, out.z, enc.hidden,
                                      ds.data->num_classes, enc.dropout_rate);
    for (int r = 0; r < logits.rows(); ++r) {
      int arg = 0;
      for (int c = 1; c < logits.cols(); ++c)
        if (logits.value()(r, c) > logits.value()(r, arg)) arg = c;
      if (arg == b.labels[r]) hits += 1;
    }
  }
  return double(hits) / double(indices.size());
}

}  // namespace uge
