// Command-line front end: kernel precomputation, unsupervised pretraining,
// per-dataset fine-tuning with cross-validation, embedding export, and
// checkpoint evaluation. Every command echoes its fully-resolved config next
// to its outputs and exits nonzero with a one-line diagnostic on failure.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "uge/batch.hpp"
#include "uge/dataio.hpp"
#include "uge/decoder.hpp"
#include "uge/encoder.hpp"
#include "uge/kernels.hpp"
#include "uge/runconfig.hpp"
#include "uge/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::string> datasets;
  std::string output_dir;
  int64_t seed = -1;
  int threads = -1;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON config file (defaults apply when omitted)");
  cmd->add_option("--set", o.sets,
                  "config override as dotted.path=value, e.g. --set train.batch_size=16");
  cmd->add_option("--dataset", o.datasets,
                  "dataset spec: TU directory or synth:cycles-vs-cliques:count=...,min=...,max=...");
  cmd->add_option("--out", o.output_dir, "output directory");
  cmd->add_option("--seed", o.seed, "RNG seed");
  cmd->add_option("--threads", o.threads, "worker threads (0 = all cores)");
}

uge::RunConfig resolve_config(const CommonOpts& o) {
  std::string text = "{}";
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw std::runtime_error("cannot open config file '" + o.config_path + "'");
    text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  nlohmann::json j = nlohmann::json::parse(text);  // syntax errors re-checked below
  for (const std::string& kv : o.sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--set expects dotted.path=value, got '" + kv + "'");
    const std::string path = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    nlohmann::json* at = &j;
    size_t from = 0;
    while (true) {
      const size_t dot = path.find('.', from);
      const std::string key = path.substr(from, dot == std::string::npos ? std::string::npos
                                                                         : dot - from);
      if (key.empty()) throw std::runtime_error("--set: empty key in '" + path + "'");
      if (dot == std::string::npos) {
        nlohmann::json val;
        try {
          val = nlohmann::json::parse(raw);
        } catch (const nlohmann::json::parse_error&) {
          val = raw;  // bare strings stay strings
        }
        (*at)[key] = val;
        break;
      }
      at = &(*at)[key];
      from = dot + 1;
    }
  }
  uge::RunConfig cfg = uge::parse_run_config_text(
      j.dump(), o.config_path.empty() ? "<defaults>" : o.config_path);
  if (!o.datasets.empty()) cfg.datasets = o.datasets;
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  if (o.seed >= 0) cfg.seed = uint64_t(o.seed);
  if (o.threads >= 0) cfg.threads = o.threads;
  cfg.validate();
  return cfg;
}

int thread_count(const uge::RunConfig& cfg) {
  if (cfg.threads > 0) return cfg.threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? int(hw) : 1;
}

void echo_config(const uge::RunConfig& cfg, const std::string& command) {
  fs::create_directories(cfg.output_dir);
  uge::save_run_config((fs::path(cfg.output_dir) / (command + ".config.json")).string(), cfg);
}

std::string hex16(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}

fs::path kernel_cache_path(const uge::RunConfig& cfg, const uge::Dataset& ds,
                           uge::KernelKind kind) {
  const uint64_t h =
      uge::dataset_fingerprint(ds) ^ uge::kernel_config_fingerprint(cfg.kernel, kind);
  return fs::path(cfg.output_dir) / "kernels" /
         (ds.name + "." + uge::kernel_kind_name(kind) + "." + hex16(h) + ".kern");
}

// A dataset with everything a training command needs, owning its storage.
struct LoadedDataset {
  uge::Dataset raw;
  uge::PreparedDataset prepared;
  std::vector<uge::KernelMatrix> kernels;

  uge::DatasetBundle bundle(const uge::RunConfig& cfg) const {
    uge::DatasetBundle b;
    b.data = &prepared;
    b.kinds = cfg.kernel_kinds;
    for (const uge::KernelMatrix& k : kernels) b.kernels.push_back(&k);
    return b;
  }
};

LoadedDataset load_dataset(const uge::RunConfig& cfg, const std::string& spec,
                           bool need_kernels) {
  LoadedDataset ld;
  ld.raw = uge::load_dataset_spec(spec, cfg.seed);
  ld.prepared = uge::prepare_dataset(ld.raw, cfg.features, cfg.input_filter, cfg.seed);
  if (!need_kernels) return ld;
  for (uge::KernelKind kind : cfg.kernel_kinds) {
    const fs::path path = kernel_cache_path(cfg, ld.raw, kind);
    if (!fs::exists(path))
      throw std::runtime_error("kernel cache missing for dataset '" + ld.raw.name + "' (" +
                               path.string() + "); run the kernels command first");
    uge::KernelMatrix k = uge::load_kernel_cache(path.string());
    if (k.size() != ld.raw.size() || k.kind != kind || !(k.config == cfg.kernel))
      throw std::runtime_error("kernel cache " + path.string() +
                               " does not match the dataset/config; rerun the kernels command");
    ld.kernels.push_back(std::move(k));
  }
  return ld;
}

std::string epoch_line(const uge::EpochRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "dataset=%s epoch=%d lr=%.8f loss=%.8f adj=%.8f kern=%.8f adapt=%.8f "
                "class=%.8f val=%.8f val_smooth=%.8f val_acc=%.6f",
                r.dataset.c_str(), r.epoch, r.lr, r.train_loss, r.parts.adjacency,
                r.parts.kernel_unsup, r.parts.kernel_adaptive, r.parts.classification,
                r.val_loss, r.val_smoothed, r.val_accuracy);
  return buf;
}

void require_encoder_match(const uge::ModelParams& params, const uge::RunConfig& cfg) {
  const std::string probe = "enc.l1.out.fc0.w";
  if (!params.has(probe))
    throw std::runtime_error("checkpoint carries no encoder parameters");
  const int width = params.param(probe).cols();
  if (width != cfg.encoder.hidden)
    throw std::runtime_error("checkpoint hidden width " + std::to_string(width) +
                             " does not match configured hidden " +
                             std::to_string(cfg.encoder.hidden));
}

void require_transformer_match(const uge::ModelParams& params, const std::string& ds_name,
                               int feature_dim) {
  const std::string probe = "ds." + ds_name + ".input.fc0.w";
  if (!params.has(probe))
    throw std::runtime_error("checkpoint has no input transformer for dataset '" + ds_name +
                             "'");
  const int d = params.param(probe).rows();
  if (d != feature_dim)
    throw std::runtime_error("checkpoint transformer for '" + ds_name + "' expects " +
                             std::to_string(d) + " feature columns, dataset provides " +
                             std::to_string(feature_dim));
}

std::string single_dataset_spec(const uge::RunConfig& cfg) {
  if (cfg.datasets.size() != 1)
    throw std::runtime_error("this command needs exactly one dataset (got " +
                             std::to_string(cfg.datasets.size()) + ")");
  return cfg.datasets[0];
}

int cmd_kernels(const uge::RunConfig& cfg) {
  if (cfg.datasets.empty()) throw std::runtime_error("kernels: no datasets given");
  echo_config(cfg, "kernels");
  fs::create_directories(fs::path(cfg.output_dir) / "kernels");
  const int threads = thread_count(cfg);
  for (const std::string& spec : cfg.datasets) {
    const uge::Dataset ds = uge::load_dataset_spec(spec, cfg.seed);
    for (uge::KernelKind kind : cfg.kernel_kinds) {
      const fs::path path = kernel_cache_path(cfg, ds, kind);
      if (fs::exists(path)) {
        std::printf("kernels: %s %s cache hit (%s)\n", ds.name.c_str(),
                    uge::kernel_kind_name(kind), path.string().c_str());
        continue;
      }
      const uge::KernelMatrix k = uge::kernel_matrix(ds.graphs, kind, cfg.kernel, threads);
      uge::save_kernel_cache(path.string(), k);
      std::printf("kernels: %s %s computed %dx%d -> %s\n", ds.name.c_str(),
                  uge::kernel_kind_name(kind), k.size(), k.size(), path.string().c_str());
    }
  }
  return 0;
}

int cmd_pretrain(const uge::RunConfig& cfg, const std::string& checkpoint_out) {
  if (cfg.datasets.empty()) throw std::runtime_error("pretrain: no datasets given");
  echo_config(cfg, "pretrain");
  std::vector<LoadedDataset> loaded;
  for (const std::string& spec : cfg.datasets)
    loaded.push_back(load_dataset(cfg, spec, /*need_kernels=*/true));
  std::vector<uge::DatasetBundle> bundles;
  for (const LoadedDataset& ld : loaded) bundles.push_back(ld.bundle(cfg));

  const fs::path log_path = fs::path(cfg.output_dir) / "pretrain.log";
  std::ofstream log(log_path);
  if (!log) throw std::runtime_error("cannot write " + log_path.string());

  uge::ModelParams params;
  const auto history = uge::pretrain(bundles, params, cfg.encoder, cfg.weights, cfg.train,
                                     cfg.pretrain_epochs, [&](const uge::EpochRecord& r) {
                                       log << epoch_line(r) << "\n";
                                       log.flush();
                                     });

  const fs::path ckpt = checkpoint_out.empty()
                            ? fs::path(cfg.output_dir) / "pretrain.ckpt"
                            : fs::path(checkpoint_out);
  uge::save_checkpoint(ckpt.string(), params, uge::run_config_json(cfg));
  std::printf("pretrain: %zu epochs, final loss %.6f, checkpoint %s\n", history.size(),
              history.empty() ? 0.0 : history.back().train_loss, ckpt.string().c_str());
  return 0;
}

int cmd_finetune(const uge::RunConfig& cfg, const std::string& from_checkpoint) {
  const std::string spec = single_dataset_spec(cfg);
  echo_config(cfg, "finetune");
  const LoadedDataset ld = load_dataset(cfg, spec, /*need_kernels=*/true);
  const uge::DatasetBundle bundle = ld.bundle(cfg);

  uge::ModelParams base;
  const uge::ModelParams* pretrained = nullptr;
  if (!from_checkpoint.empty()) {
    uge::Checkpoint ck = uge::load_checkpoint(from_checkpoint);
    require_encoder_match(ck.params, cfg);
    base = std::move(ck.params);
    pretrained = &base;
  }

  const std::string name = ld.prepared.name;
  const fs::path log_path = fs::path(cfg.output_dir) / ("finetune." + name + ".log");
  std::ofstream log(log_path);
  if (!log) throw std::runtime_error("cannot write " + log_path.string());

  const fs::path best_ckpt = fs::path(cfg.output_dir) / ("finetune." + name + ".best.ckpt");
  double best_acc = -1.0;
  const uge::FoldResult result = uge::cross_validate(
      bundle, cfg.encoder, cfg.weights, cfg.toggles, cfg.train, cfg.folds, pretrained,
      [&](int fold, const uge::FinetuneResult& fr, const uge::ModelParams& fold_params) {
        std::printf("finetune %s: fold %d accuracy %.4f (best epoch %d of %d)\n",
                    name.c_str(), fold, fr.test_accuracy, fr.best_epoch, fr.epochs_run);
        if (fr.test_accuracy > best_acc) {
          best_acc = fr.test_accuracy;
          uge::save_checkpoint(best_ckpt.string(), fold_params, uge::run_config_json(cfg));
        }
      },
      [&](const uge::EpochRecord& r) {
        log << epoch_line(r) << "\n";
      });

  const fs::path results_path =
      fs::path(cfg.output_dir) / ("finetune." + name + ".results.txt");
  std::ofstream results(results_path);
  if (!results) throw std::runtime_error("cannot write " + results_path.string());
  results << "dataset " << name << "\n";
  results << "folds " << result.fold_accuracies.size() << "\n";
  results << "pretrained " << (pretrained ? from_checkpoint : "none") << "\n";
  for (size_t i = 0; i < result.fold_accuracies.size(); ++i) {
    char line[64];
    std::snprintf(line, sizeof(line), "fold %zu accuracy %.6f", i,
                  result.fold_accuracies[i]);
    results << line << "\n";
  }
  char tail[96];
  std::snprintf(tail, sizeof(tail), "mean %.6f\nstd %.6f", result.mean, result.stddev);
  results << tail << "\n";

  std::printf("finetune %s: mean accuracy %.4f +/- %.4f over %zu folds -> %s\n", name.c_str(),
              result.mean, result.stddev, result.fold_accuracies.size(),
              results_path.string().c_str());
  return 0;
}

int cmd_embed(const uge::RunConfig& cfg, const std::string& checkpoint,
              const std::string& out_file) {
  const std::string spec = single_dataset_spec(cfg);
  echo_config(cfg, "embed");
  LoadedDataset ld = load_dataset(cfg, spec, /*need_kernels=*/false);
  uge::Checkpoint ck = uge::load_checkpoint(checkpoint);
  require_encoder_match(ck.params, cfg);
  uge::ModelParams params = std::move(ck.params);

  const std::string name = ld.prepared.name;
  if (params.has("ds." + name + ".input.fc0.w")) {
    require_transformer_match(params, name, ld.prepared.feature_dim);
  } else {
    std::fprintf(stderr, "embed: checkpoint has no transformer for '%s'; initializing fresh\n",
                 name.c_str());
    uge::ensure_transformer_params(params, name, ld.prepared.feature_dim, cfg.encoder,
                                   cfg.seed);
  }

  const fs::path out = out_file.empty()
                           ? fs::path(cfg.output_dir) / ("embed." + name + ".tsv")
                           : fs::path(out_file);
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out.string());
  f << "graph";
  for (int c = 0; c < cfg.encoder.hidden; ++c) f << "\tz" << c;
  f << "\n";
  const int B = cfg.train.batch_size;
  for (int at = 0; at < ld.prepared.size(); at += B) {
    std::vector<int> idx;
    for (int i = at; i < std::min(ld.prepared.size(), at + B); ++i) idx.push_back(i);
    uge::Tape tape(0);
    uge::ParamContext ctx(tape, params, /*train=*/false);
    const uge::Batch b = uge::make_batch(ld.prepared, idx);
    const uge::EncodeOut enc = uge::encode_batch(ctx, name, b, cfg.encoder);
    for (int r = 0; r < enc.z.rows(); ++r) {
      f << idx[r];
      for (int c = 0; c < enc.z.cols(); ++c) {
        char cell[32];
        std::snprintf(cell, sizeof(cell), "%.10g", enc.z.value()(r, c));
        f << "\t" << cell;
      }
      f << "\n";
    }
  }
  if (!f) throw std::runtime_error("failed writing " + out.string());
  std::printf("embed: %d graphs x %d dims -> %s\n", ld.prepared.size(), cfg.encoder.hidden,
              out.string().c_str());
  return 0;
}

int cmd_eval(const uge::RunConfig& cfg, const std::string& checkpoint) {
  const std::string spec = single_dataset_spec(cfg);
  echo_config(cfg, "eval");
  const LoadedDataset ld = load_dataset(cfg, spec, /*need_kernels=*/false);
  uge::Checkpoint ck = uge::load_checkpoint(checkpoint);
  require_encoder_match(ck.params, cfg);
  uge::ModelParams params = std::move(ck.params);

  const std::string name = ld.prepared.name;
  require_transformer_match(params, name, ld.prepared.feature_dim);
  if (!params.has("ds." + name + ".head.fc0.w"))
    throw std::runtime_error("checkpoint has no classification head for dataset '" + name +
                             "'; run finetune first");

  const uge::DatasetBundle bundle = ld.bundle(cfg);
  std::vector<int> all(ld.prepared.size());
  for (int i = 0; i < ld.prepared.size(); ++i) all[i] = i;
  const double acc =
      uge::evaluate_accuracy(bundle, params, cfg.encoder, all, cfg.train.batch_size);

  const fs::path out = fs::path(cfg.output_dir) / ("eval." + name + ".txt");
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out.string());
  char body[96];
  std::snprintf(body, sizeof(body), "dataset %s\ncount %d\naccuracy %.6f", name.c_str(),
                ld.prepared.size(), acc);
  f << body << "\n";
  std::printf("eval %s: accuracy %.4f over %d graphs\n", name.c_str(), acc,
              ld.prepared.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moment-based graph encoder with kernel-supervised decoding"};
  app.require_subcommand(1);

  CommonOpts kernels_opts, pretrain_opts, finetune_opts, embed_opts, eval_opts;
  std::string pretrain_ckpt_out, finetune_from, embed_ckpt, embed_out, eval_ckpt;

  CLI::App* kernels = app.add_subcommand("kernels", "precompute kernel matrices");
  add_common(kernels, kernels_opts);

  CLI::App* pretrain = app.add_subcommand("pretrain", "unsupervised multi-dataset training");
  add_common(pretrain, pretrain_opts);
  pretrain->add_option("--checkpoint-out", pretrain_ckpt_out,
                       "checkpoint path (default <out>/pretrain.ckpt)");

  CLI::App* finetune = app.add_subcommand("finetune", "cross-validated fine-tuning");
  add_common(finetune, finetune_opts);
  finetune->add_option("--from-checkpoint", finetune_from, "start from a pretrained checkpoint");

  CLI::App* embed = app.add_subcommand("embed", "export graph embeddings");
  add_common(embed, embed_opts);
  embed->add_option("--checkpoint", embed_ckpt, "trained checkpoint")->required();
  embed->add_option("--embed-out", embed_out, "output file (default <out>/embed.<ds>.tsv)");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a fine-tuned checkpoint");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", eval_ckpt, "fine-tuned checkpoint")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (kernels->parsed()) return cmd_kernels(resolve_config(kernels_opts));
    if (pretrain->parsed())
      return cmd_pretrain(resolve_config(pretrain_opts), pretrain_ckpt_out);
    if (finetune->parsed()) return cmd_finetune(resolve_config(finetune_opts), finetune_from);
    if (embed->parsed()) return cmd_embed(resolve_config(embed_opts), embed_ckpt, embed_out);
    if (eval->parsed()) return cmd_eval(resolve_config(eval_opts), eval_ckpt);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
