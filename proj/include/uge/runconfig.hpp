#pragma once

#include <string>
#include <vector>

#include "uge/batch.hpp"
#include "uge/decoder.hpp"
#include "uge/encoder.hpp"
#include "uge/kernels.hpp"
#include "uge/trainer.hpp"

namespace uge {

// Fully-resolved run configuration: the merged view every command works
// from. Serialized as JSON; every field has a default, so an empty file (or
// none at all) is a valid starting point and the echo written next to each
// run's outputs is always complete.
struct RunConfig {
  EncoderConfig encoder;
  TrainConfig train;
  LossWeights weights;
  FinetuneLossToggles toggles;
  KernelConfig kernel;
  FeaturePolicy features;
  InputFilter input_filter = InputFilter::NormalizedLaplacian;
  std::vector<KernelKind> kernel_kinds = {KernelKind::WL, KernelKind::SP, KernelKind::FGSD};

  // Dataset specs: either a TU-format directory path or a synthetic spec of
  // the form "synth:cycles-vs-cliques:count=200,min=4,max=12".
  std::vector<std::string> datasets;
  std::string output_dir = "out";
  uint64_t seed = 0;
  int threads = 0;  // 0 means all available cores
  int folds = 10;
  int pretrain_epochs = 50;

  void validate() const;
};

RunConfig load_run_config(const std::string& path);
// Parses a config from JSON text; `origin` names the source in errors.
RunConfig parse_run_config_text(const std::string& json_text, const std::string& origin);
// Serialized form of the fully-resolved config (pretty JSON).
std::string run_config_json(const RunConfig& cfg);
void save_run_config(const std::string& path, const RunConfig& cfg);

// Loads a dataset spec: a directory is parsed as TU format; "synth:..."
// specs are generated deterministically from the run seed.
Dataset load_dataset_spec(const std::string& spec, uint64_t seed);

// Short content fingerprint of a dataset (graph count, edges, labels) used
// to key kernel caches.
uint64_t dataset_fingerprint(const Dataset& ds);

// Fingerprint of the kernel configuration as it affects one kernel kind.
uint64_t kernel_config_fingerprint(const KernelConfig& cfg, KernelKind kind);

}  // namespace uge
