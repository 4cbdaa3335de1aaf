#include "uge/runconfig.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>

#include "json.hpp"
#include "uge/rng.hpp"

namespace uge {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known)
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
  }
}

void read_encoder(const json& j, EncoderConfig& c) {
  check_keys(j, "encoder", {"hidden", "layers", "moments", "mlp_depth", "dropout"});
  c.hidden = j.value("hidden", c.hidden);
  c.layers = j.value("layers", c.layers);
  c.moments = j.value("moments", c.moments);
  c.mlp_depth = j.value("mlp_depth", c.mlp_depth);
  c.dropout_rate = j.value("dropout", c.dropout_rate);
}

void read_train(const json& j, TrainConfig& c) {
  check_keys(j, "train",
             {"max_epoch", "warmup_epochs", "lr_init", "lr_max", "lr_final", "batch_size",
              "weight_decay", "patience", "smooth_window"});
  c.max_epoch = j.value("max_epoch", c.max_epoch);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.lr_init = j.value("lr_init", c.lr_init);
  c.lr_max = j.value("lr_max", c.lr_max);
  c.lr_final = j.value("lr_final", c.lr_final);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.patience = j.value("patience", c.patience);
  c.smooth_window = j.value("smooth_window", c.smooth_window);
}

void read_weights(const json& j, LossWeights& w) {
  check_keys(j, "weights", {"lambda_A", "lambda_K", "lambda_k", "lambda_class"});
  w.lambda_A = j.value("lambda_A", w.lambda_A);
  w.lambda_K = j.value("lambda_K", w.lambda_K);
  if (j.contains("lambda_k")) w.lambda_k = j["lambda_k"].get<std::vector<double>>();
  w.lambda_class = j.value("lambda_class", w.lambda_class);
}

void read_toggles(const json& j, FinetuneLossToggles& t) {
  check_keys(j, "finetune_losses",
             {"classification", "adaptive", "adjacency", "unsup_kernels"});
  t.classification = j.value("classification", t.classification);
  t.adaptive = j.value("adaptive", t.adaptive);
  t.adjacency = j.value("adjacency", t.adjacency);
  t.unsup_kernels = j.value("unsup_kernels", t.unsup_kernels);
}

void read_kernel(const json& j, KernelConfig& k) {
  check_keys(j, "kernel", {"wl_iterations", "fgsd_bins", "fgsd_range_max"});
  k.wl_iterations = j.value("wl_iterations", k.wl_iterations);
  k.fgsd_bins = j.value("fgsd_bins", k.fgsd_bins);
  k.fgsd_range_max = j.value("fgsd_range_max", k.fgsd_range_max);
}

void read_features(const json& j, FeaturePolicy& f) {
  check_keys(j, "features", {"kind", "dim", "sigma"});
  if (j.contains("kind")) f.kind = feature_kind_from_name(j["kind"].get<std::string>());
  f.dim = j.value("dim", f.dim);
  f.sigma = j.value("sigma", f.sigma);
}

}  // namespace

void RunConfig::validate() const {
  encoder.validate();
  train.validate();
  weights.validate();
  if (folds < 2) throw std::invalid_argument("config: folds must be >= 2");
  if (pretrain_epochs < 1)
    throw std::invalid_argument("config: pretrain_epochs must be >= 1");
  if (threads < 0) throw std::invalid_argument("config: threads must be >= 0");
  if (kernel.wl_iterations < 0)
    throw std::invalid_argument("config: wl_iterations must be >= 0");
  if (kernel.fgsd_bins < 2) throw std::invalid_argument("config: fgsd_bins must be >= 2");
  if (kernel.fgsd_range_max <= 0)
    throw std::invalid_argument("config: fgsd_range_max must be positive");
  if (kernel_kinds.empty())
    throw std::invalid_argument("config: at least one kernel kind required");
  if (features.dim < 1) throw std::invalid_argument("config: feature dim must be >= 1");
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config_text(text, path);
}

RunConfig parse_run_config_text(const std::string& json_text, const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config '" + origin + "': " + e.what());
  }
  check_keys(j, "top level",
             {"encoder", "train", "weights", "finetune_losses", "kernel", "features",
              "input_filter", "kernel_kinds", "datasets", "output_dir", "seed", "threads",
              "folds", "pretrain_epochs"});
  RunConfig cfg;
  if (j.contains("encoder")) read_encoder(j["encoder"], cfg.encoder);
  if (j.contains("train")) read_train(j["train"], cfg.train);
  if (j.contains("weights")) read_weights(j["weights"], cfg.weights);
  if (j.contains("finetune_losses")) read_toggles(j["finetune_losses"], cfg.toggles);
  if (j.contains("kernel")) read_kernel(j["kernel"], cfg.kernel);
  if (j.contains("features")) read_features(j["features"], cfg.features);
  if (j.contains("input_filter"))
    cfg.input_filter = input_filter_from_name(j["input_filter"].get<std::string>());
  if (j.contains("kernel_kinds")) {
    cfg.kernel_kinds.clear();
    for (const auto& name : j["kernel_kinds"])
      cfg.kernel_kinds.push_back(kernel_kind_from_name(name.get<std::string>()));
  }
  if (j.contains("datasets")) cfg.datasets = j["datasets"].get<std::vector<std::string>>();
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.folds = j.value("folds", cfg.folds);
  cfg.pretrain_epochs = j.value("pretrain_epochs", cfg.pretrain_epochs);
  cfg.validate();
  return cfg;
}

std::string run_config_json(const RunConfig& cfg) {
  json j;
  j["encoder"] = {{"hidden", cfg.encoder.hidden},
                  {"layers", cfg.encoder.layers},
                  {"moments", cfg.encoder.moments},
                  {"mlp_depth", cfg.encoder.mlp_depth},
                  {"dropout", cfg.encoder.dropout_rate}};
  j["train"] = {{"max_epoch", cfg.train.max_epoch},
                {"warmup_epochs", cfg.train.warmup_epochs},
                {"lr_init", cfg.train.lr_init},
                {"lr_max", cfg.train.lr_max},
                {"lr_final", cfg.train.lr_final},
                {"batch_size", cfg.train.batch_size},
                {"weight_decay", cfg.train.weight_decay},
                {"patience", cfg.train.patience},
                {"smooth_window", cfg.train.smooth_window}};
  j["weights"] = {{"lambda_A", cfg.weights.lambda_A},
                  {"lambda_K", cfg.weights.lambda_K},
                  {"lambda_k", cfg.weights.lambda_k},
                  {"lambda_class", cfg.weights.lambda_class}};
  j["finetune_losses"] = {{"classification", cfg.toggles.classification},
                          {"adaptive", cfg.toggles.adaptive},
                          {"adjacency", cfg.toggles.adjacency},
                          {"unsup_kernels", cfg.toggles.unsup_kernels}};
  j["kernel"] = {{"wl_iterations", cfg.kernel.wl_iterations},
                 {"fgsd_bins", cfg.kernel.fgsd_bins},
                 {"fgsd_range_max", cfg.kernel.fgsd_range_max}};
  j["features"] = {{"kind", feature_kind_name(cfg.features.kind)},
                   {"dim", cfg.features.dim},
                   {"sigma", cfg.features.sigma}};
  j["input_filter"] = input_filter_name(cfg.input_filter);
  std::vector<std::string> kinds;
  for (KernelKind k : cfg.kernel_kinds) kinds.push_back(kernel_kind_name(k));
  j["kernel_kinds"] = kinds;
  j["datasets"] = cfg.datasets;
  j["output_dir"] = cfg.output_dir;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["folds"] = cfg.folds;
  j["pretrain_epochs"] = cfg.pretrain_epochs;
  return j.dump(2) + "\n";
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config echo '" + path + "'");
  out << run_config_json(cfg);
  if (!out) throw std::runtime_error("failed writing config echo '" + path + "'");
}

namespace {

std::map<std::string, std::string> parse_kv(const std::string& s, const std::string& spec) {
  std::map<std::string, std::string> kv;
  size_t at = 0;
  while (at < s.size()) {
    size_t comma = s.find(',', at);
    if (comma == std::string::npos) comma = s.size();
    const std::string item = s.substr(at, comma - at);
    const size_t eq = item.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("dataset spec '" + spec + "': expected key=value, got '" +
                                  item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
    at = comma + 1;
  }
  return kv;
}

}  // namespace

Dataset load_dataset_spec(const std::string& spec, uint64_t seed) {
  if (spec.rfind("synth:", 0) != 0) return load_tu(spec);
  const size_t second = spec.find(':', 6);
  const std::string kind = spec.substr(6, second == std::string::npos ? std::string::npos
                                                                      : second - 6);
  if (kind != "cycles-vs-cliques")
    throw std::invalid_argument("unknown synthetic dataset '" + kind + "'");
  int count = 200, min_size = 4, max_size = 12;
  if (second != std::string::npos) {
    for (const auto& [k, v] : parse_kv(spec.substr(second + 1), spec)) {
      if (k == "count")
        count = std::stoi(v);
      else if (k == "min")
        min_size = std::stoi(v);
      else if (k == "max")
        max_size = std::stoi(v);
      else if (k == "seed")
        seed = std::stoull(v);
      else
        throw std::invalid_argument("dataset spec '" + spec + "': unknown key '" + k + "'");
    }
  }
  return synth_cycles_vs_cliques(count, min_size, max_size, seed);
}

uint64_t dataset_fingerprint(const Dataset& ds) {
  uint64_t h = CounterRng::fnv1a(ds.name);
  auto mix = [&h](uint64_t v) {
    h ^= v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
  };
  mix(uint64_t(ds.size()));
  for (int i = 0; i < ds.size(); ++i) {
    const Graph& g = ds.graphs[i];
    mix(uint64_t(g.n));
    for (auto [a, b] : g.edges) mix((uint64_t(a) << 32) | uint64_t(uint32_t(b)));
    if (g.node_labels)
      for (int lab : *g.node_labels) mix(uint64_t(uint32_t(lab)) | (1ull << 40));
    mix(uint64_t(uint32_t(ds.labels[i])) | (1ull << 41));
  }
  return h;
}

uint64_t kernel_config_fingerprint(const KernelConfig& cfg, KernelKind kind) {
  uint64_t h = 0xC0FFEEull ^ uint64_t(kind);
  auto mix = [&h](uint64_t v) {
    h ^= v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
  };
  switch (kind) {
    case KernelKind::WL: mix(uint64_t(cfg.wl_iterations)); break;
    case KernelKind::SP: break;  // no tunables
    case KernelKind::FGSD: {
      mix(uint64_t(cfg.fgsd_bins));
      uint64_t bits;
      static_assert(sizeof(bits) == sizeof(cfg.fgsd_range_max));
      std::memcpy(&bits, &cfg.fgsd_range_max, sizeof(bits));
      mix(bits);
      break;
    }
  }
  return h;
}

}  // namespace uge
