#include "uge/encoder.hpp"

#include <stdexcept>

namespace uge {

void EncoderConfig::validate() const {
  if (hidden < 1) throw std::invalid_argument("EncoderConfig: hidden must be >= 1");
  if (layers < 1) throw std::invalid_argument("EncoderConfig: layers must be >= 1");
  if (moments < 1) throw std::invalid_argument("EncoderConfig: moments must be >= 1");
  if (mlp_depth < 1) throw std::invalid_argument("EncoderConfig: mlp_depth must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::invalid_argument("EncoderConfig: dropout_rate must be in [0, 1)");
}

namespace {

std::string layer_prefix(int t) { return "enc.l" + std::to_string(t); }

MlpDims branch_dims(const EncoderConfig& cfg, int layer) {
  // Layer t sees the concatenation [T(X), F(1), ..., F(t-1)]: width t * h.
  return MlpDims{cfg.hidden * layer, cfg.hidden, cfg.hidden, cfg.mlp_depth};
}

MlpDims outer_dims(const EncoderConfig& cfg) {
  return MlpDims{cfg.hidden, cfg.hidden, cfg.hidden, cfg.mlp_depth};
}

}  // namespace

void ensure_encoder_params(ModelParams& params, const EncoderConfig& cfg, uint64_t seed) {
  cfg.validate();
  for (int t = 1; t <= cfg.layers; ++t) {
    for (int p = 1; p <= cfg.moments; ++p)
      ensure_mlp(params, layer_prefix(t) + ".p" + std::to_string(p), branch_dims(cfg, t),
                 seed, /*use_bn=*/false);
    ensure_mlp(params, layer_prefix(t) + ".out", outer_dims(cfg), seed, /*use_bn=*/false);
    params.bn_state(layer_prefix(t) + ".bn", cfg.hidden);
  }
}

void ensure_transformer_params(ModelParams& params, const std::string& ds_name, int in_dim,
                               const EncoderConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (in_dim < 1) throw std::invalid_argument("input transformer: in_dim must be >= 1");
  ensure_mlp(params, "ds." + ds_name + ".input",
             MlpDims{in_dim, cfg.hidden, cfg.hidden, cfg.mlp_depth}, seed,
             /*use_bn=*/false);
  params.bn_state("ds." + ds_name + ".input.bn", cfg.hidden);
}

namespace {

// Stabilization between layers: normalize the layer output over the real
// rows, then dropout. Keeps every component entering the dense concatenation
// on a comparable scale.
Tensor stabilize(ParamContext& ctx, const std::string& bn_name, const Tensor& x,
                 const Batch& b, const EncoderConfig& cfg) {
  Tensor y = batch_norm(x, ctx.params.bn_state(bn_name, cfg.hidden), ctx.train, &b.mask);
  return dropout(y, cfg.dropout_rate, ctx.train);
}

}  // namespace

Tensor input_transform_batch(ParamContext& ctx, const std::string& ds_name, const Batch& b,
                             const EncoderConfig& cfg) {
  const Tensor filtered = graph_conv(b.features, b.fl_blocks, b.offsets);
  const Tensor out = mlp_forward(ctx, "ds." + ds_name + ".input",
                                 MlpDims{b.features.cols(), cfg.hidden, cfg.hidden,
                                         cfg.mlp_depth},
                                 filtered, /*dropout_rate=*/0.0, /*use_bn=*/false, &b.mask);
  return stabilize(ctx, "ds." + ds_name + ".input.bn", out, b, cfg);
}

Tensor capsule_layer_batch(ParamContext& ctx, int layer, const Tensor& input, const Batch& b,
                           const EncoderConfig& cfg) {
  const std::string prefix = layer_prefix(layer);
  const MlpDims inner{input.cols(), cfg.hidden, cfg.hidden, cfg.mlp_depth};
  Tensor sum;
  for (int p = 1; p <= cfg.moments; ++p) {
    const Tensor propagated =
        graph_conv(elementwise_pow(input, p), b.conv_blocks, b.offsets);
    const Tensor branch = mlp_forward(ctx, prefix + ".p" + std::to_string(p), inner,
                                      propagated, /*dropout_rate=*/0.0, /*use_bn=*/false,
                                      &b.mask);
    sum = p == 1 ? branch : add(sum, branch);
  }
  const Tensor out = mlp_forward(ctx, prefix + ".out", outer_dims(cfg), sum,
                                 /*dropout_rate=*/0.0, /*use_bn=*/false, &b.mask);
  return stabilize(ctx, prefix + ".bn", out, b, cfg);
}

EncodeOut encode_batch(ParamContext& ctx, const std::string& ds_name, const Batch& b,
                       const EncoderConfig& cfg) {
  cfg.validate();
  Tensor acc = input_transform_batch(ctx, ds_name, b, cfg);
  Tensor y = acc;
  for (int t = 1; t <= cfg.layers; ++t) {
    y = capsule_layer_batch(ctx, t, acc, b, cfg);
    if (t < cfg.layers) acc = concat({acc, y}, 1);
  }
  EncodeOut out;
  out.y = y;
  out.z = segment_pool(y, b.offsets, b.sizes);
  return out;
}

EncodeOut encode_graph(ParamContext& ctx, const std::string& ds_name,
                       const PreparedGraph& pg, const EncoderConfig& cfg) {
  Batch b;
  b.indices = {0};
  b.n_max = pg.n();
  b.offsets = {0};
  b.sizes = {pg.n()};
  b.features = Tensor(pg.features);
  b.mask.assign(size_t(pg.n()), 1.0);
  b.fl_blocks = {pg.fl};
  b.conv_blocks = {pg.conv};
  b.adj = {pg.adj};
  b.labels = {-1};
  return encode_batch(ctx, ds_name, b, cfg);
}

}  // namespace uge
