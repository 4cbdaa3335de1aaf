#pragma once

#include <string>

#include "uge/batch.hpp"
#include "uge/nn.hpp"

namespace uge {

struct EncoderConfig {
  int hidden = 32;
  int layers = 5;
  int moments = 2;  // elementwise-power branches per layer
  int mlp_depth = 2;
  double dropout_rate = 0.5;

  void validate() const;
};

// Node outputs of the final layer plus the pooled graph embeddings.
// y is (B * n_max) x hidden (padded rows carry no information and are never
// pooled); z is B x hidden with z row b = sum of graph b's real rows of y.
struct EncodeOut {
  Tensor y;
  Tensor z;
};

// Creates the shared capsule-layer parameters:
//   enc.l<t>.p<p>.fc<j>.{w,b}   inner MLP of moment branch p at layer t
//   enc.l<t>.out.fc<j>.{w,b}    outer MLP of layer t
//   enc.l<t>.bn                 between-layer batch-norm state
// Layer t consumes the running concatenation, so its branch MLPs map
// t*hidden -> hidden. Idempotent; weights are Glorot-uniform seeded per
// parameter name.
void ensure_encoder_params(ModelParams& params, const EncoderConfig& cfg, uint64_t seed);

// Creates the per-dataset input transformer ds.<name>.input.fc<j>.{w,b}
// (mapping in_dim -> hidden) plus its between-layer batch-norm state.
void ensure_transformer_params(ModelParams& params, const std::string& ds_name, int in_dim,
                               const EncoderConfig& cfg, uint64_t seed);

// MLP(f(L) X) for the whole stacked batch, width hidden, followed by the
// between-layer batch-norm + dropout stabilization.
Tensor input_transform_batch(ParamContext& ctx, const std::string& ds_name, const Batch& b,
                             const EncoderConfig& cfg);

// One moment layer on the stacked batch:
//   MLP_out( sum_p MLP_p( g(L) . input^{o p} ) )
// with g(L) applied block-diagonally per graph, then batch-norm over the
// real rows and dropout (the between-layer stabilization the config's
// dropout_rate controls).
Tensor capsule_layer_batch(ParamContext& ctx, int layer, const Tensor& input, const Batch& b,
                           const EncoderConfig& cfg);

// Full encoder: input transform, `layers` capsule layers fed by the dense
// concatenation of everything before them, sum pooling over real rows.
EncodeOut encode_batch(ParamContext& ctx, const std::string& ds_name, const Batch& b,
                       const EncoderConfig& cfg);

// Single-graph convenience wrapper (batch of one, eval or train per ctx).
EncodeOut encode_graph(ParamContext& ctx, const std::string& ds_name,
                       const PreparedGraph& pg, const EncoderConfig& cfg);

}  // namespace uge
