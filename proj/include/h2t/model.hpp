#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "h2t/graph.hpp"
#include "h2t/params.hpp"
#include "h2t/rng.hpp"
#include "h2t/tensor.hpp"

namespace h2t {

enum class BackboneKind { Mlp, TinyConv };

/// Architecture of the representation network. Both kinds end in a feature
/// map of `feature_dim` channels over (map_h x map_w) spatial positions;
/// the MLP's map is 1x1 so its pooled feature equals the map itself.
struct BackboneSpec {
    BackboneKind kind = BackboneKind::Mlp;

    // MLP: input width, hidden widths, feature_dim; every layer is linear+relu.
    int64_t in_dims = 16;
    std::vector<int64_t> hidden = {32};

    // TinyConv: input reshaped to (in_channels, in_h, in_w); two rounds of
    // 3x3 same-pad conv + relu + 2x2 max pool. in_h and in_w must be
    // multiples of 4 so both pools divide evenly.
    int64_t in_channels = 1;
    int64_t in_h = 4;
    int64_t in_w = 4;
    int64_t conv1_channels = 8;

    int64_t feature_dim = 16;

    void validate() const;
    int64_t input_width() const; // flat input width expected from datasets
    int64_t map_h() const;
    int64_t map_w() const;
};

/// Backbone + classifier parameters plus the spec they instantiate.
struct ModelState {
    BackboneSpec spec;
    int64_t num_classes = 0;
    ParameterSet backbone;
    ParameterSet classifier; // "W" (d x C) and "b" (C)

    uint64_t backbone_hash() const { return backbone.value_hash(); }
};

/// He-uniform initialization of all weights (biases zero). The classifier
/// bias exists but stays frozen at zero unless classifier_bias is set,
/// so logits default to pure w_i . f.
ModelState init_model(const BackboneSpec& spec, int64_t num_classes, uint64_t seed,
                      bool classifier_bias = false);

/// Leaf ids of every parameter bound onto a graph for one step.
struct ModelBinding {
    std::map<std::string, int> backbone_ids;
    std::map<std::string, int> classifier_ids;
};

/// Copies current parameter values onto the tape. Leaves need gradients when
/// the parameter is trainable, or unconditionally when force_grad is set
/// (used by the finite-difference checker).
ModelBinding bind_model(Graph& g, const ModelState& model, bool force_grad = false);

/// Adds leaf gradients back into the ParameterSet accumulators.
void harvest_grads(const Graph& g, const ModelBinding& binding, ModelState& model);

struct BackboneOut {
    int feature_map = -1; // (B, d, map_h, map_w)
    int pooled = -1;      // (B, d), global average of the map
};

/// Runs the backbone; checks input shape and output finiteness.
BackboneOut backbone_forward(Graph& g, const ModelBinding& binding, const ModelState& model,
                             const Tensor& x);

/// z[b,i] = w_i . f[b] + bias_i over a pooled-feature node.
int classifier_forward(Graph& g, const ModelBinding& binding, const ModelState& model, int pooled);

/// Convenience: full forward to mean cross-entropy loss.
Graph::Loss model_loss(Graph& g, const ModelBinding& binding, const ModelState& model,
                       const Tensor& x, const std::vector<int>& labels);

/// Checkpoint = every parameter value under "backbone/" and "classifier/"
/// prefixes in the H2TCKPT1 container. load_checkpoint fills an existing
/// model whose spec must match the stored extents.
void save_checkpoint(const std::string& path, const ModelState& model);
void load_checkpoint(const std::string& path, ModelState& model);

} // namespace h2t
