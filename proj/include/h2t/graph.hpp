#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "h2t/tensor.hpp"

namespace h2t {

/// Reverse-mode tape. Operations append nodes in topological order; backward()
/// walks the tape in reverse and accumulates gradients into every node that
/// needs them. One Graph is built per training step and discarded afterwards.
class Graph {
public:
    struct Node {
        Tensor value;
        Tensor grad; // allocated lazily by backward()
        std::vector<int> parents;
        std::function<void(Graph&, int)> backprop; // scatter this node's grad into parents
        bool needs_grad = false;
    };

    struct Loss {
        int id = -1;
        double value = 0.0; // batch mean accumulated in double for finite-difference use
    };

    // When set, relu and maxpool record their branch decisions into pattern().
    // Two evaluations with different patterns straddle a non-differentiable
    // point; the gradient checker uses this to reject kink configurations.
    bool record_pattern = false;

    int leaf(Tensor value, bool needs_grad);

    const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    const Tensor& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }
    bool has_grad(int id) const { return nodes_[static_cast<size_t>(id)].grad.numel() > 0; }
    size_t size() const { return nodes_.size(); }
    const std::vector<uint8_t>& pattern() const { return pattern_; }

    // y[b,o] = sum_i x[b,i] * W[i,o] (+ b[o]); pass bias = -1 for none.
    int linear(int x, int W, int b);
    // Same buffer, new extents; gradient passes through untouched.
    int reshape(int x, const std::vector<int64_t>& shape);
    int relu(int x);
    // stride 1; pad 0 = valid, pad (k-1)/2 = same for odd k. bias = -1 for none.
    int conv2d(int x, int kernel, int bias, int pad);
    // 2x2 window, stride 2; extents must be even. Ties go to the first element
    // in scan order so backward is deterministic.
    int maxpool2(int x);
    // (B, C, H, W) -> (B, C), mean over the spatial extents.
    int global_avg_pool(int x);
    // Channel substitution: output channel c comes from `donor` when
    // replaced[c] is set, from `base` otherwise. Gradients route the same way.
    int fuse_channels(int base, int donor, const std::vector<uint8_t>& replaced);

    // Mean cross entropy with log-sum-exp stabilization. labels[b] in [0, C).
    Loss softmax_xent(int z, const std::vector<int>& labels);

    void backward(int loss_id);

private:
    int add_node(Tensor value, std::vector<int> parents, std::function<void(Graph&, int)> backprop);
    Tensor& grad_mut(int id) { return nodes_[static_cast<size_t>(id)].grad; }

    std::vector<Node> nodes_;
    std::vector<uint8_t> pattern_;
};

} // namespace h2t
