#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "h2t/graph.hpp"
#include "h2t/rng.hpp"
#include "h2t/tensor.hpp"

namespace h2t {

/// How the replaced channel set is chosen. Random draws a fresh permutation
/// on every call, so each batch gets its own mask.
enum class SelectionStrategy { Random, First, Middle, Last };

const char* strategy_name(SelectionStrategy s);
SelectionStrategy strategy_from_name(const std::string& name);

/// Channel substitution mask. `replaced` holds the floor(d * p) channel
/// indices whose content is taken from the fusing (donor) branch; the rest
/// stay with the fused (receiver) branch.
struct FusionMask {
    int64_t d = 0;
    double p = 0.0;
    SelectionStrategy strategy = SelectionStrategy::Random;
    std::vector<int64_t> replaced; // sorted, unique

    int64_t replaced_count() const { return static_cast<int64_t>(replaced.size()); }
    std::vector<uint8_t> as_flags() const; // d bytes, 1 = take from donor
};

FusionMask select_channels(int64_t d, double p, SelectionStrategy strategy, Rng& rng);

/// Pure (off-tape) fusion: output channel c equals fusing_branch channel c
/// when c is in the mask, fused_branch channel c otherwise. Inputs are
/// untouched; both must be (batch, d, h, w).
Tensor fuse_feature_maps(const Tensor& fused_branch, const Tensor& fusing_branch,
                         const FusionMask& mask);

/// On-tape fusion with gradient flow into both branches.
int fuse_feature_maps(Graph& g, int fused_branch, int fusing_branch, const FusionMask& mask);

} // namespace h2t
