#include "h2t/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "h2t/errors.hpp"

namespace h2t {

const char* strategy_name(SelectionStrategy s) {
    switch (s) {
        case SelectionStrategy::Random: return "random";
        case SelectionStrategy::First: return "first";
        case SelectionStrategy::Middle: return "middle";
        case SelectionStrategy::Last: return "last";
    }
    return "?";
}

SelectionStrategy strategy_from_name(const std::string& name) {
    if (name == "random") return SelectionStrategy::Random;
    if (name == "first") return SelectionStrategy::First;
    if (name == "middle") return SelectionStrategy::Middle;
    if (name == "last") return SelectionStrategy::Last;
    throw ValidationError("unknown selection strategy '" + name + "'");
}

std::vector<uint8_t> FusionMask::as_flags() const {
    std::vector<uint8_t> flags(static_cast<size_t>(d), 0);
    for (int64_t c : replaced) flags[static_cast<size_t>(c)] = 1;
    return flags;
}

FusionMask select_channels(int64_t d, double p, SelectionStrategy strategy, Rng& rng) {
    if (d < 1) throw ValidationError("select_channels: d must be >= 1");
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ValidationError("select_channels: fusion ratio " + std::to_string(p) +
                              " outside [0, 1]");
    }
    const int64_t k = static_cast<int64_t>(std::floor(static_cast<double>(d) * p));

    FusionMask mask;
    mask.d = d;
    mask.p = p;
    mask.strategy = strategy;
    mask.replaced.reserve(static_cast<size_t>(k));
    switch (strategy) {
        case SelectionStrategy::First:
            for (int64_t c = 0; c < k; ++c) mask.replaced.push_back(c);
            break;
        case SelectionStrategy::Middle: {
            const int64_t start = (d - k) / 2;
            for (int64_t c = start; c < start + k; ++c) mask.replaced.push_back(c);
            break;
        }
        case SelectionStrategy::Last:
            for (int64_t c = d - k; c < d; ++c) mask.replaced.push_back(c);
            break;
        case SelectionStrategy::Random: {
            // fresh permutation per call, first k entries
            std::vector<int64_t> perm = rng.permutation(d);
            mask.replaced.assign(perm.begin(), perm.begin() + static_cast<size_t>(k));
            std::sort(mask.replaced.begin(), mask.replaced.end());
            break;
        }
    }
    return mask;
}

namespace {

void check_fusion_shapes(const Tensor& a, const Tensor& b, const FusionMask& mask) {
    if (a.rank() != 4 || !a.same_shape(b)) {
        throw ShapeError("fuse_feature_maps: branch shapes " + a.shape_str() + " vs " +
                         b.shape_str() + " must be identical rank-4");
    }
    if (a.shape[1] != mask.d) {
        throw ShapeError("fuse_feature_maps: mask covers " + std::to_string(mask.d) +
                         " channels, feature maps have " + std::to_string(a.shape[1]));
    }
}

} // namespace

Tensor fuse_feature_maps(const Tensor& fused_branch, const Tensor& fusing_branch,
                         const FusionMask& mask) {
    check_fusion_shapes(fused_branch, fusing_branch, mask);
    const int64_t B = fused_branch.shape[0], C = fused_branch.shape[1];
    const int64_t plane = fused_branch.shape[2] * fused_branch.shape[3];
    Tensor out = fused_branch;
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t c : mask.replaced) {
            const int64_t off = (b * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) out.at(off + i) = fusing_branch.at(off + i);
        }
    }
    return out;
}

int fuse_feature_maps(Graph& g, int fused_branch, int fusing_branch, const FusionMask& mask) {
    check_fusion_shapes(g.value(fused_branch), g.value(fusing_branch), mask);
    return g.fuse_channels(fused_branch, fusing_branch, mask.as_flags());
}

} // namespace h2t
