#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "h2t/tensor.hpp"

namespace h2t {

/// Per-class training sample counts, non-increasing, every class >= 1.
struct ClassCounts {
    std::vector<int64_t> counts;

    int64_t num_classes() const { return static_cast<int64_t>(counts.size()); }
    int64_t total() const;
    double imbalance_ratio() const { return static_cast<double>(counts.front()) / counts.back(); }
    void validate() const;
};

/// n_i = floor(n_max * rho^(-i / (C-1))): exponential profile between n_max
/// and floor(n_max / rho).
ClassCounts longtail_counts(int64_t n_max, double rho, int64_t num_classes);

enum class Split { Head, Medium, Tail };

/// Per-class Head/Medium/Tail tags. Head iff n_i > head_threshold,
/// Tail iff n_i <= tail_threshold, Medium otherwise.
struct SplitPartition {
    double head_threshold = 100.0;
    double tail_threshold = 20.0;
    std::vector<Split> assignment;

    std::vector<int64_t> classes_in(Split s) const;
    bool has(Split s) const;
};

SplitPartition partition_splits(const ClassCounts& counts, double head_threshold,
                                double tail_threshold);

const char* split_name(Split s);

struct DatasetMeta {
    uint64_t seed = 0;
    double separation = 3.0;
    int64_t in_dims = 2;
    int64_t test_per_class = 50;
    Tensor class_means; // (C, in_dims)
};

/// Long-tailed train split plus a balanced test split drawn from the same
/// class Gaussians.
struct DatasetBundle {
    Tensor train_x; // (N, in_dims)
    std::vector<int> train_y;
    Tensor test_x; // (C * test_per_class, in_dims)
    std::vector<int> test_y;
    ClassCounts counts;
    DatasetMeta meta;

    int64_t num_classes() const { return counts.num_classes(); }
    void validate() const;

    /// Sample positions grouped by class, in dataset order.
    std::vector<std::vector<int64_t>> class_index() const;
};

/// Class means drawn uniformly on the sphere of radius `separation`;
/// unit-variance isotropic noise around them. Fully determined by `seed`.
DatasetBundle synth_gaussian_longtail(const ClassCounts& counts, int64_t in_dims,
                                      double separation, uint64_t seed,
                                      int64_t test_per_class = 50);

/// H2TTENS1 container at `path` plus a JSON sidecar at `path + ".json"`.
void save_dataset(const std::string& path, const DatasetBundle& ds);
DatasetBundle load_dataset(const std::string& path);

} // namespace h2t
