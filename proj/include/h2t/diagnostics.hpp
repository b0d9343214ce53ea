#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "h2t/data.hpp"
#include "h2t/fusion.hpp"
#include "h2t/model.hpp"

namespace h2t {

/// Pooled features f for every row of x, computed in evaluation batches.
Tensor compute_pooled_features(const ModelState& model, const Tensor& x);

/// Argmax-of-logits labels; ties break toward the lower class index.
std::vector<int> predict(const ModelState& model, const Tensor& x);

struct MetricsReport {
    double overall = 0.0;
    std::optional<double> head;
    std::optional<double> medium;
    std::optional<double> tail;
    std::vector<double> per_class;
    std::vector<std::vector<int64_t>> confusion; // [true][predicted]

    std::optional<double> split_accuracy(Split s) const;
    /// overall == trace/total and split accuracies reconstruct from the
    /// per-class vector; throws InvariantViolation otherwise.
    void check_consistency(const SplitPartition& partition) const;
};

MetricsReport evaluate(const ModelState& model, const Tensor& x, const std::vector<int>& y,
                       const SplitPartition& partition);
MetricsReport evaluate(const ModelState& model, const DatasetBundle& data,
                       const SplitPartition& partition);

/// Predicted-label frequencies (length C, sums to 1) over the samples whose
/// true class is tagged Tail.
std::vector<double> prediction_histogram(const ModelState& model, const Tensor& x,
                                         const std::vector<int>& y,
                                         const SplitPartition& partition);

/// Share of histogram mass falling on classes with the given tag.
double histogram_mass(const std::vector<double>& histogram, const SplitPartition& partition,
                      Split tag);

/// Monte-Carlo check of the decision-boundary force derivation: random
/// (w_h, w_t, f_h, f_t) split into retained (first split_k dims) and fused
/// parts. Whenever the premises hold --- the trained model scores the tail
/// feature higher for the head class, and the fused tail feature wins for
/// the tail class --- the fused-part force inequality must follow; likewise
/// the retained-part inequality follows from the correct-head premise.
struct ImplicationStats {
    int64_t trials = 0;
    int64_t fused_premise_hits = 0;
    int64_t retained_premise_hits = 0;
    int64_t fused_violations = 0;
    int64_t retained_violations = 0;
    int64_t degenerate = 0; // zero difference vector; excluded
};

ImplicationStats rationale_implication_test(int64_t num_trials, int64_t d, int64_t split_k,
                                            uint64_t seed, double rel_tol = 1e-6);

/// The four force proxies measured on a trained model using class-mean
/// pooled features. Directions: fused-part mean difference for the fused
/// pair, retained-part mean difference for the retained pair. A proxy pair
/// is absent when its direction vector has zero norm.
struct ForceProxies {
    std::optional<double> fused_head;    // |w_h restricted to mask| * cos(angle to fused diff)
    std::optional<double> fused_tail;
    std::optional<double> retained_tail; // complement restriction, retained diff direction
    std::optional<double> retained_head;
    std::optional<double> fused_gap;     // fused_head - fused_tail
    std::optional<double> retained_gap;  // retained_tail - retained_head
};

ForceProxies rationale_measure(const ModelState& model, const DatasetBundle& data,
                               const FusionMask& mask, int64_t head_class, int64_t tail_class);

struct GridBounds {
    double xmin = -5.0, xmax = 5.0;
    double ymin = -5.0, ymax = 5.0;
};

/// resolution x resolution predicted labels over the box, row-major with y
/// as the row axis (ascending) and x as the column axis (ascending).
/// Models must take 2-D inputs.
std::vector<int> boundary_grid(const ModelState& model, const GridBounds& bounds,
                               int64_t resolution);

} // namespace h2t
