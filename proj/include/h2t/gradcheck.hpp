#pragma once

#include <functional>

#include "h2t/model.hpp"

namespace h2t {

/// Builds a scalar loss over freshly bound parameters. Called once with
/// gradients enabled for the analytic pass and many times without for the
/// finite-difference probes.
using LossBuilder = std::function<Graph::Loss(Graph&, const ModelBinding&)>;

struct FdReport {
    double max_rel_error = 0.0;
    int checked = 0;      // entries compared
    int skipped_kinks = 0; // entries rejected because the +/- evaluations
                           // crossed a relu/maxpool branch boundary
};

/// Compares analytic gradients against central differences on up to
/// `entries_per_param` randomly chosen entries of every parameter.
/// Relative error per entry: |analytic - fd| / max(1, |fd|).
FdReport finite_diff_check(ModelState& model, const LossBuilder& build, double epsilon,
                           int entries_per_param, uint64_t seed);

/// Spec-shaped convenience: standard backbone+classifier+cross-entropy path.
double finite_diff_check(ModelState& model, const Tensor& x, const std::vector<int>& labels,
                         double epsilon = 1e-3);

} // namespace h2t
