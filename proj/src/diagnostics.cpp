#include "h2t/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "h2t/errors.hpp"
#include "h2t/rng.hpp"

namespace h2t {

namespace {

constexpr int64_t kEvalBatch = 256;

} // namespace

Tensor compute_pooled_features(const ModelState& model, const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("expected rank-2 inputs, got " + x.shape_str());
    const int64_t N = x.shape[0];
    Tensor out = Tensor::zeros({N, model.spec.feature_dim});
    for (int64_t start = 0; start < N; start += kEvalBatch) {
        const int64_t stop = std::min(N, start + kEvalBatch);
        std::vector<int64_t> rows;
        rows.reserve(static_cast<size_t>(stop - start));
        for (int64_t r = start; r < stop; ++r) rows.push_back(r);
        Graph g;
        ModelBinding binding = bind_model(g, model);
        BackboneOut bo = backbone_forward(g, binding, model, gather_rows(x, rows));
        const Tensor& f = g.value(bo.pooled);
        for (int64_t r = start; r < stop; ++r) {
            for (int64_t d = 0; d < model.spec.feature_dim; ++d) {
                out.at(r, d) = f.at(r - start, d);
            }
        }
    }
    return out;
}

std::vector<int> predict(const ModelState& model, const Tensor& x) {
    const int64_t N = x.shape[0];
    std::vector<int> labels(static_cast<size_t>(N));
    for (int64_t start = 0; start < N; start += kEvalBatch) {
        const int64_t stop = std::min(N, start + kEvalBatch);
        std::vector<int64_t> rows;
        rows.reserve(static_cast<size_t>(stop - start));
        for (int64_t r = start; r < stop; ++r) rows.push_back(r);
        Graph g;
        ModelBinding binding = bind_model(g, model);
        BackboneOut bo = backbone_forward(g, binding, model, gather_rows(x, rows));
        int z = classifier_forward(g, binding, model, bo.pooled);
        const Tensor& logits = g.value(z);
        for (int64_t r = start; r < stop; ++r) {
            int best = 0;
            float best_z = logits.at(r - start, 0);
            for (int64_t c = 1; c < model.num_classes; ++c) {
                const float v = logits.at(r - start, c);
                if (v > best_z) { // strict: ties keep the lower index
                    best_z = v;
                    best = static_cast<int>(c);
                }
            }
            labels[static_cast<size_t>(r)] = best;
        }
    }
    return labels;
}

std::optional<double> MetricsReport::split_accuracy(Split s) const {
    switch (s) {
        case Split::Head: return head;
        case Split::Medium: return medium;
        case Split::Tail: return tail;
    }
    return std::nullopt;
}

void MetricsReport::check_consistency(const SplitPartition& partition) const {
    const int64_t C = static_cast<int64_t>(confusion.size());
    int64_t total = 0, correct = 0;
    for (int64_t i = 0; i < C; ++i) {
        for (int64_t j = 0; j < C; ++j) total += confusion[static_cast<size_t>(i)][static_cast<size_t>(j)];
        correct += confusion[static_cast<size_t>(i)][static_cast<size_t>(i)];
    }
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9; };
    if (total > 0 && !close(overall, static_cast<double>(correct) / static_cast<double>(total))) {
        throw InvariantViolation("metrics: overall accuracy != confusion trace ratio");
    }
    for (Split s : {Split::Head, Split::Medium, Split::Tail}) {
        int64_t split_total = 0;
        double weighted = 0.0;
        for (int64_t c : partition.classes_in(s)) {
            int64_t row = 0;
            for (int64_t j = 0; j < C; ++j) row += confusion[static_cast<size_t>(c)][static_cast<size_t>(j)];
            split_total += row;
            weighted += static_cast<double>(row) * per_class[static_cast<size_t>(c)];
        }
        const auto reported = split_accuracy(s);
        if (split_total == 0) {
            if (reported.has_value()) {
                throw InvariantViolation("metrics: empty split reported a value");
            }
            continue;
        }
        if (!reported.has_value() ||
            !close(*reported, weighted / static_cast<double>(split_total))) {
            throw InvariantViolation("metrics: split accuracy does not reconstruct from "
                                     "per-class accuracies");
        }
    }
}

MetricsReport evaluate(const ModelState& model, const Tensor& x, const std::vector<int>& y,
                       const SplitPartition& partition) {
    const int64_t C = model.num_classes;
    if (static_cast<int64_t>(partition.assignment.size()) != C) {
        throw ValidationError("evaluate: partition covers " +
                              std::to_string(partition.assignment.size()) + " classes, model has " +
                              std::to_string(C));
    }
    for (int label : y) {
        if (label < 0 || label >= C) {
            throw ValidationError("evaluate: test label " + std::to_string(label) +
                                  " out of range");
        }
    }

    const std::vector<int> pred = predict(model, x);
    MetricsReport report;
    report.confusion.assign(static_cast<size_t>(C), std::vector<int64_t>(static_cast<size_t>(C), 0));
    for (size_t i = 0; i < y.size(); ++i) {
        ++report.confusion[static_cast<size_t>(y[i])][static_cast<size_t>(pred[i])];
    }

    int64_t total = 0, correct = 0;
    report.per_class.assign(static_cast<size_t>(C), 0.0);
    std::vector<int64_t> tested(static_cast<size_t>(C), 0);
    for (int64_t c = 0; c < C; ++c) {
        int64_t row = 0;
        for (int64_t j = 0; j < C; ++j) row += report.confusion[static_cast<size_t>(c)][static_cast<size_t>(j)];
        tested[static_cast<size_t>(c)] = row;
        total += row;
        correct += report.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)];
        if (row > 0) {
            report.per_class[static_cast<size_t>(c)] =
                static_cast<double>(report.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)]) /
                static_cast<double>(row);
        }
    }
    report.overall = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;

    for (Split s : {Split::Head, Split::Medium, Split::Tail}) {
        int64_t split_total = 0, split_correct = 0;
        for (int64_t c : partition.classes_in(s)) {
            split_total += tested[static_cast<size_t>(c)];
            split_correct += report.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)];
        }
        std::optional<double> acc;
        if (split_total > 0) {
            acc = static_cast<double>(split_correct) / static_cast<double>(split_total);
        }
        switch (s) {
            case Split::Head: report.head = acc; break;
            case Split::Medium: report.medium = acc; break;
            case Split::Tail: report.tail = acc; break;
        }
    }
    report.check_consistency(partition);
    return report;
}

MetricsReport evaluate(const ModelState& model, const DatasetBundle& data,
                       const SplitPartition& partition) {
    return evaluate(model, data.test_x, data.test_y, partition);
}

std::vector<double> prediction_histogram(const ModelState& model, const Tensor& x,
                                         const std::vector<int>& y,
                                         const SplitPartition& partition) {
    if (!partition.has(Split::Tail)) {
        throw ValidationError("prediction_histogram: partition has no tail classes");
    }
    std::vector<int64_t> tail_rows;
    for (size_t i = 0; i < y.size(); ++i) {
        if (partition.assignment[static_cast<size_t>(y[i])] == Split::Tail) {
            tail_rows.push_back(static_cast<int64_t>(i));
        }
    }
    if (tail_rows.empty()) {
        throw ValidationError("prediction_histogram: no samples from tail classes");
    }
    const Tensor tail_x = gather_rows(x, tail_rows);
    const std::vector<int> pred = predict(model, tail_x);
    std::vector<double> hist(static_cast<size_t>(model.num_classes), 0.0);
    const double w = 1.0 / static_cast<double>(pred.size());
    for (int p : pred) hist[static_cast<size_t>(p)] += w;
    return hist;
}

double histogram_mass(const std::vector<double>& histogram, const SplitPartition& partition,
                      Split tag) {
    if (histogram.size() != partition.assignment.size()) {
        throw ValidationError("histogram_mass: histogram length does not match partition");
    }
    double mass = 0.0;
    for (size_t c = 0; c < histogram.size(); ++c) {
        if (partition.assignment[c] == tag) mass += histogram[c];
    }
    return mass;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b, int64_t lo, int64_t hi) {
    double acc = 0.0;
    for (int64_t i = lo; i < hi; ++i) {
        acc += a[static_cast<size_t>(i)] * b[static_cast<size_t>(i)];
    }
    return acc;
}

} // namespace

ImplicationStats rationale_implication_test(int64_t num_trials, int64_t d, int64_t split_k,
                                            uint64_t seed, double rel_tol) {
    if (split_k < 1 || split_k >= d) {
        throw ValidationError("rationale_implication_test: need 1 <= split_k < d");
    }
    Rng rng(mix_seed(seed, 0x1CA1));
    ImplicationStats stats;
    stats.trials = num_trials;

    std::vector<double> w_h(static_cast<size_t>(d)), w_t(static_cast<size_t>(d));
    std::vector<double> f_h(static_cast<size_t>(d)), f_t(static_cast<size_t>(d));
    for (int64_t trial = 0; trial < num_trials; ++trial) {
        for (int64_t i = 0; i < d; ++i) {
            w_h[static_cast<size_t>(i)] = rng.normal();
            w_t[static_cast<size_t>(i)] = rng.normal();
            f_h[static_cast<size_t>(i)] = rng.normal();
            f_t[static_cast<size_t>(i)] = rng.normal();
        }
        // retained part = [0, split_k), fused part = [split_k, d)
        const double wt_ft_r = dot(w_t, f_t, 0, split_k);
        const double wh_ft_r = dot(w_h, f_t, 0, split_k);
        const double wt_ft_f = dot(w_t, f_t, split_k, d);
        const double wh_ft_f = dot(w_h, f_t, split_k, d);
        const double wt_fh_f = dot(w_t, f_h, split_k, d);
        const double wh_fh_f = dot(w_h, f_h, split_k, d);
        const double wt_fh_r = dot(w_t, f_h, 0, split_k);
        const double wh_fh_r = dot(w_h, f_h, 0, split_k);

        const bool actual_head_wins = wt_ft_r + wt_ft_f < wh_ft_r + wh_ft_f;
        const bool fused_tail_wins = wt_ft_r + wt_fh_f > wh_ft_r + wh_fh_f;
        const bool correct_head = wh_fh_r + wh_fh_f > wt_fh_r + wt_fh_f;

        double norm_fused = 0.0, norm_retained = 0.0;
        for (int64_t i = split_k; i < d; ++i) {
            const double diff = f_t[static_cast<size_t>(i)] - f_h[static_cast<size_t>(i)];
            norm_fused += diff * diff;
        }
        for (int64_t i = 0; i < split_k; ++i) {
            const double diff = f_t[static_cast<size_t>(i)] - f_h[static_cast<size_t>(i)];
            norm_retained += diff * diff;
        }

        auto violates = [rel_tol](double lhs, double rhs) {
            const double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
            return lhs - rhs < -rel_tol * scale;
        };

        if (actual_head_wins && fused_tail_wins) {
            if (norm_fused == 0.0) {
                ++stats.degenerate;
            } else {
                ++stats.fused_premise_hits;
                // force inequality on the fused part, plus its normalized
                // (cosine) form
                const double lhs = wh_ft_f - wh_fh_f; // w_h . (f_t - f_h) fused part
                const double rhs = wt_ft_f - wt_fh_f;
                const double inv_norm = 1.0 / std::sqrt(norm_fused);
                if (violates(lhs, rhs) || violates(lhs * inv_norm, rhs * inv_norm)) {
                    ++stats.fused_violations;
                }
            }
        }
        if (correct_head && fused_tail_wins) {
            if (norm_retained == 0.0) {
                ++stats.degenerate;
            } else {
                ++stats.retained_premise_hits;
                const double lhs = wt_ft_r - wt_fh_r; // w_t . (f_t - f_h) retained part
                const double rhs = wh_ft_r - wh_fh_r;
                const double inv_norm = 1.0 / std::sqrt(norm_retained);
                if (violates(lhs, rhs) || violates(lhs * inv_norm, rhs * inv_norm)) {
                    ++stats.retained_violations;
                }
            }
        }
    }
    return stats;
}

ForceProxies rationale_measure(const ModelState& model, const DatasetBundle& data,
                               const FusionMask& mask, int64_t head_class, int64_t tail_class) {
    const int64_t C = model.num_classes;
    const int64_t d = model.spec.feature_dim;
    if (head_class < 0 || head_class >= C || tail_class < 0 || tail_class >= C) {
        throw ValidationError("rationale_measure: class index out of range");
    }
    if (mask.d != d) {
        throw ValidationError("rationale_measure: mask dimension does not match feature_dim");
    }

    // class-mean pooled features over the training set
    Tensor features = compute_pooled_features(model, data.train_x);
    std::vector<double> mean_h(static_cast<size_t>(d), 0.0), mean_t(static_cast<size_t>(d), 0.0);
    int64_t n_h = 0, n_t = 0;
    for (int64_t i = 0; i < features.shape[0]; ++i) {
        const int y = data.train_y[static_cast<size_t>(i)];
        if (y == head_class) {
            for (int64_t k = 0; k < d; ++k) mean_h[static_cast<size_t>(k)] += features.at(i, k);
            ++n_h;
        } else if (y == tail_class) {
            for (int64_t k = 0; k < d; ++k) mean_t[static_cast<size_t>(k)] += features.at(i, k);
            ++n_t;
        }
    }
    if (n_h == 0 || n_t == 0) {
        throw ValidationError("rationale_measure: class has no training samples");
    }
    for (int64_t k = 0; k < d; ++k) {
        mean_h[static_cast<size_t>(k)] /= static_cast<double>(n_h);
        mean_t[static_cast<size_t>(k)] /= static_cast<double>(n_t);
    }

    const Tensor& W = model.classifier.at("W").value; // (d, C)
    const std::vector<uint8_t> fused_flags = mask.as_flags();

    // direction norms per part
    double norm_fused = 0.0, norm_retained = 0.0;
    for (int64_t k = 0; k < d; ++k) {
        const double diff = mean_t[static_cast<size_t>(k)] - mean_h[static_cast<size_t>(k)];
        if (fused_flags[static_cast<size_t>(k)]) {
            norm_fused += diff * diff;
        } else {
            norm_retained += diff * diff;
        }
    }

    auto projection = [&](int64_t cls, bool fused_part) -> std::optional<double> {
        const double norm = fused_part ? norm_fused : norm_retained;
        if (norm == 0.0) return std::nullopt;
        double acc = 0.0;
        for (int64_t k = 0; k < d; ++k) {
            if ((fused_flags[static_cast<size_t>(k)] != 0) != fused_part) continue;
            const double diff = mean_t[static_cast<size_t>(k)] - mean_h[static_cast<size_t>(k)];
            acc += static_cast<double>(W.at(k, cls)) * diff;
        }
        return acc / std::sqrt(norm);
    };

    ForceProxies out;
    out.fused_head = projection(head_class, true);
    out.fused_tail = projection(tail_class, true);
    out.retained_tail = projection(tail_class, false);
    out.retained_head = projection(head_class, false);
    if (out.fused_head && out.fused_tail) out.fused_gap = *out.fused_head - *out.fused_tail;
    if (out.retained_tail && out.retained_head) {
        out.retained_gap = *out.retained_tail - *out.retained_head;
    }
    return out;
}

std::vector<int> boundary_grid(const ModelState& model, const GridBounds& bounds,
                               int64_t resolution) {
    if (model.spec.input_width() != 2) {
        throw ValidationError("boundary_grid: model takes " +
                              std::to_string(model.spec.input_width()) +
                              "-D inputs, grid needs 2-D");
    }
    if (resolution < 2) throw ValidationError("boundary_grid: resolution must be >= 2");
    if (!(bounds.xmax > bounds.xmin) || !(bounds.ymax > bounds.ymin)) {
        throw ValidationError("boundary_grid: empty bounding box");
    }

    Tensor pts = Tensor::zeros({resolution * resolution, 2});
    const double dx = (bounds.xmax - bounds.xmin) / static_cast<double>(resolution - 1);
    const double dy = (bounds.ymax - bounds.ymin) / static_cast<double>(resolution - 1);
    int64_t row = 0;
    for (int64_t iy = 0; iy < resolution; ++iy) {
        for (int64_t ix = 0; ix < resolution; ++ix, ++row) {
            pts.at(row, 0) = static_cast<float>(bounds.xmin + static_cast<double>(ix) * dx);
            pts.at(row, 1) = static_cast<float>(bounds.ymin + static_cast<double>(iy) * dy);
        }
    }
    return predict(model, pts);
}

} // namespace h2t
