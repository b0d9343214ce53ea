#include "h2t/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "h2t/errors.hpp"

namespace h2t {

namespace {

double eval_loss(ModelState& model, const LossBuilder& build, std::vector<uint8_t>* pattern) {
    Graph g;
    g.record_pattern = pattern != nullptr;
    ModelBinding binding = bind_model(g, model, false);
    Graph::Loss loss = build(g, binding);
    if (pattern) *pattern = g.pattern();
    return loss.value;
}

struct EntryGrad {
    ParameterSet* set;
    std::string name;
    int64_t index;
    double analytic;
};

} // namespace

FdReport finite_diff_check(ModelState& model, const LossBuilder& build, double epsilon,
                           int entries_per_param, uint64_t seed) {
    if (epsilon <= 0.0) throw ValidationError("finite_diff_check: epsilon must be > 0");

    // Analytic pass: every parameter treated as trainable.
    model.backbone.zero_grads();
    model.classifier.zero_grads();
    {
        Graph g;
        ModelBinding binding = bind_model(g, model, true);
        Graph::Loss loss = build(g, binding);
        g.backward(loss.id);
        // force_grad bindings: harvest regardless of trainable flags
        for (auto& [name, p] : model.backbone) {
            const Tensor& gt = g.grad(binding.backbone_ids.at(name));
            for (size_t i = 0; i < gt.data.size(); ++i) p.grad.data[i] += gt.data[i];
        }
        for (auto& [name, p] : model.classifier) {
            const Tensor& gt = g.grad(binding.classifier_ids.at(name));
            for (size_t i = 0; i < gt.data.size(); ++i) p.grad.data[i] += gt.data[i];
        }
    }

    Rng rng(mix_seed(seed, 0xFDC0DEu));
    std::vector<EntryGrad> entries;
    for (ParameterSet* set : {&model.backbone, &model.classifier}) {
        for (auto& [name, p] : *set) {
            const int64_t n = p.value.numel();
            const int64_t take = std::min<int64_t>(n, entries_per_param);
            std::vector<int64_t> order = rng.permutation(n);
            for (int64_t k = 0; k < take; ++k) {
                const int64_t idx = order[static_cast<size_t>(k)];
                entries.push_back(
                    {set, name, idx, static_cast<double>(p.grad.at(idx))});
            }
        }
    }

    FdReport report;
    std::vector<uint8_t> pat_plus, pat_minus;
    for (const EntryGrad& e : entries) {
        Param& p = e.set->at(e.name);
        const float saved = p.value.at(e.index);

        p.value.at(e.index) = static_cast<float>(static_cast<double>(saved) + epsilon);
        const double loss_plus = eval_loss(model, build, &pat_plus);
        p.value.at(e.index) = static_cast<float>(static_cast<double>(saved) - epsilon);
        const double loss_minus = eval_loss(model, build, &pat_minus);
        p.value.at(e.index) = saved;

        if (pat_plus != pat_minus) {
            ++report.skipped_kinks;
            continue;
        }
        const double fd = (loss_plus - loss_minus) / (2.0 * epsilon);
        const double rel = std::abs(e.analytic - fd) / std::max(1.0, std::abs(fd));
        report.max_rel_error = std::max(report.max_rel_error, rel);
        ++report.checked;
    }

    model.backbone.zero_grads();
    model.classifier.zero_grads();
    return report;
}

double finite_diff_check(ModelState& model, const Tensor& x, const std::vector<int>& labels,
                         double epsilon) {
    LossBuilder build = [&](Graph& g, const ModelBinding& binding) {
        return model_loss(g, binding, model, x, labels);
    };
    return finite_diff_check(model, build, epsilon, 8, 0x51u).max_rel_error;
}

} // namespace h2t
