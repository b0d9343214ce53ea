#include "h2t/training.hpp"

#include <cmath>

#include "h2t/errors.hpp"
#include "h2t/optim.hpp"

namespace h2t {

void TrainSchedule::validate() const {
    if (stage1_epochs < 1) throw ValidationError("schedule: stage1_epochs must be >= 1");
    if (stage2_epochs < 1) throw ValidationError("schedule: stage2_epochs must be >= 1");
    if (!(stage1_lr >= 0.0)) throw ValidationError("schedule: stage1_lr must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) {
        throw ValidationError("schedule: momentum must be in [0, 1)");
    }
    if (batch_size < 1) throw ValidationError("schedule: batch_size must be >= 1");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
        throw ValidationError("schedule: decay_factor must be in (0, 1]");
    }
    for (double m : milestones) {
        if (!(m > 0.0 && m <= 1.0)) {
            throw ValidationError("schedule: milestones must be fractions in (0, 1]");
        }
    }
}

double TrainSchedule::stage1_lr_at(int64_t epoch) const {
    double lr = stage1_lr;
    for (double m : milestones) {
        if (static_cast<double>(epoch) >=
            m * static_cast<double>(stage1_epochs)) {
            lr *= decay_factor;
        }
    }
    return lr;
}

double TrainSchedule::stage2_lr_effective() const {
    if (stage2_lr >= 0.0) return stage2_lr;
    double terminal = stage1_lr;
    for (size_t i = 0; i < milestones.size(); ++i) terminal *= decay_factor;
    return 0.1 * terminal;
}

namespace {

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int64_t>& rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (int64_t r : rows) out.push_back(labels[static_cast<size_t>(r)]);
    return out;
}

void check_finite_loss(double loss, const char* stage, int64_t epoch, int64_t step) {
    if (!std::isfinite(loss)) {
        throw NumericError(std::string(stage) + " diverged: non-finite loss at epoch " +
                           std::to_string(epoch) + ", step " + std::to_string(step));
    }
}

} // namespace

std::pair<ModelState, RunRecord> train_stage1(const DatasetBundle& data, const BackboneSpec& spec,
                                              const TrainSchedule& sched, bool classifier_bias) {
    sched.validate();
    data.validate();
    ModelState model = init_model(spec, data.num_classes(), sched.seed, classifier_bias);

    SamplerSpec instance =
        make_sampler(SamplerKind::InstanceWise, data.counts, mix_seed(sched.seed, kStage1SamplerTag));
    const auto class_index = data.class_index();
    const int64_t epoch_len = data.counts.total();

    RunRecord record;
    record.stage = "stage1";
    for (int64_t epoch = 0; epoch < sched.stage1_epochs; ++epoch) {
        const double lr = sched.stage1_lr_at(epoch);
        const auto batches = draw_epoch(instance, class_index, epoch_len, sched.batch_size, epoch);
        double epoch_loss = 0.0;
        for (size_t step = 0; step < batches.size(); ++step) {
            const Tensor x = gather_rows(data.train_x, batches[step]);
            const std::vector<int> y = gather_labels(data.train_y, batches[step]);

            Graph g;
            ModelBinding binding = bind_model(g, model);
            Graph::Loss loss = model_loss(g, binding, model, x, y);
            check_finite_loss(loss.value, "stage I", epoch, static_cast<int64_t>(step));
            g.backward(loss.id);
            harvest_grads(g, binding, model);
            sgd_step(model.backbone, lr, sched.momentum, sched.weight_decay);
            sgd_step(model.classifier, lr, sched.momentum, sched.weight_decay);

            record.step_losses.push_back(loss.value);
            epoch_loss += loss.value;
        }
        record.epoch_losses.push_back(epoch_loss / static_cast<double>(batches.size()));
    }
    return {std::move(model), std::move(record)};
}

namespace {

// Shared core of the fused finetune and the no-fusion reference.
std::pair<ModelState, RunRecord> finetune_classifier(const ModelState& start,
                                                     const DatasetBundle& data,
                                                     const TrainSchedule& sched, bool with_fusion,
                                                     double p, SelectionStrategy strategy,
                                                     SamplerKind fusing_sampler,
                                                     SamplerKind fused_sampler) {
    sched.validate();
    data.validate();
    if (with_fusion && !(p >= 0.0 && p <= 1.0)) {
        throw ValidationError("stage II: fusion ratio must be in [0, 1]");
    }

    ModelState model = start;
    model.backbone.set_trainable(false);
    model.backbone.zero_grads();
    model.backbone.zero_momentum();
    model.classifier.zero_grads();
    model.classifier.zero_momentum();
    if (sched.reinit_classifier) {
        const bool bias_trainable = model.classifier.at("b").trainable;
        ModelState fresh = init_model(model.spec, model.num_classes,
                                      mix_seed(sched.seed, 0x2E1217u), bias_trainable);
        model.classifier = fresh.classifier;
    }

    const uint64_t entry_hash = model.backbone_hash();
    const auto class_index = data.class_index();
    const int64_t epoch_len = data.counts.total();
    const double lr = sched.stage2_lr_effective();

    SamplerSpec balanced =
        make_sampler(fused_sampler, data.counts, mix_seed(sched.seed, kBalancedBranchTag));
    SamplerSpec fusing =
        make_sampler(fusing_sampler, data.counts, mix_seed(sched.seed, kFusingBranchTag));

    RunRecord record;
    record.stage = with_fusion ? "stage2" : "stage2_baseline";
    for (int64_t epoch = 0; epoch < sched.stage2_epochs; ++epoch) {
        const auto bal_batches =
            draw_epoch(balanced, class_index, epoch_len, sched.batch_size, epoch);
        std::vector<std::vector<int64_t>> fus_batches;
        if (with_fusion) {
            fus_batches = draw_epoch(fusing, class_index, epoch_len, sched.batch_size, epoch);
        }
        Rng mask_rng(mix_seed(sched.seed, kMaskTag, static_cast<uint64_t>(epoch)));

        double epoch_loss = 0.0;
        for (size_t step = 0; step < bal_batches.size(); ++step) {
            const Tensor x_bal = gather_rows(data.train_x, bal_batches[step]);
            const std::vector<int> y_bal = gather_labels(data.train_y, bal_batches[step]);

            Graph g;
            ModelBinding binding = bind_model(g, model);
            Graph::Loss loss;
            if (with_fusion) {
                const Tensor x_fus = gather_rows(data.train_x, fus_batches[step]);
                // labels of the fusing branch are never read
                BackboneOut fused_branch = backbone_forward(g, binding, model, x_bal);
                BackboneOut fusing_branch = backbone_forward(g, binding, model, x_fus);
                FusionMask mask =
                    select_channels(model.spec.feature_dim, p, strategy, mask_rng);
                int mixed =
                    fuse_feature_maps(g, fused_branch.feature_map, fusing_branch.feature_map, mask);
                int pooled = g.global_avg_pool(mixed);
                int z = classifier_forward(g, binding, model, pooled);
                loss = g.softmax_xent(z, y_bal);
            } else {
                BackboneOut bo = backbone_forward(g, binding, model, x_bal);
                int z = classifier_forward(g, binding, model, bo.pooled);
                loss = g.softmax_xent(z, y_bal);
            }
            check_finite_loss(loss.value, "stage II", epoch, static_cast<int64_t>(step));
            g.backward(loss.id);
            harvest_grads(g, binding, model);
            sgd_step(model.backbone, lr, sched.momentum, sched.weight_decay);
            sgd_step(model.classifier, lr, sched.momentum, sched.weight_decay);

            record.step_losses.push_back(loss.value);
            epoch_loss += loss.value;
        }
        record.epoch_losses.push_back(epoch_loss / static_cast<double>(bal_batches.size()));

        if (model.backbone_hash() != entry_hash) {
            throw InvariantViolation("backbone parameters changed during stage II epoch " +
                                     std::to_string(epoch));
        }
    }
    return {std::move(model), std::move(record)};
}

} // namespace

std::pair<ModelState, RunRecord> finetune_stage2_h2t(const ModelState& model,
                                                     const DatasetBundle& data,
                                                     const TrainSchedule& sched, double p,
                                                     SelectionStrategy strategy,
                                                     SamplerKind fusing_sampler,
                                                     SamplerKind fused_sampler) {
    return finetune_classifier(model, data, sched, true, p, strategy, fusing_sampler,
                               fused_sampler);
}

std::pair<ModelState, RunRecord> finetune_classifier_balanced(const ModelState& model,
                                                              const DatasetBundle& data,
                                                              const TrainSchedule& sched) {
    return finetune_classifier(model, data, sched, false, 0.0, SelectionStrategy::First,
                               SamplerKind::ClassBalanced, SamplerKind::ClassBalanced);
}

FreezeReport assert_frozen_backbone(const ModelState& before, const ModelState& after) {
    if (before.spec.kind != after.spec.kind || before.spec.feature_dim != after.spec.feature_dim ||
        before.backbone.size() != after.backbone.size()) {
        throw ValidationError("assert_frozen_backbone: backbone specs differ");
    }
    FreezeReport report;
    for (const auto& [name, p] : before.backbone) {
        const Param& q = after.backbone.at(name);
        if (!p.value.bit_equal(q.value)) {
            report.pass = false;
            report.first_diff = name;
            return report;
        }
    }
    report.pass = true;
    return report;
}

} // namespace h2t
