#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "h2t/diagnostics.hpp"
#include "h2t/errors.hpp"
#include "h2t/training.hpp"

using namespace h2t;

namespace {

// Two well-separated classes in 2-D; any working trainer nails this.
DatasetBundle separable_dataset() {
    ClassCounts cc;
    cc.counts = {30, 30};
    return synth_gaussian_longtail(cc, 2, 6.0, 7, 20);
}

BackboneSpec small_mlp(int64_t in_dims = 2, int64_t d = 4) {
    BackboneSpec spec;
    spec.kind = BackboneKind::Mlp;
    spec.in_dims = in_dims;
    spec.hidden = {8};
    spec.feature_dim = d;
    return spec;
}

TrainSchedule quick_schedule(int64_t e1 = 50, int64_t e2 = 5) {
    TrainSchedule s;
    s.stage1_epochs = e1;
    s.stage2_epochs = e2;
    s.stage1_lr = 0.1;
    s.stage2_lr = 0.05;
    s.batch_size = 10;
    s.seed = 3;
    return s;
}

double train_accuracy(const ModelState& m, const DatasetBundle& ds) {
    const auto pred = predict(m, ds.train_x);
    int64_t hit = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        hit += pred[i] == ds.train_y[i] ? 1 : 0;
    }
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

} // namespace

TEST_CASE("stage I separates a separable dataset") {
    DatasetBundle ds = separable_dataset();
    auto [model, record] = train_stage1(ds, small_mlp(), quick_schedule());
    CHECK(train_accuracy(model, ds) > 0.95);
    CHECK(record.epoch_losses.size() == 50);
    for (double l : record.epoch_losses) CHECK(std::isfinite(l));
}

TEST_CASE("stage I loss is non-increasing up to jitter") {
    DatasetBundle ds = separable_dataset();
    auto [model, record] = train_stage1(ds, small_mlp(), quick_schedule());
    for (size_t e = 1; e < record.epoch_losses.size(); ++e) {
        CHECK(record.epoch_losses[e] <= record.epoch_losses[e - 1] + 0.01);
    }
}

TEST_CASE("stage I is deterministic per seed") {
    DatasetBundle ds = separable_dataset();
    auto [m1, r1] = train_stage1(ds, small_mlp(), quick_schedule(10));
    auto [m2, r2] = train_stage1(ds, small_mlp(), quick_schedule(10));
    CHECK(m1.backbone.value_hash() == m2.backbone.value_hash());
    CHECK(m1.classifier.value_hash() == m2.classifier.value_hash());
    CHECK(r1.step_losses == r2.step_losses);

    TrainSchedule other = quick_schedule(10);
    other.seed = 4;
    auto [m3, r3] = train_stage1(ds, small_mlp(), other);
    CHECK(m1.backbone.value_hash() != m3.backbone.value_hash());
}

TEST_CASE("zero learning rate leaves parameters bit-unchanged") {
    DatasetBundle ds = separable_dataset();
    TrainSchedule s = quick_schedule(3);
    ModelState fresh = init_model(small_mlp(), ds.num_classes(), s.seed);
    s.stage1_lr = 0.0;
    auto [model, record] = train_stage1(ds, small_mlp(), s);
    CHECK(model.backbone.value_hash() == fresh.backbone.value_hash());
    CHECK(model.classifier.value_hash() == fresh.classifier.value_hash());
}

TEST_CASE("stage II freezes the backbone") {
    DatasetBundle ds = separable_dataset();
    auto [stage1, r1] = train_stage1(ds, small_mlp(), quick_schedule(10));
    auto [stage2, r2] = finetune_stage2_h2t(stage1, ds, quick_schedule(10), 0.5,
                                            SelectionStrategy::Random,
                                            SamplerKind::InstanceWise);
    const FreezeReport report = assert_frozen_backbone(stage1, stage2);
    CHECK(report.pass);
    for (const auto& [name, p] : stage2.backbone) CHECK_FALSE(p.trainable);
    // classifier did move
    CHECK(stage1.classifier.value_hash() != stage2.classifier.value_hash());
}

TEST_CASE("assert_frozen_backbone reports the first differing parameter") {
    DatasetBundle ds = separable_dataset();
    auto [model, record] = train_stage1(ds, small_mlp(), quick_schedule(2));
    SUBCASE("identical models pass") {
        const FreezeReport r = assert_frozen_backbone(model, model);
        CHECK(r.pass);
        CHECK(r.first_diff.empty());
    }
    SUBCASE("a perturbed backbone weight fails by name") {
        ModelState other = model;
        other.backbone.at("layer1/W").value.at(0) += 1.0f;
        const FreezeReport r = assert_frozen_backbone(model, other);
        CHECK_FALSE(r.pass);
        CHECK(r.first_diff == "layer1/W");
    }
    SUBCASE("classifier changes are ignored") {
        ModelState other = model;
        other.classifier.at("W").value.at(0) += 1.0f;
        const FreezeReport r = assert_frozen_backbone(model, other);
        CHECK(r.pass);
    }
}

TEST_CASE("p = 0 fused finetune matches the no-fusion baseline step for step") {
    DatasetBundle ds = separable_dataset();
    auto [stage1, r1] = train_stage1(ds, small_mlp(), quick_schedule(10));
    auto [fused, rf] = finetune_stage2_h2t(stage1, ds, quick_schedule(10, 4), 0.0,
                                           SelectionStrategy::Random,
                                           SamplerKind::ClassBalanced);
    auto [plain, rp] = finetune_classifier_balanced(stage1, ds, quick_schedule(10, 4));
    REQUIRE(rf.step_losses.size() == rp.step_losses.size());
    for (size_t i = 0; i < rf.step_losses.size(); ++i) {
        CHECK(std::abs(rf.step_losses[i] - rp.step_losses[i]) < 1e-6);
    }
    CHECK(fused.classifier.value_hash() == plain.classifier.value_hash());
}

TEST_CASE("stage II run record is reproducible per seed") {
    DatasetBundle ds = separable_dataset();
    auto [stage1, r1] = train_stage1(ds, small_mlp(), quick_schedule(5));
    auto [m_a, a] = finetune_stage2_h2t(stage1, ds, quick_schedule(5), 0.3,
                                        SelectionStrategy::Random, SamplerKind::InstanceWise);
    auto [m_b, b] = finetune_stage2_h2t(stage1, ds, quick_schedule(5), 0.3,
                                        SelectionStrategy::Random, SamplerKind::InstanceWise);
    CHECK(a.step_losses == b.step_losses);
    CHECK(m_a.classifier.value_hash() == m_b.classifier.value_hash());
}

TEST_CASE("classifier reinit is available and deterministic") {
    DatasetBundle ds = separable_dataset();
    auto [stage1, r1] = train_stage1(ds, small_mlp(), quick_schedule(5));
    TrainSchedule s = quick_schedule(5, 1);
    s.reinit_classifier = true;
    s.stage2_lr = 0.0;
    auto [m_a, a] = finetune_stage2_h2t(stage1, ds, s, 0.0, SelectionStrategy::First,
                                        SamplerKind::ClassBalanced);
    auto [m_b, b] = finetune_stage2_h2t(stage1, ds, s, 0.0, SelectionStrategy::First,
                                        SamplerKind::ClassBalanced);
    CHECK(m_a.classifier.value_hash() == m_b.classifier.value_hash());
    // lr 0: final classifier equals the reinitialized one, not stage-I's
    CHECK(m_a.classifier.value_hash() != stage1.classifier.value_hash());
}

TEST_CASE("divergence aborts with a step diagnostic") {
    DatasetBundle ds = separable_dataset();
    TrainSchedule s = quick_schedule(30);
    s.stage1_lr = 1e18; // blows activations out of float range
    CHECK_THROWS_AS(train_stage1(ds, small_mlp(), s), NumericError);
}

TEST_CASE("schedule learning rate decays at the milestones") {
    TrainSchedule s;
    s.stage1_epochs = 100;
    s.stage1_lr = 0.1;
    s.milestones = {0.8, 0.9};
    s.decay_factor = 0.1;
    CHECK(s.stage1_lr_at(0) == doctest::Approx(0.1));
    CHECK(s.stage1_lr_at(79) == doctest::Approx(0.1));
    CHECK(s.stage1_lr_at(80) == doctest::Approx(0.01));
    CHECK(s.stage1_lr_at(90) == doctest::Approx(0.001));
    // auto stage-II rate: 0.1x the terminal stage-I rate
    s.stage2_lr = -1.0;
    CHECK(s.stage2_lr_effective() == doctest::Approx(1e-4));
    s.stage2_lr = 0.05;
    CHECK(s.stage2_lr_effective() == doctest::Approx(0.05));
}
