#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "h2t/data.hpp"
#include "h2t/fusion.hpp"
#include "h2t/model.hpp"
#include "h2t/sampling.hpp"
#include "h2t/training.hpp"

namespace h2t {

/// Experiment description, loaded from a TOML-style key/value file.
/// Every random choice in a run traces back to the seeds written here.
struct ExperimentConfig {
    // [dataset]
    int64_t classes = 20;
    int64_t n_max = 300;
    double imbalance_ratio = 100.0;
    int64_t in_dims = 16;
    double separation = 2.0;
    uint64_t dataset_seed = 42;
    int64_t test_per_class = 50;

    // [splits]
    double head_threshold = 100.0;
    double tail_threshold = 20.0;
    double threshold_scale = 1.0;

    // [backbone]
    std::string backbone_kind = "mlp";
    std::vector<int64_t> hidden = {128};
    int64_t feature_dim = 64;
    int64_t in_channels = 1;
    int64_t conv_in_h = 4;
    int64_t conv_in_w = 4;
    int64_t conv1_channels = 8;
    std::string init = "he_uniform";
    bool classifier_bias = false;

    // [schedule]
    int64_t stage1_epochs = 100;
    int64_t stage2_epochs = 10;
    double stage1_lr = 0.1;
    double stage2_lr = 0.01; // negative selects 0.1x the stage-I terminal rate
    double momentum = 0.9;
    double weight_decay = 0.0;
    int64_t batch_size = 64;
    std::vector<double> milestones = {0.8, 0.9};
    double decay_factor = 0.1;
    uint64_t train_seed = 1;
    bool reinit_classifier = false;

    // [fusion]
    double fusion_p = 0.3;
    std::string fusion_strategy = "random";

    // [samplers]
    std::string fused_branch = "class_balanced";
    std::string fusing_branch = "instance_wise";

    // [output]
    std::string out_dir = "runs/default";

    bool operator==(const ExperimentConfig&) const = default;

    static ExperimentConfig from_string(const std::string& text);
    static ExperimentConfig from_file(const std::string& path);
    std::string serialize() const;

    void validate() const;

    ClassCounts make_counts() const;
    DatasetBundle make_dataset() const;
    SplitPartition make_partition(const ClassCounts& counts) const;
    BackboneSpec make_backbone() const;
    TrainSchedule make_schedule() const;
    SamplerKind fused_kind() const { return sampler_from_name(fused_branch); }
    SamplerKind fusing_kind() const { return sampler_from_name(fusing_branch); }
    SelectionStrategy selection() const { return strategy_from_name(fusion_strategy); }
};

} // namespace h2t
