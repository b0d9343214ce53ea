#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "h2t/data.hpp"
#include "h2t/fusion.hpp"
#include "h2t/model.hpp"
#include "h2t/sampling.hpp"

namespace h2t {

/// Two-stage schedule. Stage I decays the learning rate at the milestone
/// fractions of its epoch budget; stage II runs at a constant rate, which
/// defaults to 0.1x the stage-I terminal rate when left negative.
struct TrainSchedule {
    int64_t stage1_epochs = 100;
    int64_t stage2_epochs = 10;
    double stage1_lr = 0.1;
    double stage2_lr = -1.0;
    double momentum = 0.9;
    double weight_decay = 0.0;
    int64_t batch_size = 64;
    std::vector<double> milestones = {0.8, 0.9};
    double decay_factor = 0.1;
    uint64_t seed = 1;
    bool reinit_classifier = false;

    void validate() const;
    double stage1_lr_at(int64_t epoch) const;
    double stage2_lr_effective() const;
};

struct RunRecord {
    std::string stage;
    std::vector<double> epoch_losses;
    std::vector<double> step_losses;
};

/// Stage I: representation learning over instance-wise batches with mean
/// cross-entropy; all parameters update. Epoch length is one nominal pass
/// (N draws). Deterministic for a fixed schedule seed.
std::pair<ModelState, RunRecord> train_stage1(const DatasetBundle& data, const BackboneSpec& spec,
                                              const TrainSchedule& sched,
                                              bool classifier_bias = false);

/// Stage II: classifier finetuning on fused features. Per step a batch from
/// `fused_sampler` (class-balanced by default; its labels are kept) pairs
/// with a batch from `fusing_sampler` whose feature maps donate floor(d*p)
/// channels. The backbone is frozen at entry and its bit-identity is
/// re-checked after every epoch.
std::pair<ModelState, RunRecord> finetune_stage2_h2t(
    const ModelState& model, const DatasetBundle& data, const TrainSchedule& sched, double p,
    SelectionStrategy strategy, SamplerKind fusing_sampler,
    SamplerKind fused_sampler = SamplerKind::ClassBalanced);

/// Independent reference: classifier finetuning on class-balanced batches
/// with no fusion branch anywhere on the tape. Uses the same balanced-branch
/// seed derivation as finetune_stage2_h2t so the two are comparable
/// step-for-step.
std::pair<ModelState, RunRecord> finetune_classifier_balanced(const ModelState& model,
                                                              const DatasetBundle& data,
                                                              const TrainSchedule& sched);

struct FreezeReport {
    bool pass = false;
    std::string first_diff; // name of the first differing backbone parameter
};

/// Bit-identity over every backbone parameter of two models.
FreezeReport assert_frozen_backbone(const ModelState& before, const ModelState& after);

// Stream-derivation tags shared by stage II and the balanced reference.
inline constexpr uint64_t kStage1SamplerTag = 0x51A6E1;
inline constexpr uint64_t kBalancedBranchTag = 0xBA1A;
inline constexpr uint64_t kFusingBranchTag = 0xF051;
inline constexpr uint64_t kMaskTag = 0x3A5C;

} // namespace h2t
