#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "h2t/data.hpp"
#include "h2t/rng.hpp"

namespace h2t {

enum class SamplerKind { ClassBalanced, InstanceWise, Reverse };

const char* sampler_name(SamplerKind k);
SamplerKind sampler_from_name(const std::string& name);

/// Per-class draw probabilities:
///   ClassBalanced  1/C
///   InstanceWise   n_i / N
///   Reverse        (1/n_i) / sum_j (1/n_j)   (tail-biased counterpart)
std::vector<double> sampler_rates(SamplerKind kind, const ClassCounts& counts);

struct SamplerSpec {
    SamplerKind kind = SamplerKind::InstanceWise;
    std::vector<double> rates; // cumulative-ready probabilities, sum 1
    ClassCounts counts;
    uint64_t seed = 0;
};

SamplerSpec make_sampler(SamplerKind kind, const ClassCounts& counts, uint64_t seed);

/// One class index drawn from spec.rates by inverse CDF.
int64_t draw_class(const SamplerSpec& spec, Rng& rng);

/// Batches of dataset indices for one epoch: classes i.i.d. from the rates,
/// then a uniform in-class sample (with replacement). Deterministic given
/// (spec.seed, epoch). Yields exactly floor(epoch_len / batch_size) batches.
std::vector<std::vector<int64_t>> draw_epoch(const SamplerSpec& spec,
                                             const std::vector<std::vector<int64_t>>& class_index,
                                             int64_t epoch_len, int64_t batch_size, int64_t epoch);

/// L1 distance between empirical class frequencies over num_draws draws and
/// the target rates.
double empirical_rate_error(const SamplerSpec& spec, int64_t num_draws, Rng& rng);

} // namespace h2t
