#include "h2t/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "h2t/errors.hpp"

namespace h2t {

const char* sampler_name(SamplerKind k) {
    switch (k) {
        case SamplerKind::ClassBalanced: return "class_balanced";
        case SamplerKind::InstanceWise: return "instance_wise";
        case SamplerKind::Reverse: return "reverse";
    }
    return "?";
}

SamplerKind sampler_from_name(const std::string& name) {
    if (name == "class_balanced") return SamplerKind::ClassBalanced;
    if (name == "instance_wise") return SamplerKind::InstanceWise;
    if (name == "reverse") return SamplerKind::Reverse;
    throw ValidationError("unknown sampler kind '" + name + "'");
}

std::vector<double> sampler_rates(SamplerKind kind, const ClassCounts& counts) {
    counts.validate();
    const int64_t C = counts.num_classes();
    std::vector<double> rates(static_cast<size_t>(C));
    switch (kind) {
        case SamplerKind::ClassBalanced: {
            const double r = 1.0 / static_cast<double>(C);
            std::fill(rates.begin(), rates.end(), r);
            break;
        }
        case SamplerKind::InstanceWise: {
            const double n = static_cast<double>(counts.total());
            for (int64_t i = 0; i < C; ++i) {
                rates[static_cast<size_t>(i)] =
                    static_cast<double>(counts.counts[static_cast<size_t>(i)]) / n;
            }
            break;
        }
        case SamplerKind::Reverse: {
            double denom = 0.0;
            for (int64_t n_i : counts.counts) denom += 1.0 / static_cast<double>(n_i);
            for (int64_t i = 0; i < C; ++i) {
                rates[static_cast<size_t>(i)] =
                    (1.0 / static_cast<double>(counts.counts[static_cast<size_t>(i)])) / denom;
            }
            break;
        }
    }
    return rates;
}

SamplerSpec make_sampler(SamplerKind kind, const ClassCounts& counts, uint64_t seed) {
    SamplerSpec spec;
    spec.kind = kind;
    spec.counts = counts;
    spec.seed = seed;
    spec.rates = sampler_rates(kind, counts);
    return spec;
}

int64_t draw_class(const SamplerSpec& spec, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    const int64_t C = static_cast<int64_t>(spec.rates.size());
    for (int64_t i = 0; i < C; ++i) {
        acc += spec.rates[static_cast<size_t>(i)];
        if (u < acc) return i;
    }
    return C - 1; // u landed in rounding slack past the last cumulative step
}

std::vector<std::vector<int64_t>> draw_epoch(const SamplerSpec& spec,
                                             const std::vector<std::vector<int64_t>>& class_index,
                                             int64_t epoch_len, int64_t batch_size, int64_t epoch) {
    if (batch_size < 1 || epoch_len < batch_size) {
        throw ValidationError("draw_epoch: need epoch_len >= batch_size >= 1");
    }
    if (static_cast<int64_t>(class_index.size()) != spec.counts.num_classes()) {
        throw ValidationError("draw_epoch: class index does not match sampler counts");
    }
    for (size_t c = 0; c < class_index.size(); ++c) {
        if (class_index[c].empty()) {
            throw ValidationError("draw_epoch: class " + std::to_string(c) + " has no samples");
        }
    }

    Rng rng(mix_seed(spec.seed, 0xE70C4, static_cast<uint64_t>(epoch)));
    const int64_t num_batches = epoch_len / batch_size;
    std::vector<std::vector<int64_t>> batches(static_cast<size_t>(num_batches));
    for (int64_t b = 0; b < num_batches; ++b) {
        std::vector<int64_t>& batch = batches[static_cast<size_t>(b)];
        batch.reserve(static_cast<size_t>(batch_size));
        for (int64_t k = 0; k < batch_size; ++k) {
            const int64_t cls = draw_class(spec, rng);
            const std::vector<int64_t>& pool = class_index[static_cast<size_t>(cls)];
            batch.push_back(pool[static_cast<size_t>(rng.uniform_int(
                static_cast<int64_t>(pool.size())))]);
        }
    }
    return batches;
}

double empirical_rate_error(const SamplerSpec& spec, int64_t num_draws, Rng& rng) {
    if (num_draws < 1) throw ValidationError("empirical_rate_error: num_draws must be >= 1");
    std::vector<int64_t> hits(spec.rates.size(), 0);
    for (int64_t i = 0; i < num_draws; ++i) {
        ++hits[static_cast<size_t>(draw_class(spec, rng))];
    }
    double err = 0.0;
    for (size_t c = 0; c < spec.rates.size(); ++c) {
        err += std::abs(static_cast<double>(hits[c]) / static_cast<double>(num_draws) -
                        spec.rates[c]);
    }
    return err;
}

} // namespace h2t
