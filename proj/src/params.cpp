#include "h2t/params.hpp"

#include <cstring>

#include "h2t/errors.hpp"
#include "h2t/serialize.hpp"

namespace h2t {

Param& ParameterSet::add(const std::string& name, Tensor value, bool trainable) {
    if (items_.count(name)) {
        throw ValidationError("parameter '" + name + "' already registered");
    }
    Param p;
    p.grad = Tensor::zeros(value.shape);
    p.momentum = Tensor::zeros(value.shape);
    p.value = std::move(value);
    p.trainable = trainable;
    return items_.emplace(name, std::move(p)).first->second;
}

Param& ParameterSet::at(const std::string& name) {
    auto it = items_.find(name);
    if (it == items_.end()) throw ValidationError("unknown parameter '" + name + "'");
    return it->second;
}

const Param& ParameterSet::at(const std::string& name) const {
    auto it = items_.find(name);
    if (it == items_.end()) throw ValidationError("unknown parameter '" + name + "'");
    return it->second;
}

void ParameterSet::zero_grads() {
    for (auto& [name, p] : items_) {
        std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0f);
    }
}

void ParameterSet::zero_momentum() {
    for (auto& [name, p] : items_) {
        std::fill(p.momentum.data.begin(), p.momentum.data.end(), 0.0f);
    }
}

void ParameterSet::set_trainable(bool trainable) {
    for (auto& [name, p] : items_) p.trainable = trainable;
}

uint64_t ParameterSet::value_hash() const {
    uint64_t h = kFnvOffset;
    for (const auto& [name, p] : items_) {
        h = fnv1a(name.data(), name.size(), h);
        h = fnv1a(p.value.data.data(), p.value.data.size() * sizeof(float), h);
    }
    return h;
}

} // namespace h2t
