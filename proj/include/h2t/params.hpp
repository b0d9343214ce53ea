#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "h2t/tensor.hpp"

namespace h2t {

/// One named parameter: value, gradient accumulator, momentum buffer.
/// The three tensors always share a shape.
struct Param {
    Tensor value;
    Tensor grad;
    Tensor momentum;
    bool trainable = true;
};

/// Ordered name -> Param map (std::map keeps iteration deterministic, which
/// checkpoint layout and gradient harvesting both rely on).
class ParameterSet {
public:
    Param& add(const std::string& name, Tensor value, bool trainable = true);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool contains(const std::string& name) const { return items_.count(name) > 0; }
    size_t size() const { return items_.size(); }

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

    void zero_grads();
    void zero_momentum();
    void set_trainable(bool trainable);

    /// FNV-1a over all value bytes in name order; cheap bit-identity probe.
    uint64_t value_hash() const;

private:
    std::map<std::string, Param> items_;
};

} // namespace h2t
