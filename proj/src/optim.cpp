#include "h2t/optim.hpp"

#include "h2t/errors.hpp"

namespace h2t {

void sgd_step(ParameterSet& params, double lr, double momentum, double weight_decay) {
    if (lr < 0.0) throw ValidationError("sgd_step: lr must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) {
        throw ValidationError("sgd_step: momentum must be in [0, 1)");
    }
    const float flr = static_cast<float>(lr);
    const float fmom = static_cast<float>(momentum);
    const float fwd = static_cast<float>(weight_decay);
    for (auto& [name, p] : params) {
        if (p.trainable) {
            for (size_t i = 0; i < p.value.data.size(); ++i) {
                float g = p.grad.data[i];
                if (fwd != 0.0f) g += fwd * p.value.data[i];
                p.momentum.data[i] = fmom * p.momentum.data[i] + g;
                p.value.data[i] -= flr * p.momentum.data[i];
            }
        }
    }
    params.zero_grads();
}

} // namespace h2t
