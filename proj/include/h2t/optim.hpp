#pragma once

#include "h2t/params.hpp"

namespace h2t {

/// Heavy-ball SGD. For each trainable parameter:
///   buf <- momentum * buf + grad (+ weight_decay * value)
///   value <- value - lr * buf
/// Frozen parameters and their buffers are untouched. All gradient
/// accumulators (trainable and frozen) are zeroed before returning.
void sgd_step(ParameterSet& params, double lr, double momentum, double weight_decay = 0.0);

} // namespace h2t
