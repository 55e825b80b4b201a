#pragma once

#include <cstdint>
#include <vector>

#include "s2rl/array.hpp"

namespace s2rl::numgrad {

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Moment accumulators for one parameter group, aligned index-for-index
// with the pointer list passed to adam_step.
struct AdamState {
    std::vector<Array> m;
    std::vector<Array> v;
    std::int64_t step = 0;
};

AdamState adam_init(const std::vector<const Array*>& params);

// In-place Adam update with bias correction.
void adam_step(const std::vector<Array*>& params, const std::vector<const Array*>& grads,
               AdamState& state, const AdamConfig& cfg);

}  // namespace s2rl::numgrad
