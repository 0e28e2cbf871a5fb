#pragma once

#include <cstddef>

#include "morphlab/tensor.hpp"

namespace morphlab {

// Adam accumulators over a named parameter store. Moment shapes mirror the
// parameters they track; the step counter advances by exactly 1 per update.
struct AdamState {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step = 0;
    ParamStore m; // first moment
    ParamStore v; // second moment

    static AdamState init(const ParamStore& params, double lr = 0.01);
};

// Standard bias-corrected Adam update, in place. Gradients may omit entries
// (treated as zero); extra gradient names are rejected.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state);

// Single-tensor convenience form.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const char* name = "x");

} // namespace morphlab
