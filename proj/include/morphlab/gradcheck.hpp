#pragma once

#include <functional>

#include "morphlab/autodiff.hpp"
#include "morphlab/tensor.hpp"

namespace morphlab {

// Builds a scalar loss from one tape input.
using ScalarFn = std::function<ad::Var(ad::Tape&, ad::Var)>;

// Compares reverse-mode gradients of f at x against central finite differences
// with the given step. Returns the max over coordinates of
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
double grad_check(const ScalarFn& f, const Tensor& x, double step = 1e-5);

} // namespace morphlab
