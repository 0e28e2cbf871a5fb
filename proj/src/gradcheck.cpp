#include "morphlab/gradcheck.hpp"

#include <cmath>

#include "morphlab/errors.hpp"

namespace morphlab {

namespace {

double eval_scalar(const ScalarFn& f, const Tensor& x) {
    ad::Tape tape;
    ad::Var in = tape.input(x);
    ad::Var out = f(tape, in);
    if (out.numel() != 1)
        throw ValueError("grad_check: function output must be scalar, got shape " +
                         out.value().shape_str());
    const double v = out.value()[0];
    if (!std::isfinite(v)) throw ValueError("grad_check: non-finite function value");
    return v;
}

} // namespace

double grad_check(const ScalarFn& f, const Tensor& x, double step) {
    if (!(step > 0.0)) throw ValueError("grad_check: step must be positive");

    ad::Tape tape;
    ad::Var in = tape.input(x);
    ad::Var out = f(tape, in);
    if (out.numel() != 1)
        throw ValueError("grad_check: function output must be scalar, got shape " +
                         out.value().shape_str());
    ad::Gradients grads = tape.backward(out);
    const Tensor& analytic = grads.wrt(in);

    double max_rel = 0.0;
    Tensor probe = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + step;
        const double fp = eval_scalar(f, probe);
        probe[i] = saved - step;
        const double fm = eval_scalar(f, probe);
        probe[i] = saved;
        const double numeric = (fp - fm) / (2.0 * step);
        const double a = analytic[i];
        const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
    return max_rel;
}

} // namespace morphlab
