#include "morphlab/optim.hpp"

#include <cmath>
#include <string>

#include "morphlab/errors.hpp"

namespace morphlab {

AdamState AdamState::init(const ParamStore& params, double lr) {
    if (!(lr > 0.0)) throw ValueError("adam: learning rate must be positive");
    AdamState s;
    s.lr = lr;
    for (const auto& [name, p] : params) {
        s.m.emplace(name, Tensor(p.shape(), 0.0));
        s.v.emplace(name, Tensor(p.shape(), 0.0));
    }
    return s;
}

namespace {

void adam_update_one(Tensor& p, const Tensor& g, Tensor& m, Tensor& v,
                     const AdamState& s, double bc1, double bc2, const std::string& name) {
    if (!p.same_shape(g))
        throw ShapeError("adam: parameter '" + name + "' shape " + p.shape_str() +
                         " does not match gradient shape " + g.shape_str());
    for (std::size_t i = 0; i < p.numel(); ++i) {
        m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
        v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= s.lr * mhat / (std::sqrt(vhat) + s.epsilon);
    }
}

} // namespace

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state) {
    for (const auto& [name, g] : grads) {
        (void)g;
        if (params.find(name) == params.end())
            throw ValueError("adam: gradient for unknown parameter '" + name + "'");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params) {
        auto mit = state.m.find(name);
        auto vit = state.v.find(name);
        if (mit == state.m.end() || vit == state.v.end())
            throw ValueError("adam: state missing accumulators for parameter '" + name + "'");
        auto git = grads.find(name);
        if (git != grads.end()) {
            adam_update_one(p, git->second, mit->second, vit->second, state, bc1, bc2, name);
        } else {
            // zero gradient: moments decay, bias-corrected update is exactly zero
            Tensor zero(p.shape(), 0.0);
            adam_update_one(p, zero, mit->second, vit->second, state, bc1, bc2, name);
        }
    }
}

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const char* name) {
    if (state.m.empty()) {
        state.m.emplace(name, Tensor(param.shape(), 0.0));
        state.v.emplace(name, Tensor(param.shape(), 0.0));
    }
    auto mit = state.m.find(name);
    auto vit = state.v.find(name);
    if (mit == state.m.end() || vit == state.v.end())
        throw ValueError(std::string("adam: state missing accumulators for parameter '") +
                         name + "'");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    adam_update_one(param, grad, mit->second, vit->second, state, bc1, bc2, name);
}

} // namespace morphlab
