#include "morphlab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace morphlab::ad {

namespace {

Tape& tape_of(const char* kernel, const Var& v) {
    if (!v.tape) throw ValueError(std::string(kernel) + ": var not bound to a tape");
    return *v.tape;
}

void require_same_tape(const char* kernel, const Var& a, const Var& b) {
    if (a.tape != b.tape) throw ValueError(std::string(kernel) + ": vars from different tapes");
}

void require_same_shape(const char* kernel, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(kernel) + ": shapes " + a.shape_str() + " and " +
                         b.shape_str() + " do not match");
}

void require_rank(const char* kernel, const Tensor& t, std::size_t rank) {
    if (t.rank() != rank)
        throw ShapeError(std::string(kernel) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + t.shape_str());
}

} // namespace

const Tensor& Var::value() const {
    if (!tape) throw ValueError("value(): var not bound to a tape");
    return tape->value_of(id);
}

Backprop::Backprop(const Tape& tape) : tape_(tape), grads_(tape.node_count()) {}

Tensor& Backprop::buffer(std::size_t node_id) {
    auto& slot = grads_[node_id];
    if (!slot) slot = std::make_unique<Tensor>(tape_.value_of(node_id).shape(), 0.0);
    return *slot;
}

const Tensor* Backprop::find(std::size_t node_id) const {
    return grads_[node_id] ? grads_[node_id].get() : nullptr;
}

const Tensor& Gradients::wrt(const Var& v) const {
    auto it = by_node_.find(v.id);
    if (it == by_node_.end())
        throw ValueError("gradients: var is not a gradient-requiring input of this tape");
    return it->second;
}

bool Gradients::contains(const Var& v) const {
    return by_node_.count(v.id) != 0;
}

Var Tape::input(Tensor value) {
    if (consumed_) throw ValueError("tape: recording on a consumed tape");
    if (!value.all_finite()) throw ValueError("tape input: non-finite values");
    Node n;
    n.value = std::move(value);
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    input_ids_.push_back(nodes_.size() - 1);
    return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
    if (consumed_) throw ValueError("tape: recording on a consumed tape");
    if (!value.all_finite()) throw ValueError("tape constant: non-finite values");
    Node n;
    n.value = std::move(value);
    n.needs_grad = false;
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value_of(std::size_t id) const {
    if (id >= nodes_.size()) throw ValueError("tape: node id out of range");
    return nodes_[id].value;
}

bool Tape::needs_grad(std::size_t id) const {
    return nodes_[id].needs_grad;
}

Var Tape::emplace(const char* kernel, Tensor value, std::vector<std::size_t> parents, BackFn back) {
    if (consumed_) throw ValueError(std::string(kernel) + ": recording on a consumed tape");
    if (!value.all_finite())
        throw ValueError(std::string(kernel) + ": produced non-finite values");
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    for (std::size_t p : n.parents)
        if (nodes_[p].needs_grad) { n.needs_grad = true; break; }
    if (n.needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Gradients Tape::backward(const Var& root) {
    if (root.tape != this) throw ValueError("backward: root belongs to another tape");
    if (consumed_) throw ValueError("backward: tape already consumed");
    if (value_of(root.id).numel() != 1)
        throw ValueError("backward: root must be scalar, got shape " + value_of(root.id).shape_str());
    consumed_ = true;

    Backprop bp(*this);
    bp.buffer(root.id)[0] = 1.0;
    for (std::size_t id = root.id + 1; id-- > 0;) {
        const Node& n = nodes_[id];
        if (!n.needs_grad || !n.back) continue;
        const Tensor* g = bp.find(id);
        if (!g) continue;
        n.back(*this, id, *g, bp);
    }

    Gradients out;
    for (std::size_t id : input_ids_) {
        const Tensor* g = bp.find(id);
        out.by_node_[id] = g ? *g : Tensor(nodes_[id].value.shape(), 0.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// elementwise helpers

namespace {

// F: (a, b) -> out; Da/Db: (a, b, out) -> partial
template <class F, class Da, class Db>
Var binary_ew(const char* kernel, Var a, Var b, F f, Da da, Db db) {
    require_same_tape(kernel, a, b);
    Tape& t = tape_of(kernel, a);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_same_shape(kernel, av, bv);

    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(av[i], bv[i]);

    BackFn back = [ia = a.id, ib = b.id, da, db](const Tape& t, std::size_t self,
                                                 const Tensor& g, Backprop& bp) {
        const Tensor& av = t.value_of(ia);
        const Tensor& bv = t.value_of(ib);
        const Tensor& ov = t.value_of(self);
        if (t.needs_grad(ia)) {
            Tensor& ga = bp.buffer(ia);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * da(av[i], bv[i], ov[i]);
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = bp.buffer(ib);
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * db(av[i], bv[i], ov[i]);
        }
    };
    return t.emplace(kernel, std::move(out), {a.id, b.id}, std::move(back));
}

// F: x -> out; D: (x, out) -> partial
template <class F, class D>
Var unary_ew(const char* kernel, Var a, F f, D d) {
    Tape& t = tape_of(kernel, a);
    const Tensor& av = a.value();

    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(av[i]);

    BackFn back = [ia = a.id, d](const Tape& t, std::size_t self, const Tensor& g, Backprop& bp) {
        if (!t.needs_grad(ia)) return;
        const Tensor& av = t.value_of(ia);
        const Tensor& ov = t.value_of(self);
        Tensor& ga = bp.buffer(ia);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * d(av[i], ov[i]);
    };
    return t.emplace(kernel, std::move(out), {a.id}, std::move(back));
}

double sign_of(double x) {
    if (x > 0.0) return 1.0;
    if (x < 0.0) return -1.0;
    return 0.0;
}

} // namespace

Var add(Var a, Var b) {
    return binary_ew("add", a, b,
                     [](double x, double y) { return x + y; },
                     [](double, double, double) { return 1.0; },
                     [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary_ew("sub", a, b,
                     [](double x, double y) { return x - y; },
                     [](double, double, double) { return 1.0; },
                     [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary_ew("multiply", a, b,
                     [](double x, double y) { return x * y; },
                     [](double, double y, double) { return y; },
                     [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
    return binary_ew("divide", a, b,
                     [](double x, double y) { return x / y; },
                     [](double, double y, double) { return 1.0 / y; },
                     [](double, double y, double o) { return -o / y; });
}

Var min_ew(Var a, Var b) {
    return binary_ew("min", a, b,
                     [](double x, double y) { return x <= y ? x : y; },
                     [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
                     [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Var max_ew(Var a, Var b) {
    return binary_ew("max", a, b,
                     [](double x, double y) { return x >= y ? x : y; },
                     [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
                     [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Var atan2_mod_pi(Var y, Var x) {
    constexpr double kPi = 3.14159265358979323846;
    return binary_ew("atan2_mod_pi", y, x,
                     [](double yy, double xx) {
                         if (yy == 0.0 && xx == 0.0) return 0.0;
                         double th = std::atan2(yy, xx);
                         if (th < 0.0) th += kPi;
                         if (th >= kPi) th -= kPi;
                         return th;
                     },
                     [](double yy, double xx, double) {
                         const double r2 = xx * xx + yy * yy;
                         return r2 == 0.0 ? 0.0 : xx / r2;
                     },
                     [](double yy, double xx, double) {
                         const double r2 = xx * xx + yy * yy;
                         return r2 == 0.0 ? 0.0 : -yy / r2;
                     });
}

Var add_scalar(Var a, double s) {
    return unary_ew("add_scalar", a,
                    [s](double x) { return x + s; },
                    [](double, double) { return 1.0; });
}

Var mul_scalar(Var a, double s) {
    return unary_ew("mul_scalar", a,
                    [s](double x) { return x * s; },
                    [s](double, double) { return s; });
}

Var max_scalar(Var a, double s) {
    return unary_ew("max_scalar", a,
                    [s](double x) { return x >= s ? x : s; },
                    [s](double x, double) { return x >= s ? 1.0 : 0.0; });
}

Var neg(Var a) {
    return mul_scalar(a, -1.0);
}

Var leaky_relu(Var a, double slope) {
    return unary_ew("leaky_relu", a,
                    [slope](double x) { return x >= 0.0 ? x : slope * x; },
                    [slope](double x, double) { return x >= 0.0 ? 1.0 : slope; });
}

Var relu(Var a) {
    return leaky_relu(a, 0.0);
}

Var tanh_v(Var a) {
    return unary_ew("tanh", a,
                    [](double x) { return std::tanh(x); },
                    [](double, double y) { return 1.0 - y * y; });
}

Var softplus(Var a) {
    return unary_ew("softplus", a,
                    [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x))
                                                  : std::log1p(std::exp(x)); },
                    [](double x, double) {
                        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                        : std::exp(x) / (1.0 + std::exp(x));
                    });
}

Var sqrt_v(Var a) {
    const Tensor& av = a.value();
    for (std::size_t i = 0; i < av.numel(); ++i)
        if (av[i] < 0.0) throw ValueError("sqrt: negative input");
    return unary_ew("sqrt", a,
                    [](double x) { return std::sqrt(x); },
                    [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var log1p_v(Var a) {
    const Tensor& av = a.value();
    for (std::size_t i = 0; i < av.numel(); ++i)
        if (av[i] <= -1.0) throw ValueError("log1p: input <= -1");
    return unary_ew("log1p", a,
                    [](double x) { return std::log1p(x); },
                    [](double x, double) { return 1.0 / (1.0 + x); });
}

Var abs_v(Var a) {
    return unary_ew("abs", a,
                    [](double x) { return std::fabs(x); },
                    [](double x, double) { return sign_of(x); });
}

Var wing_ew(Var a, double beta, double epsilon) {
    if (!(beta > 0.0) || !(epsilon > 0.0))
        throw ValueError("wing: beta and epsilon must be positive");
    const double c = beta - beta * std::log1p(beta / epsilon);
    return unary_ew("wing", a,
                    [beta, epsilon, c](double x) {
                        const double r = std::fabs(x);
                        return r < beta ? beta * std::log1p(r / epsilon) : r - c;
                    },
                    [beta, epsilon](double x, double) {
                        const double r = std::fabs(x);
                        const double s = sign_of(x);
                        return r < beta ? beta * s / (epsilon + r) : s;
                    });
}

// ---------------------------------------------------------------------------
// matrix kernels

Var matmul(Var a, Var b) {
    require_same_tape("matmul", a, b);
    Tape& t = tape_of("matmul", a);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank("matmul", av, 2);
    require_rank("matmul", bv, 2);
    if (av.extent(1) != bv.extent(0))
        throw ShapeError("matmul: shapes " + av.shape_str() + " and " + bv.shape_str() +
                         " are not conformable");

    const std::size_t m = av.extent(0), k = av.extent(1), n = bv.extent(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double s = av.at2(i, p);
            if (s == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out.at2(i, j) += s * bv.at2(p, j);
        }

    BackFn back = [ia = a.id, ib = b.id, m, k, n](const Tape& t, std::size_t,
                                                  const Tensor& g, Backprop& bp) {
        const Tensor& av = t.value_of(ia);
        const Tensor& bv = t.value_of(ib);
        if (t.needs_grad(ia)) {
            Tensor& ga = bp.buffer(ia); // g (m,n) * b^T (n,k)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double s = g.at2(i, j);
                    if (s == 0.0) continue;
                    for (std::size_t p = 0; p < k; ++p) ga.at2(i, p) += s * bv.at2(p, j);
                }
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = bp.buffer(ib); // a^T (k,m) * g (m,n)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double s = av.at2(i, p);
                    if (s == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) gb.at2(p, j) += s * g.at2(i, j);
                }
        }
    };
    return t.emplace("matmul", std::move(out), {a.id, b.id}, std::move(back));
}

Var transpose2d(Var a) {
    Tape& t = tape_of("transpose", a);
    const Tensor& av = a.value();
    require_rank("transpose", av, 2);
    const std::size_t m = av.extent(0), n = av.extent(1);

    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at2(j, i) = av.at2(i, j);

    BackFn back = [ia = a.id, m, n](const Tape& t, std::size_t, const Tensor& g, Backprop& bp) {
        if (!t.needs_grad(ia)) return;
        Tensor& ga = bp.buffer(ia);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga.at2(i, j) += g.at2(j, i);
    };
    return t.emplace("transpose", std::move(out), {a.id}, std::move(back));
}

Var add_cols(Var x, Var b) {
    require_same_tape("add_cols", x, b);
    Tape& t = tape_of("add_cols", x);
    const Tensor& xv = x.value();
    const Tensor& bv = b.value();
    require_rank("add_cols", xv, 2);
    require_rank("add_cols", bv, 1);
    if (xv.extent(1) != bv.extent(0))
        throw ShapeError("add_cols: shapes " + xv.shape_str() + " and " + bv.shape_str() +
                         " do not match");

    const std::size_t m = xv.extent(0), n = xv.extent(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at2(i, j) = xv.at2(i, j) + bv[j];

    BackFn back = [ix = x.id, ib = b.id, m, n](const Tape& t, std::size_t,
                                               const Tensor& g, Backprop& bp) {
        if (t.needs_grad(ix)) {
            Tensor& gx = bp.buffer(ix);
            for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = bp.buffer(ib);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gb[j] += g.at2(i, j);
        }
    };
    return t.emplace("add_cols", std::move(out), {x.id, b.id}, std::move(back));
}

Var scale_rows(Var x, Var s) {
    require_same_tape("scale_rows", x, s);
    Tape& t = tape_of("scale_rows", x);
    const Tensor& xv = x.value();
    const Tensor& sv = s.value();
    require_rank("scale_rows", xv, 2);
    require_rank("scale_rows", sv, 1);
    if (xv.extent(0) != sv.extent(0))
        throw ShapeError("scale_rows: shapes " + xv.shape_str() + " and " + sv.shape_str() +
                         " do not match");

    const std::size_t m = xv.extent(0), n = xv.extent(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at2(i, j) = xv.at2(i, j) * sv[i];

    BackFn back = [ix = x.id, is = s.id, m, n](const Tape& t, std::size_t,
                                               const Tensor& g, Backprop& bp) {
        const Tensor& xv = t.value_of(ix);
        const Tensor& sv = t.value_of(is);
        if (t.needs_grad(ix)) {
            Tensor& gx = bp.buffer(ix);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gx.at2(i, j) += g.at2(i, j) * sv[i];
        }
        if (t.needs_grad(is)) {
            Tensor& gs = bp.buffer(is);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gs[i] += g.at2(i, j) * xv.at2(i, j);
        }
    };
    return t.emplace("scale_rows", std::move(out), {x.id, s.id}, std::move(back));
}

// ---------------------------------------------------------------------------
// reductions / structure

Var sum_all(Var a) {
    Tape& t = tape_of("sum", a);
    const Tensor& av = a.value();
    double acc = 0.0;
    for (std::size_t i = 0; i < av.numel(); ++i) acc += av[i];

    BackFn back = [ia = a.id](const Tape& t, std::size_t, const Tensor& g, Backprop& bp) {
        if (!t.needs_grad(ia)) return;
        Tensor& ga = bp.buffer(ia);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g[0];
    };
    return t.emplace("sum", Tensor::scalar(acc), {a.id}, std::move(back));
}

Var mean_all(Var a) {
    const double n = static_cast<double>(a.numel());
    return mul_scalar(sum_all(a), 1.0 / n);
}

Var sum_lastaxis(Var a) {
    Tape& t = tape_of("sum_lastaxis", a);
    const Tensor& av = a.value();
    if (av.rank() == 0) throw ShapeError("sum_lastaxis: rank-0 input");
    const std::size_t n = av.shape().back();
    const std::size_t rows = av.numel() / n;

    std::vector<std::size_t> out_shape(av.shape().begin(), av.shape().end() - 1);
    if (out_shape.empty()) out_shape = {1};
    Tensor out(out_shape);
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += av[r * n + j];
        out[r] = acc;
    }

    BackFn back = [ia = a.id, rows, n](const Tape& t, std::size_t, const Tensor& g, Backprop& bp) {
        if (!t.needs_grad(ia)) return;
        Tensor& ga = bp.buffer(ia);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += g[r];
    };
    return t.emplace("sum_lastaxis", std::move(out), {a.id}, std::move(back));
}

Var softmax_lastaxis(Var a) {
    Tape& t = tape_of("softmax", a);
    const Tensor& av = a.value();
    if (av.rank() == 0) throw ShapeError("softmax: rank-0 input");
    const std::size_t n = av.shape().back();
    const std::size_t rows = av.numel() / n;

    Tensor out(av.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = av.data() + r * n;
        double* dst = out.data() + r * n;
        double mx = src[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, src[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            dst[j] = std::exp(src[j] - mx);
            denom += dst[j];
        }
        for (std::size_t j = 0; j < n; ++j) dst[j] /= denom;
    }

    BackFn back = [ia = a.id, rows, n](const Tape& t, std::size_t self,
                                       const Tensor& g, Backprop& bp) {
        if (!t.needs_grad(ia)) return;
        const Tensor& y = t.value_of(self);
        Tensor& ga = bp.buffer(ia);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* yr = y.data() + r * n;
            const double* gr = g.data() + r * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += yr[j] * gr[j];
            for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += yr[j] * (gr[j] - dot);
        }
    };
    return t.emplace("softmax", std::move(out), {a.id}, std::move(back));
}

Var feature_normalize(Var x, std::size_t channel_axis, double eps) {
    Tape& t = tape_of("feature_normalize", x);
    const Tensor& xv = x.value();
    if (!(eps > 0.0)) throw ValueError("feature_normalize: eps must be positive");

    // supported layouts: (m, c) with channel_axis 1, (c, h, w) with channel_axis 0
    std::size_t channels = 0, per_channel = 0;
    bool column_layout = false;
    if (xv.rank() == 2 && channel_axis == 1) {
        channels = xv.extent(1);
        per_channel = xv.extent(0);
        column_layout = true;
    } else if (xv.rank() == 3 && channel_axis == 0) {
        channels = xv.extent(0);
        per_channel = xv.extent(1) * xv.extent(2);
    } else {
        throw ShapeError("feature_normalize: unsupported shape " + xv.shape_str() +
                         " with channel_axis " + std::to_string(channel_axis));
    }

    std::vector<double> inv_std(channels);
    Tensor out(xv.shape());
    for (std::size_t c = 0; c < channels; ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < per_channel; ++i) {
            const std::size_t idx = column_layout ? i * channels + c : c * per_channel + i;
            mean += xv[idx];
        }
        mean /= static_cast<double>(per_channel);
        double var = 0.0;
        for (std::size_t i = 0; i < per_channel; ++i) {
            const std::size_t idx = column_layout ? i * channels + c : c * per_channel + i;
            const double d = xv[idx] - mean;
            var += d * d;
        }
        var /= static_cast<double>(per_channel);
        inv_std[c] = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < per_channel; ++i) {
            const std::size_t idx = column_layout ? i * channels + c : c * per_channel + i;
            out[idx] = (xv[idx] - mean) * inv_std[c];
        }
    }

    BackFn back = [ix = x.id, channels, per_channel, column_layout, inv_std](
                      const Tape& t, std::size_t self, const Tensor& g, Backprop& bp) {
        if (!t.needs_grad(ix)) return;
        const Tensor& y = t.value_of(self);
        Tensor& gx = bp.buffer(ix);
        const double inv_n = 1.0 / static_cast<double>(per_channel);
        for (std::size_t c = 0; c < channels; ++c) {
            double g_mean = 0.0, gy_mean = 0.0;
            for (std::size_t i = 0; i < per_channel; ++i) {
                const std::size_t idx = column_layout ? i * channels + c : c * per_channel + i;
                g_mean += g[idx];
                gy_mean += g[idx] * y[idx];
            }
            g_mean *= inv_n;
            gy_mean *= inv_n;
            for (std::size_t i = 0; i < per_channel; ++i) {
                const std::size_t idx = column_layout ? i * channels + c : c * per_channel + i;
                gx[idx] += inv_std[c] * (g[idx] - g_mean - y[idx] * gy_mean);
            }
        }
    };
    return t.emplace("feature_normalize", std::move(out), {x.id}, std::move(back));
}

Var reshape(Var a, std::vector<std::size_t> shape) {
    Tape& t = tape_of("reshape", a);
    const Tensor& av = a.value();
    Tensor out = av.reshaped(shape); // validates element count

    BackFn back = [ia = a.id](const Tape& t, std::size_t, const Tensor& g, Backprop& bp) {
        if (!t.needs_grad(ia)) return;
        Tensor& ga = bp.buffer(ia);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    };
    return t.emplace("reshape", std::move(out), {a.id}, std::move(back));
}

Var concat(std::size_t axis, const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    Tape& t = tape_of("concat", parts[0]);
    const std::size_t rank = parts[0].value().rank();
    if (axis >= rank) throw ShapeError("concat: axis out of range");

    std::size_t axis_total = 0;
    for (const Var& p : parts) {
        require_same_tape("concat", parts[0], p);
        const Tensor& pv = p.value();
        if (pv.rank() != rank)
            throw ShapeError("concat: shapes " + parts[0].value().shape_str() + " and " +
                             pv.shape_str() + " have different ranks");
        for (std::size_t ax = 0; ax < rank; ++ax)
            if (ax != axis && pv.shape()[ax] != parts[0].value().shape()[ax])
                throw ShapeError("concat: shapes " + parts[0].value().shape_str() + " and " +
                                 pv.shape_str() + " differ off-axis");
        axis_total += pv.shape()[axis];
    }

    std::vector<std::size_t> out_shape = parts[0].value().shape();
    out_shape[axis] = axis_total;
    std::size_t outer = 1, inner = 1;
    for (std::size_t ax = 0; ax < axis; ++ax) outer *= out_shape[ax];
    for (std::size_t ax = axis + 1; ax < rank; ++ax) inner *= out_shape[ax];

    Tensor out(out_shape);
    std::vector<std::size_t> parent_ids;
    std::vector<std::size_t> axis_extents;
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const Tensor& pv = p.value();
        const std::size_t e = pv.shape()[axis];
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < e; ++j)
                for (std::size_t i = 0; i < inner; ++i)
                    out[(o * axis_total + offset + j) * inner + i] = pv[(o * e + j) * inner + i];
        parent_ids.push_back(p.id);
        axis_extents.push_back(e);
        offset += e;
    }

    BackFn back = [parent_ids, axis_extents, outer, inner, axis_total](
                      const Tape& t, std::size_t, const Tensor& g, Backprop& bp) {
        std::size_t offset = 0;
        for (std::size_t pi = 0; pi < parent_ids.size(); ++pi) {
            const std::size_t e = axis_extents[pi];
            if (t.needs_grad(parent_ids[pi])) {
                Tensor& gp = bp.buffer(parent_ids[pi]);
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t j = 0; j < e; ++j)
                        for (std::size_t i = 0; i < inner; ++i)
                            gp[(o * e + j) * inner + i] +=
                                g[(o * axis_total + offset + j) * inner + i];
            }
            offset += e;
        }
    };
    return t.emplace("concat", std::move(out), parent_ids, std::move(back));
}

} // namespace morphlab::ad
