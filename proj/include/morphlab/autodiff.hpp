#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <vector>

#include "morphlab/tensor.hpp"

namespace morphlab::ad {

class Tape;

// Lightweight handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const std::vector<std::size_t>& shape() const { return value().shape(); }
    std::size_t numel() const { return value().numel(); }
};

// Gradient accumulation buffers, indexed by node id, allocated lazily.
class Backprop {
public:
    explicit Backprop(const Tape& tape);
    Tensor& buffer(std::size_t node_id);
    const Tensor* find(std::size_t node_id) const;

private:
    const Tape& tape_;
    std::vector<std::unique_ptr<Tensor>> grads_;
};

// Result of one backward pass: gradient per grad-requiring input.
// Inputs the root does not depend on hold zeros.
class Gradients {
public:
    const Tensor& wrt(const Var& v) const;
    bool contains(const Var& v) const;

private:
    friend class Tape;
    std::map<std::size_t, Tensor> by_node_;
};

using BackFn = std::function<void(const Tape&, std::size_t self_id, const Tensor& gout, Backprop&)>;

// Ordered record of executed kernels. Forward values are computed eagerly;
// backward replays adjoints in reverse record order. Single use: after
// backward() the tape rejects further recording and a second backward.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf requiring gradients.
    Var input(Tensor value);
    // Leaf without gradients.
    Var constant(Tensor value);

    Gradients backward(const Var& root);

    std::size_t node_count() const { return nodes_.size(); }
    const Tensor& value_of(std::size_t id) const;
    bool needs_grad(std::size_t id) const;
    bool consumed() const { return consumed_; }

    // Used by kernel implementations.
    Var emplace(const char* kernel, Tensor value, std::vector<std::size_t> parents, BackFn back);

private:
    struct Node {
        Tensor value;
        std::vector<std::size_t> parents;
        BackFn back;
        bool needs_grad = false;
    };

    std::vector<Node> nodes_;
    std::vector<std::size_t> input_ids_;
    bool consumed_ = false;

    friend class Backprop;
};

// ---- elementwise, same shape ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var min_ew(Var a, Var b);
Var max_ew(Var a, Var b);
// Orientation angle atan2(y, x) folded into [0, pi). Zero vectors get
// angle 0 and zero adjoint.
Var atan2_mod_pi(Var y, Var x);

// ---- scalar forms ----
Var add_scalar(Var a, double s);
Var mul_scalar(Var a, double s);
Var max_scalar(Var a, double s);
Var neg(Var a);

// ---- unary ----
Var leaky_relu(Var a, double slope = 0.2);
Var relu(Var a);
Var tanh_v(Var a);
Var softplus(Var a);
Var sqrt_v(Var a);  // requires a >= 0
Var log1p_v(Var a); // requires a > -1
Var abs_v(Var a);
// Piecewise landmark-regression penalty: beta*ln(1+|x|/eps) for |x|<beta,
// |x|-C otherwise, C = beta - beta*ln(1+beta/eps).
Var wing_ew(Var a, double beta, double epsilon);

// ---- matrix (rank 2) ----
Var matmul(Var a, Var b);
Var transpose2d(Var a);
Var add_cols(Var x, Var b);   // x: (m, n), b: (n)
Var scale_rows(Var x, Var s); // x: (m, n), s: (m)

// ---- reductions / structure ----
Var sum_all(Var a);
Var mean_all(Var a);
Var sum_lastaxis(Var a);      // (..., n) -> (...), rank-1 input -> scalar
Var softmax_lastaxis(Var a);
// Zero-mean unit-variance per channel over all remaining axes.
// Supports (m, c) with channel_axis=1 and (c, h, w) with channel_axis=0.
Var feature_normalize(Var x, std::size_t channel_axis, double eps = 1e-8);
Var reshape(Var a, std::vector<std::size_t> shape);
Var concat(std::size_t axis, const std::vector<Var>& parts);

// ---- image kernels, CHW layout ----
// Zero padding preserving spatial extent, unit stride; odd kernel sizes.
Var conv2d(Var x, Var w);
Var add_channel_bias(Var x, Var b);           // x: (c,h,w), b: (c)
// out[c,h,w] = x[c,h,w] + scale[c] * noise[h,w]
Var add_scaled_channel(Var x, Var noise, Var scale);
Var bilinear_upsample2x(Var x);
Var avgpool2x(Var x);
// Learned 2x3 spatial affine over normalized [-1,1] grid coordinates,
// bilinear sampling with border clamp. Identity theta = [[1,0,0],[0,1,0]].
Var affine_warp(Var x, Var theta);
Var luminance(Var x);                         // (3,h,w) or (1,h,w) -> (1,h,w)
Var grad_x(Var x);                            // horizontal [-1,0,1], replicate border
Var grad_y(Var x);
Var cell_pool_sum(Var x, std::size_t cell);   // sum over non-overlapping cells

} // namespace morphlab::ad
