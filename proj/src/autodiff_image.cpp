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

void require_chw(const char* kernel, const Tensor& t) {
    if (t.rank() != 3)
        throw ShapeError(std::string(kernel) + ": expected (c,h,w) input, got shape " +
                         t.shape_str());
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
    if (i < 0) return 0;
    if (i >= static_cast<std::ptrdiff_t>(n)) return n - 1;
    return static_cast<std::size_t>(i);
}

} // namespace

Var conv2d(Var x, Var w) {
    require_same_tape("conv2d", x, w);
    Tape& t = tape_of("conv2d", x);
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require_chw("conv2d", xv);
    if (wv.rank() != 4)
        throw ShapeError("conv2d: expected (co,ci,kh,kw) weight, got shape " + wv.shape_str());
    if (wv.extent(1) != xv.extent(0))
        throw ShapeError("conv2d: shapes " + xv.shape_str() + " and " + wv.shape_str() +
                         " disagree on input channels");
    const std::size_t kh = wv.extent(2), kw = wv.extent(3);
    if (kh % 2 == 0 || kw % 2 == 0)
        throw ShapeError("conv2d: kernel extents must be odd, got shape " + wv.shape_str());

    const std::size_t ci = xv.extent(0), h = xv.extent(1), wd = xv.extent(2);
    const std::size_t co = wv.extent(0);
    const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
    const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);

    Tensor out({co, h, wd});
    for (std::size_t oc = 0; oc < co; ++oc)
        for (std::size_t ic = 0; ic < ci; ++ic)
            for (std::size_t ky = 0; ky < kh; ++ky)
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const double wgt = wv.at4(oc, ic, ky, kx);
                    if (wgt == 0.0) continue;
                    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - ph;
                    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pw;
                    for (std::size_t oy = 0; oy < h; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) + dy;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t ox = 0; ox < wd; ++ox) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) + dx;
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                            out.at3(oc, oy, ox) +=
                                wgt * xv.at3(ic, static_cast<std::size_t>(iy),
                                             static_cast<std::size_t>(ix));
                        }
                    }
                }

    BackFn back = [ix_id = x.id, iw_id = w.id, ci, co, h, wd, kh, kw, ph, pw](
                      const Tape& t, std::size_t, const Tensor& g, Backprop& bp) {
        const Tensor& xv = t.value_of(ix_id);
        const Tensor& wv = t.value_of(iw_id);
        Tensor* gx = t.needs_grad(ix_id) ? &bp.buffer(ix_id) : nullptr;
        Tensor* gw = t.needs_grad(iw_id) ? &bp.buffer(iw_id) : nullptr;
        if (!gx && !gw) return;
        for (std::size_t oc = 0; oc < co; ++oc)
            for (std::size_t ic = 0; ic < ci; ++ic)
                for (std::size_t ky = 0; ky < kh; ++ky)
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - ph;
                        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pw;
                        const double wgt = wv.at4(oc, ic, ky, kx);
                        double wacc = 0.0;
                        for (std::size_t oy = 0; oy < h; ++oy) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) + dy;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t ox = 0; ox < wd; ++ox) {
                                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) + dx;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                                const double go = g.at3(oc, oy, ox);
                                const double xi = xv.at3(ic, static_cast<std::size_t>(iy),
                                                         static_cast<std::size_t>(ix));
                                if (gx)
                                    gx->at3(ic, static_cast<std::size_t>(iy),
                                            static_cast<std::size_t>(ix)) += go * wgt;
                                wacc += go * xi;
                            }
                        }
                        if (gw) gw->at4(oc, ic, ky, kx) += wacc;
                    }
    };
    return t.emplace("conv2d", std::move(out), {x.id, w.id}, std::move(back));
}

Var add_channel_bias(Var x, Var b) {
    require_same_tape("add_channel_bias", x, b);
    Tape& t = tape_of("add_channel_bias", x);
    const Tensor& xv = x.value();
    const Tensor& bv = b.value();
    require_chw("add_channel_bias", xv);
    if (bv.rank() != 1 || bv.extent(0) != xv.extent(0))
        throw ShapeError("add_channel_bias: shapes " + xv.shape_str() + " and " + bv.shape_str() +
                         " do not match");

    const std::size_t c = xv.extent(0), hw = xv.extent(1) * xv.extent(2);
    Tensor out(xv.shape());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = xv[ch * hw + i] + bv[ch];

    BackFn back = [ix = x.id, ib = b.id, c, hw](const Tape& t, std::size_t,
                                                const Tensor& g, Backprop& bp) {
        if (t.needs_grad(ix)) {
            Tensor& gx = bp.buffer(ix);
            for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = bp.buffer(ib);
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < hw; ++i) gb[ch] += g[ch * hw + i];
        }
    };
    return t.emplace("add_channel_bias", std::move(out), {x.id, b.id}, std::move(back));
}

Var add_scaled_channel(Var x, Var noise, Var scale) {
    require_same_tape("add_scaled_channel", x, noise);
    require_same_tape("add_scaled_channel", x, scale);
    Tape& t = tape_of("add_scaled_channel", x);
    const Tensor& xv = x.value();
    const Tensor& nv = noise.value();
    const Tensor& sv = scale.value();
    require_chw("add_scaled_channel", xv);
    if (nv.rank() != 2 || nv.extent(0) != xv.extent(1) || nv.extent(1) != xv.extent(2))
        throw ShapeError("add_scaled_channel: shapes " + xv.shape_str() + " and " +
                         nv.shape_str() + " do not match spatially");
    if (sv.rank() != 1 || sv.extent(0) != xv.extent(0))
        throw ShapeError("add_scaled_channel: shapes " + xv.shape_str() + " and " +
                         sv.shape_str() + " do not match on channels");

    const std::size_t c = xv.extent(0), hw = nv.numel();
    Tensor out(xv.shape());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i)
            out[ch * hw + i] = xv[ch * hw + i] + sv[ch] * nv[i];

    BackFn back = [ix = x.id, in = noise.id, is = scale.id, c, hw](
                      const Tape& t, std::size_t, const Tensor& g, Backprop& bp) {
        const Tensor& nv = t.value_of(in);
        const Tensor& sv = t.value_of(is);
        if (t.needs_grad(ix)) {
            Tensor& gx = bp.buffer(ix);
            for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
        }
        if (t.needs_grad(in)) {
            Tensor& gn = bp.buffer(in);
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < hw; ++i) gn[i] += g[ch * hw + i] * sv[ch];
        }
        if (t.needs_grad(is)) {
            Tensor& gs = bp.buffer(is);
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < hw; ++i) gs[ch] += g[ch * hw + i] * nv[i];
        }
    };
    return t.emplace("add_scaled_channel", std::move(out), {x.id, noise.id, scale.id},
                     std::move(back));
}

Var bilinear_upsample2x(Var x) {
    Tape& t = tape_of("bilinear_upsample2x", x);
    const Tensor& xv = x.value();
    require_chw("bilinear_upsample2x", xv);
    const std::size_t c = xv.extent(0), h = xv.extent(1), w = xv.extent(2);
    const std::size_t oh = 2 * h, ow = 2 * w;

    // Pixel-center alignment: source coordinate (o + 0.5)/2 - 0.5, border clamped.
    // Sampling weights depend only on output parity, so precompute per-axis taps.
    struct Tap { std::size_t lo, hi; double w_hi; };
    auto make_taps = [](std::size_t n_out, std::size_t n_in) {
        std::vector<Tap> taps(n_out);
        for (std::size_t o = 0; o < n_out; ++o) {
            const double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
            double f = std::floor(src);
            double frac = src - f;
            std::ptrdiff_t lo = static_cast<std::ptrdiff_t>(f);
            taps[o].lo = clamp_index(lo, n_in);
            taps[o].hi = clamp_index(lo + 1, n_in);
            taps[o].w_hi = frac;
        }
        return taps;
    };
    const auto ty = make_taps(oh, h);
    const auto tx = make_taps(ow, w);

    Tensor out({c, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const Tap& ay = ty[oy];
                const Tap& ax = tx[ox];
                const double top = (1.0 - ax.w_hi) * xv.at3(ch, ay.lo, ax.lo) +
                                   ax.w_hi * xv.at3(ch, ay.lo, ax.hi);
                const double bot = (1.0 - ax.w_hi) * xv.at3(ch, ay.hi, ax.lo) +
                                   ax.w_hi * xv.at3(ch, ay.hi, ax.hi);
                out.at3(ch, oy, ox) = (1.0 - ay.w_hi) * top + ay.w_hi * bot;
            }

    BackFn back = [ix = x.id, c, oh, ow, ty, tx](const Tape& t, std::size_t,
                                                 const Tensor& g, Backprop& bp) {
        if (!t.needs_grad(ix)) return;
        Tensor& gx = bp.buffer(ix);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const Tap& ay = ty[oy];
                    const Tap& ax = tx[ox];
                    const double go = g.at3(ch, oy, ox);
                    gx.at3(ch, ay.lo, ax.lo) += go * (1.0 - ay.w_hi) * (1.0 - ax.w_hi);
                    gx.at3(ch, ay.lo, ax.hi) += go * (1.0 - ay.w_hi) * ax.w_hi;
                    gx.at3(ch, ay.hi, ax.lo) += go * ay.w_hi * (1.0 - ax.w_hi);
                    gx.at3(ch, ay.hi, ax.hi) += go * ay.w_hi * ax.w_hi;
                }
    };
    return t.emplace("bilinear_upsample2x", std::move(out), {x.id}, std::move(back));
}

Var avgpool2x(Var x) {
    Tape& t = tape_of("avgpool2x", x);
    const Tensor& xv = x.value();
    require_chw("avgpool2x", xv);
    const std::size_t c = xv.extent(0), h = xv.extent(1), w = xv.extent(2);
    if (h % 2 != 0 || w % 2 != 0)
        throw ShapeError("avgpool2x: spatial extents must be even, got shape " + xv.shape_str());
    const std::size_t oh = h / 2, ow = w / 2;

    Tensor out({c, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox)
                out.at3(ch, oy, ox) = 0.25 * (xv.at3(ch, 2 * oy, 2 * ox) +
                                              xv.at3(ch, 2 * oy, 2 * ox + 1) +
                                              xv.at3(ch, 2 * oy + 1, 2 * ox) +
                                              xv.at3(ch, 2 * oy + 1, 2 * ox + 1));

    BackFn back = [ix = x.id, c, oh, ow](const Tape& t, std::size_t,
                                         const Tensor& g, Backprop& bp) {
        if (!t.needs_grad(ix)) return;
        Tensor& gx = bp.buffer(ix);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const double go = 0.25 * g.at3(ch, oy, ox);
                    gx.at3(ch, 2 * oy, 2 * ox) += go;
                    gx.at3(ch, 2 * oy, 2 * ox + 1) += go;
                    gx.at3(ch, 2 * oy + 1, 2 * ox) += go;
                    gx.at3(ch, 2 * oy + 1, 2 * ox + 1) += go;
                }
    };
    return t.emplace("avgpool2x", std::move(out), {x.id}, std::move(back));
}

Var affine_warp(Var x, Var theta) {
    require_same_tape("affine_warp", x, theta);
    Tape& t = tape_of("affine_warp", x);
    const Tensor& xv = x.value();
    const Tensor& th = theta.value();
    require_chw("affine_warp", xv);
    if (th.rank() != 2 || th.extent(0) != 2 || th.extent(1) != 3)
        throw ShapeError("affine_warp: expected (2,3) theta, got shape " + th.shape_str());

    const std::size_t c = xv.extent(0), h = xv.extent(1), w = xv.extent(2);
    // Output pixel (row i, col j) maps to normalized coords in [-1,1]; theta sends
    // them to source normalized coords; bilinear sample with border clamp.
    auto to_norm = [](std::size_t i, std::size_t n) {
        return n > 1 ? 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0 : 0.0;
    };
    auto to_pix = [](double norm, std::size_t n) {
        return n > 1 ? (norm + 1.0) * 0.5 * static_cast<double>(n - 1) : 0.0;
    };

    Tensor out(xv.shape());
    for (std::size_t i = 0; i < h; ++i) {
        const double yn = to_norm(i, h);
        for (std::size_t j = 0; j < w; ++j) {
            const double xn = to_norm(j, w);
            const double xs = th.at2(0, 0) * xn + th.at2(0, 1) * yn + th.at2(0, 2);
            const double ys = th.at2(1, 0) * xn + th.at2(1, 1) * yn + th.at2(1, 2);
            const double px = to_pix(xs, w);
            const double py = to_pix(ys, h);
            const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(std::floor(px));
            const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(std::floor(py));
            const double fx = px - std::floor(px);
            const double fy = py - std::floor(py);
            const std::size_t xl = clamp_index(x0, w), xr = clamp_index(x0 + 1, w);
            const std::size_t yt = clamp_index(y0, h), yb = clamp_index(y0 + 1, h);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double top = (1.0 - fx) * xv.at3(ch, yt, xl) + fx * xv.at3(ch, yt, xr);
                const double bot = (1.0 - fx) * xv.at3(ch, yb, xl) + fx * xv.at3(ch, yb, xr);
                out.at3(ch, i, j) = (1.0 - fy) * top + fy * bot;
            }
        }
    }

    BackFn back = [ix = x.id, it = theta.id, c, h, w, to_norm, to_pix](
                      const Tape& t, std::size_t, const Tensor& g, Backprop& bp) {
        const Tensor& xv = t.value_of(ix);
        const Tensor& th = t.value_of(it);
        Tensor* gx = t.needs_grad(ix) ? &bp.buffer(ix) : nullptr;
        Tensor* gt = t.needs_grad(it) ? &bp.buffer(it) : nullptr;
        if (!gx && !gt) return;
        const double sx = w > 1 ? 0.5 * static_cast<double>(w - 1) : 0.0;
        const double sy = h > 1 ? 0.5 * static_cast<double>(h - 1) : 0.0;
        for (std::size_t i = 0; i < h; ++i) {
            const double yn = to_norm(i, h);
            for (std::size_t j = 0; j < w; ++j) {
                const double xn = to_norm(j, w);
                const double xs = th.at2(0, 0) * xn + th.at2(0, 1) * yn + th.at2(0, 2);
                const double ys = th.at2(1, 0) * xn + th.at2(1, 1) * yn + th.at2(1, 2);
                const double px = to_pix(xs, w);
                const double py = to_pix(ys, h);
                const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(std::floor(px));
                const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(std::floor(py));
                const double fx = px - std::floor(px);
                const double fy = py - std::floor(py);
                const std::size_t xl = clamp_index(x0, w), xr = clamp_index(x0 + 1, w);
                const std::size_t yt = clamp_index(y0, h), yb = clamp_index(y0 + 1, h);
                // d(sample)/d(px) vanishes where both taps clamp to the same pixel.
                const bool x_live = xr != xl;
                const bool y_live = yb != yt;
                double dpx = 0.0, dpy = 0.0;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const double go = g.at3(ch, i, j);
                    if (go == 0.0) continue;
                    const double wtl = (1.0 - fy) * (1.0 - fx);
                    const double wtr = (1.0 - fy) * fx;
                    const double wbl = fy * (1.0 - fx);
                    const double wbr = fy * fx;
                    if (gx) {
                        gx->at3(ch, yt, xl) += go * wtl;
                        gx->at3(ch, yt, xr) += go * wtr;
                        gx->at3(ch, yb, xl) += go * wbl;
                        gx->at3(ch, yb, xr) += go * wbr;
                    }
                    if (gt) {
                        const double vtl = xv.at3(ch, yt, xl);
                        const double vtr = xv.at3(ch, yt, xr);
                        const double vbl = xv.at3(ch, yb, xl);
                        const double vbr = xv.at3(ch, yb, xr);
                        if (x_live)
                            dpx += go * ((1.0 - fy) * (vtr - vtl) + fy * (vbr - vbl));
                        if (y_live)
                            dpy += go * ((1.0 - fx) * (vbl - vtl) + fx * (vbr - vtr));
                    }
                }
                if (gt && (dpx != 0.0 || dpy != 0.0)) {
                    const double dxs = dpx * sx;
                    const double dys = dpy * sy;
                    gt->at2(0, 0) += dxs * xn;
                    gt->at2(0, 1) += dxs * yn;
                    gt->at2(0, 2) += dxs;
                    gt->at2(1, 0) += dys * xn;
                    gt->at2(1, 1) += dys * yn;
                    gt->at2(1, 2) += dys;
                }
            }
        }
    };
    return t.emplace("affine_warp", std::move(out), {x.id, theta.id}, std::move(back));
}

Var luminance(Var x) {
    Tape& t = tape_of("luminance", x);
    const Tensor& xv = x.value();
    require_chw("luminance", xv);
    const std::size_t c = xv.extent(0), h = xv.extent(1), w = xv.extent(2);
    if (c != 1 && c != 3)
        throw ShapeError("luminance: expected 1 or 3 channels, got shape " + xv.shape_str());

    static constexpr double kW[3] = {0.299, 0.587, 0.114};
    const std::size_t hw = h * w;
    Tensor out({1, h, w});
    if (c == 1) {
        for (std::size_t i = 0; i < hw; ++i) out[i] = xv[i];
    } else {
        for (std::size_t i = 0; i < hw; ++i)
            out[i] = kW[0] * xv[i] + kW[1] * xv[hw + i] + kW[2] * xv[2 * hw + i];
    }

    BackFn back = [ix = x.id, c, hw](const Tape& t, std::size_t, const Tensor& g, Backprop& bp) {
        if (!t.needs_grad(ix)) return;
        Tensor& gx = bp.buffer(ix);
        if (c == 1) {
            for (std::size_t i = 0; i < hw; ++i) gx[i] += g[i];
        } else {
            for (std::size_t i = 0; i < hw; ++i) {
                gx[i] += kW[0] * g[i];
                gx[hw + i] += kW[1] * g[i];
                gx[2 * hw + i] += kW[2] * g[i];
            }
        }
    };
    return t.emplace("luminance", std::move(out), {x.id}, std::move(back));
}

namespace {

// Central difference along one axis with replicate border:
// out[i] = x[i+1] - x[i-1], indices clamped.
Var central_diff(const char* kernel, Var x, bool horizontal) {
    Tape& t = tape_of(kernel, x);
    const Tensor& xv = x.value();
    require_chw(kernel, xv);
    const std::size_t c = xv.extent(0), h = xv.extent(1), w = xv.extent(2);

    Tensor out(xv.shape());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                std::size_t ip, im;
                if (horizontal) {
                    ip = clamp_index(static_cast<std::ptrdiff_t>(j) + 1, w);
                    im = clamp_index(static_cast<std::ptrdiff_t>(j) - 1, w);
                    out.at3(ch, i, j) = xv.at3(ch, i, ip) - xv.at3(ch, i, im);
                } else {
                    ip = clamp_index(static_cast<std::ptrdiff_t>(i) + 1, h);
                    im = clamp_index(static_cast<std::ptrdiff_t>(i) - 1, h);
                    out.at3(ch, i, j) = xv.at3(ch, ip, j) - xv.at3(ch, im, j);
                }
            }

    BackFn back = [ix = x.id, c, h, w, horizontal](const Tape& t, std::size_t,
                                                   const Tensor& g, Backprop& bp) {
        if (!t.needs_grad(ix)) return;
        Tensor& gx = bp.buffer(ix);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    const double go = g.at3(ch, i, j);
                    if (go == 0.0) continue;
                    if (horizontal) {
                        gx.at3(ch, i, clamp_index(static_cast<std::ptrdiff_t>(j) + 1, w)) += go;
                        gx.at3(ch, i, clamp_index(static_cast<std::ptrdiff_t>(j) - 1, w)) -= go;
                    } else {
                        gx.at3(ch, clamp_index(static_cast<std::ptrdiff_t>(i) + 1, h), j) += go;
                        gx.at3(ch, clamp_index(static_cast<std::ptrdiff_t>(i) - 1, h), j) -= go;
                    }
                }
    };
    return t.emplace(kernel, std::move(out), {x.id}, std::move(back));
}

} // namespace

Var grad_x(Var x) { return central_diff("grad_x", x, true); }
Var grad_y(Var x) { return central_diff("grad_y", x, false); }

Var cell_pool_sum(Var x, std::size_t cell) {
    Tape& t = tape_of("cell_pool_sum", x);
    const Tensor& xv = x.value();
    require_chw("cell_pool_sum", xv);
    if (cell == 0) throw ValueError("cell_pool_sum: cell size must be positive");
    const std::size_t c = xv.extent(0), h = xv.extent(1), w = xv.extent(2);
    if (h % cell != 0 || w % cell != 0)
        throw ShapeError("cell_pool_sum: shape " + xv.shape_str() +
                         " not divisible by cell " + std::to_string(cell));
    const std::size_t oh = h / cell, ow = w / cell;

    Tensor out({c, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
                out.at3(ch, i / cell, j / cell) += xv.at3(ch, i, j);

    BackFn back = [ix = x.id, c, h, w, cell](const Tape& t, std::size_t,
                                             const Tensor& g, Backprop& bp) {
        if (!t.needs_grad(ix)) return;
        Tensor& gx = bp.buffer(ix);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j)
                    gx.at3(ch, i, j) += g.at3(ch, i / cell, j / cell);
    };
    return t.emplace("cell_pool_sum", std::move(out), {x.id}, std::move(back));
}

} // namespace morphlab::ad
