#pragma once

// Parameterized layers and the spatial rearrangement ops the model is built
// from. Features are H x W x C row-major; token views are [H*W, C].

#include "promptsr/tensor.hpp"

namespace promptsr::nn {

template <typename S>
struct ParamRef {
    std::string name;
    TensorT<S>* tensor;
};
template <typename S>
using ParamRegistryT = std::vector<ParamRef<S>>;
using ParamRegistry = ParamRegistryT<float>;

// ---------------------------------------------------------------------------
// linear: x[..., in] -> [..., out], weight stored [out, in]
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
    if (x.dim(-1) != w.dim(1))
        throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(w.shape()));
    const int64_t in = w.dim(1), out = w.dim(0);
    const int64_t rows = x.numel() / in;
    Shape os = x.shape();
    os.back() = static_cast<int>(out);
    TensorT<S> y(os);
    const S* px = x.data();
    const S* pw = w.data();
    const S* pb = b.defined() ? b.data() : nullptr;
    S* py = y.data();
    if (MacCounter::enabled()) MacCounter::add(uint64_t(rows) * in * out);
    parallel_for(rows, [&](int64_t r) {
        const S* xr = px + r * in;
        S* yr = py + r * out;
        for (int64_t o = 0; o < out; ++o) {
            const S* wr = pw + o * in;
            S acc = pb ? pb[o] : S(0);
            for (int64_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
            yr[o] = acc;
        }
    });
    check_finite(py, y.numel(), "linear");
    auto* tp = TapeT<S>::active();
    int xn = detail::node_on(tp, x), wn = detail::node_on(tp, w),
        bn = b.defined() ? detail::node_on(tp, b) : -1;
    if (detail::track_out(y, tp, {xn, wn, bn})) {
        int on = y.node();
        auto dx = x.storage(), dw = w.storage();
        tp->record([xn, wn, bn, on, rows, in, out, dx, dw](TapeT<S>& t) {
            const auto& go = t.grad_buf(on);
            if (xn >= 0) {
                auto& gx = t.grad_buf(xn);
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t o = 0; o < out; ++o) {
                        const S g = go[r * out + o];
                        const S* wr = dw->data() + o * in;
                        S* gxr = gx.data() + r * in;
                        for (int64_t i = 0; i < in; ++i) gxr[i] += g * wr[i];
                    }
            }
            if (wn >= 0) {
                auto& gw = t.grad_buf(wn);
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t o = 0; o < out; ++o) {
                        const S g = go[r * out + o];
                        const S* xr = dx->data() + r * in;
                        S* gwr = gw.data() + o * in;
                        for (int64_t i = 0; i < in; ++i) gwr[i] += g * xr[i];
                    }
            }
            if (bn >= 0) {
                auto& gb = t.grad_buf(bn);
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t o = 0; o < out; ++o) gb[o] += go[r * out + o];
            }
        });
    }
    return y;
}

template <typename S>
struct LinearT {
    TensorT<S> weight;  // [out, in]
    TensorT<S> bias;    // [out], optional

    static LinearT make(int in, int out, bool with_bias, Rng& rng) {
        LinearT l;
        l.weight = TensorT<S>(Shape{out, in});
        for (int64_t i = 0; i < l.weight.numel(); ++i)
            l.weight.data()[i] = static_cast<S>(rng.trunc_normal(0.02));
        if (with_bias) l.bias = TensorT<S>(Shape{out});
        return l;
    }

    TensorT<S> forward(const TensorT<S>& x) const { return linear(x, weight, bias); }

    void register_params(ParamRegistryT<S>& reg, const std::string& prefix) {
        reg.push_back({prefix + ".weight", &weight});
        if (bias.defined()) reg.push_back({prefix + ".bias", &bias});
    }

    int64_t param_count() const { return weight.numel() + (bias.defined() ? bias.numel() : 0); }
};

// ---------------------------------------------------------------------------
// 3x3 same-size convolution on [H, W, Cin], zero padding.
// The padded buffer is materialized so every output runs the full 9 taps.
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> conv3x3(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
    if (x.rank() != 3) throw ShapeError("conv3x3 expects [H,W,C], got " + shape_str(x.shape()));
    const int H = x.dim(0), W = x.dim(1), Cin = x.dim(2);
    if (w.rank() != 4 || w.dim(1) != Cin || w.dim(2) != 3 || w.dim(3) != 3)
        throw ShapeError("conv3x3 weight " + shape_str(w.shape()) + " does not fit input " +
                         shape_str(x.shape()));
    const int Cout = w.dim(0);
    const int Hp = H + 2, Wp = W + 2;
    std::vector<S> xp(int64_t(Hp) * Wp * Cin, S(0));
    const S* px = x.data();
    for (int y = 0; y < H; ++y)
        std::memcpy(xp.data() + ((y + 1) * int64_t(Wp) + 1) * Cin, px + y * int64_t(W) * Cin,
                    sizeof(S) * W * Cin);
    // weights reordered to [ky][kx][ci][co] so the inner loop runs over co
    std::vector<S> wt(int64_t(9) * Cin * Cout);
    const S* pw = w.data();
    for (int co = 0; co < Cout; ++co)
        for (int ci = 0; ci < Cin; ++ci)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx)
                    wt[(((ky * 3 + kx) * Cin) + ci) * Cout + co] =
                        pw[((co * Cin + ci) * 3 + ky) * 3 + kx];
    TensorT<S> out(Shape{H, W, Cout});
    S* po = out.data();
    const S* pb = b.defined() ? b.data() : nullptr;
    if (MacCounter::enabled()) MacCounter::add(uint64_t(H) * W * Cin * Cout * 9);
    parallel_for(H, [&](int64_t y) {
        for (int xx = 0; xx < W; ++xx) {
            S* orow = po + (y * W + xx) * Cout;
            if (pb)
                std::memcpy(orow, pb, sizeof(S) * Cout);
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const S* src = xp.data() + ((y + ky) * int64_t(Wp) + (xx + kx)) * Cin;
                    const S* wrow = wt.data() + int64_t(ky * 3 + kx) * Cin * Cout;
                    for (int ci = 0; ci < Cin; ++ci) {
                        const S s = src[ci];
                        const S* wc = wrow + int64_t(ci) * Cout;
                        for (int co = 0; co < Cout; ++co) orow[co] += s * wc[co];
                    }
                }
        }
    });
    check_finite(po, out.numel(), "conv3x3");
    auto* tp = TapeT<S>::active();
    int xn = detail::node_on(tp, x), wn = detail::node_on(tp, w),
        bn = b.defined() ? detail::node_on(tp, b) : -1;
    if (detail::track_out(out, tp, {xn, wn, bn})) {
        int on = out.node();
        auto dw = w.storage();
        auto xps = std::make_shared<std::vector<S>>(std::move(xp));
        tp->record([xn, wn, bn, on, H, W, Cin, Cout, Hp, Wp, dw, xps](TapeT<S>& t) {
            const auto& go = t.grad_buf(on);
            if (xn >= 0) {
                auto& gx = t.grad_buf(xn);
                std::vector<S> gxp(int64_t(Hp) * Wp * Cin, S(0));
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx) {
                        const S* grow = go.data() + (int64_t(y) * W + xx) * Cout;
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                S* gsrc = gxp.data() + ((y + ky) * int64_t(Wp) + (xx + kx)) * Cin;
                                for (int ci = 0; ci < Cin; ++ci) {
                                    S acc = 0;
                                    for (int co = 0; co < Cout; ++co)
                                        acc += grow[co] *
                                               (*dw)[((int64_t(co) * Cin + ci) * 3 + ky) * 3 + kx];
                                    gsrc[ci] += acc;
                                }
                            }
                    }
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx)
                        for (int ci = 0; ci < Cin; ++ci)
                            gx[(int64_t(y) * W + xx) * Cin + ci] +=
                                gxp[((y + 1) * int64_t(Wp) + (xx + 1)) * Cin + ci];
            }
            if (wn >= 0) {
                auto& gw = t.grad_buf(wn);
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx) {
                        const S* grow = go.data() + (int64_t(y) * W + xx) * Cout;
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const S* src =
                                    xps->data() + ((y + ky) * int64_t(Wp) + (xx + kx)) * Cin;
                                for (int co = 0; co < Cout; ++co) {
                                    const S g = grow[co];
                                    S* gwr = gw.data() + ((int64_t(co) * Cin) * 3 + ky) * 3 + kx;
                                    for (int ci = 0; ci < Cin; ++ci)
                                        gwr[int64_t(ci) * 9] += g * src[ci];
                                }
                            }
                    }
            }
            if (bn >= 0) {
                auto& gb = t.grad_buf(bn);
                const int64_t hw = int64_t(H) * W;
                for (int64_t p = 0; p < hw; ++p)
                    for (int co = 0; co < Cout; ++co) gb[co] += go[p * Cout + co];
            }
        });
    }
    return out;
}

template <typename S>
struct Conv3x3T {
    TensorT<S> weight;  // [out, in, 3, 3]
    TensorT<S> bias;    // [out]

    static Conv3x3T make(int in, int out, Rng& rng) {
        Conv3x3T c;
        c.weight = TensorT<S>(Shape{out, in, 3, 3});
        const double stdev = std::sqrt(2.0 / (9.0 * in));
        for (int64_t i = 0; i < c.weight.numel(); ++i)
            c.weight.data()[i] = static_cast<S>(rng.normal() * stdev);
        c.bias = TensorT<S>(Shape{out});
        return c;
    }

    TensorT<S> forward(const TensorT<S>& x) const { return conv3x3(x, weight, bias); }

    void register_params(ParamRegistryT<S>& reg, const std::string& prefix) {
        reg.push_back({prefix + ".weight", &weight});
        reg.push_back({prefix + ".bias", &bias});
    }
};

// ---------------------------------------------------------------------------
// layer norm over the channel dim, eps inside the square root
// ---------------------------------------------------------------------------

inline constexpr double kLayerNormEps = 1e-6;

template <typename S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta) {
    const int64_t C = x.dim(-1);
    if (gamma.numel() != C || beta.numel() != C)
        throw ShapeError("layer_norm scale/shift length " + std::to_string(gamma.numel()) +
                         " vs channels " + std::to_string(C));
    const int64_t rows = x.numel() / C;
    TensorT<S> out(x.shape());
    std::vector<S> inv_std(rows), mu(rows);
    const S* px = x.data();
    const S* pg = gamma.data();
    const S* pb = beta.data();
    S* po = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const S* xr = px + r * C;
        S m = 0;
        for (int64_t c = 0; c < C; ++c) m += xr[c];
        m /= static_cast<S>(C);
        S v = 0;
        for (int64_t c = 0; c < C; ++c) v += (xr[c] - m) * (xr[c] - m);
        v /= static_cast<S>(C);
        const S is = S(1) / std::sqrt(v + static_cast<S>(kLayerNormEps));
        mu[r] = m;
        inv_std[r] = is;
        S* yr = po + r * C;
        for (int64_t c = 0; c < C; ++c) yr[c] = (xr[c] - m) * is * pg[c] + pb[c];
    }
    check_finite(po, out.numel(), "layer_norm");
    auto* tp = TapeT<S>::active();
    int xn = detail::node_on(tp, x), gn = detail::node_on(tp, gamma),
        bn = detail::node_on(tp, beta);
    if (detail::track_out(out, tp, {xn, gn, bn})) {
        int on = out.node();
        auto dx = x.storage(), dg = gamma.storage();
        auto mus = std::make_shared<std::vector<S>>(std::move(mu));
        auto iss = std::make_shared<std::vector<S>>(std::move(inv_std));
        tp->record([xn, gn, bn, on, rows, C, dx, dg, mus, iss](TapeT<S>& t) {
            const auto& go = t.grad_buf(on);
            for (int64_t r = 0; r < rows; ++r) {
                const S* xr = dx->data() + r * C;
                const S* gor = go.data() + r * C;
                const S m = (*mus)[r], is = (*iss)[r];
                if (gn >= 0) {
                    auto& gg = t.grad_buf(gn);
                    for (int64_t c = 0; c < C; ++c) gg[c] += gor[c] * (xr[c] - m) * is;
                }
                if (bn >= 0) {
                    auto& gb = t.grad_buf(bn);
                    for (int64_t c = 0; c < C; ++c) gb[c] += gor[c];
                }
                if (xn >= 0) {
                    auto& gx = t.grad_buf(xn);
                    S dsum = 0, dxhsum = 0;
                    for (int64_t c = 0; c < C; ++c) {
                        const S dxh = gor[c] * (*dg)[c];
                        dsum += dxh;
                        dxhsum += dxh * (xr[c] - m) * is;
                    }
                    const S invc = S(1) / static_cast<S>(C);
                    for (int64_t c = 0; c < C; ++c) {
                        const S dxh = gor[c] * (*dg)[c];
                        const S xh = (xr[c] - m) * is;
                        gx[r * C + c] += is * (dxh - dsum * invc - xh * dxhsum * invc);
                    }
                }
            }
        });
    }
    return out;
}

template <typename S>
struct LayerNormT {
    TensorT<S> gamma, beta;

    static LayerNormT make(int c) {
        LayerNormT ln;
        ln.gamma = TensorT<S>::full(Shape{c}, S(1));
        ln.beta = TensorT<S>(Shape{c});
        return ln;
    }
    TensorT<S> forward(const TensorT<S>& x) const { return layer_norm(x, gamma, beta); }
    void register_params(ParamRegistryT<S>& reg, const std::string& prefix) {
        reg.push_back({prefix + ".gamma", &gamma});
        reg.push_back({prefix + ".beta", &beta});
    }
};

// ---------------------------------------------------------------------------
// gelu (erf form)
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> gelu(const TensorT<S>& x) {
    TensorT<S> out(x.shape());
    const int64_t n = x.numel();
    const S* px = x.data();
    S* po = out.data();
    for (int64_t i = 0; i < n; ++i) {
        const double v = px[i];
        po[i] = static_cast<S>(0.5 * v * (1.0 + std::erf(v * 0.7071067811865476)));
    }
    check_finite(po, n, "gelu");
    auto* tp = TapeT<S>::active();
    int xn = detail::node_on(tp, x);
    if (detail::track_out(out, tp, {xn})) {
        int on = out.node();
        auto dx = x.storage();
        tp->record([xn, on, n, dx](TapeT<S>& t) {
            const auto& go = t.grad_buf(on);
            auto& gx = t.grad_buf(xn);
            for (int64_t i = 0; i < n; ++i) {
                const double v = (*dx)[i];
                const double cdf = 0.5 * (1.0 + std::erf(v * 0.7071067811865476));
                const double pdf = 0.3989422804014327 * std::exp(-0.5 * v * v);
                gx[i] += go[i] * static_cast<S>(cdf + v * pdf);
            }
        });
    }
    return out;
}

// two linears around an activation; expansion ratio 1 keeps C unchanged
template <typename S>
struct FFNT {
    LinearT<S> fc1, fc2;

    static FFNT make(int c, int ratio, Rng& rng) {
        FFNT f;
        f.fc1 = LinearT<S>::make(c, c * ratio, true, rng);
        f.fc2 = LinearT<S>::make(c * ratio, c, true, rng);
        return f;
    }
    TensorT<S> forward(const TensorT<S>& x) const { return fc2.forward(gelu(fc1.forward(x))); }
    void register_params(ParamRegistryT<S>& reg, const std::string& prefix) {
        fc1.register_params(reg, prefix + ".fc1");
        fc2.register_params(reg, prefix + ".fc2");
    }
};

// ---------------------------------------------------------------------------
// spatial rearrangements
// ---------------------------------------------------------------------------

namespace detail2 {

// index-map op: out[i] = in[map[i]]; backward scatters. map is a bijection
// for the shuffle/window ops, a surjection is fine for padding.
template <typename S>
TensorT<S> index_map(const TensorT<S>& x, Shape out_shape, std::vector<int64_t> map,
                     const char* opname) {
    TensorT<S> out(std::move(out_shape));
    const S* px = x.data();
    S* po = out.data();
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = px[map[i]];
    check_finite(po, n, opname);
    auto* tp = TapeT<S>::active();
    int xn = promptsr::detail::node_on(tp, x);
    if (promptsr::detail::track_out(out, tp, {xn})) {
        int on = out.node();
        auto mp = std::make_shared<std::vector<int64_t>>(std::move(map));
        tp->record([xn, on, mp, n](TapeT<S>& t) {
            const auto& go = t.grad_buf(on);
            auto& gx = t.grad_buf(xn);
            for (int64_t i = 0; i < n; ++i) gx[(*mp)[i]] += go[i];
        });
    }
    return out;
}

// symmetric (edge-inclusive) reflection of index k into [0, n)
inline int64_t fold_index(int64_t k, int64_t n) {
    if (n == 1) return 0;
    const int64_t p = 2 * n;
    k %= p;
    if (k < 0) k += p;
    return k < n ? k : p - 1 - k;
}

}  // namespace detail2

// [H, W, C*s^2] -> [sH, sW, C]; channel (dy*s+dx)*C + c lands at offset (dy, dx)
template <typename S>
TensorT<S> pixel_shuffle(const TensorT<S>& x, int s) {
    if (x.rank() != 3) throw ShapeError("pixel_shuffle expects [H,W,C], got " + shape_str(x.shape()));
    const int H = x.dim(0), W = x.dim(1), Cs = x.dim(2);
    if (s <= 0) throw ConfigError("pixel_shuffle factor must be positive");
    if (Cs % (s * s) != 0)
        throw ShapeError("pixel_shuffle: " + std::to_string(Cs) + " channels not divisible by " +
                         std::to_string(s * s));
    const int C = Cs / (s * s);
    std::vector<int64_t> map(int64_t(H) * s * W * s * C);
    int64_t i = 0;
    for (int y = 0; y < H * s; ++y)
        for (int xx = 0; xx < W * s; ++xx)
            for (int c = 0; c < C; ++c)
                map[i++] = ((int64_t(y / s) * W + xx / s) * Cs) + ((y % s) * s + (xx % s)) * C + c;
    return detail2::index_map(x, Shape{H * s, W * s, C}, std::move(map), "pixel_shuffle");
}

template <typename S>
TensorT<S> pixel_unshuffle(const TensorT<S>& x, int s) {
    if (x.rank() != 3) throw ShapeError("pixel_unshuffle expects [H,W,C]");
    const int Hs = x.dim(0), Ws = x.dim(1), C = x.dim(2);
    if (s <= 0) throw ConfigError("pixel_unshuffle factor must be positive");
    if (Hs % s != 0 || Ws % s != 0)
        throw ShapeError("pixel_unshuffle: spatial dims not divisible by " + std::to_string(s));
    const int H = Hs / s, W = Ws / s;
    std::vector<int64_t> map(int64_t(H) * W * C * s * s);
    int64_t i = 0;
    for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx)
            for (int dy = 0; dy < s; ++dy)
                for (int dx = 0; dx < s; ++dx)
                    for (int c = 0; c < C; ++c)
                        map[i++] = ((int64_t(y * s + dy) * Ws) + (xx * s + dx)) * C + c;
    return detail2::index_map(x, Shape{H, W, C * s * s}, std::move(map), "pixel_unshuffle");
}

// [H, W, C] -> [nW, w*w, C], windows in raster order, tokens raster inside
template <typename S>
TensorT<S> window_partition(const TensorT<S>& x, int w) {
    if (w <= 0) throw ConfigError("window size must be positive");
    if (x.rank() != 3) throw ShapeError("window_partition expects [H,W,C]");
    const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
    if (H % w != 0 || W % w != 0)
        throw ShapeError("window_partition: " + std::to_string(H) + "x" + std::to_string(W) +
                         " not divisible by window " + std::to_string(w));
    const int ny = H / w, nx = W / w;
    std::vector<int64_t> map(int64_t(H) * W * C);
    int64_t i = 0;
    for (int wy = 0; wy < ny; ++wy)
        for (int wx = 0; wx < nx; ++wx)
            for (int ty = 0; ty < w; ++ty)
                for (int tx = 0; tx < w; ++tx)
                    for (int c = 0; c < C; ++c)
                        map[i++] = ((int64_t(wy * w + ty) * W) + (wx * w + tx)) * C + c;
    return detail2::index_map(x, Shape{ny * nx, w * w, C}, std::move(map), "window_partition");
}

template <typename S>
TensorT<S> window_merge(const TensorT<S>& x, int h, int w_total, int w) {
    if (w <= 0) throw ConfigError("window size must be positive");
    if (x.rank() != 3 || x.dim(1) != w * w)
        throw ShapeError("window_merge expects [nW, w*w, C], got " + shape_str(x.shape()));
    const int C = x.dim(2), nx = w_total / w;
    if (h % w != 0 || w_total % w != 0 || x.dim(0) != (h / w) * nx)
        throw ShapeError("window_merge: window count does not tile " + std::to_string(h) + "x" +
                         std::to_string(w_total));
    std::vector<int64_t> map(int64_t(h) * w_total * C);
    int64_t i = 0;
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w_total; ++xx)
            for (int c = 0; c < C; ++c) {
                const int wi = (y / w) * nx + (xx / w);
                const int ti = (y % w) * w + (xx % w);
                map[i++] = (int64_t(wi) * w * w + ti) * C + c;
            }
    return detail2::index_map(x, Shape{h, w_total, C}, std::move(map), "window_merge");
}

// non-overlapping d x d mean pooling
template <typename S>
TensorT<S> avg_pool_down(const TensorT<S>& x, int d) {
    if (d <= 0) throw ConfigError("downscale factor must be positive");
    if (x.rank() != 3) throw ShapeError("avg_pool_down expects [H,W,C]");
    const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
    if (H % d != 0 || W % d != 0)
        throw ShapeError("avg_pool_down: " + std::to_string(H) + "x" + std::to_string(W) +
                         " not divisible by " + std::to_string(d));
    const int Ho = H / d, Wo = W / d;
    TensorT<S> out(Shape{Ho, Wo, C});
    const S* px = x.data();
    S* po = out.data();
    const S inv = S(1) / static_cast<S>(d * d);
    for (int y = 0; y < Ho; ++y)
        for (int xx = 0; xx < Wo; ++xx)
            for (int c = 0; c < C; ++c) {
                S acc = 0;
                for (int dy = 0; dy < d; ++dy)
                    for (int dx = 0; dx < d; ++dx)
                        acc += px[((int64_t(y * d + dy) * W) + (xx * d + dx)) * C + c];
                po[(int64_t(y) * Wo + xx) * C + c] = acc * inv;
            }
    check_finite(po, out.numel(), "avg_pool_down");
    auto* tp = TapeT<S>::active();
    int xn = detail::node_on(tp, x);
    if (detail::track_out(out, tp, {xn})) {
        int on = out.node();
        tp->record([xn, on, H, W, C, d, Ho, Wo, inv](TapeT<S>& t) {
            const auto& go = t.grad_buf(on);
            auto& gx = t.grad_buf(xn);
            for (int y = 0; y < Ho; ++y)
                for (int xx = 0; xx < Wo; ++xx)
                    for (int c = 0; c < C; ++c) {
                        const S g = go[(int64_t(y) * Wo + xx) * C + c] * inv;
                        for (int dy = 0; dy < d; ++dy)
                            for (int dx = 0; dx < d; ++dx)
                                gx[((int64_t(y * d + dy) * W) + (xx * d + dx)) * C + c] += g;
                    }
        });
    }
    return out;
}

// reflect-pad bottom/right to the requested size
template <typename S>
TensorT<S> pad_reflect_br(const TensorT<S>& x, int h_out, int w_out) {
    if (x.rank() != 3) throw ShapeError("pad_reflect_br expects [H,W,C]");
    const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
    if (h_out < H || w_out < W) throw ShapeError("pad target smaller than input");
    if (h_out == H && w_out == W) return x;
    std::vector<int64_t> map(int64_t(h_out) * w_out * C);
    int64_t i = 0;
    for (int y = 0; y < h_out; ++y) {
        const int64_t sy = detail2::fold_index(y, H);
        for (int xx = 0; xx < w_out; ++xx) {
            const int64_t sx = detail2::fold_index(xx, W);
            for (int c = 0; c < C; ++c) map[i++] = (sy * W + sx) * C + c;
        }
    }
    return detail2::index_map(x, Shape{h_out, w_out, C}, std::move(map), "pad_reflect_br");
}

// top-left crop
template <typename S>
TensorT<S> crop_tl(const TensorT<S>& x, int h_out, int w_out) {
    if (x.rank() != 3) throw ShapeError("crop_tl expects [H,W,C]");
    const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
    if (h_out > H || w_out > W) throw ShapeError("crop target larger than input");
    if (h_out == H && w_out == W) return x;
    std::vector<int64_t> map(int64_t(h_out) * w_out * C);
    int64_t i = 0;
    for (int y = 0; y < h_out; ++y)
        for (int xx = 0; xx < w_out; ++xx)
            for (int c = 0; c < C; ++c) map[i++] = (int64_t(y) * W + xx) * C + c;
    return detail2::index_map(x, Shape{h_out, w_out, C}, std::move(map), "crop_tl");
}

// ---------------------------------------------------------------------------
// relative position bias for one w x w window, one table row per offset
// ---------------------------------------------------------------------------

template <typename S>
struct RelPosBiasT {
    TensorT<S> table;  // [(2w-1)^2, heads]
    int window = 0;
    std::vector<int> index;  // [w^2 * w^2] flat offsets into table

    static RelPosBiasT make(int w, int heads, Rng& rng) {
        RelPosBiasT r;
        r.window = w;
        r.table = TensorT<S>(Shape{(2 * w - 1) * (2 * w - 1), heads});
        for (int64_t i = 0; i < r.table.numel(); ++i)
            r.table.data()[i] = static_cast<S>(rng.trunc_normal(0.02));
        r.index.resize(size_t(w) * w * w * w);
        for (int i = 0; i < w * w; ++i)
            for (int j = 0; j < w * w; ++j) {
                const int dy = i / w - j / w + w - 1;
                const int dx = i % w - j % w + w - 1;
                r.index[size_t(i) * w * w + j] = dy * (2 * w - 1) + dx;
            }
        return r;
    }

    // -> [heads, w^2, w^2]
    TensorT<S> forward() const {
        const int n = window * window;
        const int heads = table.dim(1);
        auto rows = gather_rows(table, index);                 // [n*n, heads]
        auto cube = reshape(rows, Shape{n, n, heads});
        return permute(cube, {2, 0, 1});
    }

    void register_params(ParamRegistryT<S>& reg, const std::string& prefix) {
        reg.push_back({prefix + ".table", &table});
    }
};

}  // namespace promptsr::nn
