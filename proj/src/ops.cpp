#include "hafuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hafuse/fault.hpp"
#include "hafuse/sobel_core.hpp"

namespace hafuse::ag {

namespace {

template <typename S>
Tape<S>* same_tape(const char* op, std::initializer_list<TensorRef<S>> refs) {
    Tape<S>* t = nullptr;
    for (const auto& r : refs) {
        if (!r.valid()) continue;
        if (t == nullptr) t = r.tape();
        else if (r.tape() != t) throw ContractError(std::string(op) + ": operands live on different tapes");
    }
    if (t == nullptr) throw ContractError(std::string(op) + ": no valid operand");
    return t;
}

int64_t conv_out_dim(const char* op, int64_t n, int64_t k, int stride, int padding) {
    int64_t num = n + 2 * padding - k;
    if (num < 0)
        throw GeometryError(std::string(op) + ": kernel " + std::to_string(k) +
                            " exceeds padded input " + std::to_string(n + 2 * padding));
    return num / stride + 1;
}

} // namespace

template <typename S>
TensorRef<S> conv2d(TensorRef<S> x, TensorRef<S> w, TensorRef<S> bias, int stride, int padding) {
    Tape<S>* t = same_tape<S>("conv2d", {x, w, bias});
    if (stride < 1) throw ParameterError("conv2d: stride must be >= 1");
    if (padding < 0) throw ParameterError("conv2d: padding must be >= 0");
    const Shape xs = x.shape();
    const Shape ws = w.shape();
    if (xs.c != ws.c)
        throw DimensionError("conv2d: input channels " + std::to_string(xs.c) +
                             " != kernel channels " + std::to_string(ws.c));
    if (bias.valid()) {
        const Shape bs = bias.shape();
        if (!(bs.b == 1 && bs.c == ws.b && bs.h == 1 && bs.w == 1))
            throw DimensionError("conv2d: bias must be (1," + std::to_string(ws.b) + ",1,1), got " +
                                 to_string(bs));
    }
    const int64_t OH = conv_out_dim("conv2d", xs.h, ws.h, stride, padding);
    const int64_t OW = conv_out_dim("conv2d", xs.w, ws.w, stride, padding);
    const Shape os{xs.b, ws.b, OH, OW};

    const auto& xd = t->rec(x.id()).data;
    const auto& wd = t->rec(w.id()).data;
    const S* bd = bias.valid() ? t->rec(bias.id()).data.data() : nullptr;
    std::vector<S> out(static_cast<size_t>(os.count()));

    const int64_t C = xs.c, H = xs.h, W = xs.w, KH = ws.h, KW = ws.w;
    for (int64_t b = 0; b < xs.b; ++b) {
        for (int64_t oc = 0; oc < ws.b; ++oc) {
            S* orow = out.data() + ((b * ws.b + oc) * OH) * OW;
            const S bias_v = bd ? bd[oc] : S(0);
            for (int64_t oh = 0; oh < OH; ++oh) {
                const int64_t ih0 = oh * stride - padding;
                const int64_t khlo = std::max<int64_t>(0, -ih0);
                const int64_t khhi = std::min<int64_t>(KH, H - ih0);
                for (int64_t ow = 0; ow < OW; ++ow) {
                    const int64_t iw0 = ow * stride - padding;
                    const int64_t kwlo = std::max<int64_t>(0, -iw0);
                    const int64_t kwhi = std::min<int64_t>(KW, W - iw0);
                    S acc = bias_v;
                    for (int64_t ic = 0; ic < C; ++ic) {
                        const S* xbase = xd.data() + ((b * C + ic) * H) * W;
                        const S* wbase = wd.data() + ((oc * C + ic) * KH) * KW;
                        for (int64_t kh = khlo; kh < khhi; ++kh) {
                            const S* xrow = xbase + (ih0 + kh) * W + iw0;
                            const S* wrow = wbase + kh * KW;
                            for (int64_t kw = kwlo; kw < kwhi; ++kw) acc += xrow[kw] * wrow[kw];
                        }
                    }
                    orow[oh * OW + ow] = acc;
                }
            }
        }
    }

    const int32_t xid = x.id(), wid = w.id();
    const int32_t bid = bias.valid() ? bias.id() : -1;
    std::vector<int32_t> ins{xid, wid};
    if (bid >= 0) ins.push_back(bid);
    return t->emit("conv2d", os, std::move(out), std::move(ins),
                   [xid, wid, bid, xs, ws, os, stride, padding](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        const auto& xd2 = tt.rec(xid).data;
        const auto& wd2 = tt.rec(wid).data;
        auto& gx = tt.grad_buf(xid);
        auto& gw = tt.grad_buf(wid);
        S* gb = bid >= 0 ? tt.grad_buf(bid).data() : nullptr;
        const int64_t C = xs.c, H = xs.h, W = xs.w, KH = ws.h, KW = ws.w;
        const int64_t OH = os.h, OW = os.w;
        for (int64_t b = 0; b < xs.b; ++b) {
            for (int64_t oc = 0; oc < ws.b; ++oc) {
                const S* grow = gout.data() + ((b * ws.b + oc) * OH) * OW;
                for (int64_t oh = 0; oh < OH; ++oh) {
                    const int64_t ih0 = oh * stride - padding;
                    const int64_t khlo = std::max<int64_t>(0, -ih0);
                    const int64_t khhi = std::min<int64_t>(KH, H - ih0);
                    for (int64_t ow = 0; ow < OW; ++ow) {
                        const S g = grow[oh * OW + ow];
                        if (g == S(0)) continue;
                        const int64_t iw0 = ow * stride - padding;
                        const int64_t kwlo = std::max<int64_t>(0, -iw0);
                        const int64_t kwhi = std::min<int64_t>(KW, W - iw0);
                        if (gb) gb[oc] += g;
                        for (int64_t ic = 0; ic < C; ++ic) {
                            const int64_t xbase = ((b * C + ic) * H) * W;
                            const int64_t wbase = ((oc * C + ic) * KH) * KW;
                            for (int64_t kh = khlo; kh < khhi; ++kh) {
                                const int64_t xrow = xbase + (ih0 + kh) * W + iw0;
                                const int64_t wrow = wbase + kh * KW;
                                for (int64_t kw = kwlo; kw < kwhi; ++kw) {
                                    gw[wrow + kw] += g * xd2[xrow + kw];
                                    gx[xrow + kw] += g * wd2[wrow + kw];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

template <typename S>
TensorRef<S> conv1d_channels(TensorRef<S> v, TensorRef<S> w) {
    Tape<S>* t = same_tape<S>("conv1d_channels", {v, w});
    const Shape vs = v.shape();
    const Shape ws = w.shape();
    if (vs.h != 1 || vs.w != 1)
        throw DimensionError("conv1d_channels: input must be (b,c,1,1), got " + to_string(vs));
    if (ws.b != 1 || ws.c != 1 || ws.h != 1)
        throw DimensionError("conv1d_channels: kernel must be (1,1,1,k), got " + to_string(ws));
    const int64_t K = ws.w;
    if (K % 2 == 0 || K < 1)
        throw ParameterError("conv1d_channels: kernel length must be odd, got " + std::to_string(K));
    const int64_t C = vs.c, pad = (K - 1) / 2;

    const auto& vd = t->rec(v.id()).data;
    const auto& wd = t->rec(w.id()).data;
    std::vector<S> out(static_cast<size_t>(vs.count()));
    for (int64_t b = 0; b < vs.b; ++b) {
        const S* vi = vd.data() + b * C;
        S* oi = out.data() + b * C;
        for (int64_t c = 0; c < C; ++c) {
            S acc = S(0);
            for (int64_t k = 0; k < K; ++k) {
                const int64_t src = c + k - pad;
                if (src < 0 || src >= C) continue;
                acc += wd[k] * vi[src];
            }
            oi[c] = acc;
        }
    }

    const int32_t vid = v.id(), wid = w.id();
    return t->emit("conv1d_channels", vs, std::move(out), {vid, wid},
                   [vid, wid, vs, K, pad](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        const auto& vd2 = tt.rec(vid).data;
        const auto& wd2 = tt.rec(wid).data;
        auto& gv = tt.grad_buf(vid);
        auto& gw = tt.grad_buf(wid);
        const int64_t C = vs.c;
        for (int64_t b = 0; b < vs.b; ++b) {
            for (int64_t c = 0; c < C; ++c) {
                const S g = gout[b * C + c];
                for (int64_t k = 0; k < K; ++k) {
                    const int64_t src = c + k - pad;
                    if (src < 0 || src >= C) continue;
                    gw[k] += g * vd2[b * C + src];
                    gv[b * C + src] += g * wd2[k];
                }
            }
        }
    });
}

template <typename S>
TensorRef<S> pool2d(TensorRef<S> x, PoolKind kind, int k, int stride) {
    Tape<S>* t = same_tape<S>("pool2d", {x});
    if (k < 1 || stride < 1) throw ParameterError("pool2d: kernel and stride must be >= 1");
    const Shape xs = x.shape();
    if (xs.h < k || xs.w < k)
        throw GeometryError("pool2d: window " + std::to_string(k) + " exceeds input " + to_string(xs));
    const int64_t OH = (xs.h - k) / stride + 1;
    const int64_t OW = (xs.w - k) / stride + 1;
    const Shape os{xs.b, xs.c, OH, OW};

    const auto& xd = t->rec(x.id()).data;
    std::vector<S> out(static_cast<size_t>(os.count()));
    std::vector<int64_t> argmax;
    if (kind == PoolKind::max) argmax.resize(out.size());

    const int64_t H = xs.h, W = xs.w, BC = xs.b * xs.c;
    for (int64_t bc = 0; bc < BC; ++bc) {
        const S* plane = xd.data() + bc * H * W;
        for (int64_t oh = 0; oh < OH; ++oh) {
            for (int64_t ow = 0; ow < OW; ++ow) {
                const int64_t y0 = oh * stride, x0 = ow * stride;
                const size_t oi = static_cast<size_t>((bc * OH + oh) * OW + ow);
                if (kind == PoolKind::max) {
                    S best = plane[y0 * W + x0];
                    int64_t best_at = y0 * W + x0;
                    for (int64_t dy = 0; dy < k; ++dy)
                        for (int64_t dx = 0; dx < k; ++dx) {
                            const int64_t at = (y0 + dy) * W + (x0 + dx);
                            if (plane[at] > best) { best = plane[at]; best_at = at; }
                        }
                    out[oi] = best;
                    argmax[oi] = bc * H * W + best_at;
                } else {
                    S acc = S(0);
                    for (int64_t dy = 0; dy < k; ++dy)
                        for (int64_t dx = 0; dx < k; ++dx) acc += plane[(y0 + dy) * W + (x0 + dx)];
                    out[oi] = acc / static_cast<S>(k * k);
                }
            }
        }
    }

    const int32_t xid = x.id();
    if (kind == PoolKind::max) {
        return t->emit("pool2d_max", os, std::move(out), {xid},
                       [xid, argmax](Tape<S>& tt, int32_t out_id) {
            const auto& gout = tt.rec(out_id).grad;
            auto& gx = tt.grad_buf(xid);
            for (size_t i = 0; i < gout.size(); ++i) gx[static_cast<size_t>(argmax[i])] += gout[i];
        });
    }
    return t->emit("pool2d_avg", os, std::move(out), {xid},
                   [xid, xs, os, k, stride](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        auto& gx = tt.grad_buf(xid);
        const int64_t H = xs.h, W = xs.w, OH = os.h, OW = os.w, BC = xs.b * xs.c;
        const S inv = S(1) / static_cast<S>(k * k);
        for (int64_t bc = 0; bc < BC; ++bc) {
            for (int64_t oh = 0; oh < OH; ++oh)
                for (int64_t ow = 0; ow < OW; ++ow) {
                    const S g = gout[static_cast<size_t>((bc * OH + oh) * OW + ow)] * inv;
                    const int64_t y0 = oh * stride, x0 = ow * stride;
                    for (int64_t dy = 0; dy < k; ++dy)
                        for (int64_t dx = 0; dx < k; ++dx)
                            gx[static_cast<size_t>(bc * H * W + (y0 + dy) * W + (x0 + dx))] += g;
                }
        }
    });
}

template <typename S>
TensorRef<S> global_pool(TensorRef<S> x, PoolKind kind) {
    Tape<S>* t = same_tape<S>("global_pool", {x});
    const Shape xs = x.shape();
    const Shape os{xs.b, xs.c, 1, 1};
    const auto& xd = t->rec(x.id()).data;
    const int64_t plane = xs.plane(), BC = xs.b * xs.c;
    std::vector<S> out(static_cast<size_t>(BC));
    std::vector<int64_t> argmax;
    if (kind == PoolKind::max) argmax.resize(out.size());

    for (int64_t bc = 0; bc < BC; ++bc) {
        const S* p = xd.data() + bc * plane;
        if (kind == PoolKind::max) {
            S best = p[0];
            int64_t best_at = 0;
            for (int64_t i = 1; i < plane; ++i)
                if (p[i] > best) { best = p[i]; best_at = i; }
            out[static_cast<size_t>(bc)] = best;
            argmax[static_cast<size_t>(bc)] = bc * plane + best_at;
        } else {
            S acc = S(0);
            for (int64_t i = 0; i < plane; ++i) acc += p[i];
            out[static_cast<size_t>(bc)] = acc / static_cast<S>(plane);
        }
    }

    const int32_t xid = x.id();
    if (kind == PoolKind::max) {
        return t->emit("global_pool_max", os, std::move(out), {xid},
                       [xid, argmax](Tape<S>& tt, int32_t out_id) {
            const auto& gout = tt.rec(out_id).grad;
            auto& gx = tt.grad_buf(xid);
            for (size_t i = 0; i < gout.size(); ++i) gx[static_cast<size_t>(argmax[i])] += gout[i];
        });
    }
    return t->emit("global_pool_avg", os, std::move(out), {xid},
                   [xid, plane](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        auto& gx = tt.grad_buf(xid);
        const S inv = S(1) / static_cast<S>(plane);
        for (size_t i = 0; i < gout.size(); ++i) {
            const S g = gout[i] * inv;
            S* dst = gx.data() + static_cast<int64_t>(i) * plane;
            for (int64_t j = 0; j < plane; ++j) dst[j] += g;
        }
    });
}

template <typename S>
TensorRef<S> upsample_nearest(TensorRef<S> x, int factor) {
    Tape<S>* t = same_tape<S>("upsample_nearest", {x});
    if (factor < 1) throw ParameterError("upsample_nearest: factor must be >= 1");
    const Shape xs = x.shape();
    const Shape os{xs.b, xs.c, xs.h * factor, xs.w * factor};
    const auto& xd = t->rec(x.id()).data;
    std::vector<S> out(static_cast<size_t>(os.count()));
    const int64_t H = xs.h, W = xs.w, OW = os.w, BC = xs.b * xs.c;
    for (int64_t bc = 0; bc < BC; ++bc) {
        const S* src = xd.data() + bc * H * W;
        S* dst = out.data() + bc * os.h * OW;
        for (int64_t y = 0; y < os.h; ++y) {
            const S* srow = src + (y / factor) * W;
            for (int64_t x2 = 0; x2 < OW; ++x2) dst[y * OW + x2] = srow[x2 / factor];
        }
    }
    const int32_t xid = x.id();
    return t->emit("upsample_nearest", os, std::move(out), {xid},
                   [xid, xs, os, factor](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        auto& gx = tt.grad_buf(xid);
        const int64_t H = xs.h, W = xs.w, OW = os.w, BC = xs.b * xs.c;
        for (int64_t bc = 0; bc < BC; ++bc) {
            const S* gsrc = gout.data() + bc * os.h * OW;
            S* gdst = gx.data() + bc * H * W;
            for (int64_t y = 0; y < os.h; ++y)
                for (int64_t x2 = 0; x2 < OW; ++x2)
                    gdst[(y / factor) * W + (x2 / factor)] += gsrc[y * OW + x2];
        }
    });
}

template <typename S>
TensorRef<S> dense(TensorRef<S> x, TensorRef<S> w, TensorRef<S> bias) {
    Tape<S>* t = same_tape<S>("dense", {x, w, bias});
    const Shape xs = x.shape();
    const Shape ws = w.shape();
    const int64_t N = xs.c * xs.h * xs.w;
    if (ws.b != 1 || ws.c != 1)
        throw DimensionError("dense: weight must be (1,1,m,n), got " + to_string(ws));
    if (ws.w != N)
        throw DimensionError("dense: weight expects " + std::to_string(ws.w) +
                             " inputs, flattened item has " + std::to_string(N));
    const int64_t M = ws.h;
    if (bias.valid()) {
        const Shape bs = bias.shape();
        if (!(bs.b == 1 && bs.c == M && bs.h == 1 && bs.w == 1))
            throw DimensionError("dense: bias must be (1," + std::to_string(M) + ",1,1)");
    }
    const Shape os{xs.b, M, 1, 1};
    const auto& xd = t->rec(x.id()).data;
    const auto& wd = t->rec(w.id()).data;
    const S* bd = bias.valid() ? t->rec(bias.id()).data.data() : nullptr;
    std::vector<S> out(static_cast<size_t>(os.count()));
    for (int64_t b = 0; b < xs.b; ++b) {
        const S* xi = xd.data() + b * N;
        for (int64_t m = 0; m < M; ++m) {
            const S* wr = wd.data() + m * N;
            S acc = bd ? bd[m] : S(0);
            for (int64_t n = 0; n < N; ++n) acc += wr[n] * xi[n];
            out[static_cast<size_t>(b * M + m)] = acc;
        }
    }
    const int32_t xid = x.id(), wid = w.id();
    const int32_t bid = bias.valid() ? bias.id() : -1;
    std::vector<int32_t> ins{xid, wid};
    if (bid >= 0) ins.push_back(bid);
    return t->emit("dense", os, std::move(out), std::move(ins),
                   [xid, wid, bid, xs, N, M](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        const auto& xd2 = tt.rec(xid).data;
        const auto& wd2 = tt.rec(wid).data;
        auto& gx = tt.grad_buf(xid);
        auto& gw = tt.grad_buf(wid);
        S* gb = bid >= 0 ? tt.grad_buf(bid).data() : nullptr;
        for (int64_t b = 0; b < xs.b; ++b) {
            const S* xi = xd2.data() + b * N;
            S* gxi = gx.data() + b * N;
            for (int64_t m = 0; m < M; ++m) {
                const S g = gout[static_cast<size_t>(b * M + m)];
                if (g == S(0)) continue;
                if (gb) gb[m] += g;
                const S* wr = wd2.data() + m * N;
                S* gwr = gw.data() + m * N;
                for (int64_t n = 0; n < N; ++n) {
                    gwr[n] += g * xi[n];
                    gxi[n] += g * wr[n];
                }
            }
        }
    });
}

template <typename S>
TensorRef<S> leaky_relu(TensorRef<S> x, double slope) {
    Tape<S>* t = same_tape<S>("leaky_relu", {x});
    const auto& xd = t->rec(x.id()).data;
    std::vector<S> out(xd.size());
    const S a = static_cast<S>(slope);
    for (size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] > S(0) ? xd[i] : a * xd[i];
    const int32_t xid = x.id();
    return t->emit("leaky_relu", x.shape(), std::move(out), {xid},
                   [xid, a](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        const auto& xd2 = tt.rec(xid).data;
        auto& gx = tt.grad_buf(xid);
        for (size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i] * (xd2[i] > S(0) ? S(1) : a);
    });
}

template <typename S>
TensorRef<S> tanh_act(TensorRef<S> x) {
    Tape<S>* t = same_tape<S>("tanh", {x});
    const auto& xd = t->rec(x.id()).data;
    std::vector<S> out(xd.size());
    for (size_t i = 0; i < xd.size(); ++i) out[i] = std::tanh(xd[i]);
    const int32_t xid = x.id();
    return t->emit("tanh", x.shape(), std::move(out), {xid},
                   [xid](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        const auto& y = tt.rec(out_id).data;
        auto& gx = tt.grad_buf(xid);
        for (size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i] * (S(1) - y[i] * y[i]);
    });
}

template <typename S>
TensorRef<S> sigmoid(TensorRef<S> x) {
    Tape<S>* t = same_tape<S>("sigmoid", {x});
    const auto& xd = t->rec(x.id()).data;
    std::vector<S> out(xd.size());
    for (size_t i = 0; i < xd.size(); ++i) out[i] = S(1) / (S(1) + std::exp(-xd[i]));
    const int32_t xid = x.id();
    return t->emit("sigmoid", x.shape(), std::move(out), {xid},
                   [xid](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        const auto& y = tt.rec(out_id).data;
        auto& gx = tt.grad_buf(xid);
        for (size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i] * y[i] * (S(1) - y[i]);
    });
}

template <typename S>
TensorRef<S> abs_val(TensorRef<S> x) {
    Tape<S>* t = same_tape<S>("abs", {x});
    const auto& xd = t->rec(x.id()).data;
    std::vector<S> out(xd.size());
    for (size_t i = 0; i < xd.size(); ++i) out[i] = std::abs(xd[i]);
    const int32_t xid = x.id();
    return t->emit("abs", x.shape(), std::move(out), {xid},
                   [xid](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        const auto& xd2 = tt.rec(xid).data;
        auto& gx = tt.grad_buf(xid);
        // subgradient 0 at the kink
        for (size_t i = 0; i < gout.size(); ++i)
            gx[i] += gout[i] * (xd2[i] > S(0) ? S(1) : (xd2[i] < S(0) ? S(-1) : S(0)));
    });
}

template <typename S>
TensorRef<S> concat_channels(const std::vector<TensorRef<S>>& xs) {
    if (xs.empty()) throw ParameterError("concat_channels: need at least one tensor");
    Tape<S>* t = xs[0].tape();
    if (t == nullptr) throw ContractError("concat_channels: invalid operand");
    const Shape first = xs[0].shape();
    int64_t ctotal = 0;
    for (const auto& r : xs) {
        if (r.tape() != t) throw ContractError("concat_channels: operands live on different tapes");
        const Shape s = r.shape();
        if (s.b != first.b || s.h != first.h || s.w != first.w)
            throw DimensionError("concat_channels: batch/spatial mismatch: " + to_string(first) +
                                 " vs " + to_string(s));
        ctotal += s.c;
    }
    const Shape os{first.b, ctotal, first.h, first.w};
    const int64_t plane = first.plane();
    std::vector<S> out(static_cast<size_t>(os.count()));
    std::vector<int32_t> ins;
    std::vector<int64_t> chans;
    for (const auto& r : xs) {
        ins.push_back(r.id());
        chans.push_back(r.shape().c);
    }
    for (int64_t b = 0; b < os.b; ++b) {
        int64_t cbase = 0;
        for (size_t i = 0; i < xs.size(); ++i) {
            const auto& src = t->rec(ins[i]).data;
            const int64_t ci = chans[i];
            std::copy(src.begin() + b * ci * plane, src.begin() + (b + 1) * ci * plane,
                      out.begin() + (b * ctotal + cbase) * plane);
            cbase += ci;
        }
    }
    auto ins_copy = ins;
    return t->emit("concat_channels", os, std::move(out), std::move(ins_copy),
                   [ins, chans, os, plane](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        for (int64_t b = 0; b < os.b; ++b) {
            int64_t cbase = 0;
            for (size_t i = 0; i < ins.size(); ++i) {
                auto& gx = tt.grad_buf(ins[i]);
                const int64_t ci = chans[i];
                const S* src = gout.data() + (b * os.c + cbase) * plane;
                S* dst = gx.data() + b * ci * plane;
                for (int64_t j = 0; j < ci * plane; ++j) dst[j] += src[j];
                cbase += ci;
            }
        }
    });
}

namespace {

// Validates that b broadcasts over a and returns true when broadcasting (as
// opposed to identical shapes) is in play.
template <typename S>
bool broadcast_mode(const char* op, const Shape& as, const Shape& bs) {
    if (as == bs) return false;
    const bool ok = bs.b == as.b && bs.h == 1 && bs.w == 1 && (bs.c == as.c || bs.c == 1);
    if (!ok)
        throw DimensionError(std::string(op) + ": shapes " + to_string(as) + " and " +
                             to_string(bs) + " are not broadcast-compatible");
    return true;
}

// Index of the broadcast operand's element feeding a's linear index i.
struct BcMap {
    int64_t c_a, plane, c_b;
    int64_t operator()(int64_t i) const {
        const int64_t bi = i / (c_a * plane);
        const int64_t ci = (i / plane) % c_a;
        return bi * c_b + (c_b == 1 ? 0 : ci);
    }
};

} // namespace

template <typename S>
static TensorRef<S> binary_elementwise(const char* name, TensorRef<S> a, TensorRef<S> b,
                                       S (*fwd)(S, S), S (*da)(S, S), S (*db)(S, S)) {
    Tape<S>* t = same_tape<S>(name, {a, b});
    const Shape as = a.shape(), bs = b.shape();
    const bool bc = broadcast_mode<S>(name, as, bs);
    const auto& ad = t->rec(a.id()).data;
    const auto& bd = t->rec(b.id()).data;
    std::vector<S> out(ad.size());
    const BcMap map{as.c, as.plane(), bs.c};
    if (!bc) {
        for (size_t i = 0; i < ad.size(); ++i) out[i] = fwd(ad[i], bd[i]);
    } else {
        for (int64_t i = 0; i < as.count(); ++i)
            out[static_cast<size_t>(i)] = fwd(ad[static_cast<size_t>(i)], bd[static_cast<size_t>(map(i))]);
    }
    const int32_t aid = a.id(), bid = b.id();
    return t->emit(name, as, std::move(out), {aid, bid},
                   [aid, bid, bc, map, da, db](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        const auto& ad2 = tt.rec(aid).data;
        const auto& bd2 = tt.rec(bid).data;
        auto& ga = tt.grad_buf(aid);
        auto& gb = tt.grad_buf(bid);
        for (size_t i = 0; i < gout.size(); ++i) {
            const size_t j = bc ? static_cast<size_t>(map(static_cast<int64_t>(i))) : i;
            ga[i] += gout[i] * da(ad2[i], bd2[j]);
            gb[j] += gout[i] * db(ad2[i], bd2[j]);
        }
    });
}

template <typename S>
TensorRef<S> add(TensorRef<S> a, TensorRef<S> b) {
    return binary_elementwise<S>("add", a, b,
        [](S x, S y) { return x + y; },
        [](S, S) { return S(1); },
        [](S, S) { return S(1); });
}

template <typename S>
TensorRef<S> sub(TensorRef<S> a, TensorRef<S> b) {
    return binary_elementwise<S>("sub", a, b,
        [](S x, S y) { return x - y; },
        [](S, S) { return S(1); },
        [](S, S) { return S(-1); });
}

template <typename S>
TensorRef<S> mul(TensorRef<S> a, TensorRef<S> b) {
    return binary_elementwise<S>("mul", a, b,
        [](S x, S y) { return x * y; },
        [](S, S y) { return y; },
        [](S x, S) { return x; });
}

template <typename S>
TensorRef<S> div_eps(TensorRef<S> a, TensorRef<S> b, double eps) {
    Tape<S>* t = same_tape<S>("div_eps", {a, b});
    if (!(eps > 0)) throw ParameterError("div_eps: eps must be positive");
    const Shape as = a.shape(), bs = b.shape();
    const bool bc = broadcast_mode<S>("div_eps", as, bs);
    const auto& ad = t->rec(a.id()).data;
    const auto& bd = t->rec(b.id()).data;
    const S e = static_cast<S>(eps);
    // sign-preserving clamp with sign(0) treated as +1
    auto clamp = [e](S v) { return v >= S(0) ? std::max(v, e) : std::min(v, -e); };
    std::vector<S> out(ad.size());
    const BcMap map{as.c, as.plane(), bs.c};
    for (int64_t i = 0; i < as.count(); ++i) {
        const size_t j = static_cast<size_t>(bc ? map(i) : i);
        out[static_cast<size_t>(i)] = ad[static_cast<size_t>(i)] / clamp(bd[j]);
    }
    const int32_t aid = a.id(), bid = b.id();
    return t->emit("div_eps", as, std::move(out), {aid, bid},
                   [aid, bid, bc, map, e, clamp](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        const auto& ad2 = tt.rec(aid).data;
        const auto& bd2 = tt.rec(bid).data;
        auto& ga = tt.grad_buf(aid);
        auto& gb = tt.grad_buf(bid);
        for (size_t i = 0; i < gout.size(); ++i) {
            const size_t j = bc ? static_cast<size_t>(map(static_cast<int64_t>(i))) : i;
            const S bv = bd2[j];
            const S d = clamp(bv);
            ga[i] += gout[i] / d;
            // clamped region: denominator locally constant in b
            if (bv > e || bv < -e) gb[j] += gout[i] * (-ad2[i] / (bv * bv));
        }
    });
}

template <typename S>
TensorRef<S> scale(TensorRef<S> x, double c) {
    Tape<S>* t = same_tape<S>("scale", {x});
    const auto& xd = t->rec(x.id()).data;
    const S k = static_cast<S>(c);
    std::vector<S> out(xd.size());
    for (size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] * k;
    const int32_t xid = x.id();
    return t->emit("scale", x.shape(), std::move(out), {xid},
                   [xid, k](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        auto& gx = tt.grad_buf(xid);
        for (size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i] * k;
    });
}

template <typename S>
TensorRef<S> add_const(TensorRef<S> x, double c) {
    Tape<S>* t = same_tape<S>("add_const", {x});
    const auto& xd = t->rec(x.id()).data;
    const S k = static_cast<S>(c);
    std::vector<S> out(xd.size());
    for (size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] + k;
    const int32_t xid = x.id();
    return t->emit("add_const", x.shape(), std::move(out), {xid},
                   [xid](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        auto& gx = tt.grad_buf(xid);
        for (size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i];
    });
}

template <typename S>
TensorRef<S> channel_max_map(TensorRef<S> x) {
    Tape<S>* t = same_tape<S>("channel_max_map", {x});
    const Shape xs = x.shape();
    const Shape os{xs.b, 1, xs.h, xs.w};
    const auto& xd = t->rec(x.id()).data;
    const int64_t plane = xs.plane(), C = xs.c;
    std::vector<S> out(static_cast<size_t>(os.count()));
    std::vector<int64_t> argc(out.size());
    for (int64_t b = 0; b < xs.b; ++b) {
        const S* base = xd.data() + b * C * plane;
        for (int64_t p = 0; p < plane; ++p) {
            S best = base[p];
            int64_t bc = 0;
            for (int64_t c = 1; c < C; ++c)
                if (base[c * plane + p] > best) { best = base[c * plane + p]; bc = c; }
            out[static_cast<size_t>(b * plane + p)] = best;
            argc[static_cast<size_t>(b * plane + p)] = b * C * plane + bc * plane + p;
        }
    }
    const int32_t xid = x.id();
    return t->emit("channel_max_map", os, std::move(out), {xid},
                   [xid, argc](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        auto& gx = tt.grad_buf(xid);
        for (size_t i = 0; i < gout.size(); ++i) gx[static_cast<size_t>(argc[i])] += gout[i];
    });
}

template <typename S>
TensorRef<S> sobel_gradient(TensorRef<S> x) {
    Tape<S>* t = same_tape<S>("sobel_gradient", {x});
    const Shape xs = x.shape();
    if (xs.c != 1)
        throw DimensionError("sobel_gradient: input must be single-channel, got " + to_string(xs));
    if (xs.h < 3 || xs.w < 3)
        throw GeometryError("sobel_gradient: input must be at least 3x3, got " + to_string(xs));
    const auto& xd = t->rec(x.id()).data;
    const int64_t plane = xs.plane();
    std::vector<S> gx_all(xd.size()), gy_all(xd.size()), out(xd.size());
    for (int64_t b = 0; b < xs.b; ++b) {
        sobel_plane(xd.data() + b * plane, xs.h, xs.w, gx_all.data() + b * plane,
                    gy_all.data() + b * plane);
    }
    sobel_magnitude_from_xy(gx_all.data(), gy_all.data(), static_cast<int64_t>(xd.size()), out.data());

    const int32_t xid = x.id();
    return t->emit("sobel_gradient", xs, std::move(out), {xid},
                   [xid, xs, gx_all, gy_all](Tape<S>& tt, int32_t out_id) {
        const auto& gout = tt.rec(out_id).grad;
        const auto& mag = tt.rec(out_id).data;
        auto& gin = tt.grad_buf(xid);
        const int64_t H = xs.h, W = xs.w, plane = H * W;
        const S flip = fault::enabled("sobel-backward-sign") ? S(-1) : S(1);
        for (int64_t b = 0; b < xs.b; ++b) {
            const S* gx = gx_all.data() + b * plane;
            const S* gy = gy_all.data() + b * plane;
            const S* go = gout.data() + b * plane;
            const S* m = mag.data() + b * plane;
            S* gi = gin.data() + b * plane;
            for (int64_t y = 0; y < H; ++y) {
                for (int64_t x2 = 0; x2 < W; ++x2) {
                    const int64_t o = y * W + x2;
                    if (go[o] == S(0)) continue;
                    const S cx = flip * go[o] * gx[o] / m[o];
                    const S cy = flip * go[o] * gy[o] / m[o];
                    for (int ky = 0; ky < 3; ++ky) {
                        const int64_t iy = y + ky - 1;
                        if (iy < 0 || iy >= H) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int64_t ix = x2 + kx - 1;
                            if (ix < 0 || ix >= W) continue;
                            gi[iy * W + ix] += cx * static_cast<S>(kSobelX[ky][kx]) +
                                               cy * static_cast<S>(kSobelY[ky][kx]);
                        }
                    }
                }
            }
        }
    });
}

template <typename S>
TensorRef<S> sum(TensorRef<S> x) {
    Tape<S>* t = same_tape<S>("sum", {x});
    const auto& xd = t->rec(x.id()).data;
    S acc = S(0);
    for (S v : xd) acc += v;
    const int32_t xid = x.id();
    return t->emit("sum", Shape{1, 1, 1, 1}, {acc}, {xid},
                   [xid](Tape<S>& tt, int32_t out_id) {
        const S g = tt.rec(out_id).grad[0];
        auto& gx = tt.grad_buf(xid);
        for (auto& v : gx) v += g;
    });
}

template <typename S>
TensorRef<S> mean(TensorRef<S> x) {
    Tape<S>* t = same_tape<S>("mean", {x});
    const auto& xd = t->rec(x.id()).data;
    S acc = S(0);
    for (S v : xd) acc += v;
    const S inv = S(1) / static_cast<S>(xd.size());
    const int32_t xid = x.id();
    return t->emit("mean", Shape{1, 1, 1, 1}, {acc * inv}, {xid},
                   [xid, inv](Tape<S>& tt, int32_t out_id) {
        const S g = tt.rec(out_id).grad[0] * inv;
        auto& gx = tt.grad_buf(xid);
        for (auto& v : gx) v += g;
    });
}

#define HAFUSE_INSTANTIATE_OPS(S)                                                              \
    template TensorRef<S> conv2d<S>(TensorRef<S>, TensorRef<S>, TensorRef<S>, int, int);       \
    template TensorRef<S> conv1d_channels<S>(TensorRef<S>, TensorRef<S>);                      \
    template TensorRef<S> pool2d<S>(TensorRef<S>, PoolKind, int, int);                         \
    template TensorRef<S> global_pool<S>(TensorRef<S>, PoolKind);                              \
    template TensorRef<S> upsample_nearest<S>(TensorRef<S>, int);                              \
    template TensorRef<S> dense<S>(TensorRef<S>, TensorRef<S>, TensorRef<S>);                  \
    template TensorRef<S> leaky_relu<S>(TensorRef<S>, double);                                 \
    template TensorRef<S> tanh_act<S>(TensorRef<S>);                                           \
    template TensorRef<S> sigmoid<S>(TensorRef<S>);                                            \
    template TensorRef<S> abs_val<S>(TensorRef<S>);                                            \
    template TensorRef<S> concat_channels<S>(const std::vector<TensorRef<S>>&);                \
    template TensorRef<S> add<S>(TensorRef<S>, TensorRef<S>);                                  \
    template TensorRef<S> sub<S>(TensorRef<S>, TensorRef<S>);                                  \
    template TensorRef<S> mul<S>(TensorRef<S>, TensorRef<S>);                                  \
    template TensorRef<S> div_eps<S>(TensorRef<S>, TensorRef<S>, double);                      \
    template TensorRef<S> scale<S>(TensorRef<S>, double);                                      \
    template TensorRef<S> add_const<S>(TensorRef<S>, double);                                  \
    template TensorRef<S> channel_max_map<S>(TensorRef<S>);                                    \
    template TensorRef<S> sobel_gradient<S>(TensorRef<S>);                                     \
    template TensorRef<S> sum<S>(TensorRef<S>);                                                \
    template TensorRef<S> mean<S>(TensorRef<S>);

HAFUSE_INSTANTIATE_OPS(float)
HAFUSE_INSTANTIATE_OPS(double)

} // namespace hafuse::ag
