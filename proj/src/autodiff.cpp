#include "transnet/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace transnet::ad {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_same_shape(const Value& a, const Value& b, const char* op) {
    if (a->shape() != b->shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a->shape().str() + " vs " + b->shape().str());
}

Value make_node(Tensor out, std::vector<Value> parents,
                std::function<std::vector<Value>(const Value&)> bw) {
    auto n = std::make_shared<Node>(std::move(out));
    bool rg = false;
    if (g_grad_enabled)
        for (const auto& p : parents)
            if (p && p->requires_grad) rg = true;
    if (rg) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(bw);
    }
    return n;
}

int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Patches matrix for x: rows (n,oy,ox), cols (c,ky,kx).
RowMat im2col(const Tensor& x, int kh, int kw, int stride, int pad, int oh, int ow) {
    const int N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    RowMat P(std::int64_t(N) * oh * ow, std::int64_t(C) * kh * kw);
    P.setZero();
    for (int n = 0; n < N; ++n)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const std::int64_t row = (std::int64_t(n) * oh + oy) * ow + ox;
                const int iy0 = oy * stride - pad, ix0 = ox * stride - pad;
                for (int c = 0; c < C; ++c) {
                    const double* src = &x.data[((std::int64_t(n) * C + c) * H) * W];
                    double* dst = &P(row, std::int64_t(c) * kh * kw);
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = iy0 + ky;
                        if (iy < 0 || iy >= H) {
                            dst += kw;
                            continue;
                        }
                        for (int kx = 0; kx < kw; ++kx, ++dst) {
                            const int ix = ix0 + kx;
                            if (ix >= 0 && ix < W) *dst = src[std::int64_t(iy) * W + ix];
                        }
                    }
                }
            }
    return P;
}

// Scatter-add of a patches matrix back into input shape (adjoint of im2col).
Tensor col2im(const RowMat& P, Shape xs, int kh, int kw, int stride, int pad, int oh, int ow) {
    Tensor x(xs);
    const int N = xs.n, C = xs.c, H = xs.h, W = xs.w;
    for (int n = 0; n < N; ++n)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const std::int64_t row = (std::int64_t(n) * oh + oy) * ow + ox;
                const int iy0 = oy * stride - pad, ix0 = ox * stride - pad;
                for (int c = 0; c < C; ++c) {
                    double* dst = &x.data[((std::int64_t(n) * C + c) * H) * W];
                    const double* src = &P(row, std::int64_t(c) * kh * kw);
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = iy0 + ky;
                        if (iy < 0 || iy >= H) {
                            src += kw;
                            continue;
                        }
                        for (int kx = 0; kx < kw; ++kx, ++src) {
                            const int ix = ix0 + kx;
                            if (ix >= 0 && ix < W) dst[std::int64_t(iy) * W + ix] += *src;
                        }
                    }
                }
            }
    return x;
}

// (N,OC,OH,OW) -> rows (n,oy,ox), cols oc.
RowMat gather_out(const Tensor& y) {
    const int N = y.shape.n, OC = y.shape.c, OH = y.shape.h, OW = y.shape.w;
    RowMat G(std::int64_t(N) * OH * OW, OC);
    for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < OC; ++oc) {
            const double* src = &y.data[((std::int64_t(n) * OC + oc) * OH) * OW];
            for (int i = 0; i < OH * OW; ++i)
                G(std::int64_t(n) * OH * OW + i, oc) = src[i];
        }
    return G;
}

Tensor scatter_out(const RowMat& G, int N, int OC, int OH, int OW) {
    Tensor y(Shape(N, OC, OH, OW));
    for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < OC; ++oc) {
            double* dst = &y.data[((std::int64_t(n) * OC + oc) * OH) * OW];
            for (int i = 0; i < OH * OW; ++i)
                dst[i] = G(std::int64_t(n) * OH * OW + i, oc);
        }
    return y;
}

Value pad_channels(const Value& x, int c0, int c_total);

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

Value constant(Tensor t) { return std::make_shared<Node>(std::move(t)); }

Value leaf(Tensor t, bool requires_grad) {
    auto n = std::make_shared<Node>(std::move(t));
    n->requires_grad = requires_grad;
    return n;
}

Value detach(const Value& x) { return constant(x->value); }

// ---------------- elementwise ----------------

Value add(const Value& a, const Value& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b->value.data[i];
    return make_node(std::move(out), {a, b},
                     [](const Value& g) { return std::vector<Value>{g, g}; });
}

Value sub(const Value& a, const Value& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b->value.data[i];
    return make_node(std::move(out), {a, b},
                     [](const Value& g) { return std::vector<Value>{g, neg(g)}; });
}

Value mul(const Value& a, const Value& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b->value.data[i];
    return make_node(std::move(out), {a, b}, [a, b](const Value& g) {
        return std::vector<Value>{mul(g, b), mul(g, a)};
    });
}

Value neg(const Value& x) {
    Tensor out = x->value;
    for (double& v : out.data) v = -v;
    return make_node(std::move(out), {x},
                     [](const Value& g) { return std::vector<Value>{neg(g)}; });
}

Value scale(const Value& x, double s) {
    Tensor out = x->value;
    for (double& v : out.data) v *= s;
    return make_node(std::move(out), {x},
                     [s](const Value& g) { return std::vector<Value>{scale(g, s)}; });
}

Value add_const(const Value& x, double s) {
    Tensor out = x->value;
    for (double& v : out.data) v += s;
    return make_node(std::move(out), {x},
                     [](const Value& g) { return std::vector<Value>{g}; });
}

Value square(const Value& x) { return mul(x, x); }

Value pow_const(const Value& x, double p) {
    Tensor out = x->value;
    for (double& v : out.data) v = (v == 0.0) ? (p == 0.0 ? 1.0 : 0.0) : std::pow(v, p);
    return make_node(std::move(out), {x}, [x, p](const Value& g) {
        return std::vector<Value>{mul(g, scale(pow_const(x, p - 1.0), p))};
    });
}

Value sigmoid(const Value& x) {
    Tensor out = x->value;
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return make_node(std::move(out), {x}, [x](const Value& g) {
        Value s = sigmoid(x);
        return std::vector<Value>{mul(g, mul(s, add_const(neg(s), 1.0)))};
    });
}

Value leaky_relu(const Value& x, double slope) {
    Tensor out = x->value;
    Tensor mask(out.shape);
    for (size_t i = 0; i < out.data.size(); ++i) {
        if (out.data[i] > 0.0) {
            mask.data[i] = 1.0;
        } else {
            mask.data[i] = slope;
            out.data[i] *= slope;
        }
    }
    return make_node(std::move(out), {x}, [mask](const Value& g) {
        return std::vector<Value>{mul(g, constant(mask))};
    });
}

// ---------------- broadcast / channel ----------------

Value mul_bcast(const Value& x, const Value& m) {
    const Shape& xs = x->shape();
    const Shape& ms = m->shape();
    if (ms.n != xs.n || ms.c != 1 || ms.h != xs.h || ms.w != xs.w)
        throw std::invalid_argument("mul_bcast: mask shape " + ms.str() +
                                    " incompatible with " + xs.str());
    Tensor out = x->value;
    const std::int64_t plane = std::int64_t(xs.h) * xs.w;
    for (int n = 0; n < xs.n; ++n) {
        const double* mm = &m->value.data[std::int64_t(n) * plane];
        for (int c = 0; c < xs.c; ++c) {
            double* o = &out.data[(std::int64_t(n) * xs.c + c) * plane];
            for (std::int64_t i = 0; i < plane; ++i) o[i] *= mm[i];
        }
    }
    return make_node(std::move(out), {x, m}, [x, m](const Value& g) {
        return std::vector<Value>{mul_bcast(g, m), sum_channels(mul(g, x))};
    });
}

Value sum_channels(const Value& x) {
    const Shape& s = x->shape();
    Tensor out(Shape(s.n, 1, s.h, s.w));
    const std::int64_t plane = std::int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const double* src = &x->value.data[(std::int64_t(n) * s.c + c) * plane];
            double* dst = &out.data[std::int64_t(n) * plane];
            for (std::int64_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
    return make_node(std::move(out), {x}, [c = s.c](const Value& g) {
        return std::vector<Value>{repeat_channels(g, c)};
    });
}

Value repeat_channels(const Value& x, int c) {
    const Shape& s = x->shape();
    if (s.c != 1) throw std::invalid_argument("repeat_channels: input must have 1 channel");
    Tensor out(Shape(s.n, c, s.h, s.w));
    const std::int64_t plane = std::int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
        const double* src = &x->value.data[std::int64_t(n) * plane];
        for (int cc = 0; cc < c; ++cc) {
            double* dst = &out.data[(std::int64_t(n) * c + cc) * plane];
            for (std::int64_t i = 0; i < plane; ++i) dst[i] = src[i];
        }
    }
    return make_node(std::move(out), {x}, [](const Value& g) {
        return std::vector<Value>{sum_channels(g)};
    });
}

Value concat_channels(const std::vector<Value>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: empty");
    const Shape& s0 = xs[0]->shape();
    int ctot = 0;
    for (const auto& x : xs) {
        const Shape& s = x->shape();
        if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
            throw std::invalid_argument("concat_channels: incompatible shapes");
        ctot += s.c;
    }
    Tensor out(Shape(s0.n, ctot, s0.h, s0.w));
    const std::int64_t plane = std::int64_t(s0.h) * s0.w;
    int coff = 0;
    std::vector<int> offsets, widths;
    for (const auto& x : xs) {
        const Shape& s = x->shape();
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
                const double* src = &x->value.data[(std::int64_t(n) * s.c + c) * plane];
                double* dst = &out.data[(std::int64_t(n) * ctot + coff + c) * plane];
                for (std::int64_t i = 0; i < plane; ++i) dst[i] = src[i];
            }
        offsets.push_back(coff);
        widths.push_back(s.c);
        coff += s.c;
    }
    return make_node(std::move(out), xs, [offsets, widths](const Value& g) {
        std::vector<Value> pg;
        for (size_t i = 0; i < offsets.size(); ++i)
            pg.push_back(slice_channels(g, offsets[i], offsets[i] + widths[i]));
        return pg;
    });
}

Value slice_channels(const Value& x, int c0, int c1) {
    const Shape& s = x->shape();
    if (c0 < 0 || c1 > s.c || c0 >= c1)
        throw std::invalid_argument("slice_channels: bad range");
    Tensor out(Shape(s.n, c1 - c0, s.h, s.w));
    const std::int64_t plane = std::int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
        for (int c = c0; c < c1; ++c) {
            const double* src = &x->value.data[(std::int64_t(n) * s.c + c) * plane];
            double* dst = &out.data[(std::int64_t(n) * (c1 - c0) + c - c0) * plane];
            for (std::int64_t i = 0; i < plane; ++i) dst[i] = src[i];
        }
    return make_node(std::move(out), {x}, [c0, ct = s.c](const Value& g) {
        return std::vector<Value>{pad_channels(g, c0, ct)};
    });
}

namespace {
// Zero-pad a channel slice back into a c_total-channel tensor (adjoint of
// slice_channels).
Value pad_channels(const Value& x, int c0, int c_total) {
    const Shape& s = x->shape();
    Tensor out(Shape(s.n, c_total, s.h, s.w));
    const std::int64_t plane = std::int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const double* src = &x->value.data[(std::int64_t(n) * s.c + c) * plane];
            double* dst = &out.data[(std::int64_t(n) * c_total + c0 + c) * plane];
            for (std::int64_t i = 0; i < plane; ++i) dst[i] = src[i];
        }
    return make_node(std::move(out), {x}, [c0, cw = s.c](const Value& g) {
        return std::vector<Value>{slice_channels(g, c0, c0 + cw)};
    });
}
}  // namespace

// ---------------- reductions ----------------

Value sum_all(const Value& x) {
    Tensor out = Tensor::scalar(x->value.sum());
    return make_node(std::move(out), {x}, [s = x->shape()](const Value& g) {
        return std::vector<Value>{broadcast_scalar(g, s)};
    });
}

Value mean_all(const Value& x) {
    return scale(sum_all(x), 1.0 / double(x->value.size()));
}

Value broadcast_scalar(const Value& s, Shape shape) {
    if (s->value.size() != 1) throw std::invalid_argument("broadcast_scalar: non-scalar");
    Tensor out = Tensor::full(shape, s->value.data[0]);
    return make_node(std::move(out), {s}, [](const Value& g) {
        return std::vector<Value>{sum_all(g)};
    });
}

Value sum_chw(const Value& x) {
    const Shape& s = x->shape();
    Tensor out(Shape(s.n, 1, 1, 1));
    const std::int64_t per = std::int64_t(s.c) * s.h * s.w;
    for (int n = 0; n < s.n; ++n) {
        double acc = 0.0;
        const double* src = &x->value.data[std::int64_t(n) * per];
        for (std::int64_t i = 0; i < per; ++i) acc += src[i];
        out.data[n] = acc;
    }
    return make_node(std::move(out), {x}, [s](const Value& g) {
        return std::vector<Value>{repeat_chw(g, s)};
    });
}

Value repeat_chw(const Value& x, Shape shape) {
    const Shape& s = x->shape();
    if (s.c != 1 || s.h != 1 || s.w != 1 || s.n != shape.n)
        throw std::invalid_argument("repeat_chw: bad shapes");
    Tensor out(shape);
    const std::int64_t per = std::int64_t(shape.c) * shape.h * shape.w;
    for (int n = 0; n < shape.n; ++n) {
        double v = x->value.data[n];
        double* dst = &out.data[std::int64_t(n) * per];
        for (std::int64_t i = 0; i < per; ++i) dst[i] = v;
    }
    return make_node(std::move(out), {x}, [](const Value& g) {
        return std::vector<Value>{sum_chw(g)};
    });
}

Value sum_hw(const Value& x) {
    const Shape& s = x->shape();
    Tensor out(Shape(s.n, s.c, 1, 1));
    const std::int64_t plane = std::int64_t(s.h) * s.w;
    for (int nc = 0; nc < s.n * s.c; ++nc) {
        double acc = 0.0;
        const double* src = &x->value.data[std::int64_t(nc) * plane];
        for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
        out.data[nc] = acc;
    }
    return make_node(std::move(out), {x}, [s](const Value& g) {
        return std::vector<Value>{repeat_hw(g, s)};
    });
}

Value repeat_hw(const Value& x, Shape shape) {
    const Shape& s = x->shape();
    if (s.h != 1 || s.w != 1 || s.n != shape.n || s.c != shape.c)
        throw std::invalid_argument("repeat_hw: bad shapes");
    Tensor out(shape);
    const std::int64_t plane = std::int64_t(shape.h) * shape.w;
    for (int nc = 0; nc < shape.n * shape.c; ++nc) {
        double v = x->value.data[nc];
        double* dst = &out.data[std::int64_t(nc) * plane];
        for (std::int64_t i = 0; i < plane; ++i) dst[i] = v;
    }
    return make_node(std::move(out), {x}, [](const Value& g) {
        return std::vector<Value>{sum_hw(g)};
    });
}

Value sum_nhw(const Value& x) {
    const Shape& s = x->shape();
    Tensor out(Shape(1, s.c, 1, 1));
    const std::int64_t plane = std::int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            double acc = 0.0;
            const double* src = &x->value.data[(std::int64_t(n) * s.c + c) * plane];
            for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
            out.data[c] += acc;
        }
    return make_node(std::move(out), {x}, [s](const Value& g) {
        return std::vector<Value>{repeat_nhw(g, s)};
    });
}

Value repeat_nhw(const Value& x, Shape shape) {
    const Shape& s = x->shape();
    if (s.n != 1 || s.h != 1 || s.w != 1 || s.c != shape.c)
        throw std::invalid_argument("repeat_nhw: bad shapes");
    Tensor out(shape);
    const std::int64_t plane = std::int64_t(shape.h) * shape.w;
    for (int n = 0; n < shape.n; ++n)
        for (int c = 0; c < shape.c; ++c) {
            double v = x->value.data[c];
            double* dst = &out.data[(std::int64_t(n) * shape.c + c) * plane];
            for (std::int64_t i = 0; i < plane; ++i) dst[i] = v;
        }
    return make_node(std::move(out), {x}, [](const Value& g) {
        return std::vector<Value>{sum_nhw(g)};
    });
}

// ---------------- convolution ----------------

Value conv_fwd(const Value& x, const Value& w, int stride, int pad) {
    const Shape& xs = x->shape();
    const Shape& ws = w->shape();
    if (xs.c != ws.c)
        throw std::invalid_argument("conv_fwd: channel mismatch");
    const int oh = conv_out_dim(xs.h, ws.h, stride, pad);
    const int ow = conv_out_dim(xs.w, ws.w, stride, pad);
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv_fwd: empty output");

    RowMat P = im2col(x->value, ws.h, ws.w, stride, pad, oh, ow);
    Eigen::Map<const RowMat> W(w->value.data.data(), ws.n, std::int64_t(ws.c) * ws.h * ws.w);
    RowMat Y = P * W.transpose();
    Tensor out = scatter_out(Y, xs.n, ws.n, oh, ow);
    return make_node(std::move(out), {x, w}, [x, w, xs, ws, stride, pad](const Value& g) {
        return std::vector<Value>{conv_dx(g, w, xs, stride, pad),
                                  conv_dw(x, g, ws, stride, pad)};
    });
}

Value conv_dx(const Value& g, const Value& w, Shape xshape, int stride, int pad) {
    const Shape& gs = g->shape();
    const Shape& ws = w->shape();
    if (gs.c != ws.n) throw std::invalid_argument("conv_dx: channel mismatch");
    const int oh = gs.h, ow = gs.w;
    RowMat G = gather_out(g->value);
    Eigen::Map<const RowMat> W(w->value.data.data(), ws.n, std::int64_t(ws.c) * ws.h * ws.w);
    RowMat Pg = G * W;
    Tensor out = col2im(Pg, xshape, ws.h, ws.w, stride, pad, oh, ow);
    return make_node(std::move(out), {g, w}, [g, w, ws, stride, pad](const Value& u) {
        return std::vector<Value>{conv_fwd(u, w, stride, pad),
                                  conv_dw(u, g, ws, stride, pad)};
    });
}

Value conv_dw(const Value& x, const Value& g, Shape wshape, int stride, int pad) {
    const Shape& xs = x->shape();
    const Shape& gs = g->shape();
    if (xs.c != wshape.c || gs.c != wshape.n || xs.n != gs.n)
        throw std::invalid_argument("conv_dw: shape mismatch");
    const int oh = gs.h, ow = gs.w;
    RowMat P = im2col(x->value, wshape.h, wshape.w, stride, pad, oh, ow);
    RowMat G = gather_out(g->value);
    RowMat Wg = G.transpose() * P;
    Tensor out(wshape);
    for (std::int64_t i = 0; i < out.size(); ++i)
        out.data[i] = Wg(i / (std::int64_t(wshape.c) * wshape.h * wshape.w),
                         i % (std::int64_t(wshape.c) * wshape.h * wshape.w));
    return make_node(std::move(out), {x, g}, [x, g, xs, stride, pad](const Value& u) {
        return std::vector<Value>{conv_dx(g, u, xs, stride, pad),
                                  conv_fwd(x, u, stride, pad)};
    });
}

Value add_bias(const Value& x, const Value& b) {
    const Shape& s = x->shape();
    const Shape& bs = b->shape();
    if (bs.n != 1 || bs.c != s.c || bs.h != 1 || bs.w != 1)
        throw std::invalid_argument("add_bias: bias must be (1,C,1,1)");
    Tensor out = x->value;
    const std::int64_t plane = std::int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            double v = b->value.data[c];
            double* dst = &out.data[(std::int64_t(n) * s.c + c) * plane];
            for (std::int64_t i = 0; i < plane; ++i) dst[i] += v;
        }
    return make_node(std::move(out), {x, b}, [](const Value& g) {
        return std::vector<Value>{g, sum_nhw(g)};
    });
}

Value conv2d(const Value& x, const Value& w, const Value& b, int stride, int pad) {
    return add_bias(conv_fwd(x, w, stride, pad), b);
}

// ---------------- resampling ----------------

Value upsample2_nearest(const Value& x) {
    const Shape& s = x->shape();
    Tensor out(Shape(s.n, s.c, s.h * 2, s.w * 2));
    for (int nc = 0; nc < s.n * s.c; ++nc) {
        const double* src = &x->value.data[std::int64_t(nc) * s.h * s.w];
        double* dst = &out.data[std::int64_t(nc) * s.h * s.w * 4];
        for (int y = 0; y < s.h; ++y)
            for (int xq = 0; xq < s.w; ++xq) {
                double v = src[std::int64_t(y) * s.w + xq];
                dst[std::int64_t(2 * y) * 2 * s.w + 2 * xq] = v;
                dst[std::int64_t(2 * y) * 2 * s.w + 2 * xq + 1] = v;
                dst[std::int64_t(2 * y + 1) * 2 * s.w + 2 * xq] = v;
                dst[std::int64_t(2 * y + 1) * 2 * s.w + 2 * xq + 1] = v;
            }
    }
    return make_node(std::move(out), {x}, [](const Value& g) {
        return std::vector<Value>{downsample2_sum(g)};
    });
}

Value downsample2_sum(const Value& x) {
    const Shape& s = x->shape();
    if (s.h % 2 || s.w % 2) throw std::invalid_argument("downsample2_sum: odd size");
    Tensor out(Shape(s.n, s.c, s.h / 2, s.w / 2));
    for (int nc = 0; nc < s.n * s.c; ++nc) {
        const double* src = &x->value.data[std::int64_t(nc) * s.h * s.w];
        double* dst = &out.data[std::int64_t(nc) * (s.h / 2) * (s.w / 2)];
        for (int y = 0; y < s.h / 2; ++y)
            for (int xq = 0; xq < s.w / 2; ++xq)
                dst[std::int64_t(y) * (s.w / 2) + xq] =
                    src[std::int64_t(2 * y) * s.w + 2 * xq] +
                    src[std::int64_t(2 * y) * s.w + 2 * xq + 1] +
                    src[std::int64_t(2 * y + 1) * s.w + 2 * xq] +
                    src[std::int64_t(2 * y + 1) * s.w + 2 * xq + 1];
    }
    return make_node(std::move(out), {x}, [](const Value& g) {
        return std::vector<Value>{upsample2_nearest(g)};
    });
}

namespace {
const std::array<double, 6>& mat_for(const std::vector<std::array<double, 6>>& mats, int n) {
    return mats.size() == 1 ? mats[0] : mats[size_t(n)];
}
}  // namespace

Value warp_affine(const Value& x, const std::vector<std::array<double, 6>>& mats) {
    const Shape& s = x->shape();
    if (mats.size() != 1 && int(mats.size()) != s.n)
        throw std::invalid_argument("warp_affine: need 1 or N matrices");
    Tensor out(s);
    const int H = s.h, W = s.w;
    for (int n = 0; n < s.n; ++n) {
        const auto& A = mat_for(mats, n);
        for (int oy = 0; oy < H; ++oy)
            for (int ox = 0; ox < W; ++ox) {
                const double ny = (2.0 * oy + 1.0) / H - 1.0;
                const double nx = (2.0 * ox + 1.0) / W - 1.0;
                const double iy = A[0] * ny + A[1] * nx + A[2];
                const double ix = A[3] * ny + A[4] * nx + A[5];
                const double fy = (iy + 1.0) * H / 2.0 - 0.5;
                const double fx = (ix + 1.0) * W / 2.0 - 0.5;
                const int y0 = int(std::floor(fy)), x0 = int(std::floor(fx));
                const double wy = fy - y0, wx = fx - x0;
                for (int c = 0; c < s.c; ++c) {
                    const double* src = &x->value.data[((std::int64_t(n) * s.c + c) * H) * W];
                    auto px = [&](int yy, int xx) -> double {
                        if (yy < 0 || yy >= H || xx < 0 || xx >= W) return 0.0;
                        return src[std::int64_t(yy) * W + xx];
                    };
                    out.at(n, c, oy, ox) = (1 - wy) * (1 - wx) * px(y0, x0) +
                                           (1 - wy) * wx * px(y0, x0 + 1) +
                                           wy * (1 - wx) * px(y0 + 1, x0) +
                                           wy * wx * px(y0 + 1, x0 + 1);
                }
            }
    }
    return make_node(std::move(out), {x}, [mats, s](const Value& g) {
        return std::vector<Value>{warp_affine_adjoint(g, mats, s)};
    });
}

Value warp_affine_adjoint(const Value& g, const std::vector<std::array<double, 6>>& mats,
                          Shape xshape) {
    const Shape& s = g->shape();
    if (!(s == xshape)) throw std::invalid_argument("warp_affine_adjoint: shape mismatch");
    Tensor out(xshape);
    const int H = s.h, W = s.w;
    for (int n = 0; n < s.n; ++n) {
        const auto& A = mat_for(mats, n);
        for (int oy = 0; oy < H; ++oy)
            for (int ox = 0; ox < W; ++ox) {
                const double ny = (2.0 * oy + 1.0) / H - 1.0;
                const double nx = (2.0 * ox + 1.0) / W - 1.0;
                const double iy = A[0] * ny + A[1] * nx + A[2];
                const double ix = A[3] * ny + A[4] * nx + A[5];
                const double fy = (iy + 1.0) * H / 2.0 - 0.5;
                const double fx = (ix + 1.0) * W / 2.0 - 0.5;
                const int y0 = int(std::floor(fy)), x0 = int(std::floor(fx));
                const double wy = fy - y0, wx = fx - x0;
                for (int c = 0; c < s.c; ++c) {
                    double* dst = &out.data[((std::int64_t(n) * s.c + c) * H) * W];
                    const double gv = g->value.at(n, c, oy, ox);
                    auto acc = [&](int yy, int xx, double wgt) {
                        if (yy < 0 || yy >= H || xx < 0 || xx >= W) return;
                        dst[std::int64_t(yy) * W + xx] += wgt * gv;
                    };
                    acc(y0, x0, (1 - wy) * (1 - wx));
                    acc(y0, x0 + 1, (1 - wy) * wx);
                    acc(y0 + 1, x0, wy * (1 - wx));
                    acc(y0 + 1, x0 + 1, wy * wx);
                }
            }
    }
    return make_node(std::move(out), {g}, [mats](const Value& u) {
        return std::vector<Value>{warp_affine(u, mats)};
    });
}

// ---------------- backward ----------------

Value GradMap::at(const Value& x) const {
    auto it = grads.find(x.get());
    if (it != grads.end()) return it->second;
    return constant(Tensor::zeros(x->shape()));
}

GradMap backward(const Value& root, bool create_graph) {
    if (root->value.size() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    GradMap gm;
    if (!root->requires_grad) return gm;

    // Iterative post-order topo sort over the requires_grad subgraph.
    std::vector<const Node*> topo;
    std::unordered_set<const Node*> visited;
    std::vector<std::pair<const Node*, size_t>> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            const Node* p = node->parents[idx++].get();
            if (p && p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    std::unique_ptr<NoGradGuard> guard;
    if (!create_graph) guard = std::make_unique<NoGradGuard>();

    gm.grads[root.get()] = constant(Tensor::scalar(1.0));
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        const Node* node = *it;
        auto git = gm.grads.find(node);
        if (git == gm.grads.end() || !node->backward_fn) continue;
        std::vector<Value> pg = node->backward_fn(git->second);
        for (size_t i = 0; i < node->parents.size(); ++i) {
            const Node* p = node->parents[i].get();
            if (!p || !p->requires_grad || !pg[i]) continue;
            auto pit = gm.grads.find(p);
            if (pit == gm.grads.end())
                gm.grads[p] = pg[i];
            else
                pit->second = add(pit->second, pg[i]);
        }
    }
    return gm;
}

}  // namespace transnet::ad
