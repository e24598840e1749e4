#include "semikan/ops.hpp"

#include "ops_common.hpp"
#include "gemm.hpp"
#include "semikan/threadpool.hpp"

#include <algorithm>
#include <cmath>

namespace semikan {

using detail::cgrad;

namespace {

// out[oy, ox] += kv * in[oy + ky - pad, ox + kx - pad]  for stride 1.
// The x-window is clipped once per row so the inner loop is a clean saxpy.
inline void conv_row_acc(const double* in, double* out, double kv, int64_t H, int64_t W,
                         int64_t oh, int64_t ow, int64_t ky, int64_t kx, int64_t pad) {
    int64_t dy = ky - pad, dx = kx - pad;
    int64_t y0 = std::max<int64_t>(0, -dy), y1 = std::min(oh, H - dy);
    int64_t x0 = std::max<int64_t>(0, -dx), x1 = std::min(ow, W - dx);
    for (int64_t y = y0; y < y1; ++y) {
        const double* src = in + (y + dy) * W + dx;
        double* dst = out + y * ow;
        for (int64_t x = x0; x < x1; ++x) dst[x] += kv * src[x];
    }
}

// dK[ky,kx] += sum_{oy,ox} g[oy,ox] * in[oy+ky-pad, ox+kx-pad]  for stride 1.
inline double conv_row_dot(const double* in, const double* g, int64_t H, int64_t W, int64_t oh,
                           int64_t ow, int64_t ky, int64_t kx, int64_t pad) {
    int64_t dy = ky - pad, dx = kx - pad;
    int64_t y0 = std::max<int64_t>(0, -dy), y1 = std::min(oh, H - dy);
    int64_t x0 = std::max<int64_t>(0, -dx), x1 = std::min(ow, W - dx);
    double acc = 0.0;
    for (int64_t y = y0; y < y1; ++y)
        acc += detail::dot8(g + y * ow + x0, in + (y + dy) * W + dx + x0, x1 - x0);
    return acc;
}

// dIn[oy+ky-pad, ox+kx-pad] += kv * g[oy,ox]  for stride 1 (scatter form).
inline void conv_row_scatter(double* din, const double* g, double kv, int64_t H, int64_t W,
                             int64_t oh, int64_t ow, int64_t ky, int64_t kx, int64_t pad) {
    int64_t dy = ky - pad, dx = kx - pad;
    int64_t y0 = std::max<int64_t>(0, -dy), y1 = std::min(oh, H - dy);
    int64_t x0 = std::max<int64_t>(0, -dx), x1 = std::min(ow, W - dx);
    for (int64_t y = y0; y < y1; ++y) {
        double* dst = din + (y + dy) * W + dx;
        const double* gr = g + y * ow;
        for (int64_t x = x0; x < x1; ++x) dst[x] += kv * gr[x];
    }
}

} // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int64_t stride, int64_t padding) {
    if (input.rank() != 4)
        throw DimensionError("conv2d: input must be [N,C,H,W], got " + shape_str(input.shape()));
    if (kernel.rank() != 4)
        throw DimensionError("conv2d: kernel must be [F,C,kh,kw], got " +
                             shape_str(kernel.shape()));
    if (input.dim(1) != kernel.dim(1))
        throw DimensionError("conv2d: channel axes differ, input axis 1 = " +
                             std::to_string(input.dim(1)) + " vs kernel axis 1 = " +
                             std::to_string(kernel.dim(1)));
    if (stride < 1 || padding < 0) throw ConfigError("conv2d: bad stride/padding");
    int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    int64_t F = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kh > H + 2 * padding || kw > W + 2 * padding)
        throw DimensionError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                             " exceeds padded input " + std::to_string(H + 2 * padding) + "x" +
                             std::to_string(W + 2 * padding));
    int64_t oh = (H + 2 * padding - kh) / stride + 1;
    int64_t ow = (W + 2 * padding - kw) / stride + 1;
    Tensor out = Tensor::zeros({N, F, oh, ow});
    const double* pi = input.ptr();
    const double* pk = kernel.ptr();
    double* po = out.ptr();

    if (stride == 1) {
        ThreadPool::instance().parallel_for(N * F, [&](int64_t b0, int64_t b1) {
            for (int64_t nf = b0; nf < b1; ++nf) {
                int64_t n = nf / F, f = nf % F;
                double* dst = po + (n * F + f) * oh * ow;
                for (int64_t c = 0; c < C; ++c) {
                    const double* src = pi + (n * C + c) * H * W;
                    const double* kfc = pk + (f * C + c) * kh * kw;
                    for (int64_t ky = 0; ky < kh; ++ky)
                        for (int64_t kx = 0; kx < kw; ++kx)
                            conv_row_acc(src, dst, kfc[ky * kw + kx], H, W, oh, ow, ky, kx,
                                         padding);
                }
            }
        });
    } else {
        ThreadPool::instance().parallel_for(N * F, [&](int64_t b0, int64_t b1) {
            for (int64_t nf = b0; nf < b1; ++nf) {
                int64_t n = nf / F, f = nf % F;
                double* dst = po + (n * F + f) * oh * ow;
                for (int64_t oy = 0; oy < oh; ++oy)
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        double acc = 0.0;
                        for (int64_t c = 0; c < C; ++c) {
                            const double* src = pi + (n * C + c) * H * W;
                            const double* kfc = pk + (f * C + c) * kh * kw;
                            for (int64_t ky = 0; ky < kh; ++ky) {
                                int64_t sy = oy * stride + ky - padding;
                                if (sy < 0 || sy >= H) continue;
                                for (int64_t kx = 0; kx < kw; ++kx) {
                                    int64_t sx = ox * stride + kx - padding;
                                    if (sx < 0 || sx >= W) continue;
                                    acc += src[sy * W + sx] * kfc[ky * kw + kx];
                                }
                            }
                        }
                        dst[oy * ow + ox] = acc;
                    }
            }
        });
    }

    bool ni = grad_enabled(input), nk = grad_enabled(kernel);
    if (ni || nk) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [input = input, kernel = kernel, out = out, stride, padding, N, C,
                                 H, W, F, kh, kw, oh, ow, ni, nk]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            const double* pg = g.data();
            if (nk) {
                Tensor km = kernel;
                double* dk = km.grad().data();
                const double* pi2 = input.ptr();
                ThreadPool::instance().parallel_for(F * C, [&](int64_t b0, int64_t b1) {
                    for (int64_t fc = b0; fc < b1; ++fc) {
                        int64_t f = fc / C, c = fc % C;
                        double* dkfc = dk + (f * C + c) * kh * kw;
                        for (int64_t n = 0; n < N; ++n) {
                            const double* src = pi2 + (n * C + c) * H * W;
                            const double* gr = pg + (n * F + f) * oh * ow;
                            if (stride == 1) {
                                for (int64_t ky = 0; ky < kh; ++ky)
                                    for (int64_t kx = 0; kx < kw; ++kx)
                                        dkfc[ky * kw + kx] +=
                                            conv_row_dot(src, gr, H, W, oh, ow, ky, kx, padding);
                            } else {
                                for (int64_t ky = 0; ky < kh; ++ky)
                                    for (int64_t kx = 0; kx < kw; ++kx) {
                                        double acc = 0.0;
                                        for (int64_t oy = 0; oy < oh; ++oy) {
                                            int64_t sy = oy * stride + ky - padding;
                                            if (sy < 0 || sy >= H) continue;
                                            for (int64_t ox = 0; ox < ow; ++ox) {
                                                int64_t sx = ox * stride + kx - padding;
                                                if (sx < 0 || sx >= W) continue;
                                                acc += src[sy * W + sx] * gr[oy * ow + ox];
                                            }
                                        }
                                        dkfc[ky * kw + kx] += acc;
                                    }
                            }
                        }
                    }
                });
            }
            if (ni) {
                Tensor im = input;
                double* di = im.grad().data();
                const double* pk2 = kernel.ptr();
                ThreadPool::instance().parallel_for(N * C, [&](int64_t b0, int64_t b1) {
                    for (int64_t nc = b0; nc < b1; ++nc) {
                        int64_t n = nc / C, c = nc % C;
                        double* dst = di + (n * C + c) * H * W;
                        for (int64_t f = 0; f < F; ++f) {
                            const double* gr = pg + (n * F + f) * oh * ow;
                            const double* kfc = pk2 + (f * C + c) * kh * kw;
                            if (stride == 1) {
                                for (int64_t ky = 0; ky < kh; ++ky)
                                    for (int64_t kx = 0; kx < kw; ++kx)
                                        conv_row_scatter(dst, gr, kfc[ky * kw + kx], H, W, oh, ow,
                                                         ky, kx, padding);
                            } else {
                                for (int64_t oy = 0; oy < oh; ++oy)
                                    for (int64_t ox = 0; ox < ow; ++ox) {
                                        double gv = gr[oy * ow + ox];
                                        for (int64_t ky = 0; ky < kh; ++ky) {
                                            int64_t sy = oy * stride + ky - padding;
                                            if (sy < 0 || sy >= H) continue;
                                            for (int64_t kx = 0; kx < kw; ++kx) {
                                                int64_t sx = ox * stride + kx - padding;
                                                if (sx < 0 || sx >= W) continue;
                                                dst[sy * W + sx] += gv * kfc[ky * kw + kx];
                                            }
                                        }
                                    }
                            }
                        }
                    }
                });
            }
        });
    }
    return out;
}

Tensor transposed_conv2d(const Tensor& input, const Tensor& kernel, int64_t stride) {
    if (input.rank() != 4 || kernel.rank() != 4)
        throw DimensionError("transposed_conv2d: expects input [N,C,H,W], kernel [C,F,kh,kw]");
    if (input.dim(1) != kernel.dim(0))
        throw DimensionError("transposed_conv2d: input channels " + std::to_string(input.dim(1)) +
                             " != kernel axis 0 " + std::to_string(kernel.dim(0)));
    if (stride < 1) throw ConfigError("transposed_conv2d: stride must be >= 1");
    int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    int64_t F = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
    int64_t oh = (H - 1) * stride + kh, ow = (W - 1) * stride + kw;
    Tensor out = Tensor::zeros({N, F, oh, ow});
    const double* pi = input.ptr();
    const double* pk = kernel.ptr();
    double* po = out.ptr();
    ThreadPool::instance().parallel_for(N * F, [&](int64_t b0, int64_t b1) {
        for (int64_t nf = b0; nf < b1; ++nf) {
            int64_t n = nf / F, f = nf % F;
            double* dst = po + (n * F + f) * oh * ow;
            for (int64_t c = 0; c < C; ++c) {
                const double* src = pi + (n * C + c) * H * W;
                const double* kcf = pk + (c * F + f) * kh * kw;
                for (int64_t y = 0; y < H; ++y)
                    for (int64_t x = 0; x < W; ++x) {
                        double v = src[y * W + x];
                        if (v == 0.0) continue;
                        double* base = dst + y * stride * ow + x * stride;
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx)
                                base[ky * ow + kx] += v * kcf[ky * kw + kx];
                    }
            }
        }
    });
    bool ni = grad_enabled(input), nk = grad_enabled(kernel);
    if (ni || nk) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [input = input, kernel = kernel, out = out, stride, N, C, H, W, F,
                                 kh, kw, oh, ow, ni, nk]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            const double* pg = g.data();
            if (ni) {
                Tensor im = input;
                double* di = im.grad().data();
                const double* pk2 = kernel.ptr();
                ThreadPool::instance().parallel_for(N * C, [&](int64_t b0, int64_t b1) {
                    for (int64_t nc = b0; nc < b1; ++nc) {
                        int64_t n = nc / C, c = nc % C;
                        double* dst = di + (n * C + c) * H * W;
                        for (int64_t f = 0; f < F; ++f) {
                            const double* gr = pg + (n * F + f) * oh * ow;
                            const double* kcf = pk2 + (c * F + f) * kh * kw;
                            for (int64_t y = 0; y < H; ++y)
                                for (int64_t x = 0; x < W; ++x) {
                                    const double* base = gr + y * stride * ow + x * stride;
                                    double acc = 0.0;
                                    for (int64_t ky = 0; ky < kh; ++ky)
                                        for (int64_t kx = 0; kx < kw; ++kx)
                                            acc += base[ky * ow + kx] * kcf[ky * kw + kx];
                                    dst[y * W + x] += acc;
                                }
                        }
                    }
                });
            }
            if (nk) {
                Tensor km = kernel;
                double* dk = km.grad().data();
                const double* pi2 = input.ptr();
                ThreadPool::instance().parallel_for(C * F, [&](int64_t b0, int64_t b1) {
                    for (int64_t cf = b0; cf < b1; ++cf) {
                        int64_t c = cf / F, f = cf % F;
                        double* dkcf = dk + (c * F + f) * kh * kw;
                        for (int64_t n = 0; n < N; ++n) {
                            const double* src = pi2 + (n * C + c) * H * W;
                            const double* gr = pg + (n * F + f) * oh * ow;
                            for (int64_t y = 0; y < H; ++y)
                                for (int64_t x = 0; x < W; ++x) {
                                    double v = src[y * W + x];
                                    if (v == 0.0) continue;
                                    const double* base = gr + y * stride * ow + x * stride;
                                    for (int64_t ky = 0; ky < kh; ++ky)
                                        for (int64_t kx = 0; kx < kw; ++kx)
                                            dkcf[ky * kw + kx] += v * base[ky * ow + kx];
                                }
                        }
                    }
                });
            }
        });
    }
    return out;
}

Tensor depthwise_conv2d(const Tensor& input, const Tensor& kernel, int64_t padding) {
    if (input.rank() != 4 || kernel.rank() != 4 || kernel.dim(1) != 1)
        throw DimensionError("depthwise_conv2d: expects input [N,C,H,W], kernel [C,1,kh,kw]");
    if (input.dim(1) != kernel.dim(0))
        throw DimensionError("depthwise_conv2d: channel count mismatch");
    int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    int64_t kh = kernel.dim(2), kw = kernel.dim(3);
    int64_t oh = H + 2 * padding - kh + 1, ow = W + 2 * padding - kw + 1;
    if (oh < 1 || ow < 1) throw DimensionError("depthwise_conv2d: kernel exceeds padded input");
    Tensor out = Tensor::zeros({N, C, oh, ow});
    const double* pi = input.ptr();
    const double* pk = kernel.ptr();
    double* po = out.ptr();
    ThreadPool::instance().parallel_for(N * C, [&](int64_t b0, int64_t b1) {
        for (int64_t nc = b0; nc < b1; ++nc) {
            int64_t c = nc % C;
            const double* src = pi + nc * H * W;
            double* dst = po + nc * oh * ow;
            const double* kc = pk + c * kh * kw;
            for (int64_t ky = 0; ky < kh; ++ky)
                for (int64_t kx = 0; kx < kw; ++kx)
                    conv_row_acc(src, dst, kc[ky * kw + kx], H, W, oh, ow, ky, kx, padding);
        }
    });
    bool ni = grad_enabled(input), nk = grad_enabled(kernel);
    if (ni || nk) {
        out.set_requires_grad(true);
        Tape::current()->record(out,
            [input = input, kernel = kernel, out = out, padding, N, C, H, W, kh, kw, oh, ow, ni,
             nk]() {
                auto g = cgrad(out);
                if (g.empty()) return;
                const double* pg = g.data();
                if (nk) {
                    Tensor km = kernel;
                    double* dk = km.grad().data();
                    const double* pi2 = input.ptr();
                    ThreadPool::instance().parallel_for(C, [&](int64_t c0, int64_t c1) {
                        for (int64_t c = c0; c < c1; ++c) {
                            double* dkc = dk + c * kh * kw;
                            for (int64_t n = 0; n < N; ++n) {
                                const double* src = pi2 + (n * C + c) * H * W;
                                const double* gr = pg + (n * C + c) * oh * ow;
                                for (int64_t ky = 0; ky < kh; ++ky)
                                    for (int64_t kx = 0; kx < kw; ++kx)
                                        dkc[ky * kw + kx] +=
                                            conv_row_dot(src, gr, H, W, oh, ow, ky, kx, padding);
                            }
                        }
                    });
                }
                if (ni) {
                    Tensor im = input;
                    double* di = im.grad().data();
                    const double* pk2 = kernel.ptr();
                    ThreadPool::instance().parallel_for(N * C, [&](int64_t b0, int64_t b1) {
                        for (int64_t nc = b0; nc < b1; ++nc) {
                            int64_t c = nc % C;
                            double* dst = di + nc * H * W;
                            const double* gr = pg + nc * oh * ow;
                            const double* kc = pk2 + c * kh * kw;
                            for (int64_t ky = 0; ky < kh; ++ky)
                                for (int64_t kx = 0; kx < kw; ++kx)
                                    conv_row_scatter(dst, gr, kc[ky * kw + kx], H, W, oh, ow, ky,
                                                     kx, padding);
                        }
                    });
                }
            });
    }
    return out;
}

Tensor avg_pool2d(const Tensor& input, int64_t factor) {
    if (input.rank() != 4) throw DimensionError("avg_pool2d: expects [N,C,H,W]");
    if (factor < 2) throw ConfigError("avg_pool2d: factor must be >= 2");
    int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (H % factor != 0 || W % factor != 0)
        throw DimensionError("avg_pool2d: factor does not divide spatial dims");
    int64_t oh = H / factor, ow = W / factor;
    Tensor out({N, C, oh, ow});
    const double* pi = input.ptr();
    double* po = out.ptr();
    double inv = 1.0 / double(factor * factor);
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const double* src = pi + nc * H * W;
        double* dst = po + nc * oh * ow;
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (int64_t dy = 0; dy < factor; ++dy)
                    for (int64_t dx = 0; dx < factor; ++dx)
                        acc += src[(y * factor + dy) * W + x * factor + dx];
                dst[y * ow + x] = acc * inv;
            }
    }
    if (grad_enabled(input)) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [input = input, out = out, factor, N, C, H, W, oh, ow, inv]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            Tensor im = input;
            double* di = im.grad().data();
            for (int64_t nc = 0; nc < N * C; ++nc) {
                double* dst = di + nc * H * W;
                const double* gr = g.data() + nc * oh * ow;
                for (int64_t y = 0; y < oh; ++y)
                    for (int64_t x = 0; x < ow; ++x) {
                        double gv = gr[y * ow + x] * inv;
                        for (int64_t dy = 0; dy < factor; ++dy)
                            for (int64_t dx = 0; dx < factor; ++dx)
                                dst[(y * factor + dy) * W + x * factor + dx] += gv;
                    }
            }
        });
    }
    return out;
}

Tensor upsample_nearest(const Tensor& input, int64_t factor) {
    if (input.rank() != 4) throw DimensionError("upsample_nearest: expects [N,C,H,W]");
    if (factor < 2) throw ConfigError("upsample_nearest: factor must be >= 2");
    int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    int64_t oh = H * factor, ow = W * factor;
    Tensor out({N, C, oh, ow});
    const double* pi = input.ptr();
    double* po = out.ptr();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const double* src = pi + nc * H * W;
        double* dst = po + nc * oh * ow;
        for (int64_t y = 0; y < oh; ++y) {
            const double* sr = src + (y / factor) * W;
            double* dr = dst + y * ow;
            for (int64_t x = 0; x < ow; ++x) dr[x] = sr[x / factor];
        }
    }
    if (grad_enabled(input)) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [input = input, out = out, factor, N, C, H, W, oh, ow]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            Tensor im = input;
            double* di = im.grad().data();
            for (int64_t nc = 0; nc < N * C; ++nc) {
                double* dst = di + nc * H * W;
                const double* gr = g.data() + nc * oh * ow;
                for (int64_t y = 0; y < oh; ++y)
                    for (int64_t x = 0; x < ow; ++x)
                        dst[(y / factor) * W + x / factor] += gr[y * ow + x];
            }
        });
    }
    return out;
}

namespace {

// align-corners-false source coordinate and interpolation weights.
inline void bilinear_coords(int64_t o, int64_t factor, int64_t limit, int64_t& i0, int64_t& i1,
                            double& w1) {
    double s = (double(o) + 0.5) / double(factor) - 0.5;
    double fl = std::floor(s);
    w1 = s - fl;
    i0 = int64_t(fl);
    i1 = i0 + 1;
    i0 = std::clamp<int64_t>(i0, 0, limit - 1);
    i1 = std::clamp<int64_t>(i1, 0, limit - 1);
}

} // namespace

Tensor upsample_bilinear(const Tensor& input, int64_t factor) {
    if (input.rank() != 4) throw DimensionError("upsample_bilinear: expects [N,C,H,W]");
    if (factor < 2) throw ConfigError("upsample_bilinear: factor must be >= 2");
    int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    int64_t oh = H * factor, ow = W * factor;
    Tensor out({N, C, oh, ow});
    const double* pi = input.ptr();
    double* po = out.ptr();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const double* src = pi + nc * H * W;
        double* dst = po + nc * oh * ow;
        for (int64_t y = 0; y < oh; ++y) {
            int64_t y0, y1;
            double wy;
            bilinear_coords(y, factor, H, y0, y1, wy);
            for (int64_t x = 0; x < ow; ++x) {
                int64_t x0, x1;
                double wx;
                bilinear_coords(x, factor, W, x0, x1, wx);
                double top = src[y0 * W + x0] * (1 - wx) + src[y0 * W + x1] * wx;
                double bot = src[y1 * W + x0] * (1 - wx) + src[y1 * W + x1] * wx;
                dst[y * ow + x] = top * (1 - wy) + bot * wy;
            }
        }
    }
    if (grad_enabled(input)) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [input = input, out = out, factor, N, C, H, W, oh, ow]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            Tensor im = input;
            double* di = im.grad().data();
            for (int64_t nc = 0; nc < N * C; ++nc) {
                double* dst = di + nc * H * W;
                const double* gr = g.data() + nc * oh * ow;
                for (int64_t y = 0; y < oh; ++y) {
                    int64_t y0, y1;
                    double wy;
                    bilinear_coords(y, factor, H, y0, y1, wy);
                    for (int64_t x = 0; x < ow; ++x) {
                        int64_t x0, x1;
                        double wx;
                        bilinear_coords(x, factor, W, x0, x1, wx);
                        double gv = gr[y * ow + x];
                        dst[y0 * W + x0] += gv * (1 - wy) * (1 - wx);
                        dst[y0 * W + x1] += gv * (1 - wy) * wx;
                        dst[y1 * W + x0] += gv * wy * (1 - wx);
                        dst[y1 * W + x1] += gv * wy * wx;
                    }
                }
            }
        });
    }
    return out;
}

} // namespace semikan
