#include "semikan/ops.hpp"

#include "ops_common.hpp"
#include "semikan/threadpool.hpp"

#include <cmath>

namespace semikan {

using detail::cgrad;

Tensor batch_norm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                    Tensor& running_mean, Tensor& running_var, bool training, double eps,
                    double momentum) {
    if (input.rank() != 4) throw DimensionError("batch_norm2d: expects [N,C,H,W]");
    int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C ||
        running_var.numel() != C)
        throw DimensionError("batch_norm2d: parameter length != channel count " +
                             std::to_string(C));
    int64_t plane = H * W;
    int64_t count = N * plane;
    if (training && count == 1)
        throw ContractError("batch_norm2d: batch statistics are degenerate with a single value "
                            "per channel (N*H*W == 1)");

    Tensor out(input.shape());
    const double* pi = input.ptr();
    const double* pg = gamma.ptr();
    const double* pb = beta.ptr();
    double* po = out.ptr();

    // Per-channel statistics used for normalization (batch stats when
    // training, running stats otherwise). Kept for the backward pass.
    std::vector<double> mu(static_cast<size_t>(C), 0.0), var(static_cast<size_t>(C), 0.0);
    if (training) {
        ThreadPool::instance().parallel_for(C, [&](int64_t c0, int64_t c1) {
            for (int64_t c = c0; c < c1; ++c) {
                double m = 0.0;
                for (int64_t n = 0; n < N; ++n) {
                    const double* src = pi + (n * C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) m += src[i];
                }
                m /= double(count);
                double v = 0.0;
                for (int64_t n = 0; n < N; ++n) {
                    const double* src = pi + (n * C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                        double d = src[i] - m;
                        v += d * d;
                    }
                }
                v /= double(count); // biased, used for normalization
                mu[size_t(c)] = m;
                var[size_t(c)] = v;
            }
        });
        // Running stats keep the unbiased variance, PyTorch-style.
        double* rm = running_mean.ptr();
        double* rv = running_var.ptr();
        double unbias = count > 1 ? double(count) / double(count - 1) : 1.0;
        for (int64_t c = 0; c < C; ++c) {
            rm[c] = (1.0 - momentum) * rm[c] + momentum * mu[size_t(c)];
            rv[c] = (1.0 - momentum) * rv[c] + momentum * var[size_t(c)] * unbias;
        }
    } else {
        const double* rm = running_mean.ptr();
        const double* rv = running_var.ptr();
        for (int64_t c = 0; c < C; ++c) {
            mu[size_t(c)] = rm[c];
            var[size_t(c)] = rv[c];
        }
    }

    std::vector<double> inv_std(static_cast<size_t>(C), 0.0);
    for (int64_t c = 0; c < C; ++c) inv_std[size_t(c)] = 1.0 / std::sqrt(var[size_t(c)] + eps);

    ThreadPool::instance().parallel_for(N * C, [&](int64_t b0, int64_t b1) {
        for (int64_t nc = b0; nc < b1; ++nc) {
            int64_t c = nc % C;
            double scale = pg[c] * inv_std[size_t(c)];
            double shift = pb[c] - mu[size_t(c)] * scale;
            const double* src = pi + nc * plane;
            double* dst = po + nc * plane;
            for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] * scale + shift;
        }
    });

    bool ni = grad_enabled(input), ng = grad_enabled(gamma), nb = grad_enabled(beta);
    if (ni || ng || nb) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [input = input, gamma = gamma, beta = beta, out = out, mu, inv_std,
                                 training, N, C, plane, count, ni, ng, nb]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            const double* pgr = g.data();
            const double* pi2 = input.ptr();
            const double* pw = gamma.ptr();
            Tensor im = input, gm = gamma, bm = beta;
            double* di = ni ? im.grad().data() : nullptr;
            double* dg = ng ? gm.grad().data() : nullptr;
            double* db = nb ? bm.grad().data() : nullptr;
            ThreadPool::instance().parallel_for(C, [&](int64_t c0, int64_t c1) {
                for (int64_t c = c0; c < c1; ++c) {
                    double istd = inv_std[size_t(c)];
                    double m = mu[size_t(c)];
                    // sum_g = sum dY, sum_gx = sum dY * xhat
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (int64_t n = 0; n < N; ++n) {
                        const double* gr = pgr + (n * C + c) * plane;
                        const double* src = pi2 + (n * C + c) * plane;
                        for (int64_t i = 0; i < plane; ++i) {
                            double xh = (src[i] - m) * istd;
                            sum_g += gr[i];
                            sum_gx += gr[i] * xh;
                        }
                    }
                    if (dg) dg[c] += sum_gx;
                    if (db) db[c] += sum_g;
                    if (di) {
                        double w = pw[c] * istd;
                        if (training) {
                            double mg = sum_g / double(count);
                            double mgx = sum_gx / double(count);
                            for (int64_t n = 0; n < N; ++n) {
                                const double* gr = pgr + (n * C + c) * plane;
                                const double* src = pi2 + (n * C + c) * plane;
                                double* dst = di + (n * C + c) * plane;
                                for (int64_t i = 0; i < plane; ++i) {
                                    double xh = (src[i] - m) * istd;
                                    dst[i] += w * (gr[i] - mg - xh * mgx);
                                }
                            }
                        } else {
                            for (int64_t n = 0; n < N; ++n) {
                                const double* gr = pgr + (n * C + c) * plane;
                                double* dst = di + (n * C + c) * plane;
                                for (int64_t i = 0; i < plane; ++i) dst[i] += w * gr[i];
                            }
                        }
                    }
                }
            });
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps) {
    if (input.rank() < 1) throw DimensionError("layer_norm: rank must be >= 1");
    int64_t D = input.dim(input.rank() - 1);
    if (gamma.numel() != D || beta.numel() != D)
        throw DimensionError("layer_norm: parameter length != last axis " + std::to_string(D));
    int64_t rows = input.numel() / D;
    Tensor out(input.shape());
    const double* pi = input.ptr();
    const double* pg = gamma.ptr();
    const double* pb = beta.ptr();
    double* po = out.ptr();
    std::vector<double> mu(static_cast<size_t>(rows), 0.0), inv_std(static_cast<size_t>(rows), 0.0);
    for (int64_t r = 0; r < rows; ++r) {
        const double* src = pi + r * D;
        double m = 0.0;
        for (int64_t i = 0; i < D; ++i) m += src[i];
        m /= double(D);
        double v = 0.0;
        for (int64_t i = 0; i < D; ++i) {
            double d = src[i] - m;
            v += d * d;
        }
        v /= double(D);
        double istd = 1.0 / std::sqrt(v + eps);
        mu[size_t(r)] = m;
        inv_std[size_t(r)] = istd;
        double* dst = po + r * D;
        for (int64_t i = 0; i < D; ++i) dst[i] = (src[i] - m) * istd * pg[i] + pb[i];
    }
    bool ni = grad_enabled(input), ng = grad_enabled(gamma), nb = grad_enabled(beta);
    if (ni || ng || nb) {
        out.set_requires_grad(true);
        Tape::current()->record(out,
            [input = input, gamma = gamma, beta = beta, out = out, mu, inv_std, rows, D, ni, ng,
             nb]() {
                auto g = cgrad(out);
                if (g.empty()) return;
                const double* pgr = g.data();
                const double* pi2 = input.ptr();
                const double* pw = gamma.ptr();
                Tensor im = input, gm = gamma, bm = beta;
                double* di = ni ? im.grad().data() : nullptr;
                double* dg = ng ? gm.grad().data() : nullptr;
                double* db = nb ? bm.grad().data() : nullptr;
                for (int64_t r = 0; r < rows; ++r) {
                    const double* gr = pgr + r * D;
                    const double* src = pi2 + r * D;
                    double m = mu[size_t(r)], istd = inv_std[size_t(r)];
                    double sum_gw = 0.0, sum_gwx = 0.0;
                    for (int64_t i = 0; i < D; ++i) {
                        double xh = (src[i] - m) * istd;
                        double gw = gr[i] * pw[i];
                        sum_gw += gw;
                        sum_gwx += gw * xh;
                        if (dg) dg[i] += gr[i] * xh;
                        if (db) db[i] += gr[i];
                    }
                    if (di) {
                        double* dst = di + r * D;
                        double mg = sum_gw / double(D);
                        double mgx = sum_gwx / double(D);
                        for (int64_t i = 0; i < D; ++i) {
                            double xh = (src[i] - m) * istd;
                            dst[i] += istd * (gr[i] * pw[i] - mg - xh * mgx);
                        }
                    }
                }
            });
    }
    return out;
}

} // namespace semikan
