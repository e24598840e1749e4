#include "semikan/ops.hpp"

#include "gemm.hpp"
#include "ops_common.hpp"

#include <algorithm>

namespace semikan {

using detail::cgrad;
using detail::gemm_acc;
using detail::gemm_atg;
using detail::gemm_gbt;

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionError("matmul: expects 2-D operands, got " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    if (a.dim(1) != b.dim(0))
        throw DimensionError("matmul: inner dims differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n});
    gemm_acc(a.ptr(), b.ptr(), out.ptr(), m, k, n);
    bool na = grad_enabled(a), nb = grad_enabled(b);
    if (na || nb) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [a = a, b = b, out = out, m, k, n, na, nb]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            if (na) {
                Tensor am = a;
                gemm_gbt(g.data(), b.ptr(), am.grad().data(), m, k, n);
            }
            if (nb) {
                Tensor bm = b;
                gemm_atg(a.ptr(), g.data(), bm.grad().data(), m, k, n);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Token layout ops. These are pure permutations, so both directions reuse a
// single index map and the backward is the inverse scatter.
// ---------------------------------------------------------------------------

Tensor extract_patches(const Tensor& input, int64_t patch) {
    if (input.rank() != 4) throw DimensionError("extract_patches: expects [N,C,H,W]");
    int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (patch < 1 || H % patch != 0 || W % patch != 0)
        throw DimensionError("extract_patches: patch " + std::to_string(patch) +
                             " does not divide " + std::to_string(H) + "x" + std::to_string(W));
    int64_t th = H / patch, tw = W / patch;
    int64_t T = th * tw, D = patch * patch * C;
    Tensor out({N, T, D});
    const double* pi = input.ptr();
    double* po = out.ptr();
    for (int64_t nidx = 0; nidx < N; ++nidx)
        for (int64_t ty = 0; ty < th; ++ty)
            for (int64_t tx = 0; tx < tw; ++tx) {
                double* dst = po + ((nidx * T) + ty * tw + tx) * D;
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t py = 0; py < patch; ++py) {
                        const double* src =
                            pi + ((nidx * C + c) * H + ty * patch + py) * W + tx * patch;
                        double* d2 = dst + c * patch * patch + py * patch;
                        for (int64_t px = 0; px < patch; ++px) d2[px] = src[px];
                    }
            }
    if (grad_enabled(input)) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [input = input, out = out, patch, N, C, H, W, th, tw, T, D]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            Tensor im = input;
            auto di = im.grad();
            for (int64_t nidx = 0; nidx < N; ++nidx)
                for (int64_t ty = 0; ty < th; ++ty)
                    for (int64_t tx = 0; tx < tw; ++tx) {
                        const double* gs = g.data() + ((nidx * T) + ty * tw + tx) * D;
                        for (int64_t c = 0; c < C; ++c)
                            for (int64_t py = 0; py < patch; ++py) {
                                double* dd = di.data() +
                                             ((nidx * C + c) * H + ty * patch + py) * W +
                                             tx * patch;
                                const double* g2 = gs + c * patch * patch + py * patch;
                                for (int64_t px = 0; px < patch; ++px) dd[px] += g2[px];
                            }
                    }
        });
    }
    return out;
}

Tensor fold_patches(const Tensor& tokens, int64_t patch, int64_t channels, int64_t height,
                    int64_t width) {
    if (tokens.rank() != 3) throw DimensionError("fold_patches: expects [N,T,D]");
    int64_t N = tokens.dim(0), T = tokens.dim(1), D = tokens.dim(2);
    int64_t th = height / patch, tw = width / patch;
    if (patch < 1 || height % patch != 0 || width % patch != 0 || th * tw != T ||
        patch * patch * channels != D)
        throw DimensionError("fold_patches: layout mismatch for tokens " +
                             shape_str(tokens.shape()));
    Tensor out({N, channels, height, width});
    const double* pt = tokens.ptr();
    double* po = out.ptr();
    for (int64_t nidx = 0; nidx < N; ++nidx)
        for (int64_t ty = 0; ty < th; ++ty)
            for (int64_t tx = 0; tx < tw; ++tx) {
                const double* src = pt + ((nidx * T) + ty * tw + tx) * D;
                for (int64_t c = 0; c < channels; ++c)
                    for (int64_t py = 0; py < patch; ++py) {
                        double* dst = po +
                                      ((nidx * channels + c) * height + ty * patch + py) * width +
                                      tx * patch;
                        const double* s2 = src + c * patch * patch + py * patch;
                        for (int64_t px = 0; px < patch; ++px) dst[px] = s2[px];
                    }
            }
    if (grad_enabled(tokens)) {
        out.set_requires_grad(true);
        Tape::current()->record(out,
            [tokens = tokens, out = out, patch, channels, height, width, th, tw, T, D, N]() {
                auto g = cgrad(out);
                if (g.empty()) return;
                Tensor tm = tokens;
                auto dt = tm.grad();
                for (int64_t nidx = 0; nidx < N; ++nidx)
                    for (int64_t ty = 0; ty < th; ++ty)
                        for (int64_t tx = 0; tx < tw; ++tx) {
                            double* dd = dt.data() + ((nidx * T) + ty * tw + tx) * D;
                            for (int64_t c = 0; c < channels; ++c)
                                for (int64_t py = 0; py < patch; ++py) {
                                    const double* gs =
                                        g.data() +
                                        ((nidx * channels + c) * height + ty * patch + py) * width +
                                        tx * patch;
                                    double* d2 = dd + c * patch * patch + py * patch;
                                    for (int64_t px = 0; px < patch; ++px) d2[px] += gs[px];
                                }
                        }
            });
    }
    return out;
}

Tensor tokens_to_grid(const Tensor& tokens, int64_t th, int64_t tw) {
    if (tokens.rank() != 3) throw DimensionError("tokens_to_grid: expects [N,T,D]");
    int64_t N = tokens.dim(0), T = tokens.dim(1), D = tokens.dim(2);
    if (th * tw != T)
        throw DimensionError("tokens_to_grid: grid " + std::to_string(th) + "x" +
                             std::to_string(tw) + " != token count " + std::to_string(T));
    Tensor out({N, D, th, tw});
    const double* pt = tokens.ptr();
    double* po = out.ptr();
    for (int64_t nidx = 0; nidx < N; ++nidx)
        for (int64_t t = 0; t < T; ++t)
            for (int64_t d = 0; d < D; ++d)
                po[((nidx * D + d) * T) + t] = pt[(nidx * T + t) * D + d];
    if (grad_enabled(tokens)) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [tokens = tokens, out = out, N, T, D]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            Tensor tm = tokens;
            auto dt = tm.grad();
            for (int64_t nidx = 0; nidx < N; ++nidx)
                for (int64_t t = 0; t < T; ++t)
                    for (int64_t d = 0; d < D; ++d)
                        dt[size_t((nidx * T + t) * D + d)] += g[size_t((nidx * D + d) * T + t)];
        });
    }
    return out;
}

Tensor grid_to_tokens(const Tensor& grid) {
    if (grid.rank() != 4) throw DimensionError("grid_to_tokens: expects [N,D,th,tw]");
    int64_t N = grid.dim(0), D = grid.dim(1), T = grid.dim(2) * grid.dim(3);
    Tensor out({N, T, D});
    const double* pg = grid.ptr();
    double* po = out.ptr();
    for (int64_t nidx = 0; nidx < N; ++nidx)
        for (int64_t t = 0; t < T; ++t)
            for (int64_t d = 0; d < D; ++d)
                po[(nidx * T + t) * D + d] = pg[(nidx * D + d) * T + t];
    if (grad_enabled(grid)) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [grid = grid, out = out, N, T, D]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            Tensor gm = grid;
            auto dg = gm.grad();
            for (int64_t nidx = 0; nidx < N; ++nidx)
                for (int64_t t = 0; t < T; ++t)
                    for (int64_t d = 0; d < D; ++d)
                        dg[size_t((nidx * D + d) * T + t)] += g[size_t((nidx * T + t) * D + d)];
        });
    }
    return out;
}

} // namespace semikan
