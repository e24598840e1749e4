#include "semikan/spline.hpp"

#include "gemm.hpp"
#include "ops_common.hpp"
#include "semikan/ops.hpp"

#include <algorithm>
#include <cmath>

namespace semikan {

using detail::cgrad;
using detail::gemm_acc;
using detail::gemm_atg;
using detail::gemm_gbt;

SplineGrid SplineGrid::make(int order, int interior, double t_min, double t_max) {
    if (order < 1) throw ConfigError("SplineGrid: order must be >= 1, got " + std::to_string(order));
    if (interior < 1)
        throw ConfigError("SplineGrid: interior count must be >= 1, got " +
                          std::to_string(interior));
    if (!(t_min < t_max)) throw ConfigError("SplineGrid: empty domain");
    if (interior + 2 * order + 1 > 256) throw ConfigError("SplineGrid: grid too large");
    SplineGrid g;
    g.order = order;
    g.interior = interior;
    g.t_min = t_min;
    g.t_max = t_max;
    double h = (t_max - t_min) / double(interior);
    int count = interior + 2 * order + 1;
    g.knots.resize(size_t(count));
    for (int i = 0; i < count; ++i) g.knots[size_t(i)] = t_min + h * double(i - order);
    return g;
}

void SplineGrid::basis_row(double x, double* values, double* derivs) const {
    const int k = order, G = interior;
    const int nb = G + k;
    const double* t = knots.data();
    bool inside = x >= t_min && x <= t_max;
    double xc = std::clamp(x, t_min, t_max);

    // Degree-0 indicators: exactly one core span is active. The span index
    // is derived arithmetically so x == t_max lands in the last interval.
    double h = (t_max - t_min) / double(G);
    int span = k + std::min<int>(G - 1, std::max(0, int(std::floor((xc - t_min) / h))));

    double buf[256];
    double prev[256]; // degree k-1 values, for the derivative identity
    int width = G + 2 * k; // number of degree-0 functions
    for (int i = 0; i < width; ++i) buf[i] = (i == span) ? 1.0 : 0.0;

    for (int d = 1; d <= k; ++d) {
        if (d == k && derivs)
            for (int i = 0; i < width - d + 1; ++i) prev[i] = buf[i];
        for (int i = 0; i < width - d; ++i) {
            double left = 0.0, right = 0.0;
            if (buf[i] != 0.0) left = (xc - t[i]) / (t[i + d] - t[i]) * buf[i];
            if (buf[i + 1] != 0.0)
                right = (t[i + d + 1] - xc) / (t[i + d + 1] - t[i + 1]) * buf[i + 1];
            buf[i] = left + right;
        }
    }
    // The triangle can leave -1e-16-scale dust where the exact value is 0;
    // the basis is non-negative by definition, so clamp it away.
    for (int i = 0; i < nb; ++i) values[i] = buf[i] < 0.0 ? 0.0 : buf[i];
    if (derivs) {
        for (int i = 0; i < nb; ++i) {
            if (!inside) {
                derivs[i] = 0.0;
                continue;
            }
            double a = prev[i] / (t[i + k] - t[i]);
            double b = prev[i + 1] / (t[i + k + 1] - t[i + 1]);
            derivs[i] = double(k) * (a - b);
        }
    }
}

Tensor bspline_basis(const Tensor& x, const SplineGrid& grid) {
    int nb = grid.num_basis();
    Shape os = x.shape();
    os.push_back(nb);
    Tensor out(os);
    int64_t n = x.numel();
    const double* px = x.ptr();
    double* po = out.ptr();
    bool track = grad_enabled(x);
    std::vector<double> derivs;
    if (track) derivs.resize(size_t(n * nb));
    for (int64_t i = 0; i < n; ++i)
        grid.basis_row(px[i], po + i * nb, track ? derivs.data() + i * nb : nullptr);
    if (track) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [x = x, out = out, derivs = std::move(derivs), nb]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            Tensor xm = x;
            auto dx = xm.grad();
            for (int64_t i = 0; i < x.numel(); ++i) {
                double acc = 0.0;
                for (int j = 0; j < nb; ++j)
                    acc += g[size_t(i * nb + j)] * derivs[size_t(i * nb + j)];
                dx[size_t(i)] += acc;
            }
        });
    }
    return out;
}

KanLayer init_kan(int64_t in_dim, int64_t out_dim, int order, int interior, double t_min,
                  double t_max, Rng& rng) {
    if (in_dim < 1 || out_dim < 1) throw ConfigError("init_kan: dims must be >= 1");
    KanLayer layer;
    layer.in_dim = in_dim;
    layer.out_dim = out_dim;
    layer.grid = SplineGrid::make(order, interior, t_min, t_max);
    int64_t nb = layer.grid.num_basis();

    double gain = std::sqrt(1.0 / double(in_dim));
    std::vector<double> wb(size_t(out_dim * in_dim));
    for (double& v : wb) v = rng.uniform(-gain, gain);
    layer.w_base = Tensor::from_data({out_dim, in_dim}, std::move(wb), true);

    layer.w_spline = Tensor::full({out_dim, in_dim}, 1.0, true);

    double cstd = 0.1 / std::sqrt(double(nb));
    std::vector<double> cf(size_t(out_dim * in_dim * nb));
    for (double& v : cf) v = rng.normal(0.0, cstd);
    layer.coeffs = Tensor::from_data({out_dim, in_dim, nb}, std::move(cf), true);

    layer.edge_mask = Tensor::full({out_dim, in_dim}, 1.0, false);
    return layer;
}

Tensor kan_forward(const KanLayer& layer, const Tensor& x) {
    if (x.rank() != 2 || x.dim(1) != layer.in_dim)
        throw DimensionError("kan_forward: input " + shape_str(x.shape()) +
                             " does not match in_dim " + std::to_string(layer.in_dim));
    int64_t R = x.dim(0), in = layer.in_dim, out_dim = layer.out_dim;
    int64_t nb = layer.grid.num_basis();

    bool track = Tape::current() != nullptr &&
                 (x.requires_grad() || layer.coeffs.requires_grad() ||
                  layer.w_base.requires_grad() || layer.w_spline.requires_grad());
    bool need_dx = grad_enabled(x);

    // Basis values for every (row, input); derivative rows only when x needs
    // gradients.
    auto bas = std::make_shared<std::vector<double>>(size_t(R * in * nb));
    auto dbas = need_dx ? std::make_shared<std::vector<double>>(size_t(R * in * nb)) : nullptr;
    auto act = std::make_shared<std::vector<double>>(size_t(R * in));  // SiLU(x)
    auto dact = need_dx ? std::make_shared<std::vector<double>>(size_t(R * in)) : nullptr;

    const double* px = x.ptr();
    const SplineGrid& grid = layer.grid;
    ThreadPool::instance().parallel_for(R, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r)
            for (int64_t i = 0; i < in; ++i) {
                int64_t at = r * in + i;
                double xv = px[at];
                grid.basis_row(xv, bas->data() + at * nb, dbas ? dbas->data() + at * nb : nullptr);
                double s = 1.0 / (1.0 + std::exp(-xv));
                (*act)[size_t(at)] = xv * s;
                if (dact) (*dact)[size_t(at)] = s * (1.0 + xv * (1.0 - s));
            }
    });

    // Masked weights rearranged for row-major GEMMs:
    //   base_w[i, o]               = mask * w_base
    //   spline_w[i*nb + j, o]      = mask * w_spline * coeffs
    auto base_w = std::make_shared<std::vector<double>>(size_t(in * out_dim));
    auto spline_w = std::make_shared<std::vector<double>>(size_t(in * nb * out_dim));
    const double* pwb = layer.w_base.ptr();
    const double* pws = layer.w_spline.ptr();
    const double* pc = layer.coeffs.ptr();
    const double* pm = layer.edge_mask.ptr();
    for (int64_t o = 0; o < out_dim; ++o)
        for (int64_t i = 0; i < in; ++i) {
            double m = pm[o * in + i];
            (*base_w)[size_t(i * out_dim + o)] = m * pwb[o * in + i];
            double ws = m * pws[o * in + i];
            const double* c = pc + (o * in + i) * nb;
            for (int64_t j = 0; j < nb; ++j)
                (*spline_w)[size_t((i * nb + j) * out_dim + o)] = ws * c[j];
        }

    Tensor out = Tensor::zeros({R, out_dim});
    gemm_acc(act->data(), base_w->data(), out.ptr(), R, in, out_dim);
    gemm_acc(bas->data(), spline_w->data(), out.ptr(), R, in * nb, out_dim);

    if (track) {
        out.set_requires_grad(true);
        Tensor xen = x;
        KanLayer lcopy = layer; // shares parameter tensors
        Tape::current()->record(out, [xen, lcopy, out, bas, dbas, act, dact, base_w, spline_w, R, in,
                                 out_dim, nb, need_dx]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            const double* pg = g.data();
            const double* pm2 = lcopy.edge_mask.ptr();
            const double* pws2 = lcopy.w_spline.ptr();
            const double* pc2 = lcopy.coeffs.ptr();

            if (lcopy.w_base.requires_grad()) {
                // dWb[o,i] = mask * sum_r g[r,o] * silu(x[r,i])
                Tensor wb = lcopy.w_base;
                double* dwb = wb.grad().data();
                ThreadPool::instance().parallel_for(out_dim, [&](int64_t o0, int64_t o1) {
                    for (int64_t o = o0; o < o1; ++o)
                        for (int64_t i = 0; i < in; ++i) {
                            double accv = 0.0;
                            for (int64_t r = 0; r < R; ++r)
                                accv += pg[r * out_dim + o] * (*act)[size_t(r * in + i)];
                            dwb[o * in + i] += pm2[o * in + i] * accv;
                        }
                });
            }

            bool need_ws = lcopy.w_spline.requires_grad();
            bool need_c = lcopy.coeffs.requires_grad();
            if (need_ws || need_c) {
                // GB[o, i*nb+j] = sum_r g[r,o] * Bas[r, i*nb+j]
                std::vector<double> GB(size_t(out_dim * in * nb), 0.0);
                gemm_atg(pg, bas->data(), GB.data(), R, out_dim, in * nb);
                // gemm_atg computes dB[k,n] += A^T G with A = g [R,out],
                // G = bas [R, in*nb]; result GB is [out, in*nb].
                Tensor ws = lcopy.w_spline;
                Tensor cf = lcopy.coeffs;
                double* dws = need_ws ? ws.grad().data() : nullptr;
                double* dc = need_c ? cf.grad().data() : nullptr;
                ThreadPool::instance().parallel_for(out_dim, [&](int64_t o0, int64_t o1) {
                    for (int64_t o = o0; o < o1; ++o)
                        for (int64_t i = 0; i < in; ++i) {
                            double m = pm2[o * in + i];
                            const double* gb = GB.data() + o * in * nb + i * nb;
                            const double* c = pc2 + (o * in + i) * nb;
                            if (dws) {
                                double accv = 0.0;
                                for (int64_t j = 0; j < nb; ++j) accv += c[j] * gb[j];
                                dws[o * in + i] += m * accv;
                            }
                            if (dc) {
                                double wsm = m * pws2[o * in + i];
                                double* dcj = dc + (o * in + i) * nb;
                                for (int64_t j = 0; j < nb; ++j) dcj[j] += wsm * gb[j];
                            }
                        }
                });
            }

            if (need_dx) {
                // dx[r,i] = silu'(x) * (g . base_w[i,:]) + sum_j dBas * (g . spline_w[i*nb+j,:])
                Tensor xm = xen;
                double* dx = xm.grad().data();
                std::vector<double> ga(size_t(R * in), 0.0);
                std::vector<double> gs(size_t(R * in * nb), 0.0);
                gemm_gbt(pg, base_w->data(), ga.data(), R, in, out_dim);
                gemm_gbt(pg, spline_w->data(), gs.data(), R, in * nb, out_dim);
                ThreadPool::instance().parallel_for(R, [&](int64_t r0, int64_t r1) {
                    for (int64_t r = r0; r < r1; ++r)
                        for (int64_t i = 0; i < in; ++i) {
                            int64_t at = r * in + i;
                            double accv = (*dact)[size_t(at)] * ga[size_t(at)];
                            const double* db = dbas->data() + at * nb;
                            const double* gsp = gs.data() + at * nb;
                            for (int64_t j = 0; j < nb; ++j) accv += db[j] * gsp[j];
                            dx[at] += accv;
                        }
                });
            }
        });
    }
    return out;
}

double kan_phi(const KanLayer& layer, int64_t out, int64_t in, double x) {
    int nb = layer.grid.num_basis();
    double B[256];
    layer.grid.basis_row(x, B, nullptr);
    const double* c = layer.coeffs.ptr() + (out * layer.in_dim + in) * nb;
    double spline = 0.0;
    for (int j = 0; j < nb; ++j) spline += c[j] * B[j];
    double s = 1.0 / (1.0 + std::exp(-x));
    double wb = layer.w_base.at({out, in});
    double ws = layer.w_spline.at({out, in});
    double m = layer.edge_mask.at({out, in});
    return m * (wb * x * s + ws * spline);
}

PruneReport prune_edges(KanLayer& layer, double threshold) {
    if (threshold < 0.0) throw ConfigError("prune_edges: threshold must be >= 0");
    PruneReport report;
    report.total_edges = layer.edge_count();
    int64_t in = layer.in_dim, nb = layer.grid.num_basis();
    double* pm = layer.edge_mask.ptr();
    double* pwb = layer.w_base.ptr();
    double* pws = layer.w_spline.ptr();
    double* pc = layer.coeffs.ptr();
    for (int64_t o = 0; o < layer.out_dim; ++o)
        for (int64_t i = 0; i < in; ++i) {
            int64_t e = o * in + i;
            if (pm[e] == 0.0) continue; // already frozen
            double cmax = 0.0;
            for (int64_t j = 0; j < nb; ++j) cmax = std::max(cmax, std::abs(pc[e * nb + j]));
            double score = std::max(std::abs(pwb[e]), std::abs(pws[e]) * cmax);
            if (score < threshold) {
                pm[e] = 0.0;
                pwb[e] = 0.0;
                pws[e] = 0.0;
                for (int64_t j = 0; j < nb; ++j) pc[e * nb + j] = 0.0;
                report.removed.emplace_back(o, i);
            } else {
                report.kept.emplace_back(o, i);
            }
        }
    report.fraction_removed =
        report.total_edges > 0 ? double(report.removed.size()) / double(report.total_edges) : 0.0;
    return report;
}

} // namespace semikan
