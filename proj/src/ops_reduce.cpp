#include "semikan/ops.hpp"

#include "ops_common.hpp"

#include <algorithm>
#include <cmath>

namespace semikan {

using detail::cgrad;

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    Tensor out = Tensor::scalar(acc);
    if (grad_enabled(a)) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [a = a, out = out]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            Tensor am = a;
            auto da = am.grad();
            for (double& v : da) v += g[0];
        });
    }
    return out;
}

Tensor mean(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    double inv = 1.0 / double(a.numel());
    Tensor out = Tensor::scalar(acc * inv);
    if (grad_enabled(a)) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [a = a, out = out, inv]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            Tensor am = a;
            auto da = am.grad();
            for (double& v : da) v += g[0] * inv;
        });
    }
    return out;
}

Tensor sum_axes(const Tensor& a, const std::vector<int64_t>& axes, bool keepdims) {
    const Shape& s = a.shape();
    std::vector<bool> reduce(s.size(), false);
    for (int64_t ax : axes) {
        if (ax < 0 || ax >= int64_t(s.size()))
            throw DimensionError("sum_axes: axis " + std::to_string(ax) + " out of range for " +
                                 shape_str(s));
        reduce[size_t(ax)] = true;
    }
    Shape os;
    for (size_t i = 0; i < s.size(); ++i) {
        if (!reduce[i]) os.push_back(s[i]);
        else if (keepdims) os.push_back(1);
    }
    if (os.empty()) os.push_back(1);

    // Output strides aligned with input axes (0 on reduced axes).
    std::vector<int64_t> ostr(s.size(), 0);
    {
        int64_t acc = 1;
        for (size_t i = s.size(); i-- > 0;) {
            if (!reduce[i]) {
                ostr[i] = acc;
                acc *= s[i];
            }
        }
    }
    Tensor out = Tensor::zeros(os);
    double* po = out.ptr();
    const double* pa = a.ptr();
    std::vector<int64_t> idx(s.size(), 0);
    int64_t oi = 0;
    int64_t n = a.numel();
    for (int64_t lin = 0; lin < n; ++lin) {
        po[oi] += pa[lin];
        for (size_t ax = s.size(); ax-- > 0;) {
            ++idx[ax];
            oi += ostr[ax];
            if (idx[ax] < s[ax]) break;
            oi -= ostr[ax] * s[ax];
            idx[ax] = 0;
        }
    }
    if (grad_enabled(a)) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [a = a, out = out, ostr]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            Tensor am = a;
            auto da = am.grad();
            const Shape& sh = a.shape();
            std::vector<int64_t> ix(sh.size(), 0);
            int64_t o = 0;
            for (int64_t lin = 0; lin < a.numel(); ++lin) {
                da[size_t(lin)] += g[size_t(o)];
                for (size_t ax = sh.size(); ax-- > 0;) {
                    ++ix[ax];
                    o += ostr[ax];
                    if (ix[ax] < sh[ax]) break;
                    o -= ostr[ax] * sh[ax];
                    ix[ax] = 0;
                }
            }
        });
    }
    return out;
}

namespace {

// Iterates fibers along `axis`: fn(base_offset, stride, length).
template <typename Fn>
void for_each_fiber(const Shape& s, int64_t axis, Fn&& fn) {
    int64_t outer = 1, inner = 1;
    for (int64_t i = 0; i < axis; ++i) outer *= s[size_t(i)];
    for (size_t i = size_t(axis) + 1; i < s.size(); ++i) inner *= s[i];
    int64_t len = s[size_t(axis)];
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) fn(o * len * inner + in, inner, len);
}

void check_axis(const Shape& s, int64_t axis, const char* op) {
    if (axis < 0 || axis >= int64_t(s.size()))
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                             " out of range for " + shape_str(s));
}

} // namespace

Tensor softmax(const Tensor& a, int64_t axis) {
    check_axis(a.shape(), axis, "softmax");
    Tensor out(a.shape());
    const double* pa = a.ptr();
    double* po = out.ptr();
    for_each_fiber(a.shape(), axis, [&](int64_t base, int64_t stride, int64_t len) {
        double mx = pa[base];
        for (int64_t k = 1; k < len; ++k) mx = std::max(mx, pa[base + k * stride]);
        double z = 0.0;
        for (int64_t k = 0; k < len; ++k) {
            double e = std::exp(pa[base + k * stride] - mx);
            po[base + k * stride] = e;
            z += e;
        }
        double inv = 1.0 / z;
        for (int64_t k = 0; k < len; ++k) po[base + k * stride] *= inv;
    });
    if (grad_enabled(a)) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [a = a, out = out, axis]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            Tensor am = a;
            auto da = am.grad();
            const double* py = out.ptr();
            for_each_fiber(a.shape(), axis, [&](int64_t base, int64_t stride, int64_t len) {
                double dot = 0.0;
                for (int64_t k = 0; k < len; ++k)
                    dot += g[size_t(base + k * stride)] * py[base + k * stride];
                for (int64_t k = 0; k < len; ++k) {
                    int64_t i = base + k * stride;
                    da[size_t(i)] += py[i] * (g[size_t(i)] - dot);
                }
            });
        });
    }
    return out;
}

Tensor l2_norm_axis(const Tensor& a, int64_t axis) {
    check_axis(a.shape(), axis, "l2_norm_axis");
    Shape os;
    for (size_t i = 0; i < a.shape().size(); ++i)
        if (int64_t(i) != axis) os.push_back(a.shape()[i]);
    if (os.empty()) os.push_back(1);
    Tensor out(os);
    const double* pa = a.ptr();
    double* po = out.ptr();
    int64_t oi = 0;
    for_each_fiber(a.shape(), axis, [&](int64_t base, int64_t stride, int64_t len) {
        double acc = 0.0;
        for (int64_t k = 0; k < len; ++k) {
            double v = pa[base + k * stride];
            acc += v * v;
        }
        po[oi++] = std::sqrt(acc);
    });
    if (grad_enabled(a)) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [a = a, out = out, axis]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            Tensor am = a;
            auto da = am.grad();
            const double* pa2 = a.ptr();
            const double* pn = out.ptr();
            int64_t o = 0;
            for_each_fiber(a.shape(), axis, [&](int64_t base, int64_t stride, int64_t len) {
                double nv = pn[o];
                double gv = g[size_t(o)];
                ++o;
                if (nv == 0.0) return; // subgradient 0 at the kink
                double inv = gv / nv;
                for (int64_t k = 0; k < len; ++k) {
                    int64_t i = base + k * stride;
                    da[size_t(i)] += pa2[i] * inv;
                }
            });
        });
    }
    return out;
}

Tensor kl_divergence_axis(const Tensor& p, const Tensor& q, int64_t axis, double eps) {
    check_axis(p.shape(), axis, "kl_divergence_axis");
    if (p.shape() != q.shape())
        throw DimensionError("kl_divergence_axis: p " + shape_str(p.shape()) + " vs q " +
                             shape_str(q.shape()));
    if (grad_enabled(q))
        throw ContractError("kl_divergence_axis: q is a constant target and must not require grad");
    Shape os;
    for (size_t i = 0; i < p.shape().size(); ++i)
        if (int64_t(i) != axis) os.push_back(p.shape()[i]);
    if (os.empty()) os.push_back(1);
    Tensor out(os);
    const double* pp = p.ptr();
    const double* pq = q.ptr();
    double* po = out.ptr();
    int64_t oi = 0;
    for_each_fiber(p.shape(), axis, [&](int64_t base, int64_t stride, int64_t len) {
        double acc = 0.0;
        for (int64_t k = 0; k < len; ++k) {
            int64_t i = base + k * stride;
            double pv = pp[i];
            if (pv > 0.0) acc += pv * std::log(pv / std::max(pq[i], eps));
        }
        po[oi++] = acc;
    });
    if (grad_enabled(p)) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [p = p, q = q, out = out, axis, eps]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            Tensor pm = p;
            auto dp = pm.grad();
            const double* pp2 = p.ptr();
            const double* pq2 = q.ptr();
            int64_t o = 0;
            for_each_fiber(p.shape(), axis, [&](int64_t base, int64_t stride, int64_t len) {
                double gv = g[size_t(o)];
                ++o;
                for (int64_t k = 0; k < len; ++k) {
                    int64_t i = base + k * stride;
                    double pv = pp2[i];
                    if (pv > 0.0)
                        dp[size_t(i)] += gv * (std::log(pv / std::max(pq2[i], eps)) + 1.0);
                }
            });
        });
    }
    return out;
}

} // namespace semikan
