#include "semikan/ops.hpp"

#include "ops_common.hpp"

#include <cmath>

namespace semikan {

using detail::cgrad;
using detail::for_each_broadcast;

namespace {

// Shared skeleton for broadcasting binary ops. dfda/dfdb map
// (a_value, b_value, out_grad) to the gradient contribution.
template <typename Fwd, typename DfDa, typename DfDb>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name,
                 Fwd fwd, DfDa dfda, DfDb dfdb) {
    Shape os = detail::broadcast_shape(a.shape(), b.shape(), name);
    Tensor out(os);
    const double* pa = a.ptr();
    const double* pb = b.ptr();
    double* po = out.ptr();
    bool same = a.shape() == b.shape();
    if (same) {
        int64_t n = out.numel();
        for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
    } else {
        for_each_broadcast(os, a.shape(), b.shape(),
                           [&](int64_t o, int64_t ia, int64_t ib) { po[o] = fwd(pa[ia], pb[ib]); });
    }
    bool need_a = grad_enabled(a);
    bool need_b = grad_enabled(b);
    if (need_a || need_b) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [=, a = a, b = b, out = out]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            const double* pa2 = a.ptr();
            const double* pb2 = b.ptr();
            Tensor am = a, bm = b;
            if (a.shape() == b.shape()) {
                int64_t n = out.numel();
                if (need_a) {
                    auto da = am.grad();
                    for (int64_t i = 0; i < n; ++i) da[i] += dfda(pa2[i], pb2[i], g[i]);
                }
                if (need_b) {
                    auto db = bm.grad();
                    for (int64_t i = 0; i < n; ++i) db[i] += dfdb(pa2[i], pb2[i], g[i]);
                }
            } else {
                auto da = need_a ? am.grad() : std::span<double>{};
                auto db = need_b ? bm.grad() : std::span<double>{};
                for_each_broadcast(out.shape(), a.shape(), b.shape(),
                                   [&](int64_t o, int64_t ia, int64_t ib) {
                                       if (need_a) da[size_t(ia)] += dfda(pa2[ia], pb2[ib], g[o]);
                                       if (need_b) db[size_t(ib)] += dfdb(pa2[ia], pb2[ib], g[o]);
                                   });
            }
        });
    }
    return out;
}

template <typename Fwd, typename Deriv>
Tensor unary_op(const Tensor& a, Fwd fwd, Deriv deriv) {
    Tensor out(a.shape());
    const double* pa = a.ptr();
    double* po = out.ptr();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
    if (grad_enabled(a)) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [=, a = a, out = out]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            Tensor am = a;
            auto da = am.grad();
            const double* pa2 = a.ptr();
            const double* po2 = out.ptr();
            for (int64_t i = 0; i < a.numel(); ++i) da[size_t(i)] += g[size_t(i)] * deriv(pa2[i], po2[i]);
        });
    }
    return out;
}

} // namespace

namespace detail {

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    size_t r = std::max(a.size(), b.size());
    Shape out(r, 1);
    for (size_t i = 0; i < r; ++i) {
        int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
        int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (da != db && da != 1 && db != 1)
            throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                                 shape_str(b) + " differ on axis " +
                                 std::to_string(r - 1 - i) + " and neither is 1");
        out[r - 1 - i] = std::max(da, db);
    }
    return out;
}

std::vector<int64_t> broadcast_strides(const Shape& s, const Shape& out) {
    std::vector<int64_t> strides(out.size(), 0);
    int64_t acc = 1;
    for (size_t i = 0; i < s.size(); ++i) {
        size_t si = s.size() - 1 - i;
        size_t oi = out.size() - 1 - i;
        strides[oi] = (s[si] == 1 && out[oi] != 1) ? 0 : acc;
        acc *= s[si];
    }
    return strides;
}

} // namespace detail

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "add",
                     [](double x, double y) { return x + y; },
                     [](double, double, double g) { return g; },
                     [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "sub",
                     [](double x, double y) { return x - y; },
                     [](double, double, double g) { return g; },
                     [](double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "mul",
                     [](double x, double y) { return x * y; },
                     [](double, double y, double g) { return g * y; },
                     [](double x, double, double g) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "div",
                     [](double x, double y) { return x / y; },
                     [](double, double y, double g) { return g / y; },
                     [](double x, double y, double g) { return -g * x / (y * y); });
}

Tensor add_scalar(const Tensor& a, double c) {
    return unary_op(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
    return unary_op(a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& a) {
    return unary_op(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
    return unary_op(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary_op(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
    return unary_op(a, [](double x) { return std::sqrt(x); },
                    [](double, double y) { return 0.5 / y; });
}

Tensor pow_scalar(const Tensor& a, double p) {
    if (p == 1.0)
        return unary_op(a, [](double x) { return x; }, [](double, double) { return 1.0; });
    return unary_op(a, [p](double x) { return std::pow(x, p); },
                    [p](double x, double) {
                        double d = p * std::pow(x, p - 1.0);
                        return std::isfinite(d) ? d : 0.0;
                    });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    return unary_op(a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
                    [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor relu(const Tensor& a) {
    return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& a) {
    return unary_op(a, [](double x) { return x / (1.0 + std::exp(-x)); },
                    [](double x, double) {
                        double s = 1.0 / (1.0 + std::exp(-x));
                        return s * (1.0 + x * (1.0 - s));
                    });
}

Tensor detach(const Tensor& a) {
    return Tensor::from_data(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
}

Tensor reshape(const Tensor& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                             shape_str(new_shape));
    Tensor out = Tensor::from_data(std::move(new_shape),
                                   std::vector<double>(a.data().begin(), a.data().end()));
    if (grad_enabled(a)) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [a = a, out = out]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            Tensor am = a;
            am.accumulate_grad(g.data());
        });
    }
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, int64_t axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    const Shape& s0 = parts[0].shape();
    if (axis < 0 || axis >= int64_t(s0.size()))
        throw DimensionError("concat: axis out of range");
    Shape os = s0;
    os[size_t(axis)] = 0;
    for (const Tensor& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != s0.size()) throw DimensionError("concat: rank mismatch");
        for (size_t i = 0; i < s.size(); ++i)
            if (int64_t(i) != axis && s[i] != s0[i])
                throw DimensionError("concat: shapes differ on axis " + std::to_string(i));
        os[size_t(axis)] += s[size_t(axis)];
    }
    int64_t outer = 1, inner = 1;
    for (int64_t i = 0; i < axis; ++i) outer *= s0[size_t(i)];
    for (size_t i = size_t(axis) + 1; i < s0.size(); ++i) inner *= s0[i];

    Tensor out(os);
    double* po = out.ptr();
    int64_t out_row = os[size_t(axis)] * inner;
    int64_t off = 0;
    for (const Tensor& p : parts) {
        int64_t rows = p.dim(axis) * inner;
        const double* pp = p.ptr();
        for (int64_t o = 0; o < outer; ++o)
            std::copy(pp + o * rows, pp + (o + 1) * rows, po + o * out_row + off);
        off += rows;
    }
    bool any = false;
    for (const Tensor& p : parts) any = any || grad_enabled(p);
    if (any) {
        out.set_requires_grad(true);
        Tape::current()->record(out, [parts, out, outer, out_row]() {
            auto g = cgrad(out);
            if (g.empty()) return;
            int64_t offset = 0;
            for (Tensor p : parts) {
                int64_t prows = p.numel() / outer; // dim(axis) * inner
                if (p.requires_grad()) {
                    auto dp = p.grad();
                    for (int64_t o = 0; o < outer; ++o) {
                        const double* gs = g.data() + o * out_row + offset;
                        double* dd = dp.data() + o * prows;
                        for (int64_t i = 0; i < prows; ++i) dd[i] += gs[i];
                    }
                }
                offset += prows;
            }
        });
    }
    return out;
}

} // namespace semikan
