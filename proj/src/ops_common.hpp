#pragma once

#include "semikan/tensor.hpp"

#include <span>

namespace semikan::detail {

// Grad view that never allocates; empty span means "no contribution yet".
inline std::span<const double> cgrad(const Tensor& t) {
    return static_cast<const Tensor&>(t).grad();
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op);

// Right-aligned strides for reading a tensor of shape `s` as if broadcast to
// `out`; broadcast axes get stride 0.
std::vector<int64_t> broadcast_strides(const Shape& s, const Shape& out);

// Calls fn(linear_out_index, offset_a, offset_b) for every element of `out`.
template <typename Fn>
void for_each_broadcast(const Shape& out, const Shape& sa, const Shape& sb, Fn&& fn) {
    std::vector<int64_t> stra = broadcast_strides(sa, out);
    std::vector<int64_t> strb = broadcast_strides(sb, out);
    size_t r = out.size();
    if (r == 0) {
        fn(0, 0, 0);
        return;
    }
    std::vector<int64_t> idx(r, 0);
    int64_t ia = 0, ib = 0;
    int64_t n = shape_numel(out);
    for (int64_t lin = 0; lin < n; ++lin) {
        fn(lin, ia, ib);
        for (int ax = int(r) - 1; ax >= 0; --ax) {
            ++idx[size_t(ax)];
            ia += stra[size_t(ax)];
            ib += strb[size_t(ax)];
            if (idx[size_t(ax)] < out[size_t(ax)]) break;
            ia -= stra[size_t(ax)] * out[size_t(ax)];
            ib -= strb[size_t(ax)] * out[size_t(ax)];
            idx[size_t(ax)] = 0;
        }
    }
}

} // namespace semikan::detail
