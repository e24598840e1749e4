#pragma once

#include "semikan/rng.hpp"
#include "semikan/tensor.hpp"

#include <utility>
#include <vector>

namespace semikan {

// Uniform B-spline knot grid shared by every edge of a KAN layer.
//
// `interior` (G) is the number of knot intervals across [t_min, t_max]; the
// vector is extended uniformly by `order` (k) knots on each side, giving
// G + 2k + 1 knots and G + k basis functions. On the domain the basis forms
// a partition of unity.
struct SplineGrid {
    int order = 3;
    int interior = 5;
    double t_min = -1.0;
    double t_max = 1.0;
    std::vector<double> knots;

    static SplineGrid make(int order, int interior, double t_min, double t_max);

    int num_basis() const { return interior + order; }

    // Evaluates all basis functions at x (clamped to the domain) via the
    // iterative Cox-de Boor triangle. `values` has num_basis() entries;
    // `derivs`, when non-null, receives dB/dx (0 when x lies outside the
    // domain, matching the clamp subgradient).
    void basis_row(double x, double* values, double* derivs) const;
};

// Differentiable basis evaluation: x of any shape -> [x.shape..., G+k].
Tensor bspline_basis(const Tensor& x, const SplineGrid& grid);

// One layer of learnable edge activations
//   phi_{o,i}(x) = w_base[o,i] * SiLU(x) + w_spline[o,i] * sum_j c[o,i,j] B_j(x)
// with output o = sum_i phi_{o,i}(x_i). edge_mask zeroes pruned edges and is
// not trained.
struct KanLayer {
    int64_t in_dim = 0;
    int64_t out_dim = 0;
    SplineGrid grid;
    Tensor coeffs;   // [out, in, G+k]
    Tensor w_base;   // [out, in]
    Tensor w_spline; // [out, in]
    Tensor edge_mask; // [out, in], 1 = active

    int64_t edge_count() const { return in_dim * out_dim; }
};

// w_base ~ U(-g, g) with g = sqrt(1/in_dim); w_spline = 1;
// coeffs ~ N(0, 0.1^2 / (G+k)). Deterministic for a given rng state.
KanLayer init_kan(int64_t in_dim, int64_t out_dim, int order, int interior, double t_min,
                  double t_max, Rng& rng);

// x is [batch, in_dim]; returns [batch, out_dim]. Differentiable w.r.t. x,
// coeffs, w_base and w_spline.
Tensor kan_forward(const KanLayer& layer, const Tensor& x);

// Single-edge activation value (interpretability dumps, tests).
double kan_phi(const KanLayer& layer, int64_t out, int64_t in, double x);

struct PruneReport {
    int64_t total_edges = 0;
    std::vector<std::pair<int64_t, int64_t>> removed; // newly frozen (out, in)
    std::vector<std::pair<int64_t, int64_t>> kept;    // still active (out, in)
    double fraction_removed = 0.0;
};

// Freezes edges whose score max(|w_base|, |w_spline| * max_j |coeffs_j|)
// falls below `threshold`: parameters are zeroed and the mask cleared, so
// the edge stays dead under further training. Already-frozen edges are
// skipped, which makes pruning idempotent.
PruneReport prune_edges(KanLayer& layer, double threshold);

} // namespace semikan
