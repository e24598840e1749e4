#pragma once

#include "semikan/rng.hpp"
#include "semikan/spline.hpp"
#include "semikan/tensor.hpp"

namespace semikan {

struct BatchNorm2d {
    Tensor gamma, beta;               // learnable [C]
    Tensor running_mean, running_var; // buffers [C]
    double eps = 1e-5;
    double momentum = 0.1;

    static BatchNorm2d make(int64_t channels);
    Tensor forward(const Tensor& x, bool training);
};

// 3x3 conv (stride 1, padding 1) -> batch norm -> ReLU. Spatial size is
// preserved.
struct ConvBlock {
    Tensor kernel; // [F,C,3,3]
    BatchNorm2d bn;

    static ConvBlock make(int64_t in_ch, int64_t out_ch, Rng& rng);
    Tensor forward(const Tensor& x, bool training);
    int64_t out_channels() const { return kernel.dim(0); }
};

struct LayerNorm {
    Tensor gamma, beta;
    double eps = 1e-5;

    static LayerNorm make(int64_t dim);
    Tensor forward(const Tensor& x) const;
};

// Trainable projection of flattened P x P patches into a D-dimensional token
// space.
struct PatchEmbedding {
    int64_t patch = 2;
    Tensor proj; // [P*P*C, D]

    static PatchEmbedding make(int64_t patch, int64_t in_ch, int64_t dim, Rng& rng);
};

// [N,C,H,W] -> [N, HW/P^2, D]: raster-order patches, each projected by proj.
Tensor tokenize(const Tensor& x, int64_t patch, const Tensor& proj);
// Inverse layout: project tokens back with `proj` [D, P*P*C] and fold the
// patches into an image. With identity-shaped projections this inverts
// tokenize bit-exactly.
Tensor detokenize(const Tensor& tokens, int64_t patch, const Tensor& proj, int64_t channels,
                  int64_t height, int64_t width);

// Residual token mixer: tokens + DwConv(LN(tokens)) + KAN(LN(tokens)).
// The depthwise path works on the token grid; the KAN path treats each token
// as a feature vector.
struct KanConvBlock {
    KanLayer kan; // D -> D
    Tensor dw_kernel; // [D,1,3,3]
    LayerNorm ln_kan, ln_dw;

    static KanConvBlock make(int64_t dim, int order, int interior, double t_min, double t_max,
                             Rng& rng);
    Tensor forward(const Tensor& tokens, int64_t th, int64_t tw) const;
};

} // namespace semikan
