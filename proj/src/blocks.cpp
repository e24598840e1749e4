#include "semikan/blocks.hpp"

#include "semikan/ops.hpp"

#include <cmath>

namespace semikan {

namespace {

Tensor scaled_uniform(Shape shape, int64_t fan_in, Rng& rng) {
    double bound = std::sqrt(1.0 / double(fan_in));
    Tensor t(std::move(shape), true);
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
}

} // namespace

BatchNorm2d BatchNorm2d::make(int64_t channels) {
    BatchNorm2d bn;
    bn.gamma = Tensor::full({channels}, 1.0, true);
    bn.beta = Tensor::zeros({channels}, true);
    bn.running_mean = Tensor::zeros({channels});
    bn.running_var = Tensor::full({channels}, 1.0);
    return bn;
}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) {
    return batch_norm2d(x, gamma, beta, running_mean, running_var, training, eps, momentum);
}

ConvBlock ConvBlock::make(int64_t in_ch, int64_t out_ch, Rng& rng) {
    ConvBlock b;
    b.kernel = scaled_uniform({out_ch, in_ch, 3, 3}, in_ch * 9, rng);
    b.bn = BatchNorm2d::make(out_ch);
    return b;
}

Tensor ConvBlock::forward(const Tensor& x, bool training) {
    return relu(bn.forward(conv2d(x, kernel, 1, 1), training));
}

LayerNorm LayerNorm::make(int64_t dim) {
    LayerNorm ln;
    ln.gamma = Tensor::full({dim}, 1.0, true);
    ln.beta = Tensor::zeros({dim}, true);
    return ln;
}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }

PatchEmbedding PatchEmbedding::make(int64_t patch, int64_t in_ch, int64_t dim, Rng& rng) {
    PatchEmbedding pe;
    pe.patch = patch;
    pe.proj = scaled_uniform({patch * patch * in_ch, dim}, patch * patch * in_ch, rng);
    return pe;
}

Tensor tokenize(const Tensor& x, int64_t patch, const Tensor& proj) {
    Tensor patches = extract_patches(x, patch); // [N,T,P*P*C]
    int64_t N = patches.dim(0), T = patches.dim(1), D0 = patches.dim(2);
    if (proj.rank() != 2 || proj.dim(0) != D0)
        throw DimensionError("tokenize: projection " + shape_str(proj.shape()) +
                             " does not accept patch dim " + std::to_string(D0));
    Tensor flat = reshape(patches, {N * T, D0});
    Tensor projected = matmul(flat, proj);
    return reshape(projected, {N, T, proj.dim(1)});
}

Tensor detokenize(const Tensor& tokens, int64_t patch, const Tensor& proj, int64_t channels,
                  int64_t height, int64_t width) {
    int64_t N = tokens.dim(0), T = tokens.dim(1), D = tokens.dim(2);
    if (proj.rank() != 2 || proj.dim(0) != D)
        throw DimensionError("detokenize: projection " + shape_str(proj.shape()) +
                             " does not accept token dim " + std::to_string(D));
    Tensor flat = reshape(tokens, {N * T, D});
    Tensor unprojected = matmul(flat, proj); // [N*T, P*P*C]
    Tensor patches = reshape(unprojected, {N, T, proj.dim(1)});
    return fold_patches(patches, patch, channels, height, width);
}

KanConvBlock KanConvBlock::make(int64_t dim, int order, int interior, double t_min, double t_max,
                                Rng& rng) {
    KanConvBlock b;
    b.kan = init_kan(dim, dim, order, interior, t_min, t_max, rng);
    double bound = std::sqrt(1.0 / 9.0);
    b.dw_kernel = Tensor({dim, 1, 3, 3}, true);
    for (double& v : b.dw_kernel.data()) v = rng.uniform(-bound, bound);
    b.ln_kan = LayerNorm::make(dim);
    b.ln_dw = LayerNorm::make(dim);
    return b;
}

Tensor KanConvBlock::forward(const Tensor& tokens, int64_t th, int64_t tw) const {
    if (tokens.rank() != 3)
        throw DimensionError("KanConvBlock: tokens must be [N,T,D], got " +
                             shape_str(tokens.shape()));
    int64_t N = tokens.dim(0), T = tokens.dim(1), D = tokens.dim(2);
    if (th * tw != T)
        throw DimensionError("KanConvBlock: token grid " + std::to_string(th) + "x" +
                             std::to_string(tw) + " != token count " + std::to_string(T));

    Tensor kan_path = ln_kan.forward(tokens);
    kan_path = reshape(kan_path, {N * T, D});
    kan_path = kan_forward(kan, kan_path);
    kan_path = reshape(kan_path, {N, T, D});

    Tensor dw_path = ln_dw.forward(tokens);
    dw_path = tokens_to_grid(dw_path, th, tw);
    dw_path = depthwise_conv2d(dw_path, dw_kernel, 1);
    dw_path = grid_to_tokens(dw_path);

    return tokens + kan_path + dw_path;
}

} // namespace semikan
