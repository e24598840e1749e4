#include "semikan/model.hpp"

#include "semikan/ops.hpp"

#include <algorithm>
#include <cmath>

namespace semikan {

std::string upsample_name(Upsample u) {
    switch (u) {
        case Upsample::Nearest: return "nearest";
        case Upsample::Bilinear: return "bilinear";
        case Upsample::TransposedConv: return "transposed_conv";
    }
    return "nearest";
}

Upsample upsample_from_name(const std::string& name) {
    if (name == "nearest") return Upsample::Nearest;
    if (name == "bilinear") return Upsample::Bilinear;
    if (name == "transposed_conv") return Upsample::TransposedConv;
    throw ConfigError("unknown upsampling strategy: " + name);
}

namespace {

void validate(const ModelConfig& cfg) {
    if (cfg.num_decoders < 2 || cfg.num_decoders > 3)
        throw ConfigError("ModelConfig: num_decoders must be 2 or 3, got " +
                          std::to_string(cfg.num_decoders));
    if (cfg.in_channels < 1 || cfg.num_classes < 2 || cfg.patch < 1 || cfg.embed_dim < 1 ||
        cfg.kan_blocks < 1)
        throw ConfigError("ModelConfig: non-positive dimension");
    for (int64_t c : cfg.channels)
        if (c < 1) throw ConfigError("ModelConfig: channel widths must be positive");
    if (int64_t(cfg.strategies.size()) < cfg.num_decoders)
        throw ConfigError("ModelConfig: need one upsampling strategy per decoder");
    if (!cfg.allow_duplicate_strategies)
        for (int64_t i = 0; i < cfg.num_decoders; ++i)
            for (int64_t j = i + 1; j < cfg.num_decoders; ++j)
                if (cfg.strategies[size_t(i)] == cfg.strategies[size_t(j)])
                    throw ConfigError("ModelConfig: decoder strategies must be pairwise distinct");
}

Tensor tconv_kernel(int64_t ch, Rng& rng) {
    double bound = std::sqrt(1.0 / double(ch * 4));
    Tensor t({ch, ch, 2, 2}, true);
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
}

int64_t conv_block_params(int64_t in_ch, int64_t out_ch) {
    return out_ch * in_ch * 9 + 2 * out_ch; // kernel + bn affine
}

int64_t kan_block_params(const ModelConfig& cfg) {
    int64_t D = cfg.embed_dim;
    int64_t nb = cfg.grid_size + cfg.spline_order;
    return D * D * nb + 2 * D * D // coeffs + w_base + w_spline
           + D * 9                // depthwise kernel
           + 4 * D;               // two layer norms
}

} // namespace

int64_t ablated_width(const ModelConfig& cfg) {
    int64_t D = cfg.embed_dim;
    int64_t target = kan_block_params(cfg);
    // Two stacked conv blocks D -> w -> D have 18*D*w + 2*w + 2*D params.
    int64_t w = (target - 2 * D + (18 * D + 2) / 2) / (18 * D + 2);
    return std::max<int64_t>(1, w);
}

SemiKanModel SemiKanModel::build(const ModelConfig& cfg, uint64_t seed) {
    validate(cfg);
    SemiKanModel m;
    m.cfg_ = cfg;
    Rng rng(seed);
    int64_t c1 = cfg.channels[0], c2 = cfg.channels[1], c3 = cfg.channels[2];

    m.enc1_ = ConvBlock::make(cfg.in_channels, c1, rng);
    m.enc2_ = ConvBlock::make(c1, c2, rng);
    m.enc3_ = ConvBlock::make(c2, c3, rng);

    int64_t abl_w = ablated_width(cfg);
    int64_t D = cfg.embed_dim;
    auto make_mixer = [&](std::vector<KanConvBlock>& kan, std::vector<ConvBlock>& ablated) {
        for (int64_t b = 0; b < cfg.kan_blocks; ++b) {
            if (cfg.use_kan) {
                kan.push_back(KanConvBlock::make(D, cfg.spline_order, cfg.grid_size,
                                                 cfg.domain_min, cfg.domain_max, rng));
            } else {
                ablated.push_back(ConvBlock::make(D, abl_w, rng));
                ablated.push_back(ConvBlock::make(abl_w, D, rng));
            }
        }
    };
    auto make_unembed = [&]() {
        double bound = std::sqrt(1.0 / double(D));
        Tensor t({D, cfg.patch * cfg.patch * c3}, true);
        for (double& v : t.data()) v = rng.uniform(-bound, bound);
        return t;
    };

    m.embed_in_ = PatchEmbedding::make(cfg.patch, c3, D, rng);
    make_mixer(m.bottleneck_, m.abl_bottleneck_);
    m.embed_out_ = make_unembed();

    for (int64_t d = 0; d < cfg.num_decoders; ++d) {
        Decoder dec;
        dec.strategy = cfg.strategies[size_t(d)];
        if (dec.strategy == Upsample::TransposedConv) {
            dec.up3 = tconv_kernel(c3, rng);
            dec.up2 = tconv_kernel(c3, rng);
            dec.up1 = tconv_kernel(c2, rng);
        }
        dec.fuse3 = ConvBlock::make(2 * c3, c3, rng);
        dec.embed_in = PatchEmbedding::make(cfg.patch, c3, D, rng);
        make_mixer(dec.kan, dec.ablated);
        dec.embed_out = make_unembed();
        dec.fuse2 = ConvBlock::make(c3 + c2, c2, rng);
        dec.fuse1 = ConvBlock::make(c2 + c1, c1, rng);
        {
            double bound = std::sqrt(1.0 / double(c1));
            dec.head_kernel = Tensor({cfg.num_classes, c1, 1, 1}, true);
            for (double& v : dec.head_kernel.data()) v = rng.uniform(-bound, bound);
            dec.head_bias = Tensor::zeros({1, cfg.num_classes, 1, 1}, true);
        }
        m.decoders_.push_back(std::move(dec));
    }
    m.register_params();
    return m;
}

void SemiKanModel::register_params() {
    params_.clear();
    buffers_.clear();
    auto reg_bn = [&](const std::string& prefix, BatchNorm2d& bn) {
        params_.emplace_back(prefix + ".gamma", bn.gamma);
        params_.emplace_back(prefix + ".beta", bn.beta);
        buffers_.emplace_back(prefix + ".running_mean", bn.running_mean);
        buffers_.emplace_back(prefix + ".running_var", bn.running_var);
    };
    auto reg_conv_block = [&](const std::string& prefix, ConvBlock& b) {
        params_.emplace_back(prefix + ".kernel", b.kernel);
        reg_bn(prefix + ".bn", b.bn);
    };
    auto reg_kan_block = [&](const std::string& prefix, KanConvBlock& b) {
        params_.emplace_back(prefix + ".kan.coeffs", b.kan.coeffs);
        params_.emplace_back(prefix + ".kan.w_base", b.kan.w_base);
        params_.emplace_back(prefix + ".kan.w_spline", b.kan.w_spline);
        buffers_.emplace_back(prefix + ".kan.edge_mask", b.kan.edge_mask);
        params_.emplace_back(prefix + ".dw_kernel", b.dw_kernel);
        params_.emplace_back(prefix + ".ln_kan.gamma", b.ln_kan.gamma);
        params_.emplace_back(prefix + ".ln_kan.beta", b.ln_kan.beta);
        params_.emplace_back(prefix + ".ln_dw.gamma", b.ln_dw.gamma);
        params_.emplace_back(prefix + ".ln_dw.beta", b.ln_dw.beta);
    };

    auto reg_mixer = [&](const std::string& prefix, std::vector<KanConvBlock>& kan,
                         std::vector<ConvBlock>& ablated) {
        for (size_t b = 0; b < kan.size(); ++b)
            reg_kan_block(prefix + ".block" + std::to_string(b), kan[b]);
        for (size_t b = 0; b < ablated.size(); ++b)
            reg_conv_block(prefix + ".ablated" + std::to_string(b), ablated[b]);
    };

    reg_conv_block("enc1", enc1_);
    reg_conv_block("enc2", enc2_);
    reg_conv_block("enc3", enc3_);
    params_.emplace_back("bottleneck.embed_in", embed_in_.proj);
    reg_mixer("bottleneck", bottleneck_, abl_bottleneck_);
    params_.emplace_back("bottleneck.embed_out", embed_out_);
    for (size_t d = 0; d < decoders_.size(); ++d) {
        std::string p = "dec" + std::to_string(d);
        Decoder& dec = decoders_[d];
        if (dec.strategy == Upsample::TransposedConv) {
            params_.emplace_back(p + ".up3", dec.up3);
            params_.emplace_back(p + ".up2", dec.up2);
            params_.emplace_back(p + ".up1", dec.up1);
        }
        reg_conv_block(p + ".fuse3", dec.fuse3);
        params_.emplace_back(p + ".embed_in", dec.embed_in.proj);
        reg_mixer(p, dec.kan, dec.ablated);
        params_.emplace_back(p + ".embed_out", dec.embed_out);
        reg_conv_block(p + ".fuse2", dec.fuse2);
        reg_conv_block(p + ".fuse1", dec.fuse1);
        params_.emplace_back(p + ".head_kernel", dec.head_kernel);
        params_.emplace_back(p + ".head_bias", dec.head_bias);
    }
}

int64_t SemiKanModel::parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

Tensor SemiKanModel::upsample_by(const Decoder& d, const Tensor& x, const Tensor& kernel) const {
    switch (d.strategy) {
        case Upsample::Nearest: return upsample_nearest(x, 2);
        case Upsample::Bilinear: return upsample_bilinear(x, 2);
        case Upsample::TransposedConv: return transposed_conv2d(x, kernel, 2);
    }
    throw ConfigError("unreachable upsampling strategy");
}

Tensor SemiKanModel::run_mixer_stage(std::vector<KanConvBlock>& kan,
                                     std::vector<ConvBlock>& ablated,
                                     const PatchEmbedding& embed_in, const Tensor& embed_out,
                                     const Tensor& x, bool training) {
    int64_t C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int64_t th = H / cfg_.patch, tw = W / cfg_.patch;
    Tensor tokens = tokenize(x, cfg_.patch, embed_in.proj);
    if (cfg_.use_kan) {
        for (KanConvBlock& blk : kan) tokens = blk.forward(tokens, th, tw);
    } else {
        Tensor grid = tokens_to_grid(tokens, th, tw);
        for (ConvBlock& blk : ablated) grid = blk.forward(grid, training);
        tokens = grid_to_tokens(grid);
    }
    return detokenize(tokens, cfg_.patch, embed_out, C, H, W);
}

std::vector<Tensor> SemiKanModel::forward(const Tensor& images, bool training) {
    if (images.rank() != 4 || images.dim(1) != cfg_.in_channels)
        throw DimensionError("forward: expected [N," + std::to_string(cfg_.in_channels) +
                             ",H,W], got " + shape_str(images.shape()));
    int64_t H = images.dim(2), W = images.dim(3);
    int64_t div = 8 * cfg_.patch;
    if (H % div != 0 || W % div != 0)
        throw ConfigError("forward: spatial dims must be divisible by " + std::to_string(div));

    Tensor e1 = enc1_.forward(images, training);             // c1 @ H
    Tensor e2 = enc2_.forward(avg_pool2d(e1, 2), training);  // c2 @ H/2
    Tensor e3 = enc3_.forward(avg_pool2d(e2, 2), training);  // c3 @ H/4
    Tensor p3 = avg_pool2d(e3, 2);                           // c3 @ H/8

    Tensor bot = run_mixer_stage(bottleneck_, abl_bottleneck_, embed_in_, embed_out_, p3,
                                 training);
    ++encoder_passes_;

    std::vector<Tensor> logits;
    logits.reserve(decoders_.size());
    for (Decoder& dec : decoders_) {
        Tensor u3 = upsample_by(dec, bot, dec.up3);                   // c3 @ H/4
        Tensor f3 = dec.fuse3.forward(concat({u3, e3}, 1), training); // c3 @ H/4
        Tensor d3 = run_mixer_stage(dec.kan, dec.ablated, dec.embed_in, dec.embed_out, f3,
                                    training);
        Tensor u2 = upsample_by(dec, d3, dec.up2);                    // c3 @ H/2
        Tensor f2 = dec.fuse2.forward(concat({u2, e2}, 1), training); // c2 @ H/2
        Tensor u1 = upsample_by(dec, f2, dec.up1);                    // c2 @ H
        Tensor f1 = dec.fuse1.forward(concat({u1, e1}, 1), training); // c1 @ H
        logits.push_back(conv2d(f1, dec.head_kernel, 1, 0) + dec.head_bias);
    }
    return logits;
}

Tensor SemiKanModel::predict(const Tensor& images) {
    NoGradScope no_grad;
    std::vector<Tensor> logits = forward(images, false);
    int64_t N = images.dim(0), K = cfg_.num_classes, H = images.dim(2), W = images.dim(3);
    Tensor avg = Tensor::zeros({N, K, H, W});
    for (const Tensor& lg : logits) {
        Tensor p = softmax(lg, 1);
        const double* ps = p.ptr();
        double* pa = avg.ptr();
        for (int64_t i = 0; i < avg.numel(); ++i) pa[i] += ps[i];
    }
    // Scaling by 1/B does not move the argmax but keeps the average a
    // distribution for anyone inspecting it.
    for (double& v : avg.data()) v /= double(logits.size());

    Tensor out = Tensor::zeros({N, H, W});
    const double* pa = avg.ptr();
    double* po = out.ptr();
    int64_t plane = H * W;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t i = 0; i < plane; ++i) {
            int64_t best = 0;
            double best_v = pa[(n * K) * plane + i];
            for (int64_t k = 1; k < K; ++k) {
                double v = pa[(n * K + k) * plane + i];
                if (v > best_v) { // strict: ties stay at the lower index
                    best_v = v;
                    best = k;
                }
            }
            po[n * plane + i] = double(best);
        }
    return out;
}

Tensor SemiKanModel::bottleneck_features(const Tensor& images) {
    NoGradScope no_grad;
    Tensor e1 = enc1_.forward(images, false);
    Tensor e2 = enc2_.forward(avg_pool2d(e1, 2), false);
    Tensor e3 = enc3_.forward(avg_pool2d(e2, 2), false);
    Tensor p3 = avg_pool2d(e3, 2);
    return run_mixer_stage(bottleneck_, abl_bottleneck_, embed_in_, embed_out_, p3, false);
}

std::vector<std::pair<std::string, const KanLayer*>> SemiKanModel::kan_layers() const {
    std::vector<std::pair<std::string, const KanLayer*>> out;
    for (size_t b = 0; b < bottleneck_.size(); ++b)
        out.emplace_back("bottleneck_block" + std::to_string(b), &bottleneck_[b].kan);
    for (size_t d = 0; d < decoders_.size(); ++d)
        for (size_t b = 0; b < decoders_[d].kan.size(); ++b)
            out.emplace_back("decoder" + std::to_string(d) + "_block" + std::to_string(b),
                             &decoders_[d].kan[b].kan);
    return out;
}

std::vector<std::pair<std::string, KanLayer*>> SemiKanModel::kan_layers_mut() {
    std::vector<std::pair<std::string, KanLayer*>> out;
    for (auto& [name, layer] : kan_layers())
        out.emplace_back(name, const_cast<KanLayer*>(layer));
    return out;
}

void SemiKanModel::load_state(const std::vector<std::pair<std::string, Tensor>>& state) {
    auto copy_into = [&](const std::string& name, Tensor& dst) {
        for (const auto& [n, src] : state) {
            if (n != name) continue;
            if (src.shape() != dst.shape())
                throw ConfigError("load_state: shape mismatch for " + name + ": checkpoint " +
                                  shape_str(src.shape()) + " vs model " + shape_str(dst.shape()));
            std::copy(src.data().begin(), src.data().end(), dst.data().begin());
            return;
        }
        throw ConfigError("load_state: checkpoint is missing tensor " + name);
    };
    for (auto& [name, t] : params_) copy_into(name, t);
    for (auto& [name, t] : buffers_) copy_into(name, t);
}

} // namespace semikan
