#pragma once

#include "semikan/blocks.hpp"

#include <array>
#include <string>
#include <vector>

namespace semikan {

enum class Upsample { Nearest, Bilinear, TransposedConv };

std::string upsample_name(Upsample u);
Upsample upsample_from_name(const std::string& name);

struct ModelConfig {
    int64_t in_channels = 1;
    int64_t num_classes = 2;
    int64_t num_decoders = 3;
    std::array<int64_t, 3> channels{16, 32, 64};
    int64_t patch = 2;
    int64_t embed_dim = 128;
    int spline_order = 3;
    int grid_size = 5;
    double domain_min = -1.0;
    double domain_max = 1.0;
    int64_t kan_blocks = 1;
    std::vector<Upsample> strategies{Upsample::Nearest, Upsample::Bilinear,
                                     Upsample::TransposedConv};
    // Replaces every KAN-Conv stage by plain conv blocks of matched
    // parameter count (ablation baseline).
    bool use_kan = true;
    // Test-only escape hatch for the pairwise-distinct strategy invariant.
    bool allow_duplicate_strategies = false;
};

// Shared encoder (3 conv blocks with x2 pooling, tokenized KAN-Conv
// bottleneck) feeding `num_decoders` independent decoders that differ only
// in their upsampling strategy. Each decoder runs a KAN-Conv stage at its
// deepest level and plain conv blocks above it.
class SemiKanModel {
  public:
    static SemiKanModel build(const ModelConfig& cfg, uint64_t seed);

    // Returns one logit map [N, num_classes, H, W] per decoder. The encoder
    // runs exactly once regardless of the number of decoders.
    std::vector<Tensor> forward(const Tensor& images, bool training);

    // Eval-mode class map [N,H,W]: argmax of the softmax-averaged decoder
    // probabilities, ties toward the lower class index.
    Tensor predict(const Tensor& images);

    const ModelConfig& config() const { return cfg_; }
    const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
    const std::vector<std::pair<std::string, Tensor>>& buffers() const { return buffers_; }
    int64_t parameter_count() const;
    int64_t encoder_passes() const { return encoder_passes_; }

    // Decoder-deepest feature map [N, C, H/4, W/4] of decoder 0 plus the
    // bottleneck output [N, C, H/8, W/8]; used by interpretability exports.
    Tensor bottleneck_features(const Tensor& images);

    // KAN layers in dump order: bottleneck blocks then per-decoder blocks.
    std::vector<std::pair<std::string, const KanLayer*>> kan_layers() const;
    std::vector<std::pair<std::string, KanLayer*>> kan_layers_mut();

    // Copies values for every parameter/buffer name found in `state`;
    // throws ConfigError on a missing name or shape mismatch.
    void load_state(const std::vector<std::pair<std::string, Tensor>>& state);

  private:
    struct Decoder {
        Upsample strategy = Upsample::Nearest;
        Tensor up3, up2, up1; // transposed-conv kernels when applicable
        ConvBlock fuse3, fuse2, fuse1;
        PatchEmbedding embed_in;
        Tensor embed_out;
        std::vector<KanConvBlock> kan;
        std::vector<ConvBlock> ablated; // conv token mixer (use_kan == false)
        Tensor head_kernel, head_bias;
    };

    Tensor upsample_by(const Decoder& d, const Tensor& x, const Tensor& kernel) const;
    // tokenize -> token mixer (KAN-Conv blocks, or the matched conv blocks on
    // the token grid when ablated) -> detokenize.
    Tensor run_mixer_stage(std::vector<KanConvBlock>& kan, std::vector<ConvBlock>& ablated,
                           const PatchEmbedding& embed_in, const Tensor& embed_out,
                           const Tensor& x, bool training);

    void register_params();

    ModelConfig cfg_;
    ConvBlock enc1_, enc2_, enc3_;
    PatchEmbedding embed_in_;
    Tensor embed_out_;
    std::vector<KanConvBlock> bottleneck_;
    std::vector<ConvBlock> abl_bottleneck_;
    std::vector<Decoder> decoders_;
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<std::pair<std::string, Tensor>> buffers_;
    int64_t encoder_passes_ = 0;
};

// Hidden width of the two conv blocks (D -> w -> D on the token grid) that
// replace one KanConvBlock when use_kan == false, chosen to match the
// block's parameter count within 10%.
int64_t ablated_width(const ModelConfig& cfg);

} // namespace semikan
