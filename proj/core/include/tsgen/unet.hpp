#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "tsgen/nn.hpp"
#include "tsgen/tensor.hpp"

namespace tsgen {

/// Denoiser network interface: same-shape image-to-image map conditioned on
/// a per-sample noise scalar (which an implementation may ignore).
class Backbone {
public:
    virtual ~Backbone() = default;
    virtual Tensor forward(const Tensor& x, const std::vector<double>& c_noise) = 0;
    virtual ParamStore& params() = 0;
    virtual const ParamStore& params() const = 0;
};

struct UnetConfig {
    int base_channels = 128;
    std::vector<int> channel_mult = {1, 2, 2, 2};
    std::vector<int> attention_resolutions = {8, 4, 2};
    int in_channels = 1;
    int image_side = 8;
    int num_res_blocks = 2;

    void validate() const;
};

/// U-Net with residual blocks, per-block noise conditioning via adaptive
/// scale-shift, and self-attention at the configured spatial sides.
/// Channel widths, multipliers and attention sides come from the config;
/// block layout, group-norm width (min(32, C/4)) and head count
/// (max(1, C/64)) follow the usual score-network defaults. The final
/// convolution is zero-initialized.
class UNet : public Backbone {
public:
    UNet(const UnetConfig& cfg, std::uint64_t init_seed);

    Tensor forward(const Tensor& x, const std::vector<double>& c_noise) override;
    ParamStore& params() override { return params_; }
    const ParamStore& params() const override { return params_; }
    const UnetConfig& config() const { return cfg_; }

private:
    struct ResBlock {
        Tensor gn1_g, gn1_b, conv1_w, conv1_b;
        Tensor aff_w, aff_b;
        Tensor gn2_g, gn2_b, conv2_w, conv2_b;
        Tensor skip_w, skip_b;  // 1x1, only when channels change
        int in_ch = 0, out_ch = 0;
    };
    struct AttnBlock {
        Tensor gn_g, gn_b;
        AttentionParams attn;
    };

    ResBlock make_res_block(const std::string& prefix, int in_ch, int out_ch, Rng& rng);
    AttnBlock make_attn_block(const std::string& prefix, int ch, Rng& rng);
    Tensor run_res_block(const ResBlock& blk, const Tensor& h, const Tensor& emb);
    Tensor run_attn_block(const AttnBlock& blk, const Tensor& h);

    UnetConfig cfg_;
    ParamStore params_;
    int emb_dim_ = 0;
    Tensor emb_w0_, emb_b0_, emb_w1_, emb_b1_;
    Tensor conv_in_w_, conv_in_b_;
    std::vector<ResBlock> enc_blocks_;
    std::vector<int> enc_attn_idx_;      // index into attn_blocks_ or -1
    std::vector<Tensor> down_w_, down_b_;
    ResBlock mid_block1_, mid_block2_;
    AttnBlock mid_attn_;
    std::vector<ResBlock> dec_blocks_;
    std::vector<int> dec_attn_idx_;
    std::vector<Tensor> up_w_, up_b_;
    std::vector<AttnBlock> attn_blocks_;
    Tensor out_gn_g_, out_gn_b_, out_w_, out_b_;
};

/// Minimal score net for the planar toy study: one full-frame convolution
/// (3x4 kernel, 64 channels), ReLU, and a transposed convolution restoring
/// the 3x4 frame. Ignores the noise input.
class ToyScoreNet : public Backbone {
public:
    explicit ToyScoreNet(std::uint64_t init_seed);

    Tensor forward(const Tensor& x, const std::vector<double>& c_noise) override;
    ParamStore& params() override { return params_; }
    const ParamStore& params() const override { return params_; }

    static constexpr int kRows = 3;
    static constexpr int kCols = 4;
    static constexpr int kChannels = 64;

private:
    ParamStore params_;
    Tensor conv_w_, conv_b_, deconv_w_, deconv_b_;
};

/// Mean over channels of |w| per kernel tap of the toy net's first
/// convolution; shows where the learned kernel attends.
std::vector<std::vector<double>> kernel_l1_map(const ToyScoreNet& net);

/// Fourier features for the per-sample noise scalar (constant w.r.t.
/// parameters): [cos(c*w_i), sin(c*w_i)] with log-spaced w.
Tensor noise_embedding(const std::vector<double>& c_noise, int num_channels);

}  // namespace tsgen
