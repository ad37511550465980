#include "tsgen/unet.hpp"

#include <algorithm>
#include <cmath>

#include "tsgen/errors.hpp"

namespace tsgen {

namespace {

int norm_groups(int channels) {
    // Largest divisor of the channel count within the usual min(32, C/4) cap.
    int g = std::max(1, std::min(32, channels / 4));
    while (g > 1 && channels % g != 0) --g;
    return g;
}
int attn_heads(int channels) { return std::max(1, channels / 64); }

bool contains(const std::vector<int>& xs, int v) {
    return std::find(xs.begin(), xs.end(), v) != xs.end();
}

}  // namespace

void UnetConfig::validate() const {
    if (base_channels < 1 || in_channels < 1 || image_side < 1 || num_res_blocks < 1)
        throw ConfigError("unet: dimensions must be positive");
    if (channel_mult.empty()) throw ConfigError("unet: channel_mult must not be empty");
    const int levels = static_cast<int>(channel_mult.size());
    int side = image_side;
    for (int l = 0; l + 1 < levels; ++l) {
        if (side % 2 != 0)
            throw ConfigError("unet: image side " + std::to_string(image_side) +
                              " is not divisible by 2^" + std::to_string(levels - 1));
        side /= 2;
    }
    std::vector<int> achievable;
    side = image_side;
    for (int l = 0; l < levels; ++l) {
        achievable.push_back(side);
        if (l + 1 < levels) side /= 2;
    }
    for (int r : attention_resolutions)
        if (!contains(achievable, r))
            throw ConfigError("unet: attention resolution " + std::to_string(r) +
                              " is not an achievable side");
}

Tensor noise_embedding(const std::vector<double>& c_noise, int num_channels) {
    const int B = static_cast<int>(c_noise.size());
    const int half = num_channels / 2;
    std::vector<double> v(static_cast<std::size_t>(B) * num_channels);
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(1.0 / 10000.0, static_cast<double>(i) / half);
        for (int b = 0; b < B; ++b) {
            const double a = c_noise[b] * freq;
            v[static_cast<std::size_t>(b) * num_channels + i] = std::cos(a);
            v[static_cast<std::size_t>(b) * num_channels + half + i] = std::sin(a);
        }
    }
    return Tensor::from({B, num_channels}, std::move(v));
}

UNet::ResBlock UNet::make_res_block(const std::string& prefix, int in_ch, int out_ch,
                                    Rng& rng) {
    ResBlock blk;
    blk.in_ch = in_ch;
    blk.out_ch = out_ch;
    auto ones = [](int n) { return std::vector<double>(n, 1.0); };
    auto zeros = [](int n) { return std::vector<double>(n, 0.0); };

    blk.gn1_g = params_.add(prefix + ".gn1.g", Tensor::param({in_ch}, ones(in_ch)));
    blk.gn1_b = params_.add(prefix + ".gn1.b", Tensor::param({in_ch}, zeros(in_ch)));
    const std::int64_t k1 = static_cast<std::int64_t>(out_ch) * in_ch * 9;
    blk.conv1_w = params_.add(prefix + ".conv1.w",
                              Tensor::param({out_ch, in_ch, 3, 3},
                                            kaiming_uniform(k1, in_ch * 9, rng)));
    blk.conv1_b = params_.add(prefix + ".conv1.b", Tensor::param({out_ch}, zeros(out_ch)));
    blk.aff_w = params_.add(prefix + ".affine.w",
                            Tensor::param({emb_dim_, 2 * out_ch},
                                          xavier_uniform(static_cast<std::int64_t>(emb_dim_) * 2 * out_ch,
                                                         emb_dim_, 2 * out_ch, rng)));
    blk.aff_b = params_.add(prefix + ".affine.b", Tensor::param({2 * out_ch}, zeros(2 * out_ch)));
    blk.gn2_g = params_.add(prefix + ".gn2.g", Tensor::param({out_ch}, ones(out_ch)));
    blk.gn2_b = params_.add(prefix + ".gn2.b", Tensor::param({out_ch}, zeros(out_ch)));
    const std::int64_t k2 = static_cast<std::int64_t>(out_ch) * out_ch * 9;
    blk.conv2_w = params_.add(prefix + ".conv2.w",
                              Tensor::param({out_ch, out_ch, 3, 3},
                                            kaiming_uniform(k2, out_ch * 9, rng)));
    blk.conv2_b = params_.add(prefix + ".conv2.b", Tensor::param({out_ch}, zeros(out_ch)));
    if (in_ch != out_ch) {
        blk.skip_w = params_.add(prefix + ".skip.w",
                                 Tensor::param({out_ch, in_ch, 1, 1},
                                               kaiming_uniform(static_cast<std::int64_t>(out_ch) * in_ch,
                                                               in_ch, rng)));
        blk.skip_b = params_.add(prefix + ".skip.b", Tensor::param({out_ch}, zeros(out_ch)));
    }
    return blk;
}

UNet::AttnBlock UNet::make_attn_block(const std::string& prefix, int ch, Rng& rng) {
    AttnBlock blk;
    blk.gn_g = params_.add(prefix + ".gn.g", Tensor::param({ch}, std::vector<double>(ch, 1.0)));
    blk.gn_b = params_.add(prefix + ".gn.b", Tensor::param({ch}, std::vector<double>(ch, 0.0)));
    blk.attn = make_attention(params_, prefix + ".attn", ch, attn_heads(ch), rng);
    return blk;
}

UNet::UNet(const UnetConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(init_seed, 0x0E77));
    const int base = cfg_.base_channels;
    emb_dim_ = 4 * base;
    auto zeros = [](std::int64_t n) { return std::vector<double>(n, 0.0); };

    emb_w0_ = params_.add("emb.w0", Tensor::param({base, emb_dim_},
                                                  xavier_uniform(static_cast<std::int64_t>(base) * emb_dim_,
                                                                 base, emb_dim_, rng)));
    emb_b0_ = params_.add("emb.b0", Tensor::param({emb_dim_}, zeros(emb_dim_)));
    emb_w1_ = params_.add("emb.w1", Tensor::param({emb_dim_, emb_dim_},
                                                  xavier_uniform(static_cast<std::int64_t>(emb_dim_) * emb_dim_,
                                                                 emb_dim_, emb_dim_, rng)));
    emb_b1_ = params_.add("emb.b1", Tensor::param({emb_dim_}, zeros(emb_dim_)));

    const int levels = static_cast<int>(cfg_.channel_mult.size());
    const int c0 = base * cfg_.channel_mult[0];
    conv_in_w_ = params_.add("in.w",
                             Tensor::param({c0, cfg_.in_channels, 3, 3},
                                           kaiming_uniform(static_cast<std::int64_t>(c0) * cfg_.in_channels * 9,
                                                           cfg_.in_channels * 9, rng)));
    conv_in_b_ = params_.add("in.b", Tensor::param({c0}, zeros(c0)));

    // Encoder: skip channel bookkeeping mirrors the decoder below.
    std::vector<int> skip_channels{c0};
    int ch = c0;
    int side = cfg_.image_side;
    for (int l = 0; l < levels; ++l) {
        const int out_ch = base * cfg_.channel_mult[l];
        for (int b = 0; b < cfg_.num_res_blocks; ++b) {
            const std::string p = "enc.l" + std::to_string(l) + ".b" + std::to_string(b);
            enc_blocks_.push_back(make_res_block(p, ch, out_ch, rng));
            ch = out_ch;
            if (contains(cfg_.attention_resolutions, side)) {
                enc_attn_idx_.push_back(static_cast<int>(attn_blocks_.size()));
                attn_blocks_.push_back(make_attn_block(p + ".attn", ch, rng));
            } else {
                enc_attn_idx_.push_back(-1);
            }
            skip_channels.push_back(ch);
        }
        if (l + 1 < levels) {
            const std::string p = "enc.l" + std::to_string(l) + ".down";
            down_w_.push_back(params_.add(p + ".w",
                                          Tensor::param({ch, ch, 3, 3},
                                                        kaiming_uniform(static_cast<std::int64_t>(ch) * ch * 9,
                                                                        ch * 9, rng))));
            down_b_.push_back(params_.add(p + ".b", Tensor::param({ch}, zeros(ch))));
            side /= 2;
            skip_channels.push_back(ch);
        }
    }

    mid_block1_ = make_res_block("mid.b1", ch, ch, rng);
    mid_attn_ = make_attn_block("mid.attn", ch, rng);
    mid_block2_ = make_res_block("mid.b2", ch, ch, rng);

    for (int l = levels - 1; l >= 0; --l) {
        const int out_ch = base * cfg_.channel_mult[l];
        for (int b = 0; b < cfg_.num_res_blocks + 1; ++b) {
            const std::string p = "dec.l" + std::to_string(l) + ".b" + std::to_string(b);
            const int skip_ch = skip_channels.back();
            skip_channels.pop_back();
            dec_blocks_.push_back(make_res_block(p, ch + skip_ch, out_ch, rng));
            ch = out_ch;
            if (contains(cfg_.attention_resolutions, side)) {
                dec_attn_idx_.push_back(static_cast<int>(attn_blocks_.size()));
                attn_blocks_.push_back(make_attn_block(p + ".attn", ch, rng));
            } else {
                dec_attn_idx_.push_back(-1);
            }
        }
        if (l > 0) {
            const std::string p = "dec.l" + std::to_string(l) + ".up";
            up_w_.push_back(params_.add(p + ".w",
                                        Tensor::param({ch, ch, 3, 3},
                                                      kaiming_uniform(static_cast<std::int64_t>(ch) * ch * 9,
                                                                      ch * 9, rng))));
            up_b_.push_back(params_.add(p + ".b", Tensor::param({ch}, zeros(ch))));
            side *= 2;
        }
    }

    out_gn_g_ = params_.add("out.gn.g", Tensor::param({ch}, std::vector<double>(ch, 1.0)));
    out_gn_b_ = params_.add("out.gn.b", Tensor::param({ch}, zeros(ch)));
    // Zero-initialized head: the raw network starts as the zero map.
    out_w_ = params_.add("out.w", Tensor::param({cfg_.in_channels, ch, 3, 3},
                                                zeros(static_cast<std::int64_t>(cfg_.in_channels) * ch * 9)));
    out_b_ = params_.add("out.b", Tensor::param({cfg_.in_channels}, zeros(cfg_.in_channels)));
}

Tensor UNet::run_res_block(const ResBlock& blk, const Tensor& h, const Tensor& emb) {
    Tensor t = group_norm(h, blk.gn1_g, blk.gn1_b, norm_groups(blk.in_ch));
    t = conv2d(silu(t), blk.conv1_w, blk.conv1_b, 1, 1);
    Tensor st = linear(emb, blk.aff_w, blk.aff_b);  // [B, 2*out]
    Tensor s = slice(st, 1, 0, blk.out_ch);
    Tensor sh = slice(st, 1, blk.out_ch, blk.out_ch);
    t = silu(scale_shift_2d(group_norm(t, blk.gn2_g, blk.gn2_b, norm_groups(blk.out_ch)), s, sh));
    t = conv2d(t, blk.conv2_w, blk.conv2_b, 1, 1);
    Tensor skip = blk.skip_w.defined() ? conv2d(h, blk.skip_w, blk.skip_b, 1, 0) : h;
    return add(skip, t);
}

Tensor UNet::run_attn_block(const AttnBlock& blk, const Tensor& h) {
    const int B = h.dim(0), C = h.dim(1), S = h.dim(2);
    Tensor t = group_norm(h, blk.gn_g, blk.gn_b, norm_groups(C));
    t = reshape(t, {B, C, S * S});
    t = permute(t, {0, 2, 1});  // [B, S^2, C]
    t = attention_forward(blk.attn, t);
    t = permute(t, {0, 2, 1});
    t = reshape(t, {B, C, S, S});
    return add(h, t);
}

Tensor UNet::forward(const Tensor& x, const std::vector<double>& c_noise) {
    if (x.shape().size() != 4 || x.dim(1) != cfg_.in_channels || x.dim(2) != cfg_.image_side ||
        x.dim(3) != cfg_.image_side)
        throw DataError("unet: input shape " + shape_str(x.shape()) +
                        " does not match the configuration");
    if (static_cast<int>(c_noise.size()) != x.dim(0))
        throw DataError("unet: noise vector length must match the batch");

    Tensor emb = noise_embedding(c_noise, cfg_.base_channels);
    emb = silu(linear(emb, emb_w0_, emb_b0_));
    emb = silu(linear(emb, emb_w1_, emb_b1_));

    Tensor h = conv2d(x, conv_in_w_, conv_in_b_, 1, 1);
    std::vector<Tensor> skips{h};
    const int levels = static_cast<int>(cfg_.channel_mult.size());
    int blk_i = 0, down_i = 0;
    for (int l = 0; l < levels; ++l) {
        for (int b = 0; b < cfg_.num_res_blocks; ++b, ++blk_i) {
            h = run_res_block(enc_blocks_[blk_i], h, emb);
            if (enc_attn_idx_[blk_i] >= 0)
                h = run_attn_block(attn_blocks_[enc_attn_idx_[blk_i]], h);
            skips.push_back(h);
        }
        if (l + 1 < levels) {
            h = conv2d(h, down_w_[down_i], down_b_[down_i], 2, 1);
            ++down_i;
            skips.push_back(h);
        }
    }

    h = run_res_block(mid_block1_, h, emb);
    h = run_attn_block(mid_attn_, h);
    h = run_res_block(mid_block2_, h, emb);

    blk_i = 0;
    int up_i = 0;
    for (int l = levels - 1; l >= 0; --l) {
        for (int b = 0; b < cfg_.num_res_blocks + 1; ++b, ++blk_i) {
            Tensor skip = skips.back();
            skips.pop_back();
            h = run_res_block(dec_blocks_[blk_i], concat({h, skip}, 1), emb);
            if (dec_attn_idx_[blk_i] >= 0)
                h = run_attn_block(attn_blocks_[dec_attn_idx_[blk_i]], h);
        }
        if (l > 0) {
            h = upsample_nearest2(h);
            h = conv2d(h, up_w_[up_i], up_b_[up_i], 1, 1);
            ++up_i;
        }
    }

    h = silu(group_norm(h, out_gn_g_, out_gn_b_, norm_groups(h.dim(1))));
    return conv2d(h, out_w_, out_b_, 1, 1);
}

// ---- toy score net -----------------------------------------------------------

ToyScoreNet::ToyScoreNet(std::uint64_t init_seed) {
    Rng rng(derive_seed(init_seed, 0x707));
    const std::int64_t k = static_cast<std::int64_t>(kChannels) * kRows * kCols;
    conv_w_ = params_.add("conv.w", Tensor::param({kChannels, 1, kRows, kCols},
                                                  kaiming_uniform(k, kRows * kCols, rng)));
    conv_b_ = params_.add("conv.b",
                          Tensor::param({kChannels}, std::vector<double>(kChannels, 0.0)));
    deconv_w_ = params_.add("deconv.w",
                            Tensor::param({kChannels, 1, kRows, kCols},
                                          std::vector<double>(k, 0.0)));  // zero-init head
    deconv_b_ = params_.add("deconv.b", Tensor::param({1}, std::vector<double>(1, 0.0)));
}

Tensor ToyScoreNet::forward(const Tensor& x, const std::vector<double>&) {
    if (x.shape().size() != 4 || x.dim(1) != 1 || x.dim(2) != kRows || x.dim(3) != kCols)
        throw DataError("toy net: input must be [B,1,3,4], got " + shape_str(x.shape()));
    Tensor h = conv2d(x, conv_w_, conv_b_, 1, 0);  // [B,64,1,1]
    h = relu(h);
    return conv_transpose2d(h, deconv_w_, deconv_b_);  // [B,1,3,4]
}

std::vector<std::vector<double>> kernel_l1_map(const ToyScoreNet& net) {
    const Tensor w = net.params().find("conv.w");
    std::vector<std::vector<double>> map(ToyScoreNet::kRows,
                                         std::vector<double>(ToyScoreNet::kCols, 0.0));
    const auto& wv = w.values();
    for (int c = 0; c < ToyScoreNet::kChannels; ++c)
        for (int r = 0; r < ToyScoreNet::kRows; ++r)
            for (int k = 0; k < ToyScoreNet::kCols; ++k)
                map[r][k] += std::abs(
                    wv[(static_cast<std::size_t>(c) * ToyScoreNet::kRows + r) * ToyScoreNet::kCols +
                       k]);
    for (auto& row : map)
        for (auto& v : row) v /= ToyScoreNet::kChannels;
    return map;
}

}  // namespace tsgen
