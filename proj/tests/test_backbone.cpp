#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "test_util.hpp"
#include "tsgen/diffusion.hpp"
#include "tsgen/errors.hpp"
#include "tsgen/unet.hpp"

using namespace tsgen;
using tsgen::test::grad_check;
using tsgen::test::random_const;
using tsgen::test::weighted_sum;

namespace {

/// Independent parameter count: walks the architecture definition with
/// plain arithmetic, mirroring the documented layer layout.
std::int64_t analytic_unet_params(const UnetConfig& cfg) {
    const std::int64_t base = cfg.base_channels;
    const std::int64_t emb = 4 * base;
    auto res_block = [&](std::int64_t in, std::int64_t out) {
        std::int64_t n = 0;
        n += 2 * in;                    // gn1 affine
        n += out * in * 9 + out;        // conv1
        n += emb * 2 * out + 2 * out;   // noise affine
        n += 2 * out;                   // gn2 affine
        n += out * out * 9 + out;       // conv2
        if (in != out) n += out * in + out;  // 1x1 skip
        return n;
    };
    auto attn_block = [&](std::int64_t ch) {
        return 2 * ch                   // gn affine
               + ch * 3 * ch + 3 * ch   // qkv
               + ch * ch + ch;          // proj
    };
    const int levels = static_cast<int>(cfg.channel_mult.size());
    auto has_attn = [&](int side) {
        return std::find(cfg.attention_resolutions.begin(), cfg.attention_resolutions.end(),
                         side) != cfg.attention_resolutions.end();
    };

    std::int64_t n = 0;
    n += base * emb + emb + emb * emb + emb;  // noise embedding MLP
    std::int64_t ch = base * cfg.channel_mult[0];
    n += ch * cfg.in_channels * 9 + ch;       // input conv

    std::vector<std::int64_t> skips{ch};
    int side = cfg.image_side;
    for (int l = 0; l < levels; ++l) {
        const std::int64_t out = base * cfg.channel_mult[l];
        for (int b = 0; b < cfg.num_res_blocks; ++b) {
            n += res_block(ch, out);
            ch = out;
            if (has_attn(side)) n += attn_block(ch);
            skips.push_back(ch);
        }
        if (l + 1 < levels) {
            n += ch * ch * 9 + ch;  // downsample conv
            side /= 2;
            skips.push_back(ch);
        }
    }
    n += res_block(ch, ch) + attn_block(ch) + res_block(ch, ch);  // middle
    for (int l = levels - 1; l >= 0; --l) {
        const std::int64_t out = base * cfg.channel_mult[l];
        for (int b = 0; b < cfg.num_res_blocks + 1; ++b) {
            n += res_block(ch + skips.back(), out);
            skips.pop_back();
            ch = out;
            if (has_attn(side)) n += attn_block(ch);
        }
        if (l > 0) {
            n += ch * ch * 9 + ch;  // upsample conv
            side *= 2;
        }
    }
    n += 2 * ch;                                  // output norm affine
    n += cfg.in_channels * ch * 9 + cfg.in_channels;  // output conv
    return n;
}

}  // namespace

TEST_CASE("all-zero parameters give the zero map") {
    UnetConfig cfg;
    cfg.base_channels = 8;
    cfg.channel_mult = {1, 2};
    cfg.attention_resolutions = {4};
    cfg.in_channels = 3;
    cfg.image_side = 8;
    cfg.num_res_blocks = 1;
    UNet net(cfg, 5);
    for (auto& [name, p] : net.params().all())
        std::fill(p.values().begin(), p.values().end(), 0.0);
    Tensor x = random_const({2, 3, 8, 8}, 7);
    Tensor y = net.forward(x, {0.3, -0.7});
    for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("fresh network starts as the zero map (zero-initialized head)") {
    UnetConfig cfg;
    cfg.base_channels = 8;
    cfg.channel_mult = {1, 2};
    cfg.attention_resolutions = {};
    cfg.in_channels = 2;
    cfg.image_side = 4;
    cfg.num_res_blocks = 1;
    UNet net(cfg, 11);
    Tensor x = random_const({1, 2, 4, 4}, 13);
    Tensor y = net.forward(x, {1.0});
    for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("batch permutation of inputs permutes outputs") {
    UnetConfig cfg;
    cfg.base_channels = 8;
    cfg.channel_mult = {1, 2};
    cfg.attention_resolutions = {4};
    cfg.in_channels = 2;
    cfg.image_side = 8;
    cfg.num_res_blocks = 1;
    UNet net(cfg, 17);
    Rng rng(19);
    for (auto& [name, p] : net.params().all())
        if (name == "out.w")
            for (auto& v : p.values()) v = 0.05 * rng.normal();  // non-zero head

    Tensor a = random_const({1, 2, 8, 8}, 23);
    Tensor b = random_const({1, 2, 8, 8}, 29);
    Tensor ab = concat({a, b}, 0);
    Tensor ba = concat({b, a}, 0);
    Tensor y_ab = net.forward(ab, {0.1, 0.9});
    Tensor y_ba = net.forward(ba, {0.9, 0.1});
    const std::int64_t half = y_ab.numel() / 2;
    for (std::int64_t i = 0; i < half; ++i) {
        CHECK(y_ab.values()[i] == y_ba.values()[half + i]);
        CHECK(y_ab.values()[half + i] == y_ba.values()[i]);
    }
}

TEST_CASE("output responds to spatial translation (no global pooling)") {
    UnetConfig cfg;
    cfg.base_channels = 8;
    cfg.channel_mult = {1, 2};
    cfg.attention_resolutions = {};
    cfg.in_channels = 1;
    cfg.image_side = 8;
    cfg.num_res_blocks = 1;
    UNet net(cfg, 31);
    Rng rng(37);
    for (auto& [name, p] : net.params().all())
        if (name == "out.w")
            for (auto& v : p.values()) v = 0.05 * rng.normal();

    Tensor x = random_const({1, 1, 8, 8}, 41);
    std::vector<double> shifted(x.numel());
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) shifted[r * 8 + c] = x.values()[r * 8 + (c + 1) % 8];
    Tensor xs = Tensor::from({1, 1, 8, 8}, std::move(shifted));
    Tensor y = net.forward(x, {0.2});
    Tensor ys = net.forward(xs, {0.2});
    double diff = 0.0;
    for (std::int64_t i = 0; i < y.numel(); ++i)
        diff = std::max(diff, std::abs(y.values()[i] - ys.values()[i]));
    CHECK(diff > 1e-8);
}

TEST_CASE("parameter count matches the independent enumeration") {
    // Reference configuration for 8x8 frames over 28 channels:
    // width 128, multipliers [1,2,2,4], attention at sides 8/4/2.
    UnetConfig cfg;
    cfg.base_channels = 128;
    cfg.channel_mult = {1, 2, 2, 4};
    cfg.attention_resolutions = {8, 4, 2};
    cfg.in_channels = 28;
    cfg.image_side = 8;
    cfg.num_res_blocks = 2;
    const std::int64_t analytic = analytic_unet_params(cfg);
    UNet net(cfg, 3);
    CHECK(net.params().total_count() == analytic);
    CHECK(analytic == 73'980'828);  // documented reference count

    // Same agreement on a differently shaped small config.
    UnetConfig small;
    small.base_channels = 16;
    small.channel_mult = {1, 2};
    small.attention_resolutions = {4};
    small.in_channels = 5;
    small.image_side = 8;
    small.num_res_blocks = 1;
    UNet tiny(small, 4);
    CHECK(tiny.params().total_count() == analytic_unet_params(small));
}

TEST_CASE("forward stays finite over randomized small configurations") {
    Rng rng(51);
    for (int trial = 0; trial < 1000; ++trial) {
        UnetConfig cfg;
        cfg.base_channels = 4 + static_cast<int>(rng.below(5));
        cfg.channel_mult = rng.below(2) ? std::vector<int>{1, 2} : std::vector<int>{1};
        cfg.image_side = cfg.channel_mult.size() == 2 ? 8 : 4;
        cfg.attention_resolutions =
            rng.below(2) ? std::vector<int>{cfg.image_side / 2} : std::vector<int>{};
        if (cfg.channel_mult.size() == 1 && !cfg.attention_resolutions.empty())
            cfg.attention_resolutions = {cfg.image_side};
        cfg.in_channels = 1 + static_cast<int>(rng.below(3));
        cfg.num_res_blocks = 1;
        UNet net(cfg, derive_seed(60, trial));
        Rng prng(derive_seed(61, trial));
        for (auto& [name, p] : net.params().all())
            if (name == "out.w")
                for (auto& v : p.values()) v = 0.1 * prng.normal();
        Tensor x = random_const({1, cfg.in_channels, cfg.image_side, cfg.image_side},
                                derive_seed(62, trial));
        Tensor y = net.forward(x, {rng.uniform(-2.0, 2.0)});
        for (double v : y.values()) REQUIRE(std::isfinite(v));
    }
}

TEST_CASE("unet gradients match finite differences on a reduced config") {
    UnetConfig cfg;
    cfg.base_channels = 4;
    cfg.channel_mult = {1};
    cfg.attention_resolutions = {4};
    cfg.in_channels = 2;
    cfg.image_side = 4;
    cfg.num_res_blocks = 1;
    UNet net(cfg, 71);
    Rng rng(73);
    for (auto& [name, p] : net.params().all())
        if (name == "out.w")
            for (auto& v : p.values()) v = 0.1 * rng.normal();
    INFO("parameter count: ", net.params().total_count());
    Tensor x = random_const({2, 2, 4, 4}, 79);
    std::vector<Tensor> params;
    for (auto& [name, p] : net.params().all()) params.push_back(p);
    CHECK(grad_check(params, [&] { return weighted_sum(net.forward(x, {0.4, -1.1})); },
                     1e-5) < 1e-3);
}

TEST_CASE("toy net: shape contract and zero map at zero weights") {
    ToyScoreNet net(3);
    for (auto& [name, p] : net.params().all())
        std::fill(p.values().begin(), p.values().end(), 0.0);
    Tensor x = random_const({2, 1, 3, 4}, 5);
    Tensor y = net.forward(x, {0.1, 0.2});
    CHECK(y.shape() == Shape{2, 1, 3, 4});
    for (double v : y.values()) CHECK(v == 0.0);

    CHECK_THROWS_AS(net.forward(random_const({1, 1, 4, 4}, 6), {0.0}), DataError);
}

TEST_CASE("toy kernel map averages absolute taps across channels") {
    ToyScoreNet net(7);
    auto& w = net.params().find("conv.w").values();
    std::fill(w.begin(), w.end(), 0.0);
    auto map0 = kernel_l1_map(net);
    REQUIRE(map0.size() == 3);
    REQUIRE(map0[0].size() == 4);
    for (const auto& row : map0)
        for (double v : row) CHECK(v == 0.0);

    // One unit weight on channel 0 at tap (1,1) -> map value 1/64 there.
    w[(0 * 3 + 1) * 4 + 1] = 1.0;
    auto map1 = kernel_l1_map(net);
    CHECK(map1[1][1] == doctest::Approx(1.0 / 64));
    CHECK(map1[0][0] == 0.0);

    // Channel permutation leaves the map unchanged.
    Rng rng(11);
    for (auto& v : w) v = rng.normal();
    auto before = kernel_l1_map(net);
    std::vector<double> permuted(w.size());
    for (int c = 0; c < 64; ++c) {
        const int src = (c + 17) % 64;
        for (int k = 0; k < 12; ++k) permuted[c * 12 + k] = w[src * 12 + k];
    }
    std::copy(permuted.begin(), permuted.end(), w.begin());
    auto after = kernel_l1_map(net);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) CHECK(before[r][c] == doctest::Approx(after[r][c]));
}

TEST_CASE("toy net gradients match finite differences") {
    ToyScoreNet net(13);
    Rng rng(17);
    for (auto& v : net.params().find("deconv.w").values()) v = 0.05 * rng.normal();
    Tensor x = random_const({2, 1, 3, 4}, 19);
    std::vector<Tensor> params;
    for (auto& [name, p] : net.params().all()) params.push_back(p);
    CHECK(grad_check(params, [&] { return weighted_sum(net.forward(x, {0.0, 0.0})); }) < 1e-3);
}

TEST_CASE("toy net trains as the denoiser of the reduced schedule") {
    // Smoke: a few masked-loss steps on random frames decrease the loss.
    EdmConfig edm;
    edm.sigma_max = 10.0;
    edm.num_steps = 8;
    auto net = std::make_shared<ToyScoreNet>(23);
    DiffusionState state(net, edm);
    Adam opt(1e-3);
    Tensor x = random_const({16, 1, 3, 4}, 29);
    std::vector<std::uint8_t> mask(x.numel(), 1);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 60; ++step) {
        Tensor loss = masked_loss(state, x, mask, derive_seed(31, step % 4));
        if (step == 0) first = loss.item();
        last = loss.item();
        backward(loss);
        opt.step(net->params());
    }
    CHECK(last < first);
}
