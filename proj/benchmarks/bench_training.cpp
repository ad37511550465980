#include <benchmark/benchmark.h>

#include "tsgen/completion.hpp"
#include "tsgen/diffusion.hpp"
#include "tsgen/missing.hpp"
#include "tsgen/transforms.hpp"
#include "tsgen/unet.hpp"

using namespace tsgen;

namespace {

std::vector<IrregularSeries> make_batch_data(int n, int d, int L) {
    auto series = generate_sines(n, d, L, 3);
    std::vector<IrregularSeries> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i)
        out.push_back(drop_random(series[i], {MissingMode::kRandom, 0.5, 0, 0,
                                              derive_seed(9, i)}));
    return out;
}

void bm_ae_step(benchmark::State& state) {
    const int B = static_cast<int>(state.range(0));
    const int layers = static_cast<int>(state.range(1));
    auto data = make_batch_data(B, 5, 24);
    TstConfig cfg;
    cfg.num_layers = layers;
    CompletionModel model(5, 24, cfg, 1);
    Adam opt(1e-4);
    std::vector<const IrregularSeries*> batch;
    for (auto& s : data) batch.push_back(&s);
    for (auto _ : state) {
        Tensor loss = ae_loss_batch(batch, model.reconstruct(batch, nullptr));
        backward(loss);
        opt.step(model.params());
    }
}

void bm_diffusion_step(benchmark::State& state) {
    const int B = static_cast<int>(state.range(0));
    const int base = static_cast<int>(state.range(1));
    auto data = make_batch_data(B, 5, 24);
    DelayConfig dcfg{8, 3, 8};
    auto occ = delay_occupancy(24, dcfg);

    UnetConfig ucfg;
    ucfg.base_channels = base;
    ucfg.channel_mult = {1, 2};
    ucfg.attention_resolutions = {4};
    ucfg.in_channels = 5;
    ucfg.image_side = 8;
    ucfg.num_res_blocks = 1;
    auto net = std::make_shared<UNet>(ucfg, 2);
    DiffusionState diff(net, EdmConfig{});
    Adam opt(1e-4);

    std::vector<double> series_vals(static_cast<std::size_t>(B) * 5 * 24, 0.0);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(B) * 5 * 64, 0);
    for (int b = 0; b < B; ++b) {
        PixelMask pm = mask_to_pixels(data[b].observed, 5, 24, occ, 8);
        std::copy(pm.active.begin(), pm.active.end(),
                  mask.begin() + static_cast<std::size_t>(b) * 5 * 64);
        for (int i = 0; i < 5; ++i)
            for (int t = 0; t < 24; ++t)
                series_vals[(static_cast<std::size_t>(b) * 5 + i) * 24 + t] =
                    data[b].observed_at(i, t) ? data[b].value_at(i, t) : 0.0;
    }
    std::uint64_t seed = 0;
    for (auto _ : state) {
        Tensor x = series_to_image_op(Tensor::from({B, 5, 24}, series_vals), occ, 8);
        Tensor loss = masked_loss(diff, x, mask, ++seed);
        backward(loss);
        opt.step(net->params());
    }
}

void bm_unet_param_count(benchmark::State& state) {
    for (auto _ : state) {
        UnetConfig ucfg;
        ucfg.base_channels = 32;
        ucfg.channel_mult = {1, 2};
        ucfg.attention_resolutions = {4};
        ucfg.in_channels = 5;
        ucfg.image_side = 8;
        UNet net(ucfg, 1);
        benchmark::DoNotOptimize(net.params().total_count());
    }
}

}  // namespace

BENCHMARK(bm_ae_step)->Args({64, 6})->Args({64, 3})->Args({128, 6})->Unit(benchmark::kMillisecond);
BENCHMARK(bm_diffusion_step)
    ->Args({64, 16})
    ->Args({64, 32})
    ->Args({128, 32})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(bm_unet_param_count)->Unit(benchmark::kMillisecond);
