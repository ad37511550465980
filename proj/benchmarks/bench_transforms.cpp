#include <benchmark/benchmark.h>

#include "tsgen/rng.hpp"
#include "tsgen/transforms.hpp"

using namespace tsgen;

namespace {

RegularSeries random_series(int d, int L, std::uint64_t seed) {
    Rng rng(seed);
    RegularSeries s(d, L);
    for (auto& v : s.values) v = rng.uniform(-1.0, 1.0);
    return s;
}

void bm_delay_roundtrip(benchmark::State& state) {
    const int L = static_cast<int>(state.range(0));
    DelayConfig cfg{8, 3, 8};
    if (L >= 96) cfg = DelayConfig{16, 6, 16};
    if (L >= 768) cfg = DelayConfig{32, 24, 32};
    cfg.image_side = std::max(cfg.image_side, std::max(cfg.n, cfg.num_columns(L)));
    RegularSeries s = random_series(5, L, 1);
    for (auto _ : state) {
        SeriesImage img = delay_embed(s, cfg);
        RegularSeries back = delay_invert(img);
        benchmark::DoNotOptimize(back.values.data());
    }
}

void bm_gaf_roundtrip(benchmark::State& state) {
    const int L = static_cast<int>(state.range(0));
    RegularSeries s = random_series(5, L, 2);
    for (auto _ : state) {
        SeriesImage img = gaf(s);
        RegularSeries back = gaf_invert(img);
        benchmark::DoNotOptimize(back.values.data());
    }
}

}  // namespace

BENCHMARK(bm_delay_roundtrip)->Arg(24)->Arg(96)->Arg(768);
BENCHMARK(bm_gaf_roundtrip)->Arg(24)->Arg(96);
