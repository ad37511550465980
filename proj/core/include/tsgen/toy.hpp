#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tsgen/diffusion.hpp"

namespace tsgen {

/// One planar point materialized as both 3x4 frames: the sparse variant
/// (zeros everywhere except the two center pixels holding the coordinates)
/// and the filled variant (the other ten taps hold fixed transformations of
/// the coordinates, standing in for a completion step).
struct ToySample {
    std::array<double, 2> p{};
    std::array<double, 12> irregular{};  // row-major 3x4
    std::array<double, 12> natural{};
};

inline constexpr int kToyCenterA = 1 * 4 + 1;  // s[1,1]
inline constexpr int kToyCenterB = 1 * 4 + 2;  // s[1,2]

/// Points from an equal-weight 4-component Gaussian mixture centered at
/// (+-1, +-1) with the given component std.
std::vector<ToySample> gen_toy(int num, std::uint64_t seed, double component_std = 0.2);

struct ToyStudyConfig {
    int num_train = 1000;
    int num_eval = 512;
    int eval_rounds = 8;
    int train_steps = 1500;
    int batch_size = 128;
    double lr = 1e-3;
    double component_std = 0.2;
    EdmConfig edm;  // reduced schedule: sigma_max 10, 8 steps

    ToyStudyConfig() {
        edm.sigma_max = 10.0;
        edm.num_steps = 8;
    }
};

struct ToySetupResult {
    double central_loss = 0.0;
    bool diverged = false;
    std::vector<std::vector<double>> kernel_map;  // 3x4
};

struct ToySeedResult {
    std::uint64_t seed = 0;
    std::array<ToySetupResult, 3> setups;
};

struct ToyReport {
    std::vector<ToySeedResult> per_seed;
    std::array<double, 3> median_loss{};                          // over non-diverged seeds
    std::array<std::vector<std::vector<double>>, 3> mean_kernel;  // averaged across seeds
};

/// Trains the three setups per seed - (1) full-frame loss on sparse data,
/// (2) center-masked loss on sparse data, (3) center-masked loss on filled
/// data - and evaluates all three by the same center-pixel denoising error
/// on held-out points of their own variant (identical points, sigmas and
/// noise draws across setups). Diverged runs are flagged and excluded from
/// the medians.
ToyReport run_toy_study(int num_seeds, const ToyStudyConfig& cfg = {},
                        std::uint64_t base_seed = 0);

/// scores.csv (setup, seed, central_loss) plus per-seed and mean kernel
/// maps as CSV grids and SVG heatmaps under kernels/.
void write_toy_report(const ToyReport& report, const std::string& out_dir);

}  // namespace tsgen
