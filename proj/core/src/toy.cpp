#include "tsgen/toy.hpp"

#include <algorithm>
#include <cmath>

#include "tsgen/csvio.hpp"
#include "tsgen/errors.hpp"
#include "tsgen/svg.hpp"
#include "tsgen/unet.hpp"

namespace tsgen {

std::vector<ToySample> gen_toy(int num, std::uint64_t seed, double component_std) {
    if (num < 1) throw ConfigError("gen_toy: num must be >= 1");
    static const double centers[4][2] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
    Rng rng(derive_seed(seed, 0x70F));
    std::vector<ToySample> out;
    out.reserve(num);
    for (int k = 0; k < num; ++k) {
        const int comp = static_cast<int>(rng.below(4));
        ToySample s;
        s.p[0] = centers[comp][0] + component_std * rng.normal();
        s.p[1] = centers[comp][1] + component_std * rng.normal();

        s.irregular.fill(0.0);
        s.irregular[kToyCenterA] = s.p[0];
        s.irregular[kToyCenterB] = s.p[1];

        // Fixed fill functions for the ten non-center taps, row-major.
        const double a = s.p[0], b = s.p[1];
        const double fills[10] = {a,  b,          a + b, a - b, a * b,
                                  -a, -b, (a + b) / 2.0, a * a, b * b};
        int fi = 0;
        for (int pix = 0; pix < 12; ++pix) {
            if (pix == kToyCenterA) { s.natural[pix] = a; continue; }
            if (pix == kToyCenterB) { s.natural[pix] = b; continue; }
            s.natural[pix] = fills[fi++];
        }
        out.push_back(s);
    }
    return out;
}

namespace {

Tensor pack_frames(const std::vector<ToySample>& samples, const std::vector<int>& idx,
                   bool natural) {
    std::vector<double> v(idx.size() * 12);
    std::size_t o = 0;
    for (int id : idx) {
        const auto& frame = natural ? samples[id].natural : samples[id].irregular;
        for (double x : frame) v[o++] = x;
    }
    return Tensor::from({static_cast<int>(idx.size()), 1, 3, 4}, std::move(v));
}

std::vector<std::uint8_t> frame_mask(int batch, bool center_only) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(batch) * 12, center_only ? 0 : 1);
    if (center_only)
        for (int b = 0; b < batch; ++b) {
            mask[static_cast<std::size_t>(b) * 12 + kToyCenterA] = 1;
            mask[static_cast<std::size_t>(b) * 12 + kToyCenterB] = 1;
        }
    return mask;
}

struct SetupSpec {
    bool natural_data;
    bool center_mask;
};

constexpr SetupSpec kSetups[3] = {
    {false, false},  // full-frame loss, sparse data
    {false, true},   // center-masked loss, sparse data
    {true, true},    // center-masked loss, filled data
};

ToySetupResult train_and_eval_setup(int setup, const std::vector<ToySample>& train,
                                    const std::vector<ToySample>& eval_set,
                                    const ToyStudyConfig& cfg, std::uint64_t seed) {
    ToySetupResult result;
    const SetupSpec spec = kSetups[setup];
    auto net = std::make_shared<ToyScoreNet>(derive_seed(seed, 0x70A0 + setup));
    DiffusionState state(net, cfg.edm);
    Adam opt(cfg.lr);
    Rng rng(derive_seed(seed, 0x77A1 + setup));

    const int n = static_cast<int>(train.size());
    try {
        for (int step = 0; step < cfg.train_steps; ++step) {
            const int B = std::min(cfg.batch_size, n);
            std::vector<int> idx(B);
            for (auto& id : idx) id = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
            Tensor x = pack_frames(train, idx, spec.natural_data);
            Tensor loss = masked_loss(state, x, frame_mask(B, spec.center_mask),
                                      rng.next_u64());
            if (!std::isfinite(loss.item())) throw DataError("toy: loss diverged");
            backward(loss);
            opt.step(net->params());
        }
        if (!net->params().all_finite()) throw DataError("toy: parameters diverged");

        // Shared-metric evaluation: center-pixel denoising error, unit
        // weighting, identical draw seeds across setups.
        EdmConfig eval_cfg = cfg.edm;
        eval_cfg.lambda = EdmConfig::Lambda::kUnit;
        DiffusionState eval_state(net, eval_cfg);
        NoGradGuard guard;
        std::vector<int> all(eval_set.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
        Tensor x_eval = pack_frames(eval_set, all, spec.natural_data);
        double total = 0.0;
        for (int round = 0; round < cfg.eval_rounds; ++round) {
            total += masked_loss(eval_state, x_eval,
                                 frame_mask(static_cast<int>(eval_set.size()), true),
                                 derive_seed(0xE7A1, round))
                         .item();
        }
        result.central_loss = total / cfg.eval_rounds;
    } catch (const DataError&) {
        result.diverged = true;
    }
    result.kernel_map = kernel_l1_map(*net);
    return result;
}

}  // namespace

ToyReport run_toy_study(int num_seeds, const ToyStudyConfig& cfg, std::uint64_t base_seed) {
    if (num_seeds < 1) throw ConfigError("run_toy_study: need at least one seed");
    ToyReport report;
    for (int k = 0; k < 3; ++k)
        report.mean_kernel[k].assign(3, std::vector<double>(4, 0.0));

    for (int s = 0; s < num_seeds; ++s) {
        const std::uint64_t seed = derive_seed(base_seed, static_cast<std::uint64_t>(s));
        ToySeedResult seed_result;
        seed_result.seed = seed;
        auto train = gen_toy(cfg.num_train, derive_seed(seed, 1), cfg.component_std);
        auto eval_set = gen_toy(cfg.num_eval, derive_seed(seed, 2), cfg.component_std);
        for (int setup = 0; setup < 3; ++setup)
            seed_result.setups[setup] =
                train_and_eval_setup(setup, train, eval_set, cfg, seed);
        report.per_seed.push_back(std::move(seed_result));
    }

    for (int setup = 0; setup < 3; ++setup) {
        std::vector<double> losses;
        int map_count = 0;
        for (const auto& sr : report.per_seed) {
            const auto& r = sr.setups[setup];
            if (!r.diverged) losses.push_back(r.central_loss);
            for (int row = 0; row < 3; ++row)
                for (int col = 0; col < 4; ++col)
                    report.mean_kernel[setup][row][col] += r.kernel_map[row][col];
            ++map_count;
        }
        for (auto& row : report.mean_kernel[setup])
            for (auto& v : row) v /= std::max(1, map_count);
        if (losses.empty())
            throw DataError("toy study: setup " + std::to_string(setup + 1) +
                            " diverged on every seed");
        std::sort(losses.begin(), losses.end());
        const std::size_t mid = losses.size() / 2;
        report.median_loss[setup] = losses.size() % 2 ? losses[mid]
                                                      : 0.5 * (losses[mid - 1] + losses[mid]);
    }
    return report;
}

void write_toy_report(const ToyReport& report, const std::string& out_dir) {
    ensure_dir(out_dir);
    ensure_dir(out_dir + "/kernels");
    {
        std::vector<std::vector<std::optional<double>>> rows;
        for (int setup = 0; setup < 3; ++setup)
            for (const auto& sr : report.per_seed) {
                const auto& r = sr.setups[setup];
                std::vector<std::optional<double>> row(3);
                row[0] = static_cast<double>(setup + 1);
                row[1] = static_cast<double>(sr.seed % 1000000);
                row[2] = r.diverged ? std::optional<double>{} : std::optional<double>(r.central_loss);
                rows.push_back(std::move(row));
            }
        write_csv(out_dir + "/scores.csv", {"setup", "seed", "central_loss"}, rows);
    }
    auto dump_map = [&](const std::vector<std::vector<double>>& map, const std::string& stem,
                        const std::string& title) {
        write_csv(out_dir + "/kernels/" + stem + ".csv", {"c0", "c1", "c2", "c3"}, map);
        write_text_file(out_dir + "/kernels/" + stem + ".svg", svg_heatmap(map, title));
    };
    for (int setup = 0; setup < 3; ++setup) {
        dump_map(report.mean_kernel[setup], "setup" + std::to_string(setup + 1) + "_mean",
                 "kernel L1, setup " + std::to_string(setup + 1) + " (mean)");
        for (std::size_t s = 0; s < report.per_seed.size(); ++s)
            dump_map(report.per_seed[s].setups[setup].kernel_map,
                     "setup" + std::to_string(setup + 1) + "_seed" + std::to_string(s),
                     "kernel L1, setup " + std::to_string(setup + 1));
    }
}

}  // namespace tsgen
