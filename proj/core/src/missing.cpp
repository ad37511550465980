#include "tsgen/missing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsgen/errors.hpp"
#include "tsgen/rng.hpp"

namespace tsgen {

void MissingnessSpec::validate(int t_len) const {
    if (!(rate > 0.0 && rate < 1.0))
        throw ConfigError("missingness rate must be in (0,1), got " + std::to_string(rate));
    if (mode == MissingMode::kBlock) {
        const int bmin = block_min > 0 ? block_min : static_cast<int>(std::ceil(0.1 * t_len));
        const int bmax = block_max > 0 ? block_max : static_cast<int>(std::ceil(0.25 * t_len));
        if (bmin > bmax) throw ConfigError("block_len_range: min exceeds max");
        if (bmax >= t_len)
            throw ConfigError("block_len_range: max block length must be below the window length");
    }
}

IrregularSeries drop_random(const RegularSeries& s, const MissingnessSpec& spec) {
    if (spec.mode != MissingMode::kRandom)
        throw ConfigError("drop_random: spec mode is not random");
    spec.validate(s.t_len);
    const std::int64_t total = static_cast<std::int64_t>(s.d) * s.t_len;
    const std::int64_t k = static_cast<std::int64_t>(std::floor(spec.rate * total));
    if (k >= total) throw DataError("drop_random: would drop every entry");

    // Partial Fisher-Yates: the first k slots of a shuffled index list.
    std::vector<std::int64_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(spec.seed);
    for (std::int64_t i = 0; i < k; ++i) {
        const std::int64_t j = i + static_cast<std::int64_t>(
                                       rng.below(static_cast<std::uint64_t>(total - i)));
        std::swap(idx[i], idx[j]);
    }
    IrregularSeries out(s);
    for (std::int64_t i = 0; i < k; ++i)
        out.set_unobserved(static_cast<int>(idx[i] / s.t_len),
                           static_cast<int>(idx[i] % s.t_len));
    out.check_valid();
    return out;
}

IrregularSeries drop_blocks(const RegularSeries& s, const MissingnessSpec& spec) {
    if (spec.mode != MissingMode::kBlock)
        throw ConfigError("drop_blocks: spec mode is not block");
    spec.validate(s.t_len);
    const int t_len = s.t_len;
    const int bmin = spec.block_min > 0 ? spec.block_min
                                        : static_cast<int>(std::ceil(0.1 * t_len));
    const int bmax = spec.block_max > 0 ? spec.block_max
                                        : static_cast<int>(std::ceil(0.25 * t_len));
    const int target = static_cast<int>(std::floor(spec.rate * t_len));

    IrregularSeries out(s);
    Rng rng(spec.seed);
    for (int feat = 0; feat < s.d; ++feat) {
        std::vector<std::uint8_t> dropped(t_len, 0);
        int n_dropped = 0;
        int attempts = 0;
        while (n_dropped < target) {
            int len = bmin + static_cast<int>(rng.below(static_cast<std::uint64_t>(bmax - bmin + 1)));
            len = std::min(len, target - n_dropped);  // trim the final block
            int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(t_len - len + 1)));
            bool overlap = false;
            for (int t = start; t < start + len; ++t)
                if (dropped[t]) { overlap = true; break; }
            if (overlap) {
                if (++attempts < 1000) continue;
                // Dense masks can starve rejection sampling; fall back to the
                // first gap that fits, scanning left to right.
                start = -1;
                for (int t0 = 0; t0 + len <= t_len && start < 0; ++t0) {
                    bool free_gap = true;
                    for (int t = t0; t < t0 + len; ++t)
                        if (dropped[t]) { free_gap = false; break; }
                    if (free_gap) start = t0;
                }
                if (start < 0) { len = 1;  // any single free step always exists
                    for (int t0 = 0; t0 < t_len; ++t0)
                        if (!dropped[t0]) { start = t0; break; }
                }
            }
            for (int t = start; t < start + len; ++t) dropped[t] = 1;
            n_dropped += len;
            attempts = 0;
        }
        for (int t = 0; t < t_len; ++t)
            if (dropped[t]) out.set_unobserved(feat, t);
    }
    out.check_valid();
    return out;
}

IrregularSeries apply_missingness(const RegularSeries& s, const MissingnessSpec& spec) {
    return spec.mode == MissingMode::kRandom ? drop_random(s, spec) : drop_blocks(s, spec);
}

IrregularSeries add_noise(const IrregularSeries& s, const NoiseSpec& spec) {
    if (spec.sigma < 0) throw ConfigError("noise sigma must be >= 0");
    if (spec.sigma == 0.0) return s;
    IrregularSeries out = s;
    Rng rng(spec.seed);
    for (int i = 0; i < s.d; ++i)
        for (int t = 0; t < s.t_len; ++t) {
            const double z = rng.normal();  // consumed for every slot: mask-independent
            const std::size_t idx = static_cast<std::size_t>(i) * s.t_len + t;
            if (s.observed[idx]) out.values[idx] += spec.sigma * z;
        }
    return out;
}

}  // namespace tsgen
