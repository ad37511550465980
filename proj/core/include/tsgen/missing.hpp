#pragma once

#include <cstdint>

#include "tsgen/series.hpp"

namespace tsgen {

enum class MissingMode { kRandom, kBlock };

struct MissingnessSpec {
    MissingMode mode = MissingMode::kRandom;
    double rate = 0.5;              // fraction dropped, in (0,1)
    int block_min = 0, block_max = 0;  // block mode; 0 = derive from L
    std::uint64_t seed = 0;

    void validate(int t_len) const;
};

struct NoiseSpec {
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

/// Drops exactly floor(rate*d*L) entries, chosen uniformly without
/// replacement across the (feature, time) grid.
IrregularSeries drop_random(const RegularSeries& s, const MissingnessSpec& spec);

/// Drops contiguous time blocks per feature until exactly floor(rate*L)
/// steps are missing in every feature; the last block is trimmed to land on
/// the exact count. Block lengths are uniform in [block_min, block_max]
/// (defaults ceil(0.1*L)..ceil(0.25*L)).
IrregularSeries drop_blocks(const RegularSeries& s, const MissingnessSpec& spec);

IrregularSeries apply_missingness(const RegularSeries& s, const MissingnessSpec& spec);

/// Adds iid N(0, sigma^2) to every observed entry; unobserved entries and
/// the mask are untouched. The draw for each grid slot depends only on
/// (seed, slot), so noising commutes with masking.
IrregularSeries add_noise(const IrregularSeries& s, const NoiseSpec& spec);

}  // namespace tsgen
