#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tsgen {

/// Dense multivariate series: d features over T regularly spaced steps.
struct RegularSeries {
    int d = 0;
    int t_len = 0;
    std::vector<double> values;  // row-major [d][T]
    std::vector<std::string> feature_names;
    double dt = 1.0;

    RegularSeries() = default;
    RegularSeries(int d_, int t_);

    double& at(int i, int t) { return values[static_cast<std::size_t>(i) * t_len + t]; }
    double at(int i, int t) const { return values[static_cast<std::size_t>(i) * t_len + t]; }

    void check_valid() const;  // finite entries, d >= 1, T >= 2
};

/// Observations on a regular grid with missing entries. Unobserved slots
/// hold NaN so they can never silently act as data; zero filling is an
/// explicit transform.
struct IrregularSeries {
    int d = 0;
    int t_len = 0;
    std::vector<double> values;   // row-major [d][T], NaN where unobserved
    std::vector<std::uint8_t> observed;

    IrregularSeries() = default;
    explicit IrregularSeries(const RegularSeries& s);  // fully observed

    double value_at(int i, int t) const { return values[static_cast<std::size_t>(i) * t_len + t]; }
    bool observed_at(int i, int t) const {
        return observed[static_cast<std::size_t>(i) * t_len + t] != 0;
    }
    void set_unobserved(int i, int t);
    int observed_count() const;

    void check_valid() const;  // mask/sentinel agreement, >= 1 observed entry
};

/// Per-feature min/max over the training split's observed entries.
struct NormStats {
    std::vector<double> min_v, max_v;
};

struct DatasetSplit {
    std::vector<int> train, val, test;
    std::uint64_t seed = 0;
    NormStats stats;
};

/// Sinusoidal synthetic set: per sample and feature, x_i(t) = sin(2*pi*f_i*t + phase_i)
/// with f_i ~ U[0,1] and phase_i ~ U[-pi,pi].
std::vector<RegularSeries> generate_sines(int num_samples, int d, int t_len,
                                          std::uint64_t seed);

struct CsvSchema {
    std::vector<std::string> expected_header;  // empty: accept any header
};

/// Loads one long-format series per file: one header row, one numeric column
/// per feature, rows in time order.
RegularSeries load_csv_series(const std::string& path, const CsvSchema& schema = {});

/// Irregular variant: empty cells mark unobserved entries.
IrregularSeries load_csv_irregular(const std::string& path);

void write_csv_series(const std::string& path, const RegularSeries& s);
void write_csv_irregular(const std::string& path, const IrregularSeries& s);

NormStats compute_stats(const std::vector<IrregularSeries>& train);

/// Affine map of each feature onto [-1, 1]; constant features go to 0.
RegularSeries normalize(const RegularSeries& s, const NormStats& stats);
IrregularSeries normalize(const IrregularSeries& s, const NormStats& stats);
RegularSeries denormalize(const RegularSeries& s, const NormStats& stats);

/// Sliding windows of length L: floor((T-L)/stride)+1 of them.
std::vector<RegularSeries> windows(const RegularSeries& s, int len, int stride);

/// Disjoint train/val/test index lists over n items (seeded shuffle).
DatasetSplit split_indices(int n, double train_frac, double val_frac, std::uint64_t seed);

}  // namespace tsgen
