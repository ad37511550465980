#include "tsgen/series.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tsgen/csvio.hpp"
#include "tsgen/errors.hpp"
#include "tsgen/rng.hpp"

namespace tsgen {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kPi = 3.14159265358979323846;
}  // namespace

RegularSeries::RegularSeries(int d_, int t_) : d(d_), t_len(t_) {
    values.assign(static_cast<std::size_t>(d) * t_len, 0.0);
}

void RegularSeries::check_valid() const {
    if (d < 1 || t_len < 2)
        throw DataError("series must have d >= 1 and T >= 2, got d=" + std::to_string(d) +
                        " T=" + std::to_string(t_len));
    for (double v : values)
        if (!std::isfinite(v)) throw DataError("series contains a non-finite entry");
}

IrregularSeries::IrregularSeries(const RegularSeries& s)
    : d(s.d), t_len(s.t_len), values(s.values) {
    observed.assign(values.size(), 1);
}

void IrregularSeries::set_unobserved(int i, int t) {
    const std::size_t idx = static_cast<std::size_t>(i) * t_len + t;
    values[idx] = kNaN;
    observed[idx] = 0;
}

int IrregularSeries::observed_count() const {
    int n = 0;
    for (auto o : observed) n += o;
    return n;
}

void IrregularSeries::check_valid() const {
    if (observed.size() != values.size())
        throw DataError("irregular series: mask/value size mismatch");
    int n_obs = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (observed[i]) {
            ++n_obs;
            if (!std::isfinite(values[i]))
                throw DataError("irregular series: observed entry is non-finite");
        } else if (!std::isnan(values[i])) {
            throw DataError("irregular series: unobserved entry must hold the NaN sentinel");
        }
    }
    if (n_obs == 0) throw DataError("irregular series: sample has no observed entries");
}

std::vector<RegularSeries> generate_sines(int num_samples, int d, int t_len,
                                          std::uint64_t seed) {
    if (num_samples < 1 || d < 1 || t_len < 2)
        throw ConfigError("generate_sines: need num_samples >= 1, d >= 1, T >= 2");
    std::vector<RegularSeries> out;
    out.reserve(num_samples);
    for (int s = 0; s < num_samples; ++s) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
        RegularSeries series(d, t_len);
        for (int i = 0; i < d; ++i) {
            const double freq = rng.uniform(0.0, 1.0);
            const double phase = rng.uniform(-kPi, kPi);
            for (int t = 0; t < t_len; ++t)
                series.at(i, t) = std::sin(2.0 * kPi * freq * t + phase);
        }
        out.push_back(std::move(series));
    }
    return out;
}

RegularSeries load_csv_series(const std::string& path, const CsvSchema& schema) {
    CsvTable table = read_csv(path, /*allow_blank=*/false);
    if (!schema.expected_header.empty() && table.header != schema.expected_header)
        throw DataError(path + ": header does not match the dataset descriptor");
    const int d = static_cast<int>(table.header.size());
    const int t_len = static_cast<int>(table.rows.size());
    RegularSeries s(d, t_len);
    s.feature_names = table.header;
    for (int t = 0; t < t_len; ++t)
        for (int i = 0; i < d; ++i) s.at(i, t) = *table.rows[t][i];
    s.check_valid();
    return s;
}

IrregularSeries load_csv_irregular(const std::string& path) {
    CsvTable table = read_csv(path, /*allow_blank=*/true);
    const int d = static_cast<int>(table.header.size());
    const int t_len = static_cast<int>(table.rows.size());
    IrregularSeries s;
    s.d = d;
    s.t_len = t_len;
    s.values.assign(static_cast<std::size_t>(d) * t_len, kNaN);
    s.observed.assign(s.values.size(), 0);
    for (int t = 0; t < t_len; ++t)
        for (int i = 0; i < d; ++i)
            if (table.rows[t][i]) {
                s.values[static_cast<std::size_t>(i) * t_len + t] = *table.rows[t][i];
                s.observed[static_cast<std::size_t>(i) * t_len + t] = 1;
            }
    s.check_valid();
    return s;
}

namespace {

std::vector<std::string> series_header(int d, const std::vector<std::string>& names) {
    if (!names.empty()) return names;
    std::vector<std::string> h;
    for (int i = 0; i < d; ++i) h.push_back("feature_" + std::to_string(i));
    return h;
}

}  // namespace

void write_csv_series(const std::string& path, const RegularSeries& s) {
    std::vector<std::vector<double>> rows(s.t_len, std::vector<double>(s.d));
    for (int t = 0; t < s.t_len; ++t)
        for (int i = 0; i < s.d; ++i) rows[t][i] = s.at(i, t);
    write_csv(path, series_header(s.d, s.feature_names), rows);
}

void write_csv_irregular(const std::string& path, const IrregularSeries& s) {
    std::vector<std::vector<std::optional<double>>> rows(
        s.t_len, std::vector<std::optional<double>>(s.d));
    for (int t = 0; t < s.t_len; ++t)
        for (int i = 0; i < s.d; ++i)
            rows[t][i] = s.observed_at(i, t) ? std::optional<double>(s.value_at(i, t))
                                             : std::nullopt;
    write_csv(path, series_header(s.d, {}), rows);
}

NormStats compute_stats(const std::vector<IrregularSeries>& train) {
    if (train.empty()) throw DataError("compute_stats: empty training set");
    const int d = train[0].d;
    NormStats stats;
    stats.min_v.assign(d, std::numeric_limits<double>::infinity());
    stats.max_v.assign(d, -std::numeric_limits<double>::infinity());
    for (const auto& s : train) {
        if (s.d != d) throw DataError("compute_stats: feature count mismatch across samples");
        for (int i = 0; i < d; ++i)
            for (int t = 0; t < s.t_len; ++t)
                if (s.observed_at(i, t)) {
                    stats.min_v[i] = std::min(stats.min_v[i], s.value_at(i, t));
                    stats.max_v[i] = std::max(stats.max_v[i], s.value_at(i, t));
                }
    }
    for (int i = 0; i < d; ++i)
        if (!std::isfinite(stats.min_v[i]))
            throw DataError("compute_stats: feature " + std::to_string(i) +
                            " has no observed entries in the training split");
    return stats;
}

namespace {

double norm_one(double v, double lo, double hi) {
    if (hi <= lo) return 0.0;  // constant feature
    return 2.0 * (v - lo) / (hi - lo) - 1.0;
}

double denorm_one(double v, double lo, double hi) {
    if (hi <= lo) return lo;
    return lo + (v + 1.0) * 0.5 * (hi - lo);
}

}  // namespace

RegularSeries normalize(const RegularSeries& s, const NormStats& stats) {
    if (static_cast<int>(stats.min_v.size()) != s.d)
        throw DataError("normalize: stats feature count mismatch");
    RegularSeries out = s;
    for (int i = 0; i < s.d; ++i)
        for (int t = 0; t < s.t_len; ++t)
            out.at(i, t) = norm_one(s.at(i, t), stats.min_v[i], stats.max_v[i]);
    return out;
}

IrregularSeries normalize(const IrregularSeries& s, const NormStats& stats) {
    if (static_cast<int>(stats.min_v.size()) != s.d)
        throw DataError("normalize: stats feature count mismatch");
    IrregularSeries out = s;
    for (int i = 0; i < s.d; ++i)
        for (int t = 0; t < s.t_len; ++t)
            if (s.observed_at(i, t)) {
                out.values[static_cast<std::size_t>(i) * s.t_len + t] =
                    norm_one(s.value_at(i, t), stats.min_v[i], stats.max_v[i]);
            }
    return out;
}

RegularSeries denormalize(const RegularSeries& s, const NormStats& stats) {
    if (static_cast<int>(stats.min_v.size()) != s.d)
        throw DataError("denormalize: stats feature count mismatch");
    RegularSeries out = s;
    for (int i = 0; i < s.d; ++i)
        for (int t = 0; t < s.t_len; ++t)
            out.at(i, t) = denorm_one(s.at(i, t), stats.min_v[i], stats.max_v[i]);
    return out;
}

std::vector<RegularSeries> windows(const RegularSeries& s, int len, int stride) {
    if (stride < 1) throw ConfigError("windows: stride must be >= 1");
    if (len > s.t_len)
        throw ConfigError("windows: window length " + std::to_string(len) +
                          " exceeds series length " + std::to_string(s.t_len));
    const int count = (s.t_len - len) / stride + 1;
    std::vector<RegularSeries> out;
    out.reserve(count);
    for (int k = 0; k < count; ++k) {
        RegularSeries w(s.d, len);
        w.feature_names = s.feature_names;
        w.dt = s.dt;
        const int start = k * stride;
        for (int i = 0; i < s.d; ++i)
            for (int t = 0; t < len; ++t) w.at(i, t) = s.at(i, start + t);
        out.push_back(std::move(w));
    }
    return out;
}

DatasetSplit split_indices(int n, double train_frac, double val_frac, std::uint64_t seed) {
    if (train_frac <= 0 || val_frac < 0 || train_frac + val_frac > 1.0)
        throw ConfigError("split_indices: bad fractions");
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    Rng rng(derive_seed(seed, 0xD15C));
    for (int i = n - 1; i > 0; --i)
        std::swap(idx[i], idx[rng.below(static_cast<std::uint64_t>(i) + 1)]);

    DatasetSplit split;
    split.seed = seed;
    const int n_train = static_cast<int>(std::llround(train_frac * n));
    const int n_val = static_cast<int>(std::llround(val_frac * n));
    for (int i = 0; i < n; ++i) {
        if (i < n_train) split.train.push_back(idx[i]);
        else if (i < n_train + n_val) split.val.push_back(idx[i]);
        else split.test.push_back(idx[i]);
    }
    return split;
}

}  // namespace tsgen
