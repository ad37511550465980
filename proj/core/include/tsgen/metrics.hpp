#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsgen/series.hpp"

namespace tsgen {

struct MetricReport {
    std::optional<double> discriminative;
    std::optional<double> predictive;
    std::optional<double> correlation;
    std::optional<double> fid;
    std::uint64_t seed = 0;
    int real_count = 0, synth_count = 0;
};

/// |0.5 - test accuracy| of a recurrent real-vs-synthetic classifier
/// (1-layer GRU, hidden max(d,8), 2000 steps on an 80/20 split). Inputs are
/// standardized with statistics of the pooled sets, which keeps location
/// and scale differences fully visible to the classifier. A degenerate
/// single-class test split is re-split with the next seed, at most 3 times.
double discriminative_score(const std::vector<RegularSeries>& real,
                            const std::vector<RegularSeries>& synth, std::uint64_t seed);

/// Train-on-synthetic, test-on-real MAE of a one-step-ahead recurrent
/// predictor. Both sets are mapped to [0,1] per feature with the real
/// set's range so scores are comparable across sources.
double predictive_score(const std::vector<RegularSeries>& real_test,
                        const std::vector<RegularSeries>& synth_train, std::uint64_t seed);

/// Aggregate absolute difference between the two sets' feature-correlation
/// matrices. Covariances are the time-averaged per-sample estimates,
/// averaged over samples; the sum over unordered pairs is scaled by
/// 2/(d(d-1)), which reduces to the conventional 1/10 at d = 5.
double correlation_score(const std::vector<RegularSeries>& real,
                         const std::vector<RegularSeries>& synth);

/// Frechet distance between Gaussian fits of two feature matrices:
/// |mu_r - mu_s|^2 + Tr(S_r + S_s - 2(S_r S_s)^(1/2)), square root via
/// eigendecomposition of the symmetrized product. Eigenvalues below the
/// -1e-8 tolerance raise; small negatives clamp to zero.
double fid_score(const std::vector<std::vector<double>>& real_features,
                 const std::vector<std::vector<double>>& synth_features);

}  // namespace tsgen
