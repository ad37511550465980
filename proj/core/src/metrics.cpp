#include "tsgen/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "tsgen/errors.hpp"
#include "tsgen/nn.hpp"
#include "tsgen/rng.hpp"
#include "tsgen/tensor.hpp"

namespace tsgen {

namespace {

void check_sets(const std::vector<RegularSeries>& real,
                const std::vector<RegularSeries>& synth, std::size_t min_count) {
    if (real.size() < min_count || synth.size() < min_count)
        throw DataError("metric: need at least " + std::to_string(min_count) +
                        " samples per set");
    const int d = real[0].d, L = real[0].t_len;
    for (const auto& s : real)
        if (s.d != d || s.t_len != L) throw DataError("metric: inconsistent real set");
    for (const auto& s : synth)
        if (s.d != d || s.t_len != L)
            throw DataError("metric: real/synthetic shape mismatch (d=" + std::to_string(s.d) +
                            " vs " + std::to_string(d) + ")");
}

/// Values as a [B, L, d] tensor row block.
std::vector<double> pack_windows(const std::vector<RegularSeries>& set,
                                 const std::vector<int>& idx) {
    const int d = set[0].d, L = set[0].t_len;
    std::vector<double> v(idx.size() * L * d);
    std::size_t off = 0;
    for (int id : idx) {
        for (int t = 0; t < L; ++t)
            for (int i = 0; i < d; ++i) v[off++] = set[id].at(i, t);
    }
    return v;
}

struct SeqModel {
    ParamStore params;
    GruParams gru;
    Tensor head_w, head_b;
    int d = 0, hidden = 0, out_dim = 0;

    SeqModel(int d_, int out_dim_, std::uint64_t seed) : d(d_), out_dim(out_dim_) {
        hidden = std::max(d, 8);
        Rng rng(derive_seed(seed, 0x5E0));
        gru = make_gru(params, "gru", d, hidden, rng);
        head_w = params.add("head.w",
                            Tensor::param({hidden, out_dim},
                                          xavier_uniform(static_cast<std::int64_t>(hidden) * out_dim,
                                                         hidden, out_dim, rng)));
        head_b = params.add("head.b",
                            Tensor::param({out_dim}, std::vector<double>(out_dim, 0.0)));
    }

    /// Hidden states after each step; input [B, L, d].
    std::vector<Tensor> run(const Tensor& x) const {
        const int B = x.dim(0), L = x.dim(1);
        Tensor h = Tensor::zeros({B, hidden});
        std::vector<Tensor> hs;
        hs.reserve(L);
        for (int t = 0; t < L; ++t) {
            Tensor x_t = reshape(slice(x, 1, t, 1), {B, d});
            h = gru_step(gru, x_t, h);
            hs.push_back(h);
        }
        return hs;
    }
};

constexpr int kTrainSteps = 2000;
constexpr double kMetricLr = 1e-3;

}  // namespace

double discriminative_score(const std::vector<RegularSeries>& real,
                            const std::vector<RegularSeries>& synth, std::uint64_t seed) {
    check_sets(real, synth, 32);
    const int d = real[0].d, L = real[0].t_len;

    // Pooled per-feature standardization.
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    std::int64_t count = 0;
    for (const auto* set : {&real, &synth})
        for (const auto& s : *set)
            for (int i = 0; i < d; ++i)
                for (int t = 0; t < L; ++t) { mean[i] += s.at(i, t); }
    count = static_cast<std::int64_t>(real.size() + synth.size()) * L;
    for (auto& m : mean) m /= static_cast<double>(count);
    for (const auto* set : {&real, &synth})
        for (const auto& s : *set)
            for (int i = 0; i < d; ++i)
                for (int t = 0; t < L; ++t)
                    var[i] += (s.at(i, t) - mean[i]) * (s.at(i, t) - mean[i]);
    std::vector<double> inv_sd(d);
    for (int i = 0; i < d; ++i)
        inv_sd[i] = 1.0 / std::max(std::sqrt(var[i] / static_cast<double>(count)), 1e-8);

    const int n = static_cast<int>(real.size() + synth.size());
    std::vector<std::pair<int, double>> items;  // (global index, label)
    items.reserve(n);
    for (std::size_t i = 0; i < real.size(); ++i) items.emplace_back(static_cast<int>(i), 1.0);
    for (std::size_t i = 0; i < synth.size(); ++i)
        items.emplace_back(static_cast<int>(real.size() + i), 0.0);

    auto fetch = [&](int global, int t, int i) {
        const RegularSeries& s = global < static_cast<int>(real.size())
                                     ? real[global]
                                     : synth[global - static_cast<int>(real.size())];
        return (s.at(i, t) - mean[i]) * inv_sd[i];
    };

    for (int attempt = 0; attempt < 4; ++attempt) {
        Rng rng(derive_seed(seed + attempt, 0xD15C0));
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;
        for (int i = n - 1; i > 0; --i)
            std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
        const int n_train = static_cast<int>(std::llround(0.8 * n));
        const int n_test = n - n_train;

        bool has_pos = false, has_neg = false;
        for (int i = n_train; i < n; ++i) {
            if (items[order[i]].second > 0.5) has_pos = true;
            else has_neg = true;
        }
        if (!has_pos || !has_neg) continue;  // re-split with the next seed

        SeqModel model(d, 1, derive_seed(seed + attempt, 0xC1A5));
        Adam opt(kMetricLr);
        const int batch = std::min(128, n_train);
        for (int step = 0; step < kTrainSteps; ++step) {
            std::vector<double> xv(static_cast<std::size_t>(batch) * L * d);
            std::vector<double> yv(batch);
            for (int b = 0; b < batch; ++b) {
                const int pick = order[rng.below(static_cast<std::uint64_t>(n_train))];
                yv[b] = items[pick].second;
                for (int t = 0; t < L; ++t)
                    for (int i = 0; i < d; ++i)
                        xv[(static_cast<std::size_t>(b) * L + t) * d + i] =
                            fetch(items[pick].first, t, i);
            }
            Tensor x = Tensor::from({batch, L, d}, std::move(xv));
            Tensor logit = linear(model.run(x).back(), model.head_w, model.head_b);
            Tensor loss = bce_with_logits(reshape(logit, {batch}), yv);
            backward(loss);
            opt.step(model.params);
        }

        NoGradGuard guard;
        int correct = 0;
        constexpr int kChunk = 256;
        for (int off = 0; off < n_test; off += kChunk) {
            const int B = std::min(kChunk, n_test - off);
            std::vector<double> xv(static_cast<std::size_t>(B) * L * d);
            for (int b = 0; b < B; ++b)
                for (int t = 0; t < L; ++t)
                    for (int i = 0; i < d; ++i)
                        xv[(static_cast<std::size_t>(b) * L + t) * d + i] =
                            fetch(items[order[n_train + off + b]].first, t, i);
            Tensor x = Tensor::from({B, L, d}, std::move(xv));
            Tensor logit = linear(model.run(x).back(), model.head_w, model.head_b);
            for (int b = 0; b < B; ++b) {
                const bool pred = logit.values()[b] > 0.0;
                const bool truth = items[order[n_train + off + b]].second > 0.5;
                if (pred == truth) ++correct;
            }
        }
        const double acc = static_cast<double>(correct) / n_test;
        return std::abs(0.5 - acc);
    }
    throw DataError("discriminative_score: could not build a two-class test split");
}

double predictive_score(const std::vector<RegularSeries>& real_test,
                        const std::vector<RegularSeries>& synth_train, std::uint64_t seed) {
    check_sets(real_test, synth_train, 32);
    const int d = real_test[0].d, L = real_test[0].t_len;
    if (L < 2) throw DataError("predictive_score: windows too short");

    // Map both sets to [0,1] per feature with the real range.
    std::vector<double> lo(d, std::numeric_limits<double>::infinity());
    std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
    for (const auto& s : real_test)
        for (int i = 0; i < d; ++i)
            for (int t = 0; t < L; ++t) {
                lo[i] = std::min(lo[i], s.at(i, t));
                hi[i] = std::max(hi[i], s.at(i, t));
            }
    auto scaled = [&](const RegularSeries& s, int i, int t) {
        const double range = hi[i] - lo[i];
        return range > 0 ? (s.at(i, t) - lo[i]) / range : 0.5;
    };

    SeqModel model(d, d, derive_seed(seed, 0x93ED));
    Adam opt(kMetricLr);
    Rng rng(derive_seed(seed, 0xBA7C4));
    const int n_train = static_cast<int>(synth_train.size());
    const int batch = std::min(128, n_train);

    auto step_inputs = [&](const std::vector<RegularSeries>& set,
                           const std::vector<int>& idx) {
        // inputs are steps 0..L-2, targets steps 1..L-1
        std::vector<double> xv(idx.size() * (L - 1) * d);
        std::vector<double> yv(idx.size() * (L - 1) * d);
        std::size_t o = 0;
        for (int id : idx)
            for (int t = 0; t + 1 < L; ++t)
                for (int i = 0; i < d; ++i, ++o) {
                    xv[o] = scaled(set[id], i, t);
                    yv[o] = scaled(set[id], i, t + 1);
                }
        return std::make_pair(std::move(xv), std::move(yv));
    };

    for (int step = 0; step < kTrainSteps; ++step) {
        std::vector<int> idx(batch);
        for (auto& id : idx) id = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_train)));
        auto [xv, yv] = step_inputs(synth_train, idx);
        Tensor x = Tensor::from({batch, L - 1, d}, std::move(xv));
        auto hs = model.run(x);
        std::vector<Tensor> preds;
        preds.reserve(hs.size());
        for (auto& h : hs)
            preds.push_back(reshape(linear(h, model.head_w, model.head_b), {batch, 1, d}));
        Tensor pred = concat(preds, 1);  // [B, L-1, d]
        Tensor target = Tensor::from({batch, L - 1, d}, std::move(yv));
        Tensor loss = mean_all(abs_t(sub(pred, target)));
        backward(loss);
        opt.step(model.params);
    }

    NoGradGuard guard;
    double mae_sum = 0.0;
    std::int64_t mae_count = 0;
    constexpr int kChunk = 256;
    const int n_test = static_cast<int>(real_test.size());
    for (int off = 0; off < n_test; off += kChunk) {
        const int B = std::min(kChunk, n_test - off);
        std::vector<int> idx(B);
        for (int b = 0; b < B; ++b) idx[b] = off + b;
        auto [xv, yv] = step_inputs(real_test, idx);
        Tensor x = Tensor::from({B, L - 1, d}, std::move(xv));
        auto hs = model.run(x);
        for (int t = 0; t + 1 < L; ++t) {
            const Tensor pred = linear(hs[t], model.head_w, model.head_b);
            for (int b = 0; b < B; ++b)
                for (int i = 0; i < d; ++i) {
                    const double want = yv[(static_cast<std::size_t>(b) * (L - 1) + t) * d + i];
                    mae_sum += std::abs(pred.values()[static_cast<std::size_t>(b) * d + i] - want);
                    ++mae_count;
                }
        }
    }
    return mae_sum / static_cast<double>(mae_count);
}

namespace {

/// Time-averaged covariance of one window (the per-series estimator),
/// averaged across a set.
Eigen::MatrixXd mean_covariance(const std::vector<RegularSeries>& set) {
    const int d = set[0].d;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
    for (const auto& s : set) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
        for (int i = 0; i < d; ++i) {
            for (int t = 0; t < s.t_len; ++t) mean(i) += s.at(i, t);
            mean(i) /= s.t_len;
        }
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                double m2 = 0.0;
                for (int t = 0; t < s.t_len; ++t) m2 += s.at(i, t) * s.at(j, t);
                acc(i, j) += m2 / s.t_len - mean(i) * mean(j);
            }
    }
    return acc / static_cast<double>(set.size());
}

}  // namespace

double correlation_score(const std::vector<RegularSeries>& real,
                         const std::vector<RegularSeries>& synth) {
    check_sets(real, synth, 1);
    const int d = real[0].d;
    if (d < 2) throw DataError("correlation_score: needs at least 2 features");

    const Eigen::MatrixXd cov_r = mean_covariance(real);
    const Eigen::MatrixXd cov_s = mean_covariance(synth);
    for (int i = 0; i < d; ++i) {
        if (cov_r(i, i) <= 0)
            throw DataError("correlation_score: real feature " + std::to_string(i) +
                            " has zero variance");
        if (cov_s(i, i) <= 0)
            throw DataError("correlation_score: synthetic feature " + std::to_string(i) +
                            " has zero variance");
    }
    double sum = 0.0;
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            const double rho_r = cov_r(i, j) / std::sqrt(cov_r(i, i) * cov_r(j, j));
            const double rho_s = cov_s(i, j) / std::sqrt(cov_s(i, i) * cov_s(j, j));
            sum += std::abs(rho_r - rho_s);
        }
    return sum * 2.0 / (static_cast<double>(d) * (d - 1));
}

double fid_score(const std::vector<std::vector<double>>& real_features,
                 const std::vector<std::vector<double>>& synth_features) {
    if (real_features.empty() || synth_features.empty())
        throw DataError("fid: empty feature set");
    const int dim = static_cast<int>(real_features[0].size());
    if (static_cast<int>(real_features.size()) < dim + 1 ||
        static_cast<int>(synth_features.size()) < dim + 1)
        throw DataError("fid: need at least dim+1 feature rows per set");

    auto fit = [dim](const std::vector<std::vector<double>>& rows) {
        const int n = static_cast<int>(rows.size());
        Eigen::MatrixXd x(n, dim);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < dim; ++c) x(r, c) = rows[r][c];
        Eigen::VectorXd mu = x.colwise().mean();
        Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
        Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
        return std::make_pair(mu, cov);
    };
    auto [mu_r, cov_r] = fit(real_features);
    auto [mu_s, cov_s] = fit(synth_features);

    constexpr double kTol = 1e-8;
    auto sqrt_psd = [](const Eigen::MatrixXd& m, const char* what) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
        Eigen::VectorXd vals = eig.eigenvalues();
        const double scale = std::max(1.0, vals.cwiseAbs().maxCoeff());
        for (int i = 0; i < vals.size(); ++i) {
            if (vals(i) < -kTol * scale)
                throw DataError(std::string("fid: matrix is not PSD within tolerance (") + what +
                                ")");
            vals(i) = std::max(vals(i), 0.0);
        }
        return std::make_pair(eig.eigenvectors(), vals);
    };

    auto [vec_r, val_r] = sqrt_psd(cov_r, "real covariance");
    Eigen::MatrixXd root_r =
        vec_r * val_r.cwiseSqrt().asDiagonal() * vec_r.transpose();
    const Eigen::MatrixXd prod = root_r * cov_s * root_r;
    auto [vec_p, val_p] = sqrt_psd(prod, "covariance product");
    const double tr_sqrt = val_p.cwiseSqrt().sum();

    const double mean_term = (mu_r - mu_s).squaredNorm();
    return mean_term + cov_r.trace() + cov_s.trace() - 2.0 * tr_sqrt;
}

}  // namespace tsgen
