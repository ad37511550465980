#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "tsgen/completion.hpp"
#include "tsgen/errors.hpp"
#include "tsgen/missing.hpp"

using namespace tsgen;
using tsgen::test::grad_check;

namespace {

IrregularSeries make_irregular(int d, int L, double rate, std::uint64_t seed) {
    auto base = generate_sines(1, d, L, seed);
    return drop_random(base[0], {MissingMode::kRandom, rate, 0, 0, derive_seed(seed, 1)});
}

}  // namespace

TEST_CASE("ae loss: zero on exact reconstruction, mean of squares otherwise") {
    IrregularSeries s = make_irregular(3, 12, 0.4, 5);
    RegularSeries recon(3, 12);
    for (int i = 0; i < 3; ++i)
        for (int t = 0; t < 12; ++t)
            recon.at(i, t) = s.observed_at(i, t) ? s.value_at(i, t) : 42.0;
    CHECK(ae_loss(s, recon) == 0.0);

    // Two observed entries with residuals +1 and -1 -> mean of squares 1.
    IrregularSeries two;
    two.d = 1;
    two.t_len = 4;
    two.values = {0.5, std::nan(""), -0.25, std::nan("")};
    two.observed = {1, 0, 1, 0};
    RegularSeries r2(1, 4);
    r2.values = {1.5, 7.0, -1.25, -3.0};
    CHECK(ae_loss(two, r2) == doctest::Approx(1.0));
}

TEST_CASE("ae loss with a full mask equals the plain mse") {
    auto base = generate_sines(1, 4, 10, 6);
    IrregularSeries full(base[0]);
    RegularSeries recon(4, 10);
    Rng rng(3);
    for (auto& v : recon.values) v = rng.uniform(-1, 1);
    double plain = 0.0;
    for (std::size_t i = 0; i < recon.values.size(); ++i) {
        const double r = recon.values[i] - base[0].values[i];
        plain += r * r;
    }
    plain /= static_cast<double>(recon.values.size());
    CHECK(ae_loss(full, recon) == doctest::Approx(plain).epsilon(1e-15));
}

TEST_CASE("ae loss ignores values stored at unobserved positions") {
    IrregularSeries s = make_irregular(2, 16, 0.5, 7);
    RegularSeries recon(2, 16);
    Rng rng(8);
    for (auto& v : recon.values) v = rng.uniform(-1, 1);
    const double before = ae_loss(s, recon);
    // Replace the sentinel with arbitrary finite junk; the loss reads only
    // observed entries, so the value must be bit-identical.
    IrregularSeries poked = s;
    for (std::size_t i = 0; i < poked.values.size(); ++i)
        if (!poked.observed[i]) poked.values[i] = 1e9;
    double after = 0.0;
    {
        double sum = 0.0;
        int count = 0;
        for (int i = 0; i < poked.d; ++i)
            for (int t = 0; t < poked.t_len; ++t)
                if (poked.observed_at(i, t)) {
                    const double r = recon.at(i, t) - poked.value_at(i, t);
                    sum += r * r;
                    ++count;
                }
        after = sum / count;
    }
    CHECK(before == after);
}

TEST_CASE("ae loss batch gradient matches finite differences on a 10-parameter model") {
    IrregularSeries s = make_irregular(1, 5, 0.4, 11);
    std::vector<const IrregularSeries*> batch{&s};
    Tensor w = tsgen::test::random_param({2, 5}, 12);
    Tensor x = tsgen::test::random_const({1, 2}, 13);
    auto make_loss = [&] {
        Tensor recon = reshape(linear(x, w), {1, 5, 1});
        return ae_loss_batch(batch, recon);
    };
    CHECK(grad_check({w}, make_loss) < 1e-3);
}

TEST_CASE("ae loss batch rejects empty masks") {
    IrregularSeries s;
    s.d = 1;
    s.t_len = 3;
    s.values = {std::nan(""), std::nan(""), std::nan("")};
    s.observed = {0, 0, 0};
    std::vector<const IrregularSeries*> batch{&s};
    CHECK_THROWS_AS(ae_loss_batch(batch, Tensor::zeros({1, 3, 1})), DataError);
}

TEST_CASE("imputers: pass-through and fill semantics") {
    IrregularSeries s = make_irregular(3, 24, 0.5, 21);

    for (ImputerKind kind : {ImputerKind::kZero, ImputerKind::kGaussianNoise,
                             ImputerKind::kLinear, ImputerKind::kPolynomial,
                             ImputerKind::kStochastic}) {
        RegularSeries out = impute(kind, s, 99);
        for (int i = 0; i < 3; ++i)
            for (int t = 0; t < 24; ++t) {
                if (s.observed_at(i, t)) CHECK(out.at(i, t) == s.value_at(i, t));
                CHECK(std::isfinite(out.at(i, t)));
            }
    }

    RegularSeries zeros = impute(ImputerKind::kZero, s, 99);
    for (int i = 0; i < 3; ++i)
        for (int t = 0; t < 24; ++t)
            if (!s.observed_at(i, t)) CHECK(zeros.at(i, t) == 0.0);
}

TEST_CASE("linear imputer interpolates between observed anchors") {
    IrregularSeries s;
    s.d = 1;
    s.t_len = 4;
    s.values = {0.0, std::nan(""), std::nan(""), 3.0};
    s.observed = {1, 0, 0, 1};
    RegularSeries out = impute(ImputerKind::kLinear, s, 1);
    CHECK(out.at(0, 0) == 0.0);
    CHECK(out.at(0, 1) == doctest::Approx(1.0));
    CHECK(out.at(0, 2) == doctest::Approx(2.0));
    CHECK(out.at(0, 3) == 3.0);
}

TEST_CASE("stochastic imputer matches slice moments over many fills") {
    IrregularSeries s;
    s.d = 1;
    s.t_len = 8;
    s.values = {1.0, std::nan(""), 3.0, std::nan(""), 2.0, std::nan(""), 0.0, 2.0};
    s.observed = {1, 0, 1, 0, 1, 0, 1, 1};
    double obs_mean = (1 + 3 + 2 + 0 + 2) / 5.0;
    double obs_var = 0.0;
    for (double v : {1.0, 3.0, 2.0, 0.0, 2.0}) obs_var += (v - obs_mean) * (v - obs_mean);
    obs_var /= 5.0;
    const double obs_sd = std::sqrt(obs_var);

    const int kFills = 10000;
    double sum = 0.0, sum2 = 0.0;
    std::int64_t n = 0;
    for (int k = 0; k < kFills; ++k) {
        RegularSeries out = impute(ImputerKind::kStochastic, s, derive_seed(1234, k));
        for (int t = 0; t < 8; ++t)
            if (!s.observed_at(0, t)) {
                sum += out.at(0, t);
                sum2 += out.at(0, t) * out.at(0, t);
                ++n;
            }
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sum2 / n - mean * mean);
    const double se_mean = obs_sd / std::sqrt(static_cast<double>(n));
    const double se_sd = obs_sd / std::sqrt(2.0 * static_cast<double>(n));
    CHECK(std::abs(mean - obs_mean) < 3 * se_mean);
    CHECK(std::abs(sd - obs_sd) < 3 * se_sd);
}

TEST_CASE("interpolating imputers fall back when a channel lacks anchors") {
    IrregularSeries s;
    s.d = 2;
    s.t_len = 4;
    s.values = {0.5, std::nan(""), std::nan(""), std::nan(""),  // one anchor only
                1.0, 2.0, std::nan(""), 4.0};
    s.observed = {1, 0, 0, 0, 1, 1, 0, 1};
    RegularSeries out = impute(ImputerKind::kLinear, s, 5);
    for (std::size_t i = 0; i < out.values.size(); ++i) CHECK(std::isfinite(out.values[i]));
    CHECK(out.at(0, 0) == 0.5);
    CHECK(out.at(1, 2) == doctest::Approx(3.0));  // intact channel still interpolates
}

TEST_CASE("completion model passes observations through and fills the rest") {
    TstConfig cfg;
    cfg.hidden_dim = 12;
    cfg.n_heads = 2;
    cfg.num_layers = 1;
    CompletionModel model(3, 10, cfg, 4);
    IrregularSeries s = make_irregular(3, 10, 0.5, 31);
    RegularSeries out = complete(model, s);
    for (int i = 0; i < 3; ++i)
        for (int t = 0; t < 10; ++t) {
            if (s.observed_at(i, t)) CHECK(out.at(i, t) == s.value_at(i, t));
            CHECK(std::isfinite(out.at(i, t)));
        }
}

TEST_CASE("train_ae: zero epochs returns the initialized model") {
    std::vector<IrregularSeries> data;
    for (int k = 0; k < 8; ++k) data.push_back(make_irregular(2, 12, 0.5, 40 + k));
    TstConfig cfg;
    cfg.hidden_dim = 8;
    cfg.n_heads = 2;
    cfg.num_layers = 1;
    TrainSchedule sched;
    sched.epochs = 0;
    sched.seed = 9;
    CompletionModel trained = train_ae(data, {}, 2, 12, cfg, sched);
    CompletionModel fresh(2, 12, cfg, sched.seed);
    CHECK(trained.params().snapshot() == fresh.params().snapshot());
}

TEST_CASE("train_ae is deterministic given the seed") {
    std::vector<IrregularSeries> data;
    for (int k = 0; k < 16; ++k) data.push_back(make_irregular(2, 12, 0.5, 50 + k));
    TstConfig cfg;
    cfg.hidden_dim = 8;
    cfg.n_heads = 2;
    cfg.num_layers = 1;
    TrainSchedule sched;
    sched.epochs = 2;
    sched.batch_size = 8;
    sched.seed = 77;
    CompletionModel a = train_ae(data, {}, 2, 12, cfg, sched);
    CompletionModel b = train_ae(data, {}, 2, 12, cfg, sched);
    CHECK(a.params().snapshot() == b.params().snapshot());
}

TEST_CASE("train_ae reduces held-out masked error on sinusoids") {
    // Small-budget run of the reference setting (d=5, L=24, 50% missing,
    // 200 epochs): held-out observed MSE must end below 0.05.
    const int n_train = 256, n_val = 64;
    std::vector<IrregularSeries> train, val;
    for (int k = 0; k < n_train; ++k) train.push_back(make_irregular(5, 24, 0.5, 1000 + k));
    for (int k = 0; k < n_val; ++k) val.push_back(make_irregular(5, 24, 0.5, 5000 + k));

    TstConfig cfg;  // table defaults: hidden 40, heads 5, layers 6
    TrainSchedule sched;
    sched.epochs = 200;
    sched.batch_size = 64;
    sched.lr = 1e-4;
    sched.seed = 3;

    double init_val = -1.0, final_val = -1.0;
    train_ae(train, val, 5, 24, cfg, sched,
             [&](int epoch, double, double val_loss, CompletionModel&) {
                 if (epoch == 0) init_val = val_loss;
                 final_val = val_loss;
             });
    CHECK(final_val < init_val);
    CHECK(final_val < 0.05);
}
