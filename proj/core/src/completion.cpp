#include "tsgen/completion.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>

#include "tsgen/errors.hpp"

namespace tsgen {

void TstConfig::validate() const {
    if (hidden_dim < 1 || n_heads < 1 || num_layers < 1 || ff_mult < 1)
        throw ConfigError("tst: dimensions must be positive");
    if (hidden_dim % n_heads != 0)
        throw ConfigError("tst: hidden_dim must be divisible by n_heads");
    if (!(teacher_forcing >= 0.0 && teacher_forcing <= 1.0))
        throw ConfigError("tst: teacher_forcing must be in [0,1]");
}

ImputerKind imputer_from_str(const std::string& s) {
    if (s == "zero") return ImputerKind::kZero;
    if (s == "gaussian_noise" || s == "gn") return ImputerKind::kGaussianNoise;
    if (s == "linear" || s == "li") return ImputerKind::kLinear;
    if (s == "polynomial" || s == "pi") return ImputerKind::kPolynomial;
    if (s == "stochastic" || s == "si") return ImputerKind::kStochastic;
    if (s == "tst") return ImputerKind::kTst;
    throw ConfigError("unknown imputer: " + s);
}

std::string imputer_to_str(ImputerKind k) {
    switch (k) {
        case ImputerKind::kZero: return "zero";
        case ImputerKind::kGaussianNoise: return "gaussian_noise";
        case ImputerKind::kLinear: return "linear";
        case ImputerKind::kPolynomial: return "polynomial";
        case ImputerKind::kStochastic: return "stochastic";
        case ImputerKind::kTst: return "tst";
    }
    return "?";
}

CompletionModel::CompletionModel(int d, int seq_len, const TstConfig& cfg,
                                 std::uint64_t init_seed)
    : d_(d), seq_len_(seq_len), cfg_(cfg) {
    cfg_.validate();
    const int H = cfg_.hidden_dim;
    Rng rng(derive_seed(init_seed, 0xAE));

    in_proj_w_ = params_.add(
        "enc.in_proj.w",
        Tensor::param({2 * d, H}, xavier_uniform(static_cast<std::int64_t>(2 * d) * H, 2 * d, H, rng)));
    in_proj_b_ = params_.add("enc.in_proj.b", Tensor::param({H}, std::vector<double>(H, 0.0)));
    {
        // Learnable positional encodings, small uniform init.
        std::vector<double> pos(static_cast<std::size_t>(seq_len) * H);
        for (auto& v : pos) v = rng.uniform(-0.02, 0.02);
        pos_ = params_.add("enc.pos", Tensor::param({seq_len, H}, std::move(pos)));
    }
    const int ff = cfg_.ff_mult * H;
    for (int l = 0; l < cfg_.num_layers; ++l) {
        const std::string p = "enc.layer" + std::to_string(l);
        EncoderLayer layer;
        layer.ln1_g = params_.add(p + ".ln1.g", Tensor::param({H}, std::vector<double>(H, 1.0)));
        layer.ln1_b = params_.add(p + ".ln1.b", Tensor::param({H}, std::vector<double>(H, 0.0)));
        layer.attn = make_attention(params_, p + ".attn", H, cfg_.n_heads, rng);
        layer.ln2_g = params_.add(p + ".ln2.g", Tensor::param({H}, std::vector<double>(H, 1.0)));
        layer.ln2_b = params_.add(p + ".ln2.b", Tensor::param({H}, std::vector<double>(H, 0.0)));
        layer.ff_w1 = params_.add(
            p + ".ff.w1",
            Tensor::param({H, ff}, xavier_uniform(static_cast<std::int64_t>(H) * ff, H, ff, rng)));
        layer.ff_b1 = params_.add(p + ".ff.b1", Tensor::param({ff}, std::vector<double>(ff, 0.0)));
        layer.ff_w2 = params_.add(
            p + ".ff.w2",
            Tensor::param({ff, H}, xavier_uniform(static_cast<std::int64_t>(ff) * H, ff, H, rng)));
        layer.ff_b2 = params_.add(p + ".ff.b2", Tensor::param({H}, std::vector<double>(H, 0.0)));
        layers_.push_back(layer);
    }
    enc_ln_g_ = params_.add("enc.ln.g", Tensor::param({H}, std::vector<double>(H, 1.0)));
    enc_ln_b_ = params_.add("enc.ln.b", Tensor::param({H}, std::vector<double>(H, 0.0)));

    gru_ = make_gru(params_, "dec.gru", H + d, H, rng);
    head_w_ = params_.add(
        "dec.head.w",
        Tensor::param({H, d}, xavier_uniform(static_cast<std::int64_t>(H) * d, H, d, rng)));
    head_b_ = params_.add("dec.head.b", Tensor::param({d}, std::vector<double>(d, 0.0)));
}

Tensor CompletionModel::assemble_input(
    const std::vector<const IrregularSeries*>& batch) const {
    const int B = static_cast<int>(batch.size());
    std::vector<double> v(static_cast<std::int64_t>(B) * seq_len_ * 2 * d_, 0.0);
    for (int b = 0; b < B; ++b) {
        const auto& s = *batch[b];
        if (s.d != d_ || s.t_len != seq_len_)
            throw DataError("completion: window shape mismatch");
        for (int t = 0; t < seq_len_; ++t)
            for (int i = 0; i < d_; ++i) {
                const std::int64_t base =
                    (static_cast<std::int64_t>(b) * seq_len_ + t) * 2 * d_;
                if (s.observed_at(i, t)) {
                    v[base + i] = s.value_at(i, t);
                    v[base + d_ + i] = 1.0;
                }
            }
    }
    return Tensor::from({B, seq_len_, 2 * d_}, std::move(v));
}

Tensor CompletionModel::encode(const Tensor& input) const {
    Tensor h = linear(input, in_proj_w_, in_proj_b_);
    h = add_suffix(h, pos_);
    for (const auto& layer : layers_) {
        Tensor a = attention_forward(layer.attn, layer_norm(h, layer.ln1_g, layer.ln1_b));
        h = add(h, a);
        Tensor f = layer_norm(h, layer.ln2_g, layer.ln2_b);
        f = linear(gelu(linear(f, layer.ff_w1, layer.ff_b1)), layer.ff_w2, layer.ff_b2);
        h = add(h, f);
    }
    return layer_norm(h, enc_ln_g_, enc_ln_b_);
}

Tensor CompletionModel::reconstruct(const std::vector<const IrregularSeries*>& batch,
                                    Rng* tf_rng) const {
    const int B = static_cast<int>(batch.size());
    if (B == 0) throw DataError("completion: empty batch");
    Tensor enc = encode(assemble_input(batch));  // [B,L,H]

    Tensor h = Tensor::zeros({B, gru_.hidden});
    Tensor y_prev;
    std::vector<Tensor> outputs;
    outputs.reserve(seq_len_);
    for (int t = 0; t < seq_len_; ++t) {
        Tensor prev;
        if (t == 0) {
            prev = Tensor::zeros({B, d_});
        } else if (tf_rng && cfg_.teacher_forcing > 0.0) {
            // sel[b,i] = coin_b * observed[b,i,t-1]; drawn per sample, per step.
            std::vector<double> sel(static_cast<std::size_t>(B) * d_, 0.0);
            std::vector<double> truth(static_cast<std::size_t>(B) * d_, 0.0);
            for (int b = 0; b < B; ++b) {
                const bool coin = tf_rng->uniform() < cfg_.teacher_forcing;
                if (!coin) continue;
                for (int i = 0; i < d_; ++i)
                    if (batch[b]->observed_at(i, t - 1)) {
                        sel[static_cast<std::size_t>(b) * d_ + i] = 1.0;
                        truth[static_cast<std::size_t>(b) * d_ + i] =
                            batch[b]->value_at(i, t - 1);
                    }
            }
            std::vector<double> inv_sel(sel.size());
            std::vector<double> forced(sel.size());
            for (std::size_t k = 0; k < sel.size(); ++k) {
                inv_sel[k] = 1.0 - sel[k];
                forced[k] = sel[k] * truth[k];
            }
            prev = add(Tensor::from({B, d_}, std::move(forced)),
                       mul(Tensor::from({B, d_}, std::move(inv_sel)), y_prev));
        } else {
            prev = y_prev;
        }
        Tensor enc_t = reshape(slice(enc, 1, t, 1), {B, cfg_.hidden_dim});
        h = gru_step(gru_, concat({enc_t, prev}, 1), h);
        Tensor y_t = linear(h, head_w_, head_b_);  // [B,d]
        outputs.push_back(reshape(y_t, {B, 1, d_}));
        y_prev = y_t;
    }
    return concat(outputs, 1);  // [B,L,d]
}

Tensor CompletionModel::complete_batch(const std::vector<const IrregularSeries*>& batch,
                                       Rng* tf_rng) const {
    const int B = static_cast<int>(batch.size());
    Tensor recon = permute(reconstruct(batch, tf_rng), {0, 2, 1});  // [B,d,L]

    std::vector<double> obs(static_cast<std::size_t>(B) * d_ * seq_len_, 0.0);
    std::vector<double> inv_obs(obs.size(), 1.0);
    std::vector<double> observed_vals(obs.size(), 0.0);
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < d_; ++i)
            for (int t = 0; t < seq_len_; ++t) {
                const std::size_t idx =
                    (static_cast<std::size_t>(b) * d_ + i) * seq_len_ + t;
                if (batch[b]->observed_at(i, t)) {
                    obs[idx] = 1.0;
                    inv_obs[idx] = 0.0;
                    observed_vals[idx] = batch[b]->value_at(i, t);
                }
            }
    const Shape shape{B, d_, seq_len_};
    return add(Tensor::from(shape, std::move(observed_vals)),
               mul(Tensor::from(shape, std::move(inv_obs)), recon));
}

std::vector<std::vector<double>> CompletionModel::encode_features(
    const std::vector<RegularSeries>& windows) const {
    NoGradGuard guard;
    const int H = cfg_.hidden_dim;
    std::vector<std::vector<double>> features;
    features.reserve(windows.size());
    constexpr int kChunk = 256;
    for (std::size_t off = 0; off < windows.size(); off += kChunk) {
        const int B = static_cast<int>(std::min<std::size_t>(kChunk, windows.size() - off));
        std::vector<IrregularSeries> storage;
        storage.reserve(B);
        std::vector<const IrregularSeries*> batch;
        for (int b = 0; b < B; ++b) {
            storage.emplace_back(windows[off + b]);  // fully observed
            batch.push_back(&storage.back());
        }
        Tensor enc = encode(assemble_input(batch));  // [B,L,H]
        const auto& ev = enc.values();
        for (int b = 0; b < B; ++b) {
            std::vector<double> f(H, 0.0);
            for (int t = 0; t < seq_len_; ++t)
                for (int k = 0; k < H; ++k)
                    f[k] += ev[(static_cast<std::int64_t>(b) * seq_len_ + t) * H + k];
            for (auto& x : f) x /= seq_len_;
            features.push_back(std::move(f));
        }
    }
    return features;
}

double ae_loss(const IrregularSeries& input, const RegularSeries& recon) {
    if (input.d != recon.d || input.t_len != recon.t_len)
        throw DataError("ae_loss: shape mismatch");
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < input.d; ++i)
        for (int t = 0; t < input.t_len; ++t)
            if (input.observed_at(i, t)) {
                const double r = recon.at(i, t) - input.value_at(i, t);
                sum += r * r;
                ++count;
            }
    if (count == 0) throw DataError("ae_loss: no observed entries");
    return sum / count;
}

Tensor ae_loss_batch(const std::vector<const IrregularSeries*>& batch, const Tensor& recon) {
    const int B = static_cast<int>(batch.size());
    const int L = recon.dim(1), d = recon.dim(2);
    std::vector<double> mask(static_cast<std::size_t>(B) * L * d, 0.0);
    std::vector<double> target(mask.size(), 0.0);
    std::vector<double> weights(B, 0.0);
    for (int b = 0; b < B; ++b) {
        int count = 0;
        for (int t = 0; t < L; ++t)
            for (int i = 0; i < d; ++i) {
                const std::size_t idx = (static_cast<std::size_t>(b) * L + t) * d + i;
                if (batch[b]->observed_at(i, t)) {
                    mask[idx] = 1.0;
                    target[idx] = batch[b]->value_at(i, t);
                    ++count;
                }
            }
        if (count == 0) throw DataError("ae_loss: sample with no observed entries");
        weights[b] = 1.0 / (static_cast<double>(count) * B);
    }
    const Shape shape{B, L, d};
    Tensor residual = mul(sub(recon, Tensor::from(shape, std::move(target))),
                          Tensor::from(shape, std::move(mask)));
    return dot_const(sum_per_sample(mul(residual, residual)), weights);
}

CompletionModel train_ae(const std::vector<IrregularSeries>& train,
                         const std::vector<IrregularSeries>& val, int d, int seq_len,
                         const TstConfig& cfg, const TrainSchedule& schedule,
                         const AeEpochCallback& on_epoch) {
    if (train.empty()) throw DataError("train_ae: empty training set");
    CompletionModel model(d, seq_len, cfg, schedule.seed);
    Adam opt(schedule.lr);
    Rng order_rng(derive_seed(schedule.seed, 0x0DDE));
    Rng tf_rng(derive_seed(schedule.seed, 0x7F0C));

    const int n = static_cast<int>(train.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    auto eval_loss = [&](const std::vector<IrregularSeries>& data) {
        if (data.empty()) return 0.0;
        NoGradGuard guard;
        double total = 0.0;
        constexpr int kChunk = 256;
        for (std::size_t off = 0; off < data.size(); off += kChunk) {
            const int B = static_cast<int>(std::min<std::size_t>(kChunk, data.size() - off));
            std::vector<const IrregularSeries*> batch;
            for (int b = 0; b < B; ++b) batch.push_back(&data[off + b]);
            total += ae_loss_batch(batch, model.reconstruct(batch, nullptr)).item() * B;
        }
        return total / static_cast<double>(data.size());
    };

    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        for (int i = n - 1; i > 0; --i)
            std::swap(order[i], order[order_rng.below(static_cast<std::uint64_t>(i) + 1)]);
        double epoch_loss = 0.0;
        int batches = 0;
        for (int off = 0; off < n; off += schedule.batch_size) {
            const int B = std::min(schedule.batch_size, n - off);
            std::vector<const IrregularSeries*> batch;
            for (int b = 0; b < B; ++b) batch.push_back(&train[order[off + b]]);
            Tensor loss = ae_loss_batch(batch, model.reconstruct(batch, &tf_rng));
            const double lv = loss.item();
            if (!std::isfinite(lv))
                throw DataError("train_ae: loss diverged (non-finite) at epoch " +
                                std::to_string(epoch));
            backward(loss);
            opt.step(model.params());
            epoch_loss += lv;
            ++batches;
        }
        if (on_epoch)
            on_epoch(epoch, epoch_loss / std::max(1, batches), eval_loss(val), model);
    }
    if (!model.params().all_finite())
        throw DataError("train_ae: parameters diverged (non-finite)");
    return model;
}

// ---- simple imputers ---------------------------------------------------------

namespace {

struct ChannelView {
    std::vector<int> obs_t;
    std::vector<double> obs_v;
};

ChannelView channel_obs(const IrregularSeries& s, int feat) {
    ChannelView cv;
    for (int t = 0; t < s.t_len; ++t)
        if (s.observed_at(feat, t)) {
            cv.obs_t.push_back(t);
            cv.obs_v.push_back(s.value_at(feat, t));
        }
    return cv;
}

void stochastic_fill_channel(const IrregularSeries& s, int feat, Rng& rng,
                             RegularSeries& out) {
    ChannelView cv = channel_obs(s, feat);
    double mean = 0.0, sd = 0.0;
    if (cv.obs_v.empty()) {
        // No observation in this channel: fall back to the sample-wide pool.
        double total = 0.0;
        std::vector<double> pool;
        for (int i = 0; i < s.d; ++i)
            for (int t = 0; t < s.t_len; ++t)
                if (s.observed_at(i, t)) pool.push_back(s.value_at(i, t));
        for (double v : pool) total += v;
        mean = total / static_cast<double>(pool.size());
        for (double v : pool) sd += (v - mean) * (v - mean);
        sd = std::sqrt(sd / static_cast<double>(pool.size()));
    } else {
        for (double v : cv.obs_v) mean += v;
        mean /= static_cast<double>(cv.obs_v.size());
        for (double v : cv.obs_v) sd += (v - mean) * (v - mean);
        sd = std::sqrt(sd / static_cast<double>(cv.obs_v.size()));
    }
    for (int t = 0; t < s.t_len; ++t)
        if (!s.observed_at(feat, t)) out.at(feat, t) = mean + sd * rng.normal();
}

void linear_fill_channel(const IrregularSeries& s, int feat, RegularSeries& out) {
    ChannelView cv = channel_obs(s, feat);
    const auto& ts = cv.obs_t;
    for (int t = 0; t < s.t_len; ++t) {
        if (s.observed_at(feat, t)) continue;
        // Constant extrapolation outside the observed range.
        if (t <= ts.front()) { out.at(feat, t) = cv.obs_v.front(); continue; }
        if (t >= ts.back())  { out.at(feat, t) = cv.obs_v.back(); continue; }
        const auto it = std::upper_bound(ts.begin(), ts.end(), t);
        const int hi = static_cast<int>(it - ts.begin());
        const int lo = hi - 1;
        const double w = static_cast<double>(t - ts[lo]) / (ts[hi] - ts[lo]);
        out.at(feat, t) = cv.obs_v[lo] + w * (cv.obs_v[hi] - cv.obs_v[lo]);
    }
}

void polynomial_fill_channel(const IrregularSeries& s, int feat, RegularSeries& out) {
    ChannelView cv = channel_obs(s, feat);
    const int n_obs = static_cast<int>(cv.obs_t.size());
    const int degree = std::min(3, n_obs - 1);
    const double half = (s.t_len - 1) * 0.5;
    auto u_of = [&](int t) { return (t - half) / std::max(half, 1.0); };

    Eigen::MatrixXd vand(n_obs, degree + 1);
    Eigen::VectorXd y(n_obs);
    for (int r = 0; r < n_obs; ++r) {
        const double u = u_of(cv.obs_t[r]);
        double p = 1.0;
        for (int c = 0; c <= degree; ++c) {
            vand(r, c) = p;
            p *= u;
        }
        y(r) = cv.obs_v[r];
    }
    Eigen::VectorXd coef = vand.householderQr().solve(y);
    for (int t = 0; t < s.t_len; ++t) {
        if (s.observed_at(feat, t)) continue;
        const double u = u_of(t);
        double acc = 0.0, p = 1.0;
        for (int c = 0; c <= degree; ++c) {
            acc += coef(c) * p;
            p *= u;
        }
        out.at(feat, t) = acc;
    }
}

}  // namespace

RegularSeries impute(ImputerKind kind, const IrregularSeries& s, std::uint64_t seed) {
    if (kind == ImputerKind::kTst)
        throw ConfigError("impute: the learned completion needs a trained model");
    s.check_valid();
    RegularSeries out(s.d, s.t_len);
    for (int i = 0; i < s.d; ++i)
        for (int t = 0; t < s.t_len; ++t)
            if (s.observed_at(i, t)) out.at(i, t) = s.value_at(i, t);

    Rng rng(derive_seed(seed, 0x1117));
    for (int i = 0; i < s.d; ++i) {
        const int n_obs = static_cast<int>(channel_obs(s, i).obs_t.size());
        ImputerKind effective = kind;
        if ((kind == ImputerKind::kLinear || kind == ImputerKind::kPolynomial) && n_obs < 2) {
            std::cerr << "warning: imputer " << imputer_to_str(kind) << " needs >= 2 observed "
                      << "points in channel " << i << "; falling back to stochastic fill\n";
            effective = ImputerKind::kStochastic;
        }
        switch (effective) {
            case ImputerKind::kZero:
                for (int t = 0; t < s.t_len; ++t)
                    if (!s.observed_at(i, t)) out.at(i, t) = 0.0;
                break;
            case ImputerKind::kGaussianNoise:
                for (int t = 0; t < s.t_len; ++t)
                    if (!s.observed_at(i, t)) out.at(i, t) = rng.normal();
                break;
            case ImputerKind::kLinear:
                linear_fill_channel(s, i, out);
                break;
            case ImputerKind::kPolynomial:
                polynomial_fill_channel(s, i, out);
                break;
            case ImputerKind::kStochastic:
                stochastic_fill_channel(s, i, rng, out);
                break;
            case ImputerKind::kTst:
                break;
        }
    }
    out.check_valid();
    return out;
}

RegularSeries complete(const CompletionModel& model, const IrregularSeries& s) {
    NoGradGuard guard;
    std::vector<const IrregularSeries*> batch{&s};
    Tensor completed = model.complete_batch(batch, nullptr);  // [1,d,L]
    RegularSeries out(s.d, s.t_len);
    const auto& v = completed.values();
    for (int i = 0; i < s.d; ++i)
        for (int t = 0; t < s.t_len; ++t)
            out.at(i, t) = v[static_cast<std::size_t>(i) * s.t_len + t];
    out.check_valid();
    return out;
}

}  // namespace tsgen
