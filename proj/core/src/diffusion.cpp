#include "tsgen/diffusion.hpp"

#include <cmath>

#include "tsgen/errors.hpp"

namespace tsgen {

void EdmConfig::validate() const {
    if (!(sigma_min > 0 && sigma_min < sigma_max))
        throw ConfigError("edm: need 0 < sigma_min < sigma_max");
    if (num_steps < 2) throw ConfigError("edm: num_steps must be >= 2");
    if (!(ema_decay > 0 && ema_decay < 1)) throw ConfigError("edm: ema_decay must be in (0,1)");
    if (sigma_data <= 0) throw ConfigError("edm: sigma_data must be positive");
    if (rho <= 0) throw ConfigError("edm: rho must be positive");
    if (p_std <= 0) throw ConfigError("edm: p_std must be positive");
}

EdmConfig::Lambda lambda_from_str(const std::string& s) {
    if (s == "edm") return EdmConfig::Lambda::kEdm;
    if (s == "unit") return EdmConfig::Lambda::kUnit;
    throw ConfigError("edm: lambda must be edm or unit, got " + s);
}

DiffusionState::DiffusionState(std::shared_ptr<Backbone> net, const EdmConfig& cfg)
    : net_(std::move(net)), cfg_(cfg), ema_(net_->params(), cfg.ema_decay) {
    cfg_.validate();
}

Tensor denoise(DiffusionState& state, const Tensor& y, const std::vector<double>& sigma) {
    const int B = y.dim(0);
    if (static_cast<int>(sigma.size()) != B)
        throw DataError("denoise: sigma count must match the batch");
    for (double v : y.values())
        if (!std::isfinite(v)) throw DataError("denoise: non-finite input");
    const double sd = state.config().sigma_data;
    std::vector<double> c_skip(B), c_out(B), c_in(B), c_noise(B);
    for (int b = 0; b < B; ++b) {
        const double s = sigma[b];
        if (!(s > 0)) throw DataError("denoise: sigma must be positive");
        const double s2 = s * s, sd2 = sd * sd;
        c_skip[b] = sd2 / (s2 + sd2);
        c_out[b] = s * sd / std::sqrt(s2 + sd2);
        c_in[b] = 1.0 / std::sqrt(s2 + sd2);
        c_noise[b] = std::log(s) / 4.0;
    }
    Tensor f = state.net().forward(mul_rows(y, c_in), c_noise);
    return add(mul_rows(y, c_skip), mul_rows(f, c_out));
}

double lambda_weight(double sigma, const EdmConfig& cfg) {
    if (cfg.lambda == EdmConfig::Lambda::kUnit) return 1.0;
    const double s2 = sigma * sigma, sd2 = cfg.sigma_data * cfg.sigma_data;
    return (s2 + sd2) / (s2 * sd2);
}

Tensor masked_loss(DiffusionState& state, const Tensor& x,
                   const std::vector<std::uint8_t>& mask_active, std::uint64_t seed) {
    const auto& shape = x.shape();
    if (shape.size() != 4) throw DataError("masked_loss: images must be [B,C,H,W]");
    if (mask_active.size() != x.values().size())
        throw DataError("masked_loss: mask size mismatch");
    const int B = shape[0];
    const std::int64_t inner = x.numel() / B;

    Rng rng(seed);
    std::vector<double> sigma(B);
    for (int b = 0; b < B; ++b)
        sigma[b] = std::exp(state.config().p_mean + state.config().p_std * rng.normal());

    std::vector<double> noise(x.numel());
    for (int b = 0; b < B; ++b)
        for (std::int64_t i = 0; i < inner; ++i) noise[b * inner + i] = sigma[b] * rng.normal();

    std::vector<double> mask_d(mask_active.size());
    std::vector<double> weights(B);
    for (int b = 0; b < B; ++b) {
        std::int64_t count = 0;
        for (std::int64_t i = 0; i < inner; ++i) {
            mask_d[b * inner + i] = mask_active[b * inner + i] ? 1.0 : 0.0;
            count += mask_active[b * inner + i] ? 1 : 0;
        }
        if (count == 0) throw DataError("masked_loss: sample " + std::to_string(b) +
                                        " has no active pixels");
        weights[b] =
            lambda_weight(sigma[b], state.config()) / (static_cast<double>(count) * B);
    }

    Tensor noisy = add(x, Tensor::from(shape, std::move(noise)));
    Tensor den = denoise(state, noisy, sigma);
    Tensor resid = mul(sub(den, x), Tensor::from(shape, std::move(mask_d)));
    return dot_const(sum_per_sample(mul(resid, resid)), weights);
}

std::vector<double> karras_sigmas(const EdmConfig& cfg, int num_steps) {
    const int N = num_steps > 0 ? num_steps : cfg.num_steps;
    if (N < 2) throw ConfigError("karras_sigmas: need at least 2 steps");
    const double inv_rho = 1.0 / cfg.rho;
    const double a = std::pow(cfg.sigma_max, inv_rho);
    const double b = std::pow(cfg.sigma_min, inv_rho);
    std::vector<double> sigmas(N);
    for (int i = 0; i < N; ++i) {
        const double t = static_cast<double>(i) / (N - 1);
        sigmas[i] = std::pow(a + t * (b - a), cfg.rho);
    }
    return sigmas;
}

std::vector<double> heun_sample(const DenoiserFn& denoiser, const Shape& shape,
                                const EdmConfig& cfg, int num_steps, std::uint64_t seed) {
    const int N = num_steps > 0 ? num_steps : cfg.num_steps;
    const std::vector<double> sigmas = karras_sigmas(cfg, N);
    const std::int64_t n_elem = shape_numel(shape);

    Rng rng(seed);
    std::vector<double> x(n_elem);
    for (auto& v : x) v = sigmas[0] * rng.normal();

    std::vector<double> x_next(n_elem);
    for (int i = 0; i < N; ++i) {
        const double s_cur = sigmas[i];
        const double s_next = (i + 1 < N) ? sigmas[i + 1] : 0.0;
        const double h = s_next - s_cur;

        std::vector<double> den = denoiser(x, s_cur);
        for (std::int64_t k = 0; k < n_elem; ++k)
            x_next[k] = x[k] + h * (x[k] - den[k]) / s_cur;
        if (s_next > 0.0) {
            std::vector<double> den2 = denoiser(x_next, s_next);
            for (std::int64_t k = 0; k < n_elem; ++k) {
                const double d1 = (x[k] - den[k]) / s_cur;
                const double d2 = (x_next[k] - den2[k]) / s_next;
                x_next[k] = x[k] + h * 0.5 * (d1 + d2);
            }
        }
        for (std::int64_t k = 0; k < n_elem; ++k) {
            if (!std::isfinite(x_next[k]))
                throw DataError("sampler: non-finite value at step " + std::to_string(i));
            x[k] = x_next[k];
        }
    }
    return x;
}

std::vector<double> sample(DiffusionState& state, const Shape& shape, std::uint64_t seed,
                           int num_steps) {
    NoGradGuard guard;
    EmaScope ema_weights(state.net().params(), state.ema());
    DenoiserFn fn = [&state, &shape](const std::vector<double>& y, double s) {
        Tensor yt = Tensor::from(shape, y);
        std::vector<double> sigma(shape[0], s);
        return denoise(state, yt, sigma).values();
    };
    return heun_sample(fn, shape, state.config(), num_steps, seed);
}

}  // namespace tsgen
