#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "tsgen/nn.hpp"
#include "tsgen/tensor.hpp"
#include "tsgen/unet.hpp"

namespace tsgen {

/// Noise-schedule and sampler settings of the preconditioned score
/// framework: sigma ladder endpoints and curvature, log-normal training
/// sigma draw, loss weighting, EMA decay.
struct EdmConfig {
    double sigma_data = 0.5;
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    double p_mean = -1.2;
    double p_std = 1.2;
    int num_steps = 18;
    double ema_decay = 0.999;
    enum class Lambda { kEdm, kUnit };
    Lambda lambda = Lambda::kEdm;

    void validate() const;
};

EdmConfig::Lambda lambda_from_str(const std::string& s);

/// Denoiser parameters plus schedule configuration and the EMA copy used
/// at sampling time.
class DiffusionState {
public:
    DiffusionState(std::shared_ptr<Backbone> net, const EdmConfig& cfg);

    Backbone& net() { return *net_; }
    const Backbone& net() const { return *net_; }
    const EdmConfig& config() const { return cfg_; }
    Ema& ema() { return ema_; }
    const Ema& ema() const { return ema_; }
    std::int64_t step_count = 0;

private:
    std::shared_ptr<Backbone> net_;
    EdmConfig cfg_;
    Ema ema_;
};

/// Preconditioned denoiser D(y, sigma) = c_skip*y + c_out*F(c_in*y, c_noise)
/// with c_skip = sd^2/(s^2+sd^2), c_out = s*sd/sqrt(s^2+sd^2),
/// c_in = 1/sqrt(s^2+sd^2), c_noise = ln(s)/4.
Tensor denoise(DiffusionState& state, const Tensor& y, const std::vector<double>& sigma);

/// Loss weight: (s^2+sd^2)/(s*sd)^2 in the weighted mode, 1 otherwise.
double lambda_weight(double sigma, const EdmConfig& cfg);

/// Masked denoising loss. Per sample: draw ln(sigma) ~ N(p_mean, p_std^2)
/// and unit noise, then
///   lambda(sigma) * sum_active (D(x + sigma*n, sigma) - x)^2 / count(active),
/// averaged over the batch. `mask_active` has one flag per pixel of x and
/// every sample must have at least one active pixel.
Tensor masked_loss(DiffusionState& state, const Tensor& x,
                   const std::vector<std::uint8_t>& mask_active, std::uint64_t seed);

/// Sigma ladder: sigma_i = (max^(1/rho) + i/(N-1)*(min^(1/rho)-max^(1/rho)))^rho,
/// strictly decreasing; the implicit final level is 0.
std::vector<double> karras_sigmas(const EdmConfig& cfg, int num_steps);

/// Batched denoiser for the sampler: whole-batch image values at one sigma.
using DenoiserFn =
    std::function<std::vector<double>(const std::vector<double>& y, double sigma)>;

/// Deterministic second-order (Heun) probability-flow sampler. The final
/// step to sigma=0 is plain Euler. Throws DataError with the step index on
/// a non-finite intermediate.
std::vector<double> heun_sample(const DenoiserFn& denoiser, const Shape& shape,
                                const EdmConfig& cfg, int num_steps, std::uint64_t seed);

/// Sampler over the trained state: swaps in EMA weights, runs the
/// preconditioned denoiser, no gradients.
std::vector<double> sample(DiffusionState& state, const Shape& shape, std::uint64_t seed,
                           int num_steps = 0);

}  // namespace tsgen
