#pragma once

#include <string>
#include <vector>

#include "tsgen/rng.hpp"
#include "tsgen/tensor.hpp"

namespace tsgen {

/// Flat named-parameter registry. Registration order is the canonical
/// order used by the optimizer, EMA, checkpoints and parameter counts.
class ParamStore {
public:
    Tensor add(const std::string& name, Tensor t);
    const std::vector<std::pair<std::string, Tensor>>& all() const { return params_; }
    Tensor find(const std::string& name) const;
    std::int64_t total_count() const;

    std::vector<double> snapshot() const;              // concatenated values
    void restore(const std::vector<double>& flat);     // inverse of snapshot
    void zero_grad();
    bool all_finite() const;

private:
    std::vector<std::pair<std::string, Tensor>> params_;
};

// Variance-scaled initializers; draws come from the supplied rng so that a
// fixed seed pins the full parameter vector.
std::vector<double> kaiming_uniform(std::int64_t n, std::int64_t fan_in, Rng& rng);
std::vector<double> xavier_uniform(std::int64_t n, std::int64_t fan_in, std::int64_t fan_out,
                                   Rng& rng);

/// Adam with bias correction. Slots are indexed by registration order, so
/// stepping is deterministic.
class Adam {
public:
    explicit Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    /// Applies one update from the accumulated grads, then zeroes them.
    /// `lr_scale` multiplies the base rate (0 freezes the group while still
    /// consuming identical state updates).
    void step(ParamStore& params, double lr_scale = 1.0);

    double lr() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// Exponential moving average of a parameter store, stored flat.
class Ema {
public:
    Ema() = default;
    Ema(const ParamStore& params, double decay);
    void update(const ParamStore& params);
    const std::vector<double>& values() const { return flat_; }
    std::vector<double>& values() { return flat_; }
    double decay() const { return decay_; }

private:
    double decay_ = 0.999;
    std::int64_t steps_ = 0;
    std::vector<double> flat_;
};

/// Swaps EMA weights into the live parameters for the guard's lifetime.
class EmaScope {
public:
    EmaScope(ParamStore& params, const Ema& ema);
    ~EmaScope();

private:
    ParamStore& params_;
    std::vector<double> saved_;
};

// ---- shared network pieces -------------------------------------------------

struct AttentionParams {
    Tensor w_qkv, b_qkv, w_proj, b_proj;
    int heads = 1;
};

AttentionParams make_attention(ParamStore& store, const std::string& prefix, int dim,
                               int heads, Rng& rng);

/// Multi-head self-attention over [B, L, dim].
Tensor attention_forward(const AttentionParams& p, const Tensor& x);

struct GruParams {
    Tensor w_x, w_h, b_x, b_h;  // packed gates: [reset | update | candidate]
    int hidden = 0;
};

GruParams make_gru(ParamStore& store, const std::string& prefix, int in_dim, int hidden,
                   Rng& rng);

/// One GRU step: x [B, in], h [B, hidden] -> new h.
Tensor gru_step(const GruParams& p, const Tensor& x, const Tensor& h);

}  // namespace tsgen
