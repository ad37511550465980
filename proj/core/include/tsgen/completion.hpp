#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tsgen/nn.hpp"
#include "tsgen/series.hpp"
#include "tsgen/tensor.hpp"

namespace tsgen {

struct TstConfig {
    int hidden_dim = 40;
    int n_heads = 5;
    int num_layers = 6;
    int ff_mult = 4;
    double teacher_forcing = 0.0;

    void validate() const;
};

enum class ImputerKind { kZero, kGaussianNoise, kLinear, kPolynomial, kStochastic, kTst };

ImputerKind imputer_from_str(const std::string& s);
std::string imputer_to_str(ImputerKind k);

/// Transformer-encoder / recurrent-decoder autoencoder over fixed-length
/// windows. The encoder sees zero-filled values with the observation mask
/// concatenated as extra input channels; those zeros never reach a loss.
class CompletionModel {
public:
    CompletionModel(int d, int seq_len, const TstConfig& cfg, std::uint64_t init_seed);

    /// Reconstruction [B, L, d] for a batch of irregular windows. When
    /// `tf_rng` is set, each (sample, step) tosses a teacher-forcing coin
    /// with probability cfg.teacher_forcing and, on success, the decoder
    /// consumes the previous ground-truth value where observed. Without an
    /// rng the decoder always consumes its own previous output.
    Tensor reconstruct(const std::vector<const IrregularSeries*>& batch, Rng* tf_rng) const;

    /// Differentiable completed batch [B, d, L]: observed entries pass
    /// through from the input, unobserved ones come from the decoder.
    Tensor complete_batch(const std::vector<const IrregularSeries*>& batch, Rng* tf_rng) const;

    /// Encoder output mean-pooled over time, one feature row per window.
    std::vector<std::vector<double>> encode_features(
        const std::vector<RegularSeries>& windows) const;

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const TstConfig& config() const { return cfg_; }
    int d() const { return d_; }
    int seq_len() const { return seq_len_; }

private:
    struct EncoderLayer {
        Tensor ln1_g, ln1_b, ln2_g, ln2_b;
        AttentionParams attn;
        Tensor ff_w1, ff_b1, ff_w2, ff_b2;
    };

    Tensor encode(const Tensor& input) const;  // [B,L,2d] -> [B,L,H]
    Tensor assemble_input(const std::vector<const IrregularSeries*>& batch) const;

    int d_ = 0, seq_len_ = 0;
    TstConfig cfg_;
    ParamStore params_;
    Tensor in_proj_w_, in_proj_b_, pos_;
    std::vector<EncoderLayer> layers_;
    Tensor enc_ln_g_, enc_ln_b_;
    GruParams gru_;
    Tensor head_w_, head_b_;
};

/// Masked reconstruction loss: mean squared error over observed entries
/// only. The tape form averages per-sample losses across the batch.
double ae_loss(const IrregularSeries& input, const RegularSeries& recon);
Tensor ae_loss_batch(const std::vector<const IrregularSeries*>& batch, const Tensor& recon);

struct TrainSchedule {
    int epochs = 100;
    int batch_size = 128;
    double lr = 1e-4;
    std::uint64_t seed = 0;
};

using AeEpochCallback =
    std::function<void(int epoch, double train_loss, double val_loss, CompletionModel&)>;

/// Trains the autoencoder with the masked loss; deterministic given the
/// schedule seed. Throws DataError on divergence (non-finite loss).
CompletionModel train_ae(const std::vector<IrregularSeries>& train,
                         const std::vector<IrregularSeries>& val, int d, int seq_len,
                         const TstConfig& cfg, const TrainSchedule& schedule,
                         const AeEpochCallback& on_epoch = nullptr);

/// Non-learned completion. Observed entries always pass through exactly.
RegularSeries impute(ImputerKind kind, const IrregularSeries& s, std::uint64_t seed);

/// Model-based completion (inference mode, no teacher forcing).
RegularSeries complete(const CompletionModel& model, const IrregularSeries& s);

}  // namespace tsgen
