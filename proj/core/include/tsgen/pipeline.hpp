#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tsgen/completion.hpp"
#include "tsgen/config.hpp"
#include "tsgen/diffusion.hpp"
#include "tsgen/missing.hpp"
#include "tsgen/series.hpp"
#include "tsgen/transforms.hpp"
#include "tsgen/unet.hpp"

namespace tsgen {

struct DatasetSpec {
    std::string kind = "sines";  // sines | csv
    std::string path;            // csv: file or directory of .csv files
    int num_samples = 10000;     // sines only
    int d = 5;
    int seq_len = 24;
    int stride = 1;
    double train_frac = 0.8;
    double val_frac = 0.1;
};

enum class TrainMode { kPretrainThenJoint, kJointFromScratch, kTwoStageFrozen };

TrainMode train_mode_from_str(const std::string& s);
std::string train_mode_to_str(TrainMode m);

struct RunConfig {
    DatasetSpec dataset;
    MissingnessSpec missing;
    NoiseSpec noise;
    TransformKind transform = TransformKind::kDelay;
    DelayConfig delay;          // image_side also covers fold/gaf frames
    TstConfig tst;
    ImputerKind completion = ImputerKind::kTst;
    EdmConfig edm;
    UnetConfig unet;            // in_channels/image_side are filled from the data
    TrainMode mode = TrainMode::kPretrainThenJoint;
    int ae_epochs = -1;         // -1: 10% of the diffusion budget, rounded up
    int diff_epochs = 25;
    int batch_size = 128;
    double lr = 1e-4;
    double ae_lr = -1;          // -1: same as lr
    bool use_mask = true;
    std::uint64_t seed = 0;

    static RunConfig from_kv(const KvConfig& kv);
    KvConfig to_kv() const;
    void validate() const;
    int resolved_ae_epochs() const;
    double resolved_ae_lr() const;
    int image_side() const;     // frame side for the configured transform
};

/// Windows after the full preparation protocol: window, split, drop,
/// normalize with training-split observed statistics, then optional noise.
struct PreparedData {
    int d = 0, seq_len = 0;
    NormStats stats;
    std::vector<IrregularSeries> train_irr, val_irr, test_irr;
    std::vector<RegularSeries> train_truth_raw, test_truth_raw;
    std::vector<PixelRef> occupancy;  // single-index transforms
    int image_side = 0;
};

PreparedData prepare_data(const RunConfig& cfg);

struct TrainHooks {
    /// Observes each diffusion-stage batch right before the loss: the image
    /// tensor entering the loss, its activity mask, and the source windows.
    std::function<void(const Tensor& image, const std::vector<std::uint8_t>& mask,
                       const std::vector<const IrregularSeries*>& batch)>
        on_diffusion_batch;
};

struct TrainResult {
    std::shared_ptr<CompletionModel> ae;
    std::shared_ptr<DiffusionState> diffusion;
    PreparedData data;
    double final_ae_loss = 0.0;
    double final_diff_loss = 0.0;
    std::string run_dir;  // empty when no artifacts were written
};

/// Runs the two-step scheme: masked-loss autoencoder pretraining, then
/// diffusion over completed-and-masked images. In the joint modes the
/// completion keeps receiving gradients from the diffusion loss; in the
/// frozen mode it does not. When `out_dir` is non-empty the run directory
/// (config snapshots, per-epoch checkpoints, metrics.csv) is written.
TrainResult train_pipeline(const RunConfig& cfg, const std::string& out_dir = "",
                           const KvConfig* input_snapshot = nullptr,
                           const TrainHooks* hooks = nullptr);

/// Samples images with the EMA weights, inverts the transform, clips to the
/// normalized range and denormalizes. The autoencoder plays no part here.
std::vector<RegularSeries> generate_series(DiffusionState& state, TransformKind kind,
                                           const std::vector<PixelRef>& occupancy,
                                           int image_side, int d, int seq_len,
                                           const NormStats& stats, int num_samples,
                                           std::uint64_t seed);

std::vector<RegularSeries> generate_from_result(TrainResult& result,
                                                const RunConfig& cfg, int num_samples,
                                                std::uint64_t seed);

/// Rebuilds the models of a finished run directory from its resolved config
/// snapshot and final checkpoints.
struct LoadedRun {
    RunConfig cfg;
    std::shared_ptr<CompletionModel> ae;
    std::shared_ptr<DiffusionState> diffusion;
    NormStats stats;
    std::vector<PixelRef> occupancy;
};

LoadedRun load_run(const std::string& run_dir);

std::vector<RegularSeries> generate_from_run(LoadedRun& run, int num_samples,
                                             std::uint64_t seed);

}  // namespace tsgen
