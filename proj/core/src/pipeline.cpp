#include "tsgen/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "tsgen/csvio.hpp"
#include "tsgen/checkpoint.hpp"
#include "tsgen/errors.hpp"
#include "tsgen/svg.hpp"

namespace fs = std::filesystem;

namespace tsgen {

TrainMode train_mode_from_str(const std::string& s) {
    if (s == "pretrain_then_joint") return TrainMode::kPretrainThenJoint;
    if (s == "joint_from_scratch") return TrainMode::kJointFromScratch;
    if (s == "two_stage_frozen") return TrainMode::kTwoStageFrozen;
    throw ConfigError("unknown training mode: " + s);
}

std::string train_mode_to_str(TrainMode m) {
    switch (m) {
        case TrainMode::kPretrainThenJoint: return "pretrain_then_joint";
        case TrainMode::kJointFromScratch: return "joint_from_scratch";
        case TrainMode::kTwoStageFrozen: return "two_stage_frozen";
    }
    return "?";
}

int RunConfig::resolved_ae_epochs() const {
    if (ae_epochs >= 0) return ae_epochs;
    return static_cast<int>(std::ceil(0.1 * diff_epochs));
}

double RunConfig::resolved_ae_lr() const { return ae_lr < 0 ? lr : ae_lr; }

int RunConfig::image_side() const {
    if (transform == TransformKind::kGaf)
        return std::max(delay.image_side, dataset.seq_len);
    return delay.image_side;
}

RunConfig RunConfig::from_kv(const KvConfig& kv) {
    kv.check_known_keys("dataset", {"kind", "path", "num_samples", "d", "L", "stride",
                                    "train_frac", "val_frac"});
    kv.check_known_keys("missing", {"mode", "rate", "block_min", "block_max"});
    kv.check_known_keys("noise", {"sigma"});
    kv.check_known_keys("transform", {"kind", "n", "m", "image_side"});
    kv.check_known_keys("tst", {"hidden_dim", "n_heads", "num_layers", "ff_mult",
                                "teacher_forcing", "imputer"});
    kv.check_known_keys("edm", {"sigma_data", "sigma_min", "sigma_max", "rho", "p_mean",
                                "p_std", "num_steps", "ema_decay", "lambda"});
    kv.check_known_keys("unet", {"base_channels", "channel_mult", "attention",
                                 "num_res_blocks"});
    kv.check_known_keys("train", {"mode", "ae_epochs", "diff_epochs", "batch_size", "lr",
                                  "ae_lr", "use_mask", "seed"});

    RunConfig cfg;
    cfg.dataset.kind = kv.get_str("dataset.kind", "sines");
    cfg.dataset.path = kv.get_str("dataset.path", "");
    cfg.dataset.num_samples = static_cast<int>(kv.get_int("dataset.num_samples", 10000));
    cfg.dataset.d = static_cast<int>(kv.get_int("dataset.d", 5));
    cfg.dataset.seq_len = static_cast<int>(kv.get_int("dataset.L", 24));
    cfg.dataset.stride = static_cast<int>(kv.get_int("dataset.stride", 1));
    cfg.dataset.train_frac = kv.get_double("dataset.train_frac", 0.8);
    cfg.dataset.val_frac = kv.get_double("dataset.val_frac", 0.1);

    const std::string mmode = kv.get_str("missing.mode", "random");
    if (mmode == "random") cfg.missing.mode = MissingMode::kRandom;
    else if (mmode == "block") cfg.missing.mode = MissingMode::kBlock;
    else throw ConfigError("missing.mode must be random or block, got " + mmode);
    cfg.missing.rate = kv.get_double("missing.rate", 0.5);
    cfg.missing.block_min = static_cast<int>(kv.get_int("missing.block_min", 0));
    cfg.missing.block_max = static_cast<int>(kv.get_int("missing.block_max", 0));

    cfg.noise.sigma = kv.get_double("noise.sigma", 0.0);

    cfg.transform = transform_kind_from_str(kv.get_str("transform.kind", "delay"));
    cfg.delay.n = static_cast<int>(kv.get_int("transform.n", 8));
    cfg.delay.m = static_cast<int>(kv.get_int("transform.m", 3));
    cfg.delay.image_side = static_cast<int>(kv.get_int("transform.image_side", 8));

    cfg.tst.hidden_dim = static_cast<int>(kv.get_int("tst.hidden_dim", 40));
    cfg.tst.n_heads = static_cast<int>(kv.get_int("tst.n_heads", 5));
    cfg.tst.num_layers = static_cast<int>(kv.get_int("tst.num_layers", 6));
    cfg.tst.ff_mult = static_cast<int>(kv.get_int("tst.ff_mult", 4));
    cfg.tst.teacher_forcing = kv.get_double("tst.teacher_forcing", 0.0);
    cfg.completion = imputer_from_str(kv.get_str("tst.imputer", "tst"));

    cfg.edm.sigma_data = kv.get_double("edm.sigma_data", 0.5);
    cfg.edm.sigma_min = kv.get_double("edm.sigma_min", 0.002);
    cfg.edm.sigma_max = kv.get_double("edm.sigma_max", 80.0);
    cfg.edm.rho = kv.get_double("edm.rho", 7.0);
    cfg.edm.p_mean = kv.get_double("edm.p_mean", -1.2);
    cfg.edm.p_std = kv.get_double("edm.p_std", 1.2);
    cfg.edm.num_steps = static_cast<int>(kv.get_int("edm.num_steps", 18));
    cfg.edm.ema_decay = kv.get_double("edm.ema_decay", 0.999);
    cfg.edm.lambda = lambda_from_str(kv.get_str("edm.lambda", "edm"));

    cfg.unet.base_channels = static_cast<int>(kv.get_int("unet.base_channels", 128));
    auto mult = kv.get_int_list("unet.channel_mult", {1, 2, 2, 2});
    cfg.unet.channel_mult.assign(mult.begin(), mult.end());
    if (kv.get_str("unet.attention", "") == "none") {
        cfg.unet.attention_resolutions.clear();
    } else {
        auto attn = kv.get_int_list("unet.attention", {8, 4, 2});
        cfg.unet.attention_resolutions.assign(attn.begin(), attn.end());
    }
    cfg.unet.num_res_blocks = static_cast<int>(kv.get_int("unet.num_res_blocks", 2));

    cfg.mode = train_mode_from_str(kv.get_str("train.mode", "pretrain_then_joint"));
    cfg.ae_epochs = static_cast<int>(kv.get_int("train.ae_epochs", -1));
    cfg.diff_epochs = static_cast<int>(kv.get_int("train.diff_epochs", 25));
    cfg.batch_size = static_cast<int>(kv.get_int("train.batch_size", 128));
    cfg.lr = kv.get_double("train.lr", 1e-4);
    cfg.ae_lr = kv.get_double("train.ae_lr", -1.0);
    cfg.use_mask = kv.get_bool("train.use_mask", true);
    cfg.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", 0));

    cfg.missing.seed = cfg.seed;
    cfg.noise.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

KvConfig RunConfig::to_kv() const {
    KvConfig kv;
    kv.set("dataset.kind", dataset.kind);
    if (!dataset.path.empty()) kv.set("dataset.path", dataset.path);
    kv.set("dataset.num_samples", std::to_string(dataset.num_samples));
    kv.set("dataset.d", std::to_string(dataset.d));
    kv.set("dataset.L", std::to_string(dataset.seq_len));
    kv.set("dataset.stride", std::to_string(dataset.stride));
    kv.set("dataset.train_frac", format_full(dataset.train_frac));
    kv.set("dataset.val_frac", format_full(dataset.val_frac));
    kv.set("missing.mode", missing.mode == MissingMode::kRandom ? "random" : "block");
    kv.set("missing.rate", format_full(missing.rate));
    kv.set("missing.block_min", std::to_string(missing.block_min));
    kv.set("missing.block_max", std::to_string(missing.block_max));
    kv.set("noise.sigma", format_full(noise.sigma));
    kv.set("transform.kind", transform_kind_to_str(transform));
    kv.set("transform.n", std::to_string(delay.n));
    kv.set("transform.m", std::to_string(delay.m));
    kv.set("transform.image_side", std::to_string(delay.image_side));
    kv.set("tst.hidden_dim", std::to_string(tst.hidden_dim));
    kv.set("tst.n_heads", std::to_string(tst.n_heads));
    kv.set("tst.num_layers", std::to_string(tst.num_layers));
    kv.set("tst.ff_mult", std::to_string(tst.ff_mult));
    kv.set("tst.teacher_forcing", format_full(tst.teacher_forcing));
    kv.set("tst.imputer", imputer_to_str(completion));
    kv.set("edm.sigma_data", format_full(edm.sigma_data));
    kv.set("edm.sigma_min", format_full(edm.sigma_min));
    kv.set("edm.sigma_max", format_full(edm.sigma_max));
    kv.set("edm.rho", format_full(edm.rho));
    kv.set("edm.p_mean", format_full(edm.p_mean));
    kv.set("edm.p_std", format_full(edm.p_std));
    kv.set("edm.num_steps", std::to_string(edm.num_steps));
    kv.set("edm.ema_decay", format_full(edm.ema_decay));
    kv.set("edm.lambda", edm.lambda == EdmConfig::Lambda::kEdm ? "edm" : "unit");
    kv.set("unet.base_channels", std::to_string(unet.base_channels));
    {
        std::string mult, attn;
        for (std::size_t i = 0; i < unet.channel_mult.size(); ++i)
            mult += (i ? "," : "") + std::to_string(unet.channel_mult[i]);
        for (std::size_t i = 0; i < unet.attention_resolutions.size(); ++i)
            attn += (i ? "," : "") + std::to_string(unet.attention_resolutions[i]);
        kv.set("unet.channel_mult", mult);
        kv.set("unet.attention", attn.empty() ? "none" : attn);
    }
    kv.set("unet.num_res_blocks", std::to_string(unet.num_res_blocks));
    kv.set("train.mode", train_mode_to_str(mode));
    kv.set("train.ae_epochs", std::to_string(ae_epochs));
    kv.set("train.diff_epochs", std::to_string(diff_epochs));
    kv.set("train.batch_size", std::to_string(batch_size));
    kv.set("train.lr", format_full(lr));
    kv.set("train.ae_lr", format_full(ae_lr));
    kv.set("train.use_mask", use_mask ? "true" : "false");
    kv.set("train.seed", std::to_string(seed));
    return kv;
}

void RunConfig::validate() const {
    if (dataset.kind != "sines" && dataset.kind != "csv")
        throw ConfigError("dataset.kind must be sines or csv");
    if (dataset.kind == "csv" && dataset.path.empty())
        throw ConfigError("dataset.path is required for csv datasets");
    if (dataset.seq_len < 2) throw ConfigError("dataset.L must be >= 2");
    if (dataset.d < 1) throw ConfigError("dataset.d must be >= 1");
    if (!(dataset.train_frac > 0 && dataset.val_frac >= 0 &&
          dataset.train_frac + dataset.val_frac < 1.0))
        throw ConfigError("dataset split fractions must leave room for a test split");
    missing.validate(dataset.seq_len);
    if (noise.sigma < 0) throw ConfigError("noise.sigma must be >= 0");
    tst.validate();
    edm.validate();
    if (transform == TransformKind::kDelay) delay.validate(dataset.seq_len);
    if (transform == TransformKind::kFold &&
        static_cast<std::int64_t>(delay.image_side) * delay.image_side < dataset.seq_len)
        throw ConfigError("transform.image_side too small for vanilla folding");
    UnetConfig u = unet;
    u.in_channels = dataset.d;
    u.image_side = image_side();
    u.validate();
    if (diff_epochs < 0 || batch_size < 1) throw ConfigError("bad training budget");
}

PreparedData prepare_data(const RunConfig& cfg) {
    std::vector<RegularSeries> all_windows;
    if (cfg.dataset.kind == "sines") {
        auto series = generate_sines(cfg.dataset.num_samples, cfg.dataset.d,
                                     cfg.dataset.seq_len, derive_seed(cfg.seed, 0xDA7A));
        all_windows = std::move(series);
    } else {
        std::vector<std::string> files;
        if (fs::is_directory(cfg.dataset.path)) files = list_files(cfg.dataset.path, ".csv");
        else files.push_back(cfg.dataset.path);
        if (files.empty()) throw InputError("no .csv files under " + cfg.dataset.path);
        for (const auto& f : files) {
            RegularSeries s = load_csv_series(f);
            if (s.d != cfg.dataset.d)
                throw DataError(f + ": has " + std::to_string(s.d) + " features, config says " +
                                std::to_string(cfg.dataset.d));
            for (auto& w : windows(s, cfg.dataset.seq_len, cfg.dataset.stride))
                all_windows.push_back(std::move(w));
        }
    }
    const int n = static_cast<int>(all_windows.size());
    if (n < 10) throw DataError("dataset too small: " + std::to_string(n) + " windows");

    DatasetSplit split = split_indices(n, cfg.dataset.train_frac, cfg.dataset.val_frac,
                                       cfg.seed);

    auto make_irregular = [&](int idx) {
        MissingnessSpec spec = cfg.missing;
        spec.seed = derive_seed(derive_seed(cfg.seed, 0x30B5), static_cast<std::uint64_t>(idx));
        return apply_missingness(all_windows[idx], spec);
    };

    PreparedData data;
    data.d = cfg.dataset.d;
    data.seq_len = cfg.dataset.seq_len;
    data.image_side = cfg.image_side();

    std::vector<IrregularSeries> train_raw;
    train_raw.reserve(split.train.size());
    for (int idx : split.train) train_raw.push_back(make_irregular(idx));
    data.stats = compute_stats(train_raw);

    auto finish = [&](IrregularSeries irr, int idx) {
        IrregularSeries out = normalize(irr, data.stats);
        if (cfg.noise.sigma > 0) {
            NoiseSpec ns = cfg.noise;
            ns.seed = derive_seed(derive_seed(cfg.seed, 0x401E),
                                  static_cast<std::uint64_t>(idx));
            out = add_noise(out, ns);
        }
        return out;
    };

    for (std::size_t k = 0; k < split.train.size(); ++k) {
        data.train_irr.push_back(finish(std::move(train_raw[k]), split.train[k]));
        data.train_truth_raw.push_back(all_windows[split.train[k]]);
    }
    for (int idx : split.val) data.val_irr.push_back(finish(make_irregular(idx), idx));
    for (int idx : split.test) {
        data.test_irr.push_back(finish(make_irregular(idx), idx));
        data.test_truth_raw.push_back(all_windows[idx]);
    }

    if (cfg.transform == TransformKind::kDelay)
        data.occupancy = delay_occupancy(cfg.dataset.seq_len, cfg.delay);
    else if (cfg.transform == TransformKind::kFold)
        data.occupancy = fold_occupancy(cfg.dataset.seq_len, cfg.delay.image_side);
    return data;
}

namespace {

std::vector<std::uint8_t> batch_pixel_mask(const RunConfig& cfg, const PreparedData& data,
                                           const std::vector<const IrregularSeries*>& batch) {
    const int side = data.image_side;
    const int pix = side * side;
    const int B = static_cast<int>(batch.size());
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(B) * cfg.dataset.d * pix, 0);
    for (int b = 0; b < B; ++b) {
        PixelMask pm;
        if (cfg.transform == TransformKind::kGaf) {
            // Occupancy of the Gramian frame: (i,j) pairs plus padding.
            std::vector<PixelRef> occ(static_cast<std::size_t>(side) * side);
            for (int i = 0; i < data.seq_len; ++i)
                for (int j = 0; j < data.seq_len; ++j) {
                    occ[static_cast<std::size_t>(i) * side + j].a = i;
                    occ[static_cast<std::size_t>(i) * side + j].b = j;
                }
            pm = mask_to_pixels(batch[b]->observed, cfg.dataset.d, data.seq_len, occ, side);
        } else {
            pm = mask_to_pixels(batch[b]->observed, cfg.dataset.d, data.seq_len,
                                data.occupancy, side);
        }
        if (!cfg.use_mask) {
            // Unmasked ablation: every content pixel counts; padding never does.
            for (int c = 0; c < cfg.dataset.d; ++c)
                for (int p = 0; p < pix; ++p) {
                    const bool content =
                        cfg.transform == TransformKind::kGaf
                            ? (p / side < data.seq_len && p % side < data.seq_len)
                            : !data.occupancy[p].is_padding();
                    pm.active[static_cast<std::size_t>(c) * pix + p] = content ? 1 : 0;
                }
        }
        std::copy(pm.active.begin(), pm.active.end(),
                  mask.begin() + static_cast<std::size_t>(b) * cfg.dataset.d * pix);
    }
    return mask;
}

Tensor imputed_batch_tensor(const RunConfig& cfg,
                            const std::vector<const IrregularSeries*>& batch,
                            const std::vector<int>& global_idx) {
    const int B = static_cast<int>(batch.size());
    const int d = cfg.dataset.d, L = cfg.dataset.seq_len;
    std::vector<double> v(static_cast<std::size_t>(B) * d * L);
    for (int b = 0; b < B; ++b) {
        RegularSeries filled =
            impute(cfg.completion, *batch[b],
                   derive_seed(derive_seed(cfg.seed, 0xF111),
                               static_cast<std::uint64_t>(global_idx[b])));
        for (int i = 0; i < d; ++i)
            for (int t = 0; t < L; ++t)
                v[(static_cast<std::size_t>(b) * d + i) * L + t] = filled.at(i, t);
    }
    return Tensor::from({B, d, L}, std::move(v));
}

void write_metrics_row(std::ofstream& out, int epoch, const std::string& stage, double loss) {
    out << epoch << "," << stage << "," << format_full(loss) << "\n";
    out.flush();
}

}  // namespace

TrainResult train_pipeline(const RunConfig& cfg, const std::string& out_dir,
                           const KvConfig* input_snapshot, const TrainHooks* hooks) {
    cfg.validate();
    TrainResult result;
    result.run_dir = out_dir;

    std::ofstream metrics_out;
    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        ensure_dir(out_dir + "/checkpoints");
        // Snapshot first: the input bytes verbatim, then the resolved form.
        if (input_snapshot && !input_snapshot->source_bytes().empty())
            write_text_file(out_dir + "/config.snapshot", input_snapshot->source_bytes());
        else
            write_text_file(out_dir + "/config.snapshot", cfg.to_kv().serialize());
        write_text_file(out_dir + "/config.resolved", cfg.to_kv().serialize());
        metrics_out.open(out_dir + "/metrics.csv", std::ios::binary);
        metrics_out << "epoch,stage,loss\n";
    }

    result.data = prepare_data(cfg);
    PreparedData& data = result.data;
    const std::string resolved = cfg.to_kv().serialize();

    // Stage 1: autoencoder pretraining with the masked reconstruction loss.
    result.ae = std::make_shared<CompletionModel>(data.d, data.seq_len, cfg.tst,
                                                  derive_seed(cfg.seed, 0xA0));
    // Pretraining always runs at the base rate; ae_lr only throttles how
    // strongly the diffusion stage keeps training the completion.
    Adam ae_opt(cfg.lr);
    Rng ae_order_rng(derive_seed(cfg.seed, 0x5471));
    Rng tf_rng(derive_seed(cfg.seed, 0x7F0C));
    const int n_train = static_cast<int>(data.train_irr.size());
    std::vector<int> order(n_train);
    for (int i = 0; i < n_train; ++i) order[i] = i;

    const bool learned_completion = cfg.completion == ImputerKind::kTst;
    const int ae_epochs = learned_completion ? cfg.resolved_ae_epochs() : 0;
    for (int epoch = 0; epoch < ae_epochs; ++epoch) {
        for (int i = n_train - 1; i > 0; --i)
            std::swap(order[i], order[ae_order_rng.below(static_cast<std::uint64_t>(i) + 1)]);
        double epoch_loss = 0.0;
        int batches = 0;
        for (int off = 0; off < n_train; off += cfg.batch_size) {
            const int B = std::min(cfg.batch_size, n_train - off);
            std::vector<const IrregularSeries*> batch;
            for (int b = 0; b < B; ++b) batch.push_back(&data.train_irr[order[off + b]]);
            Tensor loss = ae_loss_batch(batch, result.ae->reconstruct(batch, &tf_rng));
            const double lv = loss.item();
            if (!std::isfinite(lv))
                throw DataError("pipeline: autoencoder loss diverged at epoch " +
                                std::to_string(epoch));
            backward(loss);
            ae_opt.step(result.ae->params());
            epoch_loss += lv;
            ++batches;
        }
        result.final_ae_loss = epoch_loss / std::max(1, batches);
        if (metrics_out.is_open()) write_metrics_row(metrics_out, epoch, "ae", result.final_ae_loss);
        if (!out_dir.empty())
            save_checkpoint(out_dir + "/checkpoints/ae_epoch_" + std::to_string(epoch) + ".ckpt",
                            checkpoint_from_params(result.ae->params(), resolved));
    }

    // Stage 2: diffusion over completed-and-masked images.
    UnetConfig unet_cfg = cfg.unet;
    unet_cfg.in_channels = data.d;
    unet_cfg.image_side = data.image_side;
    auto net = std::make_shared<UNet>(unet_cfg, derive_seed(cfg.seed, 0xD1FF));
    result.diffusion = std::make_shared<DiffusionState>(net, cfg.edm);
    Adam diff_opt(cfg.lr);
    Adam joint_ae_opt(cfg.resolved_ae_lr());
    Rng diff_order_rng(derive_seed(cfg.seed, 0x0D2D));
    Rng loss_seed_rng(derive_seed(cfg.seed, 0x1055));

    const bool joint = cfg.mode != TrainMode::kTwoStageFrozen && learned_completion;
    for (int epoch = 0; epoch < cfg.diff_epochs; ++epoch) {
        for (int i = n_train - 1; i > 0; --i)
            std::swap(order[i], order[diff_order_rng.below(static_cast<std::uint64_t>(i) + 1)]);
        double epoch_loss = 0.0;
        int batches = 0;
        for (int off = 0; off < n_train; off += cfg.batch_size) {
            const int B = std::min(cfg.batch_size, n_train - off);
            std::vector<const IrregularSeries*> batch;
            std::vector<int> global_idx;
            for (int b = 0; b < B; ++b) {
                batch.push_back(&data.train_irr[order[off + b]]);
                global_idx.push_back(order[off + b]);
            }

            Tensor completed;  // [B,d,L]
            if (learned_completion) {
                if (joint) {
                    completed = result.ae->complete_batch(batch, &tf_rng);
                } else {
                    NoGradGuard guard;
                    completed = result.ae->complete_batch(batch, &tf_rng);
                }
            } else {
                completed = imputed_batch_tensor(cfg, batch, global_idx);
            }

            Tensor image = cfg.transform == TransformKind::kGaf
                               ? gaf_image_op(completed, data.image_side)
                               : series_to_image_op(completed, data.occupancy,
                                                    data.image_side);
            std::vector<std::uint8_t> mask = batch_pixel_mask(cfg, data, batch);
            if (hooks && hooks->on_diffusion_batch)
                hooks->on_diffusion_batch(image, mask, batch);

            Tensor loss = masked_loss(*result.diffusion, image, mask,
                                      loss_seed_rng.next_u64());
            const double lv = loss.item();
            if (!std::isfinite(lv))
                throw DataError("pipeline: diffusion loss diverged at epoch " +
                                std::to_string(epoch) + ", batch " + std::to_string(batches));
            backward(loss);
            diff_opt.step(net->params());
            if (joint) joint_ae_opt.step(result.ae->params(), 1.0);
            result.diffusion->ema().update(net->params());
            ++result.diffusion->step_count;
            epoch_loss += lv;
            ++batches;
        }
        result.final_diff_loss = epoch_loss / std::max(1, batches);
        if (metrics_out.is_open())
            write_metrics_row(metrics_out, epoch, "diff", result.final_diff_loss);
        if (!out_dir.empty()) {
            Checkpoint ckpt = checkpoint_from_params(net->params(), resolved);
            ckpt.tensors.emplace_back(
                "ema.flat",
                Tensor::from({static_cast<int>(result.diffusion->ema().values().size())},
                             result.diffusion->ema().values()));
            save_checkpoint(out_dir + "/checkpoints/diffusion_epoch_" + std::to_string(epoch) +
                                ".ckpt",
                            ckpt);
        }
    }

    if (!out_dir.empty()) {
        // Final checkpoints, normalization stats riding along.
        Checkpoint ae_ckpt = checkpoint_from_params(result.ae->params(), resolved);
        save_checkpoint(out_dir + "/checkpoints/ae.ckpt", ae_ckpt);
        Checkpoint diff_ckpt = checkpoint_from_params(net->params(), resolved);
        diff_ckpt.tensors.emplace_back(
            "ema.flat",
            Tensor::from({static_cast<int>(result.diffusion->ema().values().size())},
                         result.diffusion->ema().values()));
        diff_ckpt.tensors.emplace_back(
            "stats.min", Tensor::from({data.d}, data.stats.min_v));
        diff_ckpt.tensors.emplace_back(
            "stats.max", Tensor::from({data.d}, data.stats.max_v));
        save_checkpoint(out_dir + "/checkpoints/diffusion.ckpt", diff_ckpt);
    }
    return result;
}

std::vector<RegularSeries> generate_series(DiffusionState& state, TransformKind kind,
                                           const std::vector<PixelRef>& occupancy,
                                           int image_side, int d, int seq_len,
                                           const NormStats& stats, int num_samples,
                                           std::uint64_t seed) {
    std::vector<RegularSeries> out;
    if (num_samples <= 0) return out;
    out.reserve(num_samples);
    constexpr int kBatch = 64;
    int produced = 0, batch_index = 0;
    while (produced < num_samples) {
        const int B = std::min(kBatch, num_samples - produced);
        const Shape shape{B, d, image_side, image_side};
        std::vector<double> pixels =
            sample(state, shape, derive_seed(seed, static_cast<std::uint64_t>(batch_index)), 0);
        const int pix = image_side * image_side;
        for (int b = 0; b < B; ++b) {
            SeriesImage img;
            img.kind = kind;
            img.d = d;
            img.side = image_side;
            img.series_len = seq_len;
            img.occupancy = occupancy;
            if (kind == TransformKind::kGaf) {
                img.occupancy.assign(static_cast<std::size_t>(image_side) * image_side,
                                     PixelRef{});
                for (int i = 0; i < seq_len; ++i)
                    for (int j = 0; j < seq_len; ++j) {
                        auto& ref = img.occupancy[static_cast<std::size_t>(i) * image_side + j];
                        ref.a = i;
                        ref.b = j;
                    }
            }
            img.pixels.assign(pixels.begin() + static_cast<std::size_t>(b) * d * pix,
                              pixels.begin() + static_cast<std::size_t>(b + 1) * d * pix);
            RegularSeries normalized = invert(img);
            for (auto& v : normalized.values) v = std::clamp(v, -1.0, 1.0);
            out.push_back(denormalize(normalized, stats));
        }
        produced += B;
        ++batch_index;
    }
    return out;
}

std::vector<RegularSeries> generate_from_result(TrainResult& result, const RunConfig& cfg,
                                                int num_samples, std::uint64_t seed) {
    return generate_series(*result.diffusion, cfg.transform, result.data.occupancy,
                           result.data.image_side, result.data.d, result.data.seq_len,
                           result.data.stats, num_samples, seed);
}

LoadedRun load_run(const std::string& run_dir) {
    const std::string resolved_path = run_dir + "/config.resolved";
    if (!fs::exists(resolved_path))
        throw InputError("not a run directory (missing config.resolved): " + run_dir);
    LoadedRun run;
    run.cfg = RunConfig::from_kv(KvConfig::parse_file(resolved_path));

    const std::string diff_path = run_dir + "/checkpoints/diffusion.ckpt";
    if (!fs::exists(diff_path)) throw InputError("missing checkpoint: " + diff_path);
    Checkpoint diff_ckpt = load_checkpoint(diff_path);

    UnetConfig unet_cfg = run.cfg.unet;
    unet_cfg.in_channels = run.cfg.dataset.d;
    unet_cfg.image_side = run.cfg.image_side();
    auto net = std::make_shared<UNet>(unet_cfg, 0);
    load_into_params(diff_ckpt, net->params());
    run.diffusion = std::make_shared<DiffusionState>(net, run.cfg.edm);
    run.diffusion->ema().values() = diff_ckpt.find("ema.flat").values();

    run.stats.min_v = diff_ckpt.find("stats.min").values();
    run.stats.max_v = diff_ckpt.find("stats.max").values();

    const std::string ae_path = run_dir + "/checkpoints/ae.ckpt";
    if (fs::exists(ae_path)) {
        run.ae = std::make_shared<CompletionModel>(run.cfg.dataset.d, run.cfg.dataset.seq_len,
                                                   run.cfg.tst, 0);
        load_into_params(load_checkpoint(ae_path), run.ae->params());
    }

    if (run.cfg.transform == TransformKind::kDelay)
        run.occupancy = delay_occupancy(run.cfg.dataset.seq_len, run.cfg.delay);
    else if (run.cfg.transform == TransformKind::kFold)
        run.occupancy = fold_occupancy(run.cfg.dataset.seq_len, run.cfg.delay.image_side);
    return run;
}

std::vector<RegularSeries> generate_from_run(LoadedRun& run, int num_samples,
                                             std::uint64_t seed) {
    return generate_series(*run.diffusion, run.cfg.transform, run.occupancy,
                           run.cfg.image_side(), run.cfg.dataset.d, run.cfg.dataset.seq_len,
                           run.stats, num_samples, seed);
}

}  // namespace tsgen
