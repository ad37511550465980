// tsgen: deterministic workflow around the library - synthesize data,
// simulate missingness, train the completion+diffusion pipeline, sample,
// evaluate, and run the planar toy study.

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "tsgen/checkpoint.hpp"
#include "tsgen/completion.hpp"
#include "tsgen/csvio.hpp"
#include "tsgen/errors.hpp"
#include "tsgen/metrics.hpp"
#include "tsgen/pipeline.hpp"
#include "tsgen/svg.hpp"
#include "tsgen/toy.hpp"

namespace fs = std::filesystem;
using namespace tsgen;

namespace {

void claim_out_dir(const std::string& dir, bool overwrite) {
    if (dir.empty()) throw ConfigError("--out directory is required");
    if (!overwrite && dir_nonempty(dir))
        throw ConfigError("output directory exists and is not empty: " + dir +
                          " (pass --overwrite to allow reuse)");
    ensure_dir(dir);
}

std::string sample_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%05d.csv", index);
    return buf;
}

// ---- gen-data ---------------------------------------------------------------

struct GenDataArgs {
    std::string out;
    int num = 1000, d = 5, seq_len = 24;
    std::uint64_t seed = 0;
    bool overwrite = false;
};

void run_gen_data(const GenDataArgs& args) {
    claim_out_dir(args.out, args.overwrite);
    KvConfig manifest;
    manifest.set("dataset.kind", "csv");
    manifest.set("dataset.path", args.out);
    manifest.set("dataset.num_samples", std::to_string(args.num));
    manifest.set("dataset.d", std::to_string(args.d));
    manifest.set("dataset.L", std::to_string(args.seq_len));
    manifest.set("dataset.stride", "1");
    manifest.set("dataset.train_frac", "0.8");
    manifest.set("dataset.val_frac", "0.1");
    manifest.set("train.seed", std::to_string(args.seed));
    write_text_file(args.out + "/manifest.cfg", manifest.serialize());

    auto series = generate_sines(args.num, args.d, args.seq_len, derive_seed(args.seed, 0xDA7A));
    for (int k = 0; k < args.num; ++k)
        write_csv_series(args.out + "/" + sample_name(k), series[k]);
    std::cout << "wrote " << args.num << " series to " << args.out << "\n";
}

// ---- simulate -----------------------------------------------------------------

struct SimulateArgs {
    std::string in, out;
    double rate = 0.5, sigma = 0.0;
    std::string mode = "random";
    int block_min = 0, block_max = 0;
    std::uint64_t seed = 0;
    bool overwrite = false;
};

void run_simulate(const SimulateArgs& args) {
    claim_out_dir(args.out, args.overwrite);
    auto files = list_files(args.in, ".csv");
    if (files.empty()) throw InputError("no .csv files under " + args.in);

    MissingnessSpec spec;
    if (args.mode != "random" && args.mode != "block")
        throw ConfigError("--missing-mode must be random or block");
    spec.mode = args.mode == "block" ? MissingMode::kBlock : MissingMode::kRandom;
    spec.rate = args.rate;
    spec.block_min = args.block_min;
    spec.block_max = args.block_max;

    KvConfig resolved;
    resolved.set("missing.mode", args.mode);
    resolved.set("missing.rate", format_full(args.rate));
    resolved.set("missing.block_min", std::to_string(args.block_min));
    resolved.set("missing.block_max", std::to_string(args.block_max));
    resolved.set("noise.sigma", format_full(args.sigma));
    resolved.set("train.seed", std::to_string(args.seed));
    write_text_file(args.out + "/invocation.cfg", resolved.serialize());

    int index = 0;
    for (const auto& file : files) {
        if (fs::path(file).filename() == "manifest.cfg") continue;
        RegularSeries s = load_csv_series(file);
        spec.seed = derive_seed(derive_seed(args.seed, 0x30B5), index);
        IrregularSeries irr = apply_missingness(s, spec);
        if (args.sigma > 0) {
            NoiseSpec noise{args.sigma, derive_seed(derive_seed(args.seed, 0x401E), index)};
            irr = add_noise(irr, noise);
        }
        write_csv_irregular(args.out + "/" + fs::path(file).filename().string(), irr);
        ++index;
    }
    std::cout << "simulated " << index << " irregular series into " << args.out << "\n";
}

// ---- shared config assembly ----------------------------------------------------

struct ConfigOverrides {
    std::optional<double> missing_rate, noise_sigma;
    std::optional<std::string> missing_mode, imputer;
    std::optional<std::uint64_t> seed;

    void apply(KvConfig& kv) const {
        if (missing_rate) kv.set("missing.rate", format_full(*missing_rate));
        if (missing_mode) kv.set("missing.mode", *missing_mode);
        if (noise_sigma) kv.set("noise.sigma", format_full(*noise_sigma));
        if (imputer) kv.set("tst.imputer", *imputer);
        if (seed) kv.set("train.seed", std::to_string(*seed));
    }
};

struct TrainArgs {
    std::string config, out;
    ConfigOverrides overrides;
    bool overwrite = false;
};

// ---- train-ae -----------------------------------------------------------------

void run_train_ae(const TrainArgs& args) {
    claim_out_dir(args.out, args.overwrite);
    KvConfig file_kv = KvConfig::parse_file(args.config);
    KvConfig kv = file_kv;
    args.overrides.apply(kv);
    RunConfig cfg = RunConfig::from_kv(kv);

    write_text_file(args.out + "/config.snapshot",
                    file_kv.source_bytes().empty() ? file_kv.serialize()
                                                   : file_kv.source_bytes());
    write_text_file(args.out + "/config.resolved", cfg.to_kv().serialize());
    ensure_dir(args.out + "/checkpoints");
    const std::string resolved = cfg.to_kv().serialize();

    if (cfg.completion != ImputerKind::kTst) {
        // Non-learned baseline: nothing to fit; the checkpoint records the
        // imputer choice for downstream tooling.
        Checkpoint ckpt;
        ckpt.config_echo = resolved;
        save_checkpoint(args.out + "/checkpoints/ae.ckpt", ckpt);
        std::cout << "recorded baseline imputer '" << imputer_to_str(cfg.completion)
                  << "' (no training)\n";
        return;
    }

    PreparedData data = prepare_data(cfg);
    TrainSchedule sched;
    sched.epochs = cfg.ae_epochs >= 0 ? cfg.ae_epochs : cfg.resolved_ae_epochs();
    sched.batch_size = cfg.batch_size;
    sched.lr = cfg.lr;
    sched.seed = cfg.seed;

    std::ofstream metrics(args.out + "/metrics.csv", std::ios::binary);
    metrics << "epoch,stage,loss\n";
    CompletionModel model = train_ae(
        data.train_irr, data.val_irr, data.d, data.seq_len, cfg.tst, sched,
        [&](int epoch, double train_loss, double val_loss, CompletionModel& m) {
            metrics << epoch << ",ae," << format_full(train_loss) << "\n";
            metrics.flush();
            save_checkpoint(args.out + "/checkpoints/ae_epoch_" + std::to_string(epoch) +
                                ".ckpt",
                            checkpoint_from_params(m.params(), resolved));
            std::cout << "epoch " << epoch << ": train " << train_loss << " val " << val_loss
                      << "\n";
        });
    save_checkpoint(args.out + "/checkpoints/ae.ckpt",
                    checkpoint_from_params(model.params(), resolved));
    std::cout << "autoencoder checkpoint written to " << args.out << "/checkpoints/ae.ckpt\n";
}

// ---- train ----------------------------------------------------------------------

void run_train(const TrainArgs& args) {
    claim_out_dir(args.out, args.overwrite);
    KvConfig file_kv = KvConfig::parse_file(args.config);
    KvConfig kv = file_kv;
    args.overrides.apply(kv);
    RunConfig cfg = RunConfig::from_kv(kv);
    TrainResult result = train_pipeline(cfg, args.out, &file_kv);
    std::cout << "run complete: ae loss " << result.final_ae_loss << ", diffusion loss "
              << result.final_diff_loss << "; artifacts in " << args.out << "\n";
}

// ---- sample ---------------------------------------------------------------------

struct SampleArgs {
    std::string run, out;
    int num = 16;
    std::uint64_t seed = 0;
    bool overwrite = false;
};

void run_sample(const SampleArgs& args) {
    if (args.num < 0) throw ConfigError("--n must be >= 0");
    LoadedRun run = load_run(args.run);
    const std::string out = args.out.empty() ? args.run + "/samples" : args.out;
    claim_out_dir(out, args.overwrite);

    auto series = generate_from_run(run, args.num, args.seed);
    for (int k = 0; k < args.num; ++k) write_csv_series(out + "/" + sample_name(k), series[k]);
    std::cout << "wrote " << args.num << " samples to " << out << "\n";
}

// ---- evaluate -------------------------------------------------------------------

struct EvaluateArgs {
    std::string real_dir, synth_dir, metrics = "disc,pred,corr,fid", encoder, out;
    int seeds = 1;
    std::uint64_t seed = 0;
};

std::vector<RegularSeries> load_window_dir(const std::string& dir) {
    auto files = list_files(dir, ".csv");
    std::vector<RegularSeries> out;
    for (const auto& f : files) {
        if (fs::path(f).filename() == "metrics.csv") continue;
        out.push_back(load_csv_series(f));
    }
    if (out.empty()) throw InputError("no window .csv files under " + dir);
    return out;
}

void run_evaluate(const EvaluateArgs& args) {
    if (args.out.empty()) throw ConfigError("--out file is required");
    if (args.seeds < 1) throw ConfigError("--seeds must be >= 1");
    auto real = load_window_dir(args.real_dir);
    auto synth = load_window_dir(args.synth_dir);
    if (real[0].d != synth[0].d)
        throw ConfigError("real/synthetic feature counts differ: " +
                          std::to_string(real[0].d) + " vs " + std::to_string(synth[0].d));
    if (real[0].t_len != synth[0].t_len)
        throw ConfigError("real/synthetic window lengths differ: " +
                          std::to_string(real[0].t_len) + " vs " +
                          std::to_string(synth[0].t_len));

    std::map<std::string, bool> wanted;
    {
        std::istringstream in(args.metrics);
        std::string item;
        while (std::getline(in, item, ',')) {
            if (item != "disc" && item != "pred" && item != "corr" && item != "fid")
                throw ConfigError("unknown metric: " + item);
            wanted[item] = true;
        }
        if (wanted.empty()) throw ConfigError("--metrics selected nothing");
    }
    std::shared_ptr<CompletionModel> encoder;
    if (wanted.count("fid")) {
        if (args.encoder.empty())
            throw ConfigError("fid needs --encoder <completion checkpoint>");
        Checkpoint ckpt = load_checkpoint(args.encoder);
        if (ckpt.tensors.empty())
            throw ConfigError("checkpoint " + args.encoder +
                              " records a non-learned imputer; fid needs the trained encoder");
        RunConfig enc_cfg = RunConfig::from_kv(KvConfig::parse_text(ckpt.config_echo));
        encoder = std::make_shared<CompletionModel>(real[0].d, real[0].t_len, enc_cfg.tst, 0);
        load_into_params(ckpt, encoder->params());
    }

    std::ostringstream out;
    out << "# feature-FID (TST encoder); seeds base " << args.seed << "\n";
    out << "metric,seed,value\n";
    std::map<std::string, std::vector<double>> by_metric;
    for (int k = 0; k < args.seeds; ++k) {
        const std::uint64_t seed = derive_seed(args.seed, k);
        if (wanted.count("disc")) {
            const double v = discriminative_score(real, synth, seed);
            by_metric["disc"].push_back(v);
            out << "disc," << k << "," << format_full(v) << "\n";
        }
        if (wanted.count("pred")) {
            const double v = predictive_score(real, synth, seed);
            by_metric["pred"].push_back(v);
            out << "pred," << k << "," << format_full(v) << "\n";
        }
        if (wanted.count("corr")) {
            const double v = correlation_score(real, synth);
            by_metric["corr"].push_back(v);
            out << "corr," << k << "," << format_full(v) << "\n";
        }
        if (wanted.count("fid")) {
            const double v =
                fid_score(encoder->encode_features(real), encoder->encode_features(synth));
            by_metric["fid"].push_back(v);
            out << "fid," << k << "," << format_full(v) << "\n";
        }
    }
    for (const auto& [name, values] : by_metric) {
        double mean = 0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0;
        for (double v : values) var += (v - mean) * (v - mean);
        const double sd = values.size() > 1 ? std::sqrt(var / (values.size() - 1)) : 0.0;
        out << name << ",mean," << format_full(mean) << "\n";
        out << name << ",std," << format_full(sd) << "\n";
    }
    write_text_file(args.out, out.str());
    std::cout << "evaluation written to " << args.out << "\n";
}

// ---- toy -------------------------------------------------------------------------

struct ToyArgs {
    std::string out;
    int seeds = 5;
    std::uint64_t seed = 0;
    int num = 1000;
    int train_steps = 1500;
    bool overwrite = false;
};

void run_toy(const ToyArgs& args) {
    if (args.seeds < 1) throw ConfigError("--seeds must be >= 1");
    claim_out_dir(args.out, args.overwrite);
    KvConfig resolved;
    resolved.set("toy.seeds", std::to_string(args.seeds));
    resolved.set("toy.num", std::to_string(args.num));
    resolved.set("toy.train_steps", std::to_string(args.train_steps));
    resolved.set("train.seed", std::to_string(args.seed));
    write_text_file(args.out + "/invocation.cfg", resolved.serialize());

    ToyStudyConfig cfg;
    cfg.num_train = args.num;
    cfg.train_steps = args.train_steps;
    ToyReport report = run_toy_study(args.seeds, cfg, args.seed);
    write_toy_report(report, args.out);
    std::cout << "central-pixel loss medians: full=" << report.median_loss[0]
              << " masked=" << report.median_loss[1]
              << " completed+masked=" << report.median_loss[2] << "\n";
}

// ---- report ----------------------------------------------------------------------

struct ReportArgs {
    std::string runs, out;
    bool overwrite = false;
};

void run_report(const ReportArgs& args) {
    claim_out_dir(args.out, args.overwrite);
    std::vector<std::string> dirs;
    {
        std::istringstream in(args.runs);
        std::string item;
        while (std::getline(in, item, ',')) dirs.push_back(item);
    }
    if (dirs.empty()) throw ConfigError("--runs needs at least one run directory");

    // Collect metric -> value per run. Two layouts are understood: training
    // metrics (epoch,stage,loss; keep each stage's final loss) and
    // evaluation files (metric,seed,value; keep the means).
    std::vector<std::string> labels;
    std::vector<std::map<std::string, double>> rows;
    std::vector<std::string> metric_order;
    auto note_metric = [&](const std::string& m) {
        for (const auto& existing : metric_order)
            if (existing == m) return;
        metric_order.push_back(m);
    };
    for (const auto& dir : dirs) {
        const std::string path = dir + "/metrics.csv";
        if (!fs::exists(path)) throw InputError("no metrics.csv under " + dir);
        std::map<std::string, double> row;
        std::ifstream in(path);
        std::string line;
        std::getline(in, line);
        while (line.rfind("#", 0) == 0) std::getline(in, line);
        const bool train_layout = line == "epoch,stage,loss";
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream cells(line);
            std::string a, b, c;
            std::getline(cells, a, ',');
            std::getline(cells, b, ',');
            std::getline(cells, c, ',');
            if (train_layout) {
                row[b + "_loss"] = std::strtod(c.c_str(), nullptr);  // last row wins
                note_metric(b + "_loss");
            } else if (b == "mean") {
                row[a] = std::strtod(c.c_str(), nullptr);
                note_metric(a);
            }
        }
        labels.push_back(fs::path(dir).filename().string());
        rows.push_back(std::move(row));
    }

    std::ostringstream csv;
    csv << "run";
    for (const auto& m : metric_order) csv << "," << m;
    csv << "\n";
    std::vector<std::vector<double>> chart(labels.size(),
                                           std::vector<double>(metric_order.size(), 0.0));
    for (std::size_t r = 0; r < labels.size(); ++r) {
        csv << labels[r];
        for (std::size_t m = 0; m < metric_order.size(); ++m) {
            csv << ",";
            auto it = rows[r].find(metric_order[m]);
            if (it != rows[r].end()) {
                csv << format_full(it->second);
                chart[r][m] = it->second;
            }
        }
        csv << "\n";
    }
    write_text_file(args.out + "/comparison.csv", csv.str());
    write_text_file(args.out + "/comparison.svg",
                    svg_bar_chart(labels, metric_order, chart, "run comparison"));
    std::cout << "comparison over " << labels.size() << " runs written to " << args.out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"irregular-to-regular time series generation toolkit"};
    app.require_subcommand(1);

    GenDataArgs gen_args;
    auto* gen = app.add_subcommand("gen-data", "synthesize sinusoidal series as CSV windows");
    gen->add_option("--out", gen_args.out, "output directory")->required();
    gen->add_option("--num", gen_args.num, "number of series");
    gen->add_option("--d", gen_args.d, "features per series");
    gen->add_option("--T", gen_args.seq_len, "series length");
    gen->add_option("--seed", gen_args.seed, "random seed");
    gen->add_flag("--overwrite", gen_args.overwrite, "allow writing into a non-empty directory");

    SimulateArgs sim_args;
    auto* sim = app.add_subcommand("simulate", "drop values (and optionally add noise)");
    sim->add_option("--in", sim_args.in, "directory of regular CSV series")->required();
    sim->add_option("--out", sim_args.out, "output directory")->required();
    sim->add_option("--missing-rate", sim_args.rate, "fraction to drop, in (0,1)");
    sim->add_option("--missing-mode", sim_args.mode, "random | block");
    sim->add_option("--block-min", sim_args.block_min, "min block length (block mode)");
    sim->add_option("--block-max", sim_args.block_max, "max block length (block mode)");
    sim->add_option("--noise-sigma", sim_args.sigma, "additive noise std");
    sim->add_option("--seed", sim_args.seed, "random seed");
    sim->add_flag("--overwrite", sim_args.overwrite, "allow writing into a non-empty directory");

    auto add_train_flags = [](CLI::App* cmd, TrainArgs& args) {
        cmd->add_option("--config", args.config, "run configuration file")->required();
        cmd->add_option("--out", args.out, "run directory")->required();
        cmd->add_option("--seed", args.overrides.seed, "override train.seed");
        cmd->add_option("--missing-rate", args.overrides.missing_rate, "override missing.rate");
        cmd->add_option("--missing-mode", args.overrides.missing_mode, "override missing.mode");
        cmd->add_option("--noise-sigma", args.overrides.noise_sigma, "override noise.sigma");
        cmd->add_flag("--overwrite", args.overwrite, "allow writing into a non-empty directory");
    };

    TrainArgs train_ae_args;
    auto* train_ae_cmd =
        app.add_subcommand("train-ae", "train only the completion autoencoder");
    add_train_flags(train_ae_cmd, train_ae_args);
    train_ae_cmd->add_option("--imputer", train_ae_args.overrides.imputer,
                             "zero|gaussian_noise|linear|polynomial|stochastic|tst");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "run the full two-step training pipeline");
    add_train_flags(train_cmd, train_args);

    SampleArgs sample_args;
    auto* sample_cmd = app.add_subcommand("sample", "generate series from a finished run");
    sample_cmd->add_option("--run", sample_args.run, "run directory")->required();
    sample_cmd->add_option("--n", sample_args.num, "number of samples")->required();
    sample_cmd->add_option("--seed", sample_args.seed, "random seed");
    sample_cmd->add_option("--out", sample_args.out, "output directory (default <run>/samples)");
    sample_cmd->add_flag("--overwrite", sample_args.overwrite,
                         "allow writing into a non-empty directory");

    EvaluateArgs eval_args;
    auto* eval_cmd = app.add_subcommand("evaluate", "score synthetic windows against real ones");
    eval_cmd->add_option("--real", eval_args.real_dir, "directory of real windows")->required();
    eval_cmd->add_option("--synth", eval_args.synth_dir, "directory of synthetic windows")
        ->required();
    eval_cmd->add_option("--metrics", eval_args.metrics, "comma list: disc,pred,corr,fid");
    eval_cmd->add_option("--seeds", eval_args.seeds, "number of metric seeds");
    eval_cmd->add_option("--seed", eval_args.seed, "base seed");
    eval_cmd->add_option("--encoder", eval_args.encoder, "completion checkpoint for fid");
    eval_cmd->add_option("--out", eval_args.out, "output CSV file")->required();

    ToyArgs toy_args;
    auto* toy_cmd = app.add_subcommand("toy", "planar neighborhood study");
    toy_cmd->add_option("--seeds", toy_args.seeds, "number of study seeds");
    toy_cmd->add_option("--out", toy_args.out, "output directory")->required();
    toy_cmd->add_option("--seed", toy_args.seed, "base seed");
    toy_cmd->add_option("--num", toy_args.num, "training points per seed");
    toy_cmd->add_option("--train-steps", toy_args.train_steps, "training steps per setup");
    toy_cmd->add_flag("--overwrite", toy_args.overwrite,
                      "allow writing into a non-empty directory");

    ReportArgs report_args;
    auto* report_cmd = app.add_subcommand("report", "aggregate run metrics into one table");
    report_cmd->add_option("--runs", report_args.runs, "comma list of run directories")
        ->required();
    report_cmd->add_option("--out", report_args.out, "output directory")->required();
    report_cmd->add_flag("--overwrite", report_args.overwrite,
                         "allow writing into a non-empty directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) run_gen_data(gen_args);
        else if (sim->parsed()) run_simulate(sim_args);
        else if (train_ae_cmd->parsed()) run_train_ae(train_ae_args);
        else if (train_cmd->parsed()) run_train(train_args);
        else if (sample_cmd->parsed()) run_sample(sample_args);
        else if (eval_cmd->parsed()) run_evaluate(eval_args);
        else if (toy_cmd->parsed()) run_toy(toy_args);
        else if (report_cmd->parsed()) run_report(report_args);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: invalid-config: " << e.what() << "\n";
        return 3;
    } catch (const InputError& e) {
        std::cerr << "error: missing-input: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
}
