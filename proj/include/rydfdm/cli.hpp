#pragma once

// Command-line front end.
//
// Eight subcommands cover the pipeline end to end:
//
//   sim           one bit pattern -> transmission trace CSV
//   gen-data      labelled spectrum corpus -> .ryds file
//   train         .ryds corpus -> trained checkpoint (.rydc) + loss curve
//   eval          checkpoint vs. corpus -> accuracy report + confusion CSV
//   fit-baseline  corpus -> per-spectrum curve-fit decode CSV + summary
//   sweep-noise   train/test noise grid -> long-format CSV + summary
//   bench         per-spectrum latency, network vs. fit -> JSON
//   experiment    named profile, generate -> train -> test -> report
//
// Every knob is a flat config key.  Values resolve as flags > config file >
// profile > built-in defaults, and the fully resolved snapshot lands in a
// manifest next to the primary artifact.  Re-running a command from its
// manifest (--manifest path) replays the snapshot and reproduces the
// artifacts byte for byte; a single --seed drives every stochastic stage.
//
// Exit codes: 0 success, 1 usage error (bad flags, unknown subcommand),
// 2 runtime failure (missing files, malformed values); errors go to stderr.
//
// Config files named by bare filename are searched in $RYDFDM_CONFIG_DIR
// (default ./configs) when not found relative to the working directory.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rydfdm/experiment.hpp"

namespace rydfdm::cli {

// ---------------------------------------------------------------------------
// Config-path resolution with the environment-variable fallback.

inline std::string config_search_dir() {
    const char* env = std::getenv("RYDFDM_CONFIG_DIR");
    return env ? env : "configs";
}

inline std::string resolve_config_path(const std::string& name) {
    namespace fs = std::filesystem;
    if (fs::exists(name)) return name;
    if (!fs::path(name).is_absolute()) {
        const fs::path candidate = fs::path(config_search_dir()) / name;
        if (fs::exists(candidate)) return candidate.string();
    }
    return name;  // read_file will report "cannot open file: <name>"
}

// ---------------------------------------------------------------------------
// Per-command state: the layered key-value sources plus the output streams.

struct CommandState {
    std::string config_path;    // --config
    std::string manifest_path;  // --manifest
    Config flag_overrides;      // only keys the user actually passed
    std::ostream* out = nullptr;
    std::ostream* err = nullptr;

    /// flags > file (or manifest snapshot) > caller-supplied defaults.
    Config resolve() const {
        if (!config_path.empty() && !manifest_path.empty())
            throw std::runtime_error("choose one of --config or --manifest, not both");
        Config layered;
        if (!manifest_path.empty())
            layered = load_manifest(manifest_path).config;
        else if (!config_path.empty())
            layered = Config::load(resolve_config_path(config_path));
        layered.merge_from(flag_overrides);
        return layered;
    }
};

namespace detail {

/// Register a flag that stores its raw text under a config key, so the
/// generic key-value precedence applies to flags and files alike.
inline void keyed_flag(CLI::App* cmd, CommandState& st, const std::string& flag,
                       const std::string& key, const std::string& desc) {
    cmd->add_option_function<std::string>(
        flag, [&st, key](const std::string& v) { st.flag_overrides.set(key, v); }, desc);
}

/// Fetch a required key after resolution, failing as a usage error.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string need(const Config& cfg, const std::string& key,
                        const std::string& flag) {
    if (!cfg.has(key)) throw UsageError("missing required " + flag);
    return cfg.get(key);
}

/// Keys that ride along in snapshots beyond the experiment bundle: paths,
/// bit patterns, and the extra sweep axis.
inline const std::vector<std::string>& extra_snapshot_keys() {
    static const std::vector<std::string> keys = {
        "bits", "out", "csv", "data", "model", "out_prefix", "out_dir",
        "loss_csv", "train_sigma_axis"};
    return keys;
}

inline Config snapshot_of(const ExperimentConfig& ecfg, const Config& layered) {
    Config snap = experiment_to_config(ecfg);
    for (const std::string& k : extra_snapshot_keys())
        if (layered.has(k)) snap.set(k, layered.get(k));
    return snap;
}

inline Frame parse_bits(const std::string& text) {
    Frame f;
    for (const char c : text) {
        if (c != '0' && c != '1')
            throw std::runtime_error("bad bit pattern `" + text + "`: use 0s and 1s");
        f.bits.push_back(static_cast<std::uint8_t>(c - '0'));
    }
    if (f.bits.empty()) throw std::runtime_error("bad bit pattern: empty");
    return f;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommand bodies.  Each resolves its config, does the work, then writes
// one manifest listing everything it produced.

inline int cmd_sim(const CommandState& st) {
    const Config layered = st.resolve();
    const ExperimentConfig ecfg = experiment_from_config(layered);
    const std::string out_path = detail::need(layered, "out", "--out");
    const Frame frame = detail::parse_bits(detail::need(layered, "bits", "--bits"));
    if (frame.bits.size() != ecfg.spec.message_bits())
        throw std::runtime_error("bit pattern has " + std::to_string(frame.bits.size()) +
                                 " bits but the codec carries " +
                                 std::to_string(ecfg.spec.message_bits()));

    RunManifest manifest =
        start_manifest("sim", detail::snapshot_of(ecfg, layered), ecfg.spec.seed);

    const MWField field = field_from_frame(frame, ecfg.spec.codec);
    Spectrum s = simulate_spectrum(field, ecfg.spec.atom, ecfg.spec.model,
                                   ecfg.spec.n, ecfg.spec.dt);
    if (ecfg.spec.noise_sigma > 0.0)
        s.samples = rydfdm::detail::finish_record(nn::minmax_scale(s.samples),
                                                  ecfg.spec.noise_sigma,
                                                  Rng(ecfg.spec.seed));
    std::string csv = "t,transmission\n";
    for (std::size_t i = 0; i < s.samples.size(); ++i)
        csv += fmt_g(static_cast<double>(i) * s.dt) + "," + fmt_g(s.samples[i]) + "\n";
    write_file(out_path, csv);
    manifest.outputs.push_back(out_path);
    manifest.finished_at = rydfdm::detail::utc_now();
    save_manifest(manifest, out_path + ".manifest.json");
    *st.out << "wrote " << out_path << " (" << s.samples.size() << " samples, run "
            << manifest.run_id << ")\n";
    return 0;
}

inline int cmd_gen_data(const CommandState& st) {
    const Config layered = st.resolve();
    const ExperimentConfig ecfg = experiment_from_config(layered);
    const std::string out_path = detail::need(layered, "out", "--out");

    RunManifest manifest =
        start_manifest("gen-data", detail::snapshot_of(ecfg, layered), ecfg.spec.seed);
    const Dataset ds = generate_dataset(ecfg.spec, ecfg.jobs);
    save_dataset(ds, out_path);
    manifest.outputs.push_back(out_path);
    if (layered.has("csv")) {
        export_dataset_csv(ds, layered.get("csv"));
        manifest.outputs.push_back(layered.get("csv"));
    }
    manifest.finished_at = rydfdm::detail::utc_now();
    save_manifest(manifest, out_path + ".manifest.json");
    *st.out << "wrote " << out_path << " (" << ds.records.size() << " spectra, "
            << ds.spec.n_classes() << " classes, run " << manifest.run_id << ")\n";
    return 0;
}

inline int cmd_train(const CommandState& st) {
    const Config layered = st.resolve();
    const ExperimentConfig ecfg = experiment_from_config(layered);
    const std::string data_path = detail::need(layered, "data", "--data");
    const std::string out_path = detail::need(layered, "out", "--out");

    RunManifest manifest =
        start_manifest("train", detail::snapshot_of(ecfg, layered), ecfg.train.seed);
    const Dataset ds = load_dataset(data_path);

    SplitPlan plan;
    plan.test_fraction = ecfg.eval.val_fraction;  // holdout share for validation
    plan.fold_count = 2;
    const SplitAssignment split =
        split_indices(ds.records.size(), plan, ecfg.train.seed);
    const nn::LabeledData all = to_labeled_data(ds);
    std::vector<std::size_t> train_idx;
    for (const auto& fold : split.folds)
        train_idx.insert(train_idx.end(), fold.begin(), fold.end());

    nn::NetConfig net;
    net.input_len = static_cast<Eigen::Index>(ds.spec.n);
    net.n_bins = static_cast<Eigen::Index>(ds.spec.codec.n_bins);
    const nn::TrainResult r =
        nn::fit_model(rydfdm::detail::subset(all, train_idx),
                      rydfdm::detail::subset(all, split.test), net, ecfg.train);

    nn::save_checkpoint(r.state, out_path, ecfg.train.seed);
    manifest.outputs.push_back(out_path);
    if (layered.has("loss_csv")) {
        nn::write_loss_csv(layered.get("loss_csv"), r.curve);
        manifest.outputs.push_back(layered.get("loss_csv"));
    }
    manifest.finished_at = rydfdm::detail::utc_now();
    save_manifest(manifest, out_path + ".manifest.json");
    const double final_val = r.curve.empty() ? 0.0 : r.curve.back().val_mse;
    *st.out << "wrote " << out_path << " (" << r.curve.size()
            << " epochs, final val mse " << fmt_g(final_val, 4) << ", run "
            << manifest.run_id << ")\n";
    return 0;
}

inline int cmd_eval(const CommandState& st) {
    const Config layered = st.resolve();
    const ExperimentConfig ecfg = experiment_from_config(layered);
    const std::string data_path = detail::need(layered, "data", "--data");
    const std::string model_path = detail::need(layered, "model", "--model");
    const std::string prefix = detail::need(layered, "out_prefix", "--out-prefix");

    RunManifest manifest =
        start_manifest("eval", detail::snapshot_of(ecfg, layered), ecfg.spec.seed);
    const Dataset ds = load_dataset(data_path);
    const nn::Checkpoint ckpt = nn::load_checkpoint(model_path);

    const std::vector<Frame> truths = truth_frames(ds);
    const std::vector<Frame> preds = predict_dataset(ckpt.state, ds);
    const double accuracy = exact_match_accuracy(preds, truths);
    std::size_t out_of_range = 0;
    const ConfusionMatrix cm = guarded_confusion(preds, truths, ds.spec, out_of_range);
    write_confusion_csv(prefix + "-confusion.csv", cm);

    nlohmann::json report;
    report["run_id"] = manifest.run_id;
    report["records"] = ds.records.size();
    report["accuracy"] = accuracy;
    report["out_of_range_predictions"] = out_of_range;
    report["confusion"] = to_json(cm);
    write_file(prefix + "-report.json", report.dump(2) + "\n");

    manifest.outputs = {prefix + "-confusion.csv", prefix + "-report.json"};
    manifest.finished_at = rydfdm::detail::utc_now();
    save_manifest(manifest, prefix + "-manifest.json");
    *st.out << "accuracy " << fmt_g(accuracy, 6) << " over " << ds.records.size()
            << " spectra (run " << manifest.run_id << ")\n";
    return 0;
}

inline int cmd_fit_baseline(const CommandState& st) {
    const Config layered = st.resolve();
    const ExperimentConfig ecfg = experiment_from_config(layered);
    const std::string data_path = detail::need(layered, "data", "--data");
    const std::string out_path = detail::need(layered, "out", "--out");

    RunManifest manifest = start_manifest(
        "fit-baseline", detail::snapshot_of(ecfg, layered), ecfg.spec.seed);
    const Dataset ds = load_dataset(data_path);
    const PhaseFitter fitter(ds.spec.codec, ds.spec.atom, ds.spec.model, ds.spec.n,
                             ds.spec.dt);
    const std::vector<FitRecord> records =
        fit_records(ds.records, fitter, ecfg.jobs, ecfg.fit);

    write_fit_csv(out_path, records, ds.spec.message_bits());
    std::vector<Frame> preds, truths;
    for (const FitRecord& r : records) {
        preds.push_back(r.result.bits);
        truths.push_back(r.truth);
    }
    const double accuracy = exact_match_accuracy(preds, truths);
    nlohmann::json summary;
    summary["run_id"] = manifest.run_id;
    summary["records"] = records.size();
    summary["accuracy"] = accuracy;
    write_file(out_path + ".summary.json", summary.dump(2) + "\n");

    manifest.outputs = {out_path, out_path + ".summary.json"};
    manifest.finished_at = rydfdm::detail::utc_now();
    save_manifest(manifest, out_path + ".manifest.json");
    *st.out << "fit accuracy " << fmt_g(accuracy, 6) << " over " << records.size()
            << " spectra (run " << manifest.run_id << ")\n";
    return 0;
}

inline int cmd_sweep_noise(const CommandState& st) {
    const Config layered = st.resolve();
    const ExperimentConfig ecfg = experiment_from_config(layered);
    const std::string out_path = detail::need(layered, "out", "--out");
    const std::vector<double> train_axis =
        layered.has("train_sigma_axis")
            ? parse_sigma_list(layered.get("train_sigma_axis"), "train_sigma_axis")
            : std::vector<double>{0.0};

    RunManifest manifest = start_manifest(
        "sweep-noise", detail::snapshot_of(ecfg, layered), ecfg.spec.seed);
    const NoiseGrid grid =
        noise_grid(train_axis, ecfg.sigma_axis, ecfg.spec, ecfg.train, ecfg.eval);
    write_noise_grid_csv(out_path, grid);
    nlohmann::json summary = to_json(grid);
    summary["run_id"] = manifest.run_id;
    write_file(out_path + ".summary.json", summary.dump(2) + "\n");

    manifest.outputs = {out_path, out_path + ".summary.json"};
    manifest.finished_at = rydfdm::detail::utc_now();
    save_manifest(manifest, out_path + ".manifest.json");
    *st.out << "wrote " << out_path << " (" << train_axis.size() << "x"
            << ecfg.sigma_axis.size() << " grid, run " << manifest.run_id << ")\n";
    return 0;
}

inline int cmd_bench(const CommandState& st) {
    const Config layered = st.resolve();
    const ExperimentConfig ecfg = experiment_from_config(layered);
    const std::string data_path = detail::need(layered, "data", "--data");
    const std::string model_path = detail::need(layered, "model", "--model");
    const std::string out_path = detail::need(layered, "out", "--out");

    RunManifest manifest =
        start_manifest("bench", detail::snapshot_of(ecfg, layered), ecfg.spec.seed);
    const Dataset ds = load_dataset(data_path);
    const nn::Checkpoint ckpt = nn::load_checkpoint(model_path);
    const PhaseFitter fitter(ds.spec.codec, ds.spec.atom, ds.spec.model, ds.spec.n,
                             ds.spec.dt);
    const BenchReport report = bench_inference(ckpt.state, fitter, ds.records, ecfg.fit);

    nlohmann::json j = to_json(report);
    j["run_id"] = manifest.run_id;
    write_file(out_path, j.dump(2) + "\n");
    manifest.outputs = {out_path};
    manifest.finished_at = rydfdm::detail::utc_now();
    save_manifest(manifest, out_path + ".manifest.json");
    *st.out << "network median " << fmt_g(report.dl_median_ms, 4) << " ms, fit median "
            << fmt_g(report.fit_median_ms, 4) << " ms, ratio "
            << fmt_g(report.ratio, 4) << " (run " << manifest.run_id << ")\n";
    return 0;
}

inline int cmd_experiment(const CommandState& st) {
    const Config layered = st.resolve();
    const ExperimentConfig ecfg = experiment_from_config(layered);
    const std::string out_dir = detail::need(layered, "out_dir", "--out-dir");
    if (ecfg.profile.empty())
        throw detail::UsageError("missing required --profile (or a manifest naming one)");

    const ExperimentOutcome outcome = run_experiment(ecfg, out_dir);
    *st.out << "profile " << ecfg.profile << " done (run " << outcome.manifest.run_id
            << ")\n";
    if (outcome.report.contains("test_accuracy"))
        *st.out << "test accuracy "
                << fmt_g(outcome.report["test_accuracy"].get<double>(), 6) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// Parser wiring.

inline int run_cli(const std::vector<std::string>& args, std::ostream& out,
                   std::ostream& err) {
    CLI::App app{"Rydberg-vapor FDM receiver: simulate, encode, train, decode",
                 "rydfdm"};
    app.require_subcommand(1);

    // One state per subcommand so flag overrides stay separate.
    std::vector<std::unique_ptr<CommandState>> states;
    auto common = [&](CLI::App* cmd) -> CommandState& {
        states.push_back(std::make_unique<CommandState>());
        CommandState& st = *states.back();
        st.out = &out;
        st.err = &err;
        cmd->add_option("--config", st.config_path,
                        "key = value config file (searched in $RYDFDM_CONFIG_DIR)");
        cmd->add_option("--manifest", st.manifest_path,
                        "replay the resolved snapshot from a previous run's manifest");
        detail::keyed_flag(cmd, st, "--seed", "seed", "seed for every stochastic stage");
        detail::keyed_flag(cmd, st, "--jobs", "jobs", "worker threads");
        return st;
    };
    auto dataset_flags = [&](CLI::App* cmd, CommandState& st) {
        detail::keyed_flag(cmd, st, "--n-bins", "n_bins", "tone count (incl. reference)");
        detail::keyed_flag(cmd, st, "--delta-f", "delta_f", "tone spacing in Hz");
        detail::keyed_flag(cmd, st, "--n-samples", "n_samples", "samples per spectrum");
        detail::keyed_flag(cmd, st, "--dt", "dt", "seconds per sample");
        detail::keyed_flag(cmd, st, "--sigma", "noise_sigma", "white-noise level");
    };
    auto train_flags = [&](CLI::App* cmd, CommandState& st) {
        detail::keyed_flag(cmd, st, "--epochs", "epochs", "training epochs");
        detail::keyed_flag(cmd, st, "--batch-size", "batch_size", "minibatch rows");
        detail::keyed_flag(cmd, st, "--lr", "lr", "initial learning rate");
        detail::keyed_flag(cmd, st, "--augment-sigma", "augment_sigma",
                           "per-presentation training noise");
        detail::keyed_flag(cmd, st, "--val-fraction", "val_fraction",
                           "validation holdout share");
    };
    auto fit_flags = [&](CLI::App* cmd, CommandState& st) {
        detail::keyed_flag(cmd, st, "--max-evaluations", "max_evaluations",
                           "objective-evaluation budget per fit");
        detail::keyed_flag(cmd, st, "--phase-step", "phase_step",
                           "initial simplex edge per phase, radians");
        detail::keyed_flag(cmd, st, "--fit-tolerance", "fit_tolerance",
                           "relative objective-spread stop");
    };

    int rc = 0;
    CLI::App* sim = app.add_subcommand("sim", "simulate one bit pattern to CSV");
    {
        CommandState& st = common(sim);
        detail::keyed_flag(sim, st, "--bits", "bits", "message bits, e.g. 101");
        detail::keyed_flag(sim, st, "--out", "out", "output CSV path");
        dataset_flags(sim, st);
        sim->callback([&rc, &st] { rc = cmd_sim(st); });
    }
    CLI::App* gen = app.add_subcommand("gen-data", "generate a labelled corpus");
    {
        CommandState& st = common(gen);
        detail::keyed_flag(gen, st, "--profile", "profile", "named parameter bundle");
        detail::keyed_flag(gen, st, "--out", "out", "output .ryds path");
        detail::keyed_flag(gen, st, "--csv", "csv", "optional CSV export path");
        detail::keyed_flag(gen, st, "--samples-per-class", "samples_per_class",
                           "spectra per class");
        detail::keyed_flag(gen, st, "--active-bits", "active_bits",
                           "varied message bits (0 = all)");
        dataset_flags(gen, st);
        gen->callback([&rc, &st] { rc = cmd_gen_data(st); });
    }
    CLI::App* train = app.add_subcommand("train", "train a decoder on a corpus");
    {
        CommandState& st = common(train);
        detail::keyed_flag(train, st, "--data", "data", "input .ryds corpus");
        detail::keyed_flag(train, st, "--out", "out", "output checkpoint path");
        detail::keyed_flag(train, st, "--loss-csv", "loss_csv", "per-epoch loss CSV");
        train_flags(train, st);
        train->callback([&rc, &st] { rc = cmd_train(st); });
    }
    CLI::App* ev = app.add_subcommand("eval", "score a checkpoint against a corpus");
    {
        CommandState& st = common(ev);
        detail::keyed_flag(ev, st, "--data", "data", "input .ryds corpus");
        detail::keyed_flag(ev, st, "--model", "model", "checkpoint to score");
        detail::keyed_flag(ev, st, "--out-prefix", "out_prefix",
                           "prefix for report and confusion files");
        ev->callback([&rc, &st] { rc = cmd_eval(st); });
    }
    CLI::App* fitb = app.add_subcommand("fit-baseline",
                                        "decode a corpus by curve fitting");
    {
        CommandState& st = common(fitb);
        detail::keyed_flag(fitb, st, "--data", "data", "input .ryds corpus");
        detail::keyed_flag(fitb, st, "--out", "out", "per-spectrum fit CSV");
        fit_flags(fitb, st);
        fitb->callback([&rc, &st] { rc = cmd_fit_baseline(st); });
    }
    CLI::App* sweep = app.add_subcommand("sweep-noise",
                                         "train/test accuracy over noise levels");
    {
        CommandState& st = common(sweep);
        detail::keyed_flag(sweep, st, "--profile", "profile", "named parameter bundle");
        detail::keyed_flag(sweep, st, "--out", "out", "grid CSV path");
        detail::keyed_flag(sweep, st, "--train-sigmas", "train_sigma_axis",
                           "comma list of training noise levels");
        detail::keyed_flag(sweep, st, "--test-sigmas", "sigma_axis",
                           "comma list of test noise levels");
        detail::keyed_flag(sweep, st, "--repeats", "repeats", "fresh-noise repeats");
        detail::keyed_flag(sweep, st, "--test-samples-per-class",
                           "test_samples_per_class", "clean test pool per class");
        train_flags(sweep, st);
        sweep->callback([&rc, &st] { rc = cmd_sweep_noise(st); });
    }
    CLI::App* bench = app.add_subcommand("bench", "network vs. fit decode latency");
    {
        CommandState& st = common(bench);
        detail::keyed_flag(bench, st, "--data", "data", "input .ryds corpus (>= 20)");
        detail::keyed_flag(bench, st, "--model", "model", "checkpoint to time");
        detail::keyed_flag(bench, st, "--out", "out", "JSON report path");
        fit_flags(bench, st);
        bench->callback([&rc, &st] { rc = cmd_bench(st); });
    }
    CLI::App* exp = app.add_subcommand("experiment",
                                       "run a named profile end to end");
    {
        CommandState& st = common(exp);
        detail::keyed_flag(exp, st, "--profile", "profile",
                           "fig2 | fig3-qr | fig4-noise | fig5-20bin | fig5-200khz");
        detail::keyed_flag(exp, st, "--out-dir", "out_dir", "artifact directory");
        detail::keyed_flag(exp, st, "--samples-per-class", "samples_per_class",
                           "spectra per class");
        detail::keyed_flag(exp, st, "--active-bits", "active_bits",
                           "varied message bits (0 = all)");
        detail::keyed_flag(exp, st, "--test-sigmas", "sigma_axis",
                           "comma list of noise levels (fig4-noise)");
        dataset_flags(exp, st);
        train_flags(exp, st);
        fit_flags(exp, st);
        exp->callback([&rc, &st] { rc = cmd_experiment(st); });
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 1;
    } catch (const detail::UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return rc;
}

}  // namespace rydfdm::cli
