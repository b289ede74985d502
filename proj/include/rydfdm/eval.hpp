#pragma once

// Evaluation suite for the two decoders: exact-match accuracy, confusion
// matrices over the active-bit class space, train/test noise-robustness
// grids, the network-versus-fit noise sweep, and inference benchmarks.
//
// Conventions shared by every routine here:
//   - A prediction counts as correct only when the whole message frame
//     matches (exact string match, the strictest reading of accuracy).
//   - Noise repeats re-noise the same clean test set with fresh draws and
//     report mean accuracy with the standard error over repeats.
//   - Everything is deterministic given the dataset seed: clean test sets
//     derive their seed from the training seed by a fixed offset, and each
//     (sigma, repeat) pair owns a derived RNG stream.
//
// Confusion matrices live in the 2^(varied bits) class space.  Frames that
// set a bit outside the varied range have no class index and are rejected;
// callers that can produce such frames (the fit decoder under heavy
// mismatch) should use exact-match accuracy, which handles them naturally,
// and guard the confusion call.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rydfdm/dataset.hpp"
#include "rydfdm/fit.hpp"
#include "rydfdm/nn/train.hpp"

namespace rydfdm {

// ---------------------------------------------------------------------------
// Accuracy and confusion.

/// Fraction of predictions whose every bit matches the truth frame.
inline double exact_match_accuracy(const std::vector<Frame>& preds,
                                   const std::vector<Frame>& truths) {
    if (preds.size() != truths.size())
        throw std::invalid_argument(
            "exact_match_accuracy: prediction/truth count mismatch");
    if (preds.empty())
        throw std::invalid_argument("exact_match_accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == truths[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

struct ConfusionMatrix {
    std::vector<std::vector<long long>> counts;  // [truth class][predicted]

    std::size_t class_count() const { return counts.size(); }

    long long total() const {
        long long t = 0;
        for (const auto& row : counts)
            for (long long c : row) t += c;
        return t;
    }

    std::vector<long long> row_sums() const {
        std::vector<long long> sums;
        for (const auto& row : counts) {
            long long s = 0;
            for (long long c : row) s += c;
            sums.push_back(s);
        }
        return sums;
    }

    /// Diagonal mass over total; identical to exact-match accuracy when
    /// every frame maps into the class space.
    double accuracy() const {
        const long long t = total();
        if (t == 0) throw std::logic_error("ConfusionMatrix: empty matrix");
        long long diag = 0;
        for (std::size_t k = 0; k < counts.size(); ++k) diag += counts[k][k];
        return static_cast<double>(diag) / static_cast<double>(t);
    }
};

/// Counts[i][j] = number of test frames of true class i decoded as class j.
/// Both frames of every pair must map into the spec's class space.
inline ConfusionMatrix confusion(const std::vector<Frame>& preds,
                                 const std::vector<Frame>& truths,
                                 const DatasetSpec& spec) {
    if (preds.size() != truths.size())
        throw std::invalid_argument("confusion: prediction/truth count mismatch");
    if (preds.empty()) throw std::invalid_argument("confusion: empty input");
    const std::size_t k = spec.n_classes();
    ConfusionMatrix m;
    m.counts.assign(k, std::vector<long long>(k, 0));
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const std::size_t t = class_of_frame(spec, truths[i]);
        const std::size_t p = class_of_frame(spec, preds[i]);
        ++m.counts[t][p];
    }
    return m;
}

// ---------------------------------------------------------------------------
// Dataset bridging.

/// Message-bit truth frame for every record (reference bin dropped).
inline std::vector<Frame> truth_frames(const Dataset& ds) {
    std::vector<Frame> out;
    out.reserve(ds.records.size());
    for (const Spectrum& s : ds.records) {
        if (!s.label)
            throw std::invalid_argument("truth_frames: record has no label");
        Frame f;
        f.bits.assign(s.label->bits.begin(), s.label->bits.end() - 1);
        out.push_back(std::move(f));
    }
    return out;
}

/// Rows = records (already min-max scaled by the pipeline), labels = the
/// full bin bit pattern including the reference bin, as the network learns
/// to emit it.
inline nn::LabeledData to_labeled_data(const Dataset& ds) {
    if (ds.records.empty())
        throw std::invalid_argument("to_labeled_data: empty dataset");
    const std::size_t n = ds.records.size();
    const std::size_t len = ds.records[0].samples.size();
    const std::size_t bins = ds.spec.codec.n_bins;
    nn::LabeledData data;
    data.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(len));
    data.y.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(bins));
    for (std::size_t r = 0; r < n; ++r) {
        const Spectrum& s = ds.records[r];
        if (s.samples.size() != len)
            throw std::invalid_argument("to_labeled_data: ragged sample lengths");
        if (!s.label || s.label->bits.size() != bins)
            throw std::invalid_argument("to_labeled_data: bad record label");
        for (std::size_t i = 0; i < len; ++i)
            data.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) =
                s.samples[i];
        for (std::size_t j = 0; j < bins; ++j)
            data.y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
                static_cast<double>(s.label->bits[j]);
    }
    return data;
}

/// Fresh-noise copy of a clean set: each record runs the noise -> rescale ->
/// quantize tail of the generation pipeline with its own derived stream.
/// sigma = 0 returns the records unchanged (they are already quantized).
inline Dataset renoise(const Dataset& clean, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("renoise: sigma must be >= 0");
    Dataset out = clean;
    const Rng root(seed);
    for (std::size_t r = 0; r < out.records.size(); ++r)
        out.records[r].samples =
            detail::finish_record(clean.records[r].samples, sigma, root.child(r));
    return out;
}

namespace detail {

/// Deterministic seed for a (sigma index, repeat) evaluation stream, kept
/// clear of the seeds the generation pipeline consumes.
inline std::uint64_t eval_stream_seed(std::uint64_t base, std::size_t sigma_idx,
                                      int repeat) {
    std::uint64_t h = base ^ 0x9e3779b97f4a7c15ull;
    h = h * 0x100000001b3ull + static_cast<std::uint64_t>(sigma_idx) * 2654435761ull;
    h = h * 0x100000001b3ull + static_cast<std::uint64_t>(repeat) + 1;
    return h;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Standard error of the mean (sample standard deviation over sqrt(n));
/// zero for a single repeat.
inline double stderr_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) /
                     static_cast<double>(v.size()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Shared orchestration.

struct EvalConfig {
    int repeats = 5;                         // fresh-noise prediction repeats
    std::size_t test_samples_per_class = 10; // clean test pool size
    double val_fraction = 0.25;              // held out of the training pool
    unsigned jobs = 1;

    void validate() const {
        if (repeats < 1)
            throw std::invalid_argument("EvalConfig: repeats must be >= 1");
        if (test_samples_per_class < 1)
            throw std::invalid_argument(
                "EvalConfig: test_samples_per_class must be >= 1");
        if (!(val_fraction > 0.0 && val_fraction < 1.0))
            throw std::invalid_argument(
                "EvalConfig: val_fraction must be in (0,1)");
    }
};

/// Offset between a training-pool seed and the derived clean-test-pool seed,
/// so the two sets never share noise streams.
inline constexpr std::uint64_t kTestSeedOffset = 1000003;

struct TrainedDecoder {
    nn::NetworkState state;
    std::vector<nn::EpochStats> curve;
    double val_mse = 0.0;  // final-epoch validation loss
};

/// Generate the training pool from `spec`, hold out a validation share, and
/// fit the network.  Fully deterministic given spec.seed and cfg.seed.
inline TrainedDecoder train_decoder(const DatasetSpec& spec,
                                    const nn::TrainConfig& cfg,
                                    double val_fraction = 0.25,
                                    unsigned jobs = 1) {
    const Dataset pool = generate_dataset(spec, jobs);
    SplitPlan plan;
    plan.test_fraction = val_fraction;  // the "test" share serves as validation
    plan.fold_count = 2;
    const SplitAssignment split =
        split_indices(pool.records.size(), plan, spec.seed);

    const nn::LabeledData all = to_labeled_data(pool);
    std::vector<std::size_t> train_idx;
    for (const auto& fold : split.folds)
        train_idx.insert(train_idx.end(), fold.begin(), fold.end());

    auto take = [&](const std::vector<std::size_t>& idx) {
        nn::LabeledData part;
        part.x.resize(static_cast<Eigen::Index>(idx.size()), all.x.cols());
        part.y.resize(static_cast<Eigen::Index>(idx.size()), all.y.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            part.x.row(static_cast<Eigen::Index>(i)) =
                all.x.row(static_cast<Eigen::Index>(idx[i]));
            part.y.row(static_cast<Eigen::Index>(i)) =
                all.y.row(static_cast<Eigen::Index>(idx[i]));
        }
        return part;
    };

    nn::NetConfig net;
    net.input_len = static_cast<Eigen::Index>(spec.n);
    net.n_bins = static_cast<Eigen::Index>(spec.codec.n_bins);

    nn::TrainResult r =
        fit_model(take(train_idx), take(split.test), net, cfg);
    TrainedDecoder out;
    out.state = std::move(r.state);
    out.curve = std::move(r.curve);
    out.val_mse = out.curve.empty() ? 0.0 : out.curve.back().val_mse;
    return out;
}

/// Batch network predictions for a whole dataset (records are pre-scaled).
inline std::vector<Frame> predict_dataset(const nn::NetworkState& state,
                                          const Dataset& ds) {
    return nn::predict_bits_batch(state, to_labeled_data(ds).x);
}

// ---------------------------------------------------------------------------
// Train/test noise grid.

struct NoiseGrid {
    std::vector<double> train_sigmas;
    std::vector<double> test_sigmas;
    std::vector<std::vector<double>> accuracy;   // [train][test] repeat means
    std::vector<std::vector<double>> std_error;  // same shape
};

/// For every training noise level: train a decoder on a pool noised at that
/// level, then score it against the clean test pool re-noised at every test
/// level, averaging fresh-noise repeats.
inline NoiseGrid noise_grid(const std::vector<double>& train_sigmas,
                            const std::vector<double>& test_sigmas,
                            const DatasetSpec& base_spec,
                            const nn::TrainConfig& train_cfg,
                            const EvalConfig& eval_cfg = {}) {
    if (train_sigmas.empty() || test_sigmas.empty())
        throw std::invalid_argument("noise_grid: empty sigma axis");
    eval_cfg.validate();

    DatasetSpec test_spec = base_spec;
    test_spec.noise_sigma = 0.0;
    test_spec.n_samples_per_class = eval_cfg.test_samples_per_class;
    test_spec.seed = base_spec.seed + kTestSeedOffset;
    const Dataset clean = generate_dataset(test_spec, eval_cfg.jobs);
    const std::vector<Frame> truths = truth_frames(clean);

    NoiseGrid grid;
    grid.train_sigmas = train_sigmas;
    grid.test_sigmas = test_sigmas;
    for (std::size_t ti = 0; ti < train_sigmas.size(); ++ti) {
        DatasetSpec train_spec = base_spec;
        train_spec.noise_sigma = train_sigmas[ti];
        const TrainedDecoder dec = train_decoder(
            train_spec, train_cfg, eval_cfg.val_fraction, eval_cfg.jobs);

        std::vector<double> acc_row, err_row;
        for (std::size_t si = 0; si < test_sigmas.size(); ++si) {
            std::vector<double> accs;
            for (int rep = 0; rep < eval_cfg.repeats; ++rep) {
                const Dataset noisy = renoise(
                    clean, test_sigmas[si],
                    detail::eval_stream_seed(test_spec.seed,
                                             ti * test_sigmas.size() + si, rep));
                accs.push_back(exact_match_accuracy(
                    predict_dataset(dec.state, noisy), truths));
            }
            acc_row.push_back(detail::mean_of(accs));
            err_row.push_back(detail::stderr_of(accs));
        }
        grid.accuracy.push_back(std::move(acc_row));
        grid.std_error.push_back(std::move(err_row));
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Network versus fit across test noise.

struct DlVsFitPoint {
    double sigma = 0.0;
    double acc_dl = 0.0;
    double acc_fit = 0.0;
    double stderr_dl = 0.0;
    double stderr_fit = 0.0;
};

struct DlVsFitCurve {
    std::vector<DlVsFitPoint> points;
};

/// Train once at zero noise, then score both decoders on identical
/// fresh-noise test sets across the sigma axis.
inline DlVsFitCurve dl_vs_fit_curve(const std::vector<double>& sigmas,
                                    const DatasetSpec& base_spec,
                                    const nn::TrainConfig& train_cfg,
                                    const FitConfig& fit_cfg = {},
                                    const EvalConfig& eval_cfg = {}) {
    if (sigmas.empty())
        throw std::invalid_argument("dl_vs_fit_curve: empty sigma axis");
    eval_cfg.validate();

    DatasetSpec train_spec = base_spec;
    train_spec.noise_sigma = 0.0;
    const TrainedDecoder dec = train_decoder(train_spec, train_cfg,
                                             eval_cfg.val_fraction,
                                             eval_cfg.jobs);

    DatasetSpec test_spec = base_spec;
    test_spec.noise_sigma = 0.0;
    test_spec.n_samples_per_class = eval_cfg.test_samples_per_class;
    test_spec.seed = base_spec.seed + kTestSeedOffset;
    const Dataset clean = generate_dataset(test_spec, eval_cfg.jobs);
    const std::vector<Frame> truths = truth_frames(clean);

    const PhaseFitter fitter(base_spec.codec, base_spec.atom, base_spec.model,
                             base_spec.n, base_spec.dt);

    DlVsFitCurve curve;
    for (std::size_t si = 0; si < sigmas.size(); ++si) {
        std::vector<double> dl_accs, fit_accs;
        for (int rep = 0; rep < eval_cfg.repeats; ++rep) {
            const Dataset noisy = renoise(
                clean, sigmas[si],
                detail::eval_stream_seed(test_spec.seed, si, rep));
            dl_accs.push_back(exact_match_accuracy(
                predict_dataset(dec.state, noisy), truths));

            std::vector<Frame> fit_preds(noisy.records.size());
            parallel_for(noisy.records.size(), eval_cfg.jobs,
                         [&](std::size_t i) {
                             fit_preds[i] =
                                 fitter.classify(noisy.records[i], fit_cfg);
                         });
            fit_accs.push_back(exact_match_accuracy(fit_preds, truths));
        }
        DlVsFitPoint p;
        p.sigma = sigmas[si];
        p.acc_dl = detail::mean_of(dl_accs);
        p.acc_fit = detail::mean_of(fit_accs);
        p.stderr_dl = detail::stderr_of(dl_accs);
        p.stderr_fit = detail::stderr_of(fit_accs);
        curve.points.push_back(p);
    }
    return curve;
}

// ---------------------------------------------------------------------------
// Inference benchmark.

struct BenchReport {
    double dl_median_ms = 0.0;   // per spectrum, single-spectrum decode path
    double fit_median_ms = 0.0;  // per spectrum, all-zero-init fit
    double ratio = 0.0;          // fit over network
    std::vector<std::size_t> batch_counts;  // repeated-batch scaling probe
    std::vector<double> batch_total_ms;     // total time per batch count
    std::string machine;
};

/// Best-effort host description for benchmark provenance.
inline std::string machine_descriptor() {
    std::string cpu = "unknown cpu";
    std::ifstream info("/proc/cpuinfo");
    std::string line;
    while (std::getline(info, line)) {
        const auto pos = line.find("model name");
        if (pos != std::string::npos) {
            const auto colon = line.find(':');
            if (colon != std::string::npos && colon + 2 <= line.size()) {
                cpu = line.substr(colon + 1);
                while (!cpu.empty() && cpu.front() == ' ') cpu.erase(cpu.begin());
            }
            break;
        }
    }
    return cpu + ", " + std::to_string(std::thread::hardware_concurrency()) +
           " hardware threads, compiler " + __VERSION__;
}

namespace detail {

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Median per-spectrum wall-clock of the network decoder versus the fit
/// decoder over the same spectra, with warmup rounds excluded, plus a
/// repeated-batch scaling probe for the network path.
inline BenchReport bench_inference(const nn::NetworkState& state,
                                   const PhaseFitter& fitter,
                                   const std::vector<Spectrum>& spectra,
                                   const FitConfig& fit_cfg = {},
                                   int warmup = 2) {
    if (spectra.size() < 20)
        throw std::invalid_argument("bench_inference: need at least 20 spectra");
    if (warmup < 0)
        throw std::invalid_argument("bench_inference: warmup must be >= 0");
    using Clock = std::chrono::steady_clock;
    auto ms_between = [](Clock::time_point a, Clock::time_point b) {
        return std::chrono::duration<double, std::milli>(b - a).count();
    };

    for (int w = 0; w < warmup; ++w) {
        (void)nn::predict_bits(state, spectra[static_cast<std::size_t>(w) %
                                              spectra.size()]);
    }
    std::vector<double> dl_times;
    for (const Spectrum& s : spectra) {
        const auto t0 = Clock::now();
        (void)nn::predict_bits(state, s);
        dl_times.push_back(ms_between(t0, Clock::now()));
    }

    for (int w = 0; w < warmup; ++w)
        (void)fitter.classify(spectra[static_cast<std::size_t>(w) %
                                      spectra.size()],
                              fit_cfg);
    std::vector<double> fit_times;
    for (const Spectrum& s : spectra) {
        const auto t0 = Clock::now();
        (void)fitter.classify(s, fit_cfg);
        fit_times.push_back(ms_between(t0, Clock::now()));
    }

    BenchReport rep;
    rep.dl_median_ms = detail::median_of(dl_times);
    rep.fit_median_ms = detail::median_of(fit_times);
    rep.ratio = rep.fit_median_ms / rep.dl_median_ms;
    rep.machine = machine_descriptor();

    // Scaling probe: decode the same fixed batch 1x, 2x, 4x; total time
    // should grow about linearly with the batch count.
    const std::size_t batch = std::min<std::size_t>(8, spectra.size());
    nn::Matrix x(static_cast<Eigen::Index>(batch),
                 static_cast<Eigen::Index>(spectra[0].samples.size()));
    for (std::size_t r = 0; r < batch; ++r) {
        const std::vector<double> scaled =
            nn::minmax_scale(spectra[r].samples);
        for (std::size_t i = 0; i < scaled.size(); ++i)
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) =
                scaled[i];
    }
    (void)nn::predict_bits_batch(state, x);  // batch-path warmup
    for (std::size_t count : {1u, 2u, 4u}) {
        const auto t0 = Clock::now();
        for (std::size_t c = 0; c < count; ++c)
            (void)nn::predict_bits_batch(state, x);
        rep.batch_counts.push_back(count);
        rep.batch_total_ms.push_back(ms_between(t0, Clock::now()));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Report writers.

// Every writer takes an optional run id; when non-empty it becomes a leading
// `# run <id>` comment line so the file traces back to the producing run.

inline void write_noise_grid_csv(const std::string& path, const NoiseGrid& g,
                                 const std::string& run_id = "") {
    std::string out;
    if (!run_id.empty()) out += "# run " + run_id + "\n";
    out += "train_sigma,test_sigma,accuracy,stderr\n";
    for (std::size_t ti = 0; ti < g.train_sigmas.size(); ++ti)
        for (std::size_t si = 0; si < g.test_sigmas.size(); ++si) {
            out += fmt_g(g.train_sigmas[ti]);
            out += ',';
            out += fmt_g(g.test_sigmas[si]);
            out += ',';
            out += fmt_g(g.accuracy[ti][si]);
            out += ',';
            out += fmt_g(g.std_error[ti][si]);
            out += '\n';
        }
    write_file(path, out);
}

/// The pinned four-column format; the stderr column is the network's (the
/// JSON summary carries both decoders' standard errors).
inline void write_dl_vs_fit_csv(const std::string& path,
                                const DlVsFitCurve& c,
                                const std::string& run_id = "") {
    std::string out;
    if (!run_id.empty()) out += "# run " + run_id + "\n";
    out += "sigma,acc_dl,acc_fit,stderr\n";
    for (const DlVsFitPoint& p : c.points) {
        out += fmt_g(p.sigma);
        out += ',';
        out += fmt_g(p.acc_dl);
        out += ',';
        out += fmt_g(p.acc_fit);
        out += ',';
        out += fmt_g(p.stderr_dl);
        out += '\n';
    }
    write_file(path, out);
}

inline void write_confusion_csv(const std::string& path,
                                const ConfusionMatrix& m,
                                const std::string& run_id = "") {
    std::string out;
    if (!run_id.empty()) out += "# run " + run_id + "\n";
    out += "truth\\pred";
    for (std::size_t j = 0; j < m.class_count(); ++j)
        out += "," + std::to_string(j);
    out += '\n';
    for (std::size_t i = 0; i < m.class_count(); ++i) {
        out += std::to_string(i);
        for (std::size_t j = 0; j < m.class_count(); ++j)
            out += "," + std::to_string(m.counts[i][j]);
        out += '\n';
    }
    write_file(path, out);
}

inline nlohmann::json to_json(const ConfusionMatrix& m) {
    return {{"classes", m.class_count()},
            {"counts", m.counts},
            {"accuracy", m.accuracy()}};
}

inline nlohmann::json to_json(const NoiseGrid& g) {
    return {{"train_sigmas", g.train_sigmas},
            {"test_sigmas", g.test_sigmas},
            {"accuracy", g.accuracy},
            {"stderr", g.std_error}};
}

inline nlohmann::json to_json(const DlVsFitCurve& c) {
    nlohmann::json rows = nlohmann::json::array();
    for (const DlVsFitPoint& p : c.points)
        rows.push_back({{"sigma", p.sigma},
                        {"acc_dl", p.acc_dl},
                        {"acc_fit", p.acc_fit},
                        {"stderr_dl", p.stderr_dl},
                        {"stderr_fit", p.stderr_fit}});
    return rows;
}

inline nlohmann::json to_json(const BenchReport& r) {
    return {{"dl_median_ms", r.dl_median_ms},
            {"fit_median_ms", r.fit_median_ms},
            {"ratio", r.ratio},
            {"batch_counts", r.batch_counts},
            {"batch_total_ms", r.batch_total_ms},
            {"machine", r.machine}};
}

}  // namespace rydfdm
