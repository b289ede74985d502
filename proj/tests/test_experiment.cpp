// Orchestration layer: profiles, config snapshots, run manifests, k-fold
// training, and the end-to-end experiment driver.
//
// Profile runs here use shrunken pools (6 per class, 64-sample spectra, two
// epochs) so the full pipeline executes in seconds; the published-scale runs
// live in the acceptance suite.

#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "rydfdm/experiment.hpp"

using namespace rydfdm;

namespace {

ExperimentConfig tiny_fig(const std::string& profile, std::uint64_t seed) {
    ExperimentConfig c = profile_config(profile);
    c.spec.n_samples_per_class = 6;
    c.spec.n = 64;
    c.train.epochs = 2;
    c.train.batch_size = 16;
    c.reseed(seed);
    return c;
}

std::string slurp(const std::string& path) { return read_file(path); }

}  // namespace

// ---------------------------------------------------------------------------
// Profiles.

TEST_CASE("every named profile resolves and validates") {
    for (const std::string& name : profile_names()) {
        const ExperimentConfig c = profile_config(name);
        CHECK(c.profile == name);
        CHECK_NOTHROW(c.spec.validate());
        CHECK_NOTHROW(c.train.validate());
        CHECK_NOTHROW(c.split.validate());
    }
    CHECK_THROWS_WITH(profile_config("fig9"),
                      Catch::Matchers::ContainsSubstring("unknown profile"));
}

TEST_CASE("profile parameter pins match the published operating points") {
    const ExperimentConfig fig2 = profile_config("fig2");
    CHECK(fig2.spec.codec.n_bins == 4);
    CHECK(fig2.spec.codec.delta_f == 2e3);
    CHECK(fig2.spec.n == 1000);
    CHECK(fig2.spec.dt == 1e-6);
    CHECK(fig2.spec.noise_sigma == 0.05);
    CHECK(fig2.spec.n_samples_per_class >= 150);
    CHECK(fig2.split.fold_count == 4);

    const ExperimentConfig f20 = profile_config("fig5-20bin");
    CHECK(f20.spec.codec.n_bins == 20);
    CHECK(f20.spec.active_bits == 3);
    CHECK(f20.spec.n_classes() == 8);

    const ExperimentConfig f200 = profile_config("fig5-200khz");
    CHECK(f200.spec.codec.delta_f == 2e5);
    CHECK(f200.spec.dt == 1e-8);
    CHECK(f200.spec.n == 1000);

    const ExperimentConfig f4 = profile_config("fig4-noise");
    CHECK(f4.spec.noise_sigma == 0.0);
    CHECK(f4.eval.repeats == 5);
    CHECK(f4.sigma_axis == std::vector<double>{0.0, 0.05, 0.1, 0.2, 0.3, 0.5});

    const ExperimentConfig f3 = profile_config("fig3-qr");
    CHECK(f3.payload == std::string(kDefaultPayload));
}

TEST_CASE("default payload frames into 147 three-bit frames plus header") {
    const std::string payload = kDefaultPayload;
    REQUIRE(payload.size() == 55);  // 440 bits -> ceil(440/3) = 147 frames
    const CodecConfig codec = profile_config("fig2").spec.codec;
    const std::vector<Frame> frames =
        payload_to_frames({payload.begin(), payload.end()}, codec);
    CHECK(frames.size() == 6 + 147);
}

// ---------------------------------------------------------------------------
// Flat snapshots.

TEST_CASE("experiment config round-trips through its flat snapshot") {
    ExperimentConfig c = profile_config("fig5-20bin");
    c.reseed(99);
    c.train.epochs = 17;
    c.sigma_axis = {0.1, 0.25};
    const Config snap = experiment_to_config(c);
    const ExperimentConfig back = experiment_from_config(snap);
    CHECK(experiment_to_config(back).to_text() == snap.to_text());
    CHECK(back.spec.codec.n_bins == 20);
    CHECK(back.train.epochs == 17);
    CHECK(back.spec.seed == 99);
    CHECK(back.train.seed == 99);
    CHECK(back.sigma_axis == std::vector<double>{0.1, 0.25});
}

TEST_CASE("explicit keys override profile defaults, one seed drives all stages") {
    Config cfg;
    cfg.set("profile", "fig2");
    cfg.set("epochs", "7");
    cfg.set("seed", "42");
    const ExperimentConfig c = experiment_from_config(cfg);
    CHECK(c.train.epochs == 7);
    CHECK(c.spec.seed == 42);
    CHECK(c.train.seed == 42);
    CHECK(c.spec.noise_sigma == 0.05);  // untouched profile default survives
}

TEST_CASE("sigma list parsing accepts spaces and rejects junk") {
    CHECK(parse_sigma_list("0,0.05, 0.1") == std::vector<double>{0.0, 0.05, 0.1});
    CHECK(parse_sigma_list("0.3") == std::vector<double>{0.3});
    CHECK_THROWS_WITH(parse_sigma_list("0,,1"),
                      Catch::Matchers::ContainsSubstring("empty entry"));
    CHECK_THROWS_WITH(parse_sigma_list("0,abc"),
                      Catch::Matchers::ContainsSubstring("not a number"));
}

// ---------------------------------------------------------------------------
// Manifests.

TEST_CASE("run id is a pure function of command, snapshot, and version") {
    ExperimentConfig a = tiny_fig("fig2", 7);
    const Config snap = experiment_to_config(a);
    CHECK(make_run_id("experiment", snap) == make_run_id("experiment", snap));
    CHECK(make_run_id("experiment", snap) != make_run_id("gen-data", snap));
    ExperimentConfig b = a;
    b.reseed(8);
    CHECK(make_run_id("experiment", experiment_to_config(b)) !=
          make_run_id("experiment", snap));
    CHECK(make_run_id("experiment", snap).size() == 16);
}

TEST_CASE("manifest survives a save/load round trip") {
    RunManifest m = start_manifest("gen-data", experiment_to_config(tiny_fig("fig2", 3)), 3);
    m.outputs = {"a.ryds", "b.csv"};
    m.finished_at = m.started_at;
    const std::string path = "/tmp/rydfdm_test_manifest.json";
    save_manifest(m, path);
    const RunManifest back = load_manifest(path);
    CHECK(back.command == "gen-data");
    CHECK(back.seed == 3);
    CHECK(back.run_id == m.run_id);
    CHECK(back.version == kVersionString);
    CHECK(back.outputs == m.outputs);
    CHECK(back.config.to_text() == m.config.to_text());
}

TEST_CASE("malformed manifests are rejected with the path named") {
    const std::string path = "/tmp/rydfdm_test_bad_manifest.json";
    write_file(path, "not json at all");
    CHECK_THROWS_WITH(load_manifest(path),
                      Catch::Matchers::ContainsSubstring("malformed file"));
    write_file(path, "{\"command\": \"x\"}");
    CHECK_THROWS_WITH(load_manifest(path),
                      Catch::Matchers::ContainsSubstring(path));
}

// ---------------------------------------------------------------------------
// k-fold training.

TEST_CASE("cv_train trains one model per fold and keeps the best by validation") {
    const ExperimentConfig c = tiny_fig("fig2", 11);
    const Dataset pool = generate_dataset(c.spec);
    const CvResult cv = cv_train(pool, c.split, c.train);

    REQUIRE(cv.folds.size() == c.split.fold_count);
    std::size_t argmin = 0;
    for (std::size_t f = 1; f < cv.folds.size(); ++f)
        if (cv.folds[f].val_mse < cv.folds[argmin].val_mse) argmin = f;
    CHECK(cv.best_fold == argmin);
    for (const CvFold& fold : cv.folds) {
        CHECK(fold.curve.size() == static_cast<std::size_t>(c.train.epochs));
        CHECK(fold.val_mse == fold.curve.back().val_mse);
    }

    // The split partitions the pool: test plus all folds, no overlap.
    std::vector<char> seen(pool.records.size(), 0);
    for (const std::size_t i : cv.split.test) seen.at(i)++;
    for (const auto& fold : cv.split.folds)
        for (const std::size_t i : fold) seen.at(i)++;
    for (const char s : seen) CHECK(s == 1);

    // The selected model runs inference at the right shape.
    Dataset test;
    test.spec = pool.spec;
    for (const std::size_t i : cv.split.test) test.records.push_back(pool.records[i]);
    const std::vector<Frame> preds = predict_dataset(cv.best_state, test);
    REQUIRE(preds.size() == test.records.size());
    CHECK(preds[0].bits.size() == c.spec.message_bits());
}

// ---------------------------------------------------------------------------
// Guarded confusion.

TEST_CASE("guarded confusion counts out-of-range predictions instead of throwing") {
    DatasetSpec spec = tiny_fig("fig5-20bin", 2).spec;  // 19 message bits, 3 varied
    std::vector<Frame> truths(3), preds(3);
    for (auto* v : {&truths, &preds})
        for (Frame& f : *v) f.bits.assign(spec.message_bits(), 0);
    truths[0].bits[0] = 1;
    preds[0].bits[0] = 1;       // correct, class 1
    preds[1].bits[5] = 1;       // sets a pinned-zero tone: out of range
    std::size_t bad = 0;
    const ConfusionMatrix cm = guarded_confusion(preds, truths, spec, bad);
    CHECK(bad == 1);
    CHECK(cm.counts.size() == 8);
    CHECK(cm.counts[1][1] == 1);
    CHECK(cm.counts[0][0] == 1);  // preds[2] stayed all-zero
    long long total = 0;
    for (const auto& row : cm.counts)
        for (const long long v : row) total += v;
    CHECK(total == 2);

    std::vector<Frame> short_preds(2);
    CHECK_THROWS_AS(guarded_confusion(short_preds, truths, spec, bad),
                    std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Payload transport.

TEST_CASE("payload round trip reports exact frame arithmetic and is deterministic") {
    const ExperimentConfig c = tiny_fig("fig2", 21);
    const Dataset pool = generate_dataset(c.spec);
    const CvResult cv = cv_train(pool, c.split, c.train);

    const PayloadRoundTrip a =
        payload_round_trip(kDefaultPayload, cv.best_state, c.spec, 0.05);
    const PayloadRoundTrip b =
        payload_round_trip(kDefaultPayload, cv.best_state, c.spec, 0.05);
    CHECK(a.payload_bytes == 55);
    CHECK(a.frame_count == 153);
    CHECK(a.payload_frames == 147);
    CHECK(a.bit_errors == b.bit_errors);  // seeded noise stream
    CHECK(a.frame_errors <= a.frame_count);
    CHECK(a.bit_errors <= a.frame_count * c.spec.message_bits());
    // An undertrained two-epoch decoder cannot carry 459 bits cleanly.
    CHECK_FALSE(a.roundtrip_ok);
}

// ---------------------------------------------------------------------------
// The experiment driver.

TEST_CASE("fig2-shaped experiment writes every artifact and reruns bit-identically") {
    const ExperimentConfig c = tiny_fig("fig2", 5);
    const std::string d1 = "/tmp/rydfdm_test_exp1";
    const std::string d2 = "/tmp/rydfdm_test_exp2";
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);

    const ExperimentOutcome o1 = run_experiment(c, d1);
    const ExperimentOutcome o2 = run_experiment(c, d2);
    CHECK(o1.manifest.run_id == o2.manifest.run_id);

    const std::vector<std::string> files = {
        "fig2-dataset.ryds", "fig2-model.rydc",      "fig2-report.json",
        "fig2-confusion.csv", "fig2-loss-fold0.csv", "fig2-loss-fold1.csv",
        "fig2-loss-fold2.csv", "fig2-loss-fold3.csv"};
    for (const std::string& f : files) {
        INFO(f);
        REQUIRE(std::filesystem::exists(d1 + "/" + f));
        CHECK(slurp(d1 + "/" + f) == slurp(d2 + "/" + f));
    }
    CHECK(std::filesystem::exists(d1 + "/manifest.json"));
    CHECK(o1.manifest.outputs.size() == files.size());

    CHECK(o1.report.at("profile") == "fig2");
    CHECK(o1.report.at("run_id") == o1.manifest.run_id);
    CHECK(o1.report.at("folds").size() == 4);
    CHECK(o1.report.at("test_count").get<std::size_t>() > 0);
    const double acc = o1.report.at("test_accuracy").get<double>();
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    // Reports never embed wall-clock state; timestamps live in the manifest.
    CHECK(slurp(d1 + "/fig2-report.json").find(o1.manifest.started_at.substr(0, 11)) ==
          std::string::npos);
}

TEST_CASE("round-trip profile adds the payload section to its report") {
    ExperimentConfig c = tiny_fig("fig3-qr", 6);
    const std::string dir = "/tmp/rydfdm_test_exp_qr";
    std::filesystem::remove_all(dir);
    const ExperimentOutcome o = run_experiment(c, dir);
    REQUIRE(o.report.contains("payload"));
    CHECK(o.report.at("payload").at("payload_bytes") == 55);
    CHECK(o.report.at("payload").at("payload_frames") == 147);
    CHECK(o.report.at("payload").contains("roundtrip_ok"));
    CHECK(std::filesystem::exists(dir + "/fig3-qr-model.rydc"));
}

TEST_CASE("noise-curve profile reports both decoders across the axis") {
    ExperimentConfig c = tiny_fig("fig4-noise", 8);
    c.train.epochs = 1;
    c.sigma_axis = {0.0, 0.1};
    c.eval.repeats = 1;
    c.eval.test_samples_per_class = 1;
    c.fit.max_evaluations = 40;
    const std::string dir = "/tmp/rydfdm_test_exp_noise";
    std::filesystem::remove_all(dir);
    const ExperimentOutcome o = run_experiment(c, dir);
    REQUIRE(o.report.contains("curve"));
    REQUIRE(o.report.at("curve").is_array());
    CHECK(o.report.at("curve").size() == 2);
    CHECK(o.report.at("curve")[0].contains("acc_dl"));
    CHECK(o.report.at("curve")[0].contains("acc_fit"));
    CHECK(o.report.contains("network_ge_fit_at_top_two_sigma"));
    CHECK(std::filesystem::exists(dir + "/fig4-noise-curve.csv"));
    CHECK(std::filesystem::exists(dir + "/fig4-noise-report.json"));
    CHECK_FALSE(std::filesystem::exists(dir + "/fig4-noise-model.rydc"));
}

TEST_CASE("experiment without a profile is rejected") {
    ExperimentConfig c;
    c.spec.validate();
    CHECK_THROWS_WITH(run_experiment(c, "/tmp/rydfdm_test_exp_none"),
                      Catch::Matchers::ContainsSubstring("no profile"));
}
