// Dataset pipeline tests: class enumeration, balanced generation, noise
// statistics, the shuffled test/fold split, the binary container, and CSV
// export.
//
// The class-mean check uses an independent Monte-Carlo oracle built on
// std::mt19937_64 (a different generator family than the library's) because
// per-record rescaling after noise shifts the mean of the stored samples
// away from the clean trace by a systematic, sigma-proportional amount;
// the law-of-large-numbers statement holds against the true mean of the
// full scale->noise->rescale pipeline, not against the noiseless record.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <vector>

#include <catch_amalgamated.hpp>

#include "rydfdm/dataset.hpp"

using namespace rydfdm;

namespace {

DatasetSpec small_spec() {
    DatasetSpec spec;
    spec.n_samples_per_class = 2;
    spec.n = 64;
    spec.noise_sigma = 0.05;
    spec.seed = 4242;
    return spec;
}

bool datasets_identical(const Dataset& a, const Dataset& b) {
    if (a.records.size() != b.records.size()) return false;
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        if (a.records[i].samples != b.records[i].samples) return false;
        if (a.records[i].dt != b.records[i].dt) return false;
        if (a.records[i].label->bits != b.records[i].label->bits) return false;
    }
    return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Class enumeration.

TEST_CASE("class index and frame are inverse maps") {
    DatasetSpec spec;  // 4 bins -> 3 message bits -> 8 classes
    REQUIRE(spec.n_classes() == 8);
    for (std::size_t cls = 0; cls < 8; ++cls) {
        const Frame f = frame_of_class(spec, cls);
        REQUIRE(f.bits.size() == 3);
        REQUIRE(class_of_frame(spec, f) == cls);
    }
    // Bin 0 is the least-significant bit of the class index.
    REQUIRE(frame_of_class(spec, 1).bits == std::vector<std::uint8_t>{1, 0, 0});
    REQUIRE(frame_of_class(spec, 6).bits == std::vector<std::uint8_t>{0, 1, 1});
    REQUIRE_THROWS_AS(frame_of_class(spec, 8), std::invalid_argument);
}

TEST_CASE("active_bits restricts a wide codec to its leading bits") {
    DatasetSpec spec;
    spec.codec.n_bins = 20;
    spec.active_bits = 3;
    REQUIRE(spec.message_bits() == 19);
    REQUIRE(spec.n_classes() == 8);
    for (std::size_t cls = 0; cls < 8; ++cls) {
        const Frame f = frame_of_class(spec, cls);
        REQUIRE(f.bits.size() == 19);
        for (std::size_t j = 3; j < 19; ++j) REQUIRE(f.bits[j] == 0);
        REQUIRE(class_of_frame(spec, f) == cls);
    }
    Frame outside = frame_of_class(spec, 0);
    outside.bits[7] = 1;  // beyond the varied range
    REQUIRE_THROWS_AS(class_of_frame(spec, outside), std::invalid_argument);
}

TEST_CASE("spec validation rejects bad parameters") {
    DatasetSpec spec;
    spec.n_samples_per_class = 0;
    REQUIRE_THROWS_AS(spec.validate(), std::invalid_argument);

    spec = DatasetSpec{};
    spec.noise_sigma = -0.1;
    REQUIRE_THROWS_AS(spec.validate(), std::invalid_argument);

    spec = DatasetSpec{};
    spec.active_bits = 5;  // only 3 message bits exist
    REQUIRE_THROWS_AS(spec.validate(), std::invalid_argument);

    spec = DatasetSpec{};
    spec.codec.n_bins = 20;  // 2^19 classes without active_bits
    REQUIRE_THROWS_AS(spec.validate(), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Generation.

TEST_CASE("generation is balanced, labeled, bounded, and f32-clean") {
    DatasetSpec spec = small_spec();
    spec.n_samples_per_class = 3;
    const Dataset ds = generate_dataset(spec);
    REQUIRE(ds.records.size() == 8 * 3);

    for (std::size_t r = 0; r < ds.records.size(); ++r) {
        const Spectrum& rec = ds.records[r];
        REQUIRE(rec.samples.size() == spec.n);
        REQUIRE(rec.dt == spec.dt);
        REQUIRE(rec.label.has_value());

        const std::size_t cls = r / 3;
        const PhaseLabel expect = encode_bits(frame_of_class(spec, cls), spec.codec);
        REQUIRE(rec.label->bits == expect.bits);

        for (double v : rec.samples) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
            // Quantized at generation so file round trips are bit-exact.
            REQUIRE(static_cast<double>(static_cast<float>(v)) == v);
        }
    }
}

TEST_CASE("noiseless generation duplicates records within a class") {
    DatasetSpec spec = small_spec();
    spec.noise_sigma = 0.0;
    spec.n_samples_per_class = 4;
    const Dataset ds = generate_dataset(spec);
    for (std::size_t cls = 0; cls < 8; ++cls) {
        const auto& first = ds.records[cls * 4].samples;
        for (std::size_t k = 1; k < 4; ++k)
            REQUIRE(ds.records[cls * 4 + k].samples == first);
    }
    // Distinct classes still produce distinct spectra.
    REQUIRE(ds.records[0].samples != ds.records[4].samples);
}

TEST_CASE("generation is deterministic in the seed and the job count") {
    const DatasetSpec spec = small_spec();
    const Dataset a = generate_dataset(spec, 1);
    const Dataset b = generate_dataset(spec, 1);
    const Dataset c = generate_dataset(spec, 3);
    REQUIRE(datasets_identical(a, b));
    REQUIRE(datasets_identical(a, c));

    DatasetSpec other = spec;
    other.seed = spec.seed + 1;
    const Dataset d = generate_dataset(other);
    REQUIRE_FALSE(datasets_identical(a, d));
}

// ---------------------------------------------------------------------------
// Noise statistics.

TEST_CASE("add_white_noise with sigma 0 is the identity") {
    Spectrum s;
    s.samples = {0.1, 0.5, 0.9};
    Rng rng(1);
    const Spectrum out = add_white_noise(s, 0.0, rng);
    REQUIRE(out.samples == s.samples);
    REQUIRE_THROWS_AS(add_white_noise(s, -1.0, rng), std::invalid_argument);
}

TEST_CASE("add_white_noise moments over a million draws") {
    Spectrum s;
    s.samples.assign(1'000'000, 0.5);
    Rng rng(777);
    const Spectrum noisy = add_white_noise(s, 1.0, rng);

    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
        const double d = noisy.samples[i] - s.samples[i];
        sum += d;
        sumsq += d * d;
    }
    const double n = static_cast<double>(s.samples.size());
    const double mean = sum / n;
    const double stddev = std::sqrt(sumsq / n - mean * mean);
    REQUIRE(std::abs(mean) < 0.01);
    REQUIRE(stddev > 0.98);
    REQUIRE(stddev < 1.02);
}

TEST_CASE("class-conditional mean converges to the pipeline mean") {
    DatasetSpec spec;
    spec.n_samples_per_class = 150;
    spec.noise_sigma = 0.1;
    spec.seed = 99;
    const Dataset noisy = generate_dataset(spec);

    DatasetSpec clean_spec = spec;
    clean_spec.noise_sigma = 0.0;
    clean_spec.n_samples_per_class = 1;
    const Dataset clean = generate_dataset(clean_spec);

    auto rescale = [](std::vector<double> v) {
        const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
        const double lo = *lo_it, range = *hi_it - lo;
        for (double& x : v) x = (x - lo) / range;
        return v;
    };

    std::mt19937_64 gen(20240817);  // independent generator family
    std::normal_distribution<double> dist(0.0, spec.noise_sigma);
    const std::size_t n = spec.n;
    const std::size_t kOracleDraws = 3000;

    double worst_bias = 0.0;
    for (std::size_t cls = 0; cls < spec.n_classes(); ++cls) {
        const std::vector<double>& base = clean.records[cls].samples;

        // Monte-Carlo estimate of the true post-pipeline mean and spread.
        std::vector<double> mc_mean(n, 0.0), mc_sq(n, 0.0);
        for (std::size_t k = 0; k < kOracleDraws; ++k) {
            std::vector<double> draw = base;
            for (double& v : draw) v += dist(gen);
            draw = rescale(std::move(draw));
            for (std::size_t i = 0; i < n; ++i) {
                const double q = static_cast<double>(static_cast<float>(draw[i]));
                mc_mean[i] += q;
                mc_sq[i] += q * q;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            mc_mean[i] /= static_cast<double>(kOracleDraws);
            mc_sq[i] = mc_sq[i] / static_cast<double>(kOracleDraws) -
                       mc_mean[i] * mc_mean[i];
        }

        std::vector<double> ds_mean(n, 0.0);
        for (std::size_t k = 0; k < spec.n_samples_per_class; ++k) {
            const auto& s =
                noisy.records[cls * spec.n_samples_per_class + k].samples;
            for (std::size_t i = 0; i < n; ++i) ds_mean[i] += s[i];
        }
        for (std::size_t i = 0; i < n; ++i)
            ds_mean[i] /= static_cast<double>(spec.n_samples_per_class);

        for (std::size_t i = 0; i < n; ++i) {
            const double se = std::sqrt(std::max(mc_sq[i], 0.0)) *
                              (1.0 / std::sqrt(150.0) +
                               1.0 / std::sqrt(static_cast<double>(kOracleDraws)));
            CAPTURE(cls, i, ds_mean[i], mc_mean[i], se);
            REQUIRE(std::abs(ds_mean[i] - mc_mean[i]) < 5.0 * se + 2e-6);
            worst_bias = std::max(worst_bias,
                                  std::abs(mc_mean[i] - clean.records[cls].samples[i]));
        }
    }
    // The rescale after noise shifts the mean away from the clean trace by a
    // large, systematic amount; pin the phenomenon so the choice of
    // reference above stays justified.
    REQUIRE(worst_bias > 0.1);
}

// ---------------------------------------------------------------------------
// Split.

TEST_CASE("split carves the documented sizes and partitions the rest") {
    const SplitPlan plan;  // 20% test, 4 folds
    const SplitAssignment sa = split_indices(1000, plan, 5);
    REQUIRE(sa.test.size() == 200);
    REQUIRE(sa.folds.size() == 4);
    for (const auto& f : sa.folds) REQUIRE(f.size() == 200);

    std::vector<std::size_t> all = sa.test;
    for (const auto& f : sa.folds) all.insert(all.end(), f.begin(), f.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) REQUIRE(all[i] == i);
}

TEST_CASE("split handles a count that does not divide evenly") {
    const SplitPlan plan;
    const SplitAssignment sa = split_indices(1003, plan, 6);
    REQUIRE(sa.test.size() == 201);  // round(0.2 * 1003)
    std::vector<std::size_t> sizes;
    std::size_t total = sa.test.size();
    for (const auto& f : sa.folds) {
        sizes.push_back(f.size());
        total += f.size();
    }
    REQUIRE(total == 1003);
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    REQUIRE(*hi - *lo <= 1);
}

TEST_CASE("split is seed-deterministic and actually shuffles") {
    const SplitPlan plan;
    const SplitAssignment a = split_indices(400, plan, 9);
    const SplitAssignment b = split_indices(400, plan, 9);
    REQUIRE(a.test == b.test);
    REQUIRE(a.folds == b.folds);

    const SplitAssignment c = split_indices(400, plan, 10);
    REQUIRE(a.test != c.test);

    // A shuffled test set is not simply the first 80 indices.
    std::vector<std::size_t> sorted_test = a.test;
    std::sort(sorted_test.begin(), sorted_test.end());
    bool is_prefix = true;
    for (std::size_t i = 0; i < sorted_test.size(); ++i)
        if (sorted_test[i] != i) is_prefix = false;
    REQUIRE_FALSE(is_prefix);
}

TEST_CASE("split rejects too few records") {
    const SplitPlan plan;
    REQUIRE_THROWS_WITH(split_indices(19, plan, 1),
                        Catch::Matchers::ContainsSubstring("too few records"));
    REQUIRE_NOTHROW(split_indices(20, plan, 1));
}

// ---------------------------------------------------------------------------
// Binary container.

TEST_CASE("dataset file round-trips bit-exactly") {
    const DatasetSpec spec = small_spec();
    const Dataset ds = generate_dataset(spec);
    const std::string path = "dataset_roundtrip_test.ryds";
    save_dataset(ds, path);

    const std::string raw = read_file(path);
    REQUIRE(raw.compare(0, 5, "RYDS1") == 0);

    const Dataset back = load_dataset(path);
    REQUIRE(datasets_identical(ds, back));
    REQUIRE(back.spec.codec.n_bins == spec.codec.n_bins);
    REQUIRE(back.spec.codec.delta_f == spec.codec.delta_f);
    REQUIRE(back.spec.atom.omega_p == spec.atom.omega_p);
    REQUIRE(back.spec.atom.gamma_s == spec.atom.gamma_s);
    REQUIRE(back.spec.model.contrast == spec.model.contrast);
    REQUIRE(back.spec.n_samples_per_class == spec.n_samples_per_class);
    REQUIRE(back.spec.n == spec.n);
    REQUIRE(back.spec.dt == spec.dt);
    REQUIRE(back.spec.noise_sigma == spec.noise_sigma);
    REQUIRE(back.spec.seed == spec.seed);
    REQUIRE(back.spec.active_bits == spec.active_bits);

    // Saving the loaded dataset reproduces the file byte for byte.
    const std::string path2 = "dataset_roundtrip_test2.ryds";
    save_dataset(back, path2);
    REQUIRE(read_file(path2) == raw);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("empty dataset round-trips") {
    DatasetSpec spec = small_spec();
    Dataset ds;
    ds.spec = spec;
    const std::string path = "dataset_empty_test.ryds";
    save_dataset(ds, path);
    const Dataset back = load_dataset(path);
    REQUIRE(back.records.empty());
    REQUIRE(back.spec.seed == spec.seed);
    std::remove(path.c_str());
}

TEST_CASE("dataset file corruption is detected") {
    const DatasetSpec spec = small_spec();
    Dataset ds = generate_dataset(spec);
    ds.records.resize(4);
    const std::string path = "dataset_corrupt_test.ryds";
    save_dataset(ds, path);
    const std::string good = read_file(path);

    SECTION("bad magic") {
        std::string bad = good;
        bad[1] = '?';
        write_file(path, bad);
        REQUIRE_THROWS_WITH(load_dataset(path),
                            Catch::Matchers::ContainsSubstring("malformed"));
    }
    SECTION("flipped sample byte") {
        std::string bad = good;
        bad[bad.size() - 20] = static_cast<char>(bad[bad.size() - 20] ^ 0x01);
        write_file(path, bad);
        REQUIRE_THROWS_WITH(load_dataset(path),
                            Catch::Matchers::ContainsSubstring("checksum"));
    }
    SECTION("truncated") {
        write_file(path, good.substr(0, good.size() - 7));
        REQUIRE_THROWS_WITH(load_dataset(path),
                            Catch::Matchers::ContainsSubstring("malformed"));
    }
    std::remove(path.c_str());
}

// ---------------------------------------------------------------------------
// CSV export.

TEST_CASE("csv export lists label bits then samples") {
    DatasetSpec spec = small_spec();
    spec.n = 4;

    Dataset ds;
    ds.spec = spec;
    Spectrum a;
    a.dt = spec.dt;
    a.samples = {0.0, 0.25, 0.5, 1.0};
    a.label = encode_bits(Frame::from_string("101"), spec.codec);
    Spectrum b = a;
    b.samples = {1.0, 0.75, 0.125, 0.0};
    b.label = encode_bits(Frame::from_string("010"), spec.codec);
    ds.records = {a, b};

    const std::string path = "dataset_csv_test.csv";
    export_dataset_csv(ds, path);
    REQUIRE(read_file(path) ==
            "bit_0,bit_1,bit_2,bit_3,s_0,s_1,s_2,s_3\n"
            "1,0,1,0,0,0.25,0.5,1\n"
            "0,1,0,0,1,0.75,0.125,0\n");
    std::remove(path.c_str());
}
