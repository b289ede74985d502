#pragma once

// Labeled-spectrum dataset pipeline: enumerate the frame classes, simulate
// one clean transmission trace per class, stamp out noisy copies with
// per-record random streams, min-max scale before and after the noise, and
// persist everything in a checksummed binary container.
//
// Scaling happens twice on purpose: the clean trace is normalized to [0,1]
// (the instrument's dynamic range), white noise is added in those units,
// and the noisy trace is normalized again the way a detector front end
// would before digitization.  Samples are quantized to 32-bit floats at
// generation time so that a generated dataset and its round trip through
// the file format are bit-identical.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rydfdm/atom.hpp"
#include "rydfdm/codec.hpp"
#include "rydfdm/nn/layers.hpp"
#include "rydfdm/rng.hpp"
#include "rydfdm/util.hpp"

namespace rydfdm {

// ---------------------------------------------------------------------------
// Specification.

struct DatasetSpec {
    CodecConfig codec;
    AtomParams atom;
    TransmissionModel model;
    std::size_t n_samples_per_class = 150;
    std::size_t n = 1000;     // samples per spectrum
    double dt = 1e-6;         // seconds per sample
    double noise_sigma = 0.0; // white-noise std in scaled units
    std::uint64_t seed = 1;
    // Number of leading message bits that vary between classes; 0 means all
    // of them.  Wide codecs (e.g. 20 bins) keep the class count tractable by
    // exercising only the first few bits, the rest pinned to zero.
    std::size_t active_bits = 0;

    std::size_t message_bits() const { return codec.n_bins - 1; }
    std::size_t varied_bits() const {
        return active_bits == 0 ? message_bits() : active_bits;
    }
    std::size_t n_classes() const { return std::size_t{1} << varied_bits(); }

    void validate() const {
        codec.validate();
        atom.validate();
        model.validate();
        if (n_samples_per_class < 1)
            throw std::invalid_argument("DatasetSpec: n_samples_per_class must be >= 1");
        if (n < 2) throw std::invalid_argument("DatasetSpec: n must be >= 2");
        if (!(dt > 0.0)) throw std::invalid_argument("DatasetSpec: dt must be > 0");
        if (noise_sigma < 0.0)
            throw std::invalid_argument("DatasetSpec: noise_sigma must be >= 0");
        if (active_bits > message_bits())
            throw std::invalid_argument(
                "DatasetSpec: active_bits exceeds the message width");
        if (varied_bits() > 12)
            throw std::invalid_argument(
                "DatasetSpec: class count 2^k too large; restrict active_bits");
    }
};

struct Dataset {
    DatasetSpec spec;
    std::vector<Spectrum> records;  // each record carries its PhaseLabel
};

// ---------------------------------------------------------------------------
// Class enumeration.  Class index c maps to a frame whose j-th message bit
// is (c >> j) & 1 for j < varied_bits, zero beyond; bin 0 is therefore the
// least-significant bit of the class index.

inline Frame frame_of_class(const DatasetSpec& spec, std::size_t cls) {
    if (cls >= spec.n_classes())
        throw std::invalid_argument("frame_of_class: class index out of range");
    Frame f;
    f.bits.assign(spec.message_bits(), 0);
    for (std::size_t j = 0; j < spec.varied_bits(); ++j)
        f.bits[j] = static_cast<std::uint8_t>((cls >> j) & 1);
    return f;
}

inline std::size_t class_of_frame(const DatasetSpec& spec, const Frame& f) {
    if (f.bits.size() != spec.message_bits())
        throw std::invalid_argument("class_of_frame: frame width mismatch");
    std::size_t cls = 0;
    for (std::size_t j = 0; j < f.bits.size(); ++j) {
        if (f.bits[j] > 1)
            throw std::invalid_argument("class_of_frame: bits must be 0/1");
        if (j >= spec.varied_bits()) {
            if (f.bits[j] != 0)
                throw std::invalid_argument(
                    "class_of_frame: frame sets a bit outside the varied range");
            continue;
        }
        cls |= static_cast<std::size_t>(f.bits[j]) << j;
    }
    return cls;
}

// ---------------------------------------------------------------------------
// Noise.

/// Adds independent N(0, sigma) to every sample; sigma = 0 returns the
/// input unchanged.  Consumes one normal draw per sample, in order.
inline Spectrum add_white_noise(const Spectrum& s, double sigma, Rng& rng) {
    if (sigma < 0.0)
        throw std::invalid_argument("add_white_noise: sigma must be >= 0");
    if (sigma == 0.0) return s;
    Spectrum out = s;
    for (double& v : out.samples) v += rng.normal(0.0, sigma);
    return out;
}

// ---------------------------------------------------------------------------
// Generation.

namespace detail {

inline float quantize_f32(double v) { return static_cast<float>(v); }

/// scale -> noise -> scale -> f32 quantization, with the record's own RNG.
inline std::vector<double> finish_record(const std::vector<double>& clean_scaled,
                                         double sigma, Rng rng) {
    std::vector<double> out = clean_scaled;
    if (sigma > 0.0) {
        for (double& v : out) v += rng.normal(0.0, sigma);
        out = nn::minmax_scale(out);
    }
    for (double& v : out) v = static_cast<double>(quantize_f32(v));
    return out;
}

}  // namespace detail

/// Balanced dataset: n_samples_per_class records for every frame class, in
/// class-major order (record r belongs to class r / n_samples_per_class).
/// Deterministic in spec.seed; record r uses child stream r regardless of
/// how the work is scheduled.
inline Dataset generate_dataset(const DatasetSpec& spec, unsigned jobs = 1) {
    spec.validate();

    const std::size_t n_classes = spec.n_classes();
    const Rng root(spec.seed);

    // One clean, scaled trace per class (the expensive physics).
    std::vector<std::vector<double>> clean(n_classes);
    parallel_for(n_classes, jobs, [&](std::size_t cls) {
        const Frame frame = frame_of_class(spec, cls);
        const MWField field = field_from_frame(frame, spec.codec);
        const Spectrum s =
            simulate_spectrum(field, spec.atom, spec.model, spec.n, spec.dt);
        clean[cls] = nn::minmax_scale(s.samples);
    });

    Dataset ds;
    ds.spec = spec;
    ds.records.resize(n_classes * spec.n_samples_per_class);
    parallel_for(ds.records.size(), jobs, [&](std::size_t r) {
        const std::size_t cls = r / spec.n_samples_per_class;
        Spectrum rec;
        rec.dt = spec.dt;
        rec.samples =
            detail::finish_record(clean[cls], spec.noise_sigma, root.child(r));
        rec.label = encode_bits(frame_of_class(spec, cls), spec.codec);
        ds.records[r] = std::move(rec);
    });
    return ds;
}

// ---------------------------------------------------------------------------
// Split: seeded shuffle, test carve-out, equal folds over the remainder.

struct SplitPlan {
    double test_fraction = 0.2;
    std::size_t fold_count = 4;

    void validate() const {
        if (!(test_fraction >= 0.0 && test_fraction < 1.0))
            throw std::invalid_argument("SplitPlan: test_fraction must be in [0,1)");
        if (fold_count < 2)
            throw std::invalid_argument("SplitPlan: fold_count must be >= 2");
    }
};

struct SplitAssignment {
    std::vector<std::size_t> test;                // record indices
    std::vector<std::vector<std::size_t>> folds;  // partition of the rest
};

inline SplitAssignment split_indices(std::size_t n_records, const SplitPlan& plan,
                                     std::uint64_t seed) {
    plan.validate();
    if (n_records < 5 * plan.fold_count)
        throw std::invalid_argument("split_indices: too few records");

    std::vector<std::size_t> order(n_records);
    for (std::size_t i = 0; i < n_records; ++i) order[i] = i;
    Rng rng(seed);
    shuffle(order, rng);

    const std::size_t n_test = static_cast<std::size_t>(
        std::llround(plan.test_fraction * static_cast<double>(n_records)));

    SplitAssignment out;
    out.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));

    const std::size_t rest = n_records - n_test;
    out.folds.resize(plan.fold_count);
    std::size_t pos = n_test;
    for (std::size_t f = 0; f < plan.fold_count; ++f) {
        // Sizes differ by at most one when the remainder does not divide.
        const std::size_t len = rest / plan.fold_count +
                                (f < rest % plan.fold_count ? 1 : 0);
        out.folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                            order.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binary container.
//
//   "RYDS1" | u32 header length | JSON header | records | u32 CRC32
//
// Each record is n_bins label bytes followed by n little-endian f32
// samples.  The CRC covers every preceding byte.

inline const char* kDatasetMagic = "RYDS1";

namespace detail {

inline nlohmann::json spec_to_json(const DatasetSpec& spec) {
    return {
        {"codec",
         {{"n_bins", spec.codec.n_bins},
          {"delta_f", spec.codec.delta_f},
          {"center_hz", spec.codec.center_hz},
          {"amplitude_ratio", spec.codec.amplitude_ratio},
          {"ref_amplitude", spec.codec.ref_amplitude}}},
        {"atom",
         {{"omega_p", spec.atom.omega_p},
          {"omega_c", spec.atom.omega_c},
          {"delta_p", spec.atom.delta_p},
          {"delta_c", spec.atom.delta_c},
          {"delta_s", spec.atom.delta_s},
          {"gamma_e", spec.atom.gamma_e},
          {"gamma_r", spec.atom.gamma_r},
          {"gamma_s", spec.atom.gamma_s}}},
        {"model", {{"contrast", spec.model.contrast}}},
        {"n_samples_per_class", spec.n_samples_per_class},
        {"n", spec.n},
        {"dt", spec.dt},
        {"noise_sigma", spec.noise_sigma},
        {"seed", spec.seed},
        {"active_bits", spec.active_bits},
    };
}

inline DatasetSpec spec_from_json(const nlohmann::json& j) {
    DatasetSpec spec;
    const auto& c = j.at("codec");
    spec.codec.n_bins = c.at("n_bins").get<std::size_t>();
    spec.codec.delta_f = c.at("delta_f").get<double>();
    spec.codec.center_hz = c.at("center_hz").get<double>();
    spec.codec.amplitude_ratio = c.at("amplitude_ratio").get<double>();
    spec.codec.ref_amplitude = c.at("ref_amplitude").get<double>();
    const auto& a = j.at("atom");
    spec.atom.omega_p = a.at("omega_p").get<double>();
    spec.atom.omega_c = a.at("omega_c").get<double>();
    spec.atom.delta_p = a.at("delta_p").get<double>();
    spec.atom.delta_c = a.at("delta_c").get<double>();
    spec.atom.delta_s = a.at("delta_s").get<double>();
    spec.atom.gamma_e = a.at("gamma_e").get<double>();
    spec.atom.gamma_r = a.at("gamma_r").get<double>();
    spec.atom.gamma_s = a.at("gamma_s").get<double>();
    spec.model.contrast = j.at("model").at("contrast").get<double>();
    spec.n_samples_per_class = j.at("n_samples_per_class").get<std::size_t>();
    spec.n = j.at("n").get<std::size_t>();
    spec.dt = j.at("dt").get<double>();
    spec.noise_sigma = j.at("noise_sigma").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.active_bits = j.at("active_bits").get<std::size_t>();
    return spec;
}

}  // namespace detail

/// A non-empty run_id is recorded in the header so the file can be traced
/// back to the producing run; readers ignore it.
inline void save_dataset(const Dataset& ds, const std::string& path,
                         const std::string& run_id = "") {
    nlohmann::json header;
    header["format"] = kDatasetMagic;
    header["spec"] = detail::spec_to_json(ds.spec);
    header["n_records"] = ds.records.size();
    header["n_samples"] = ds.spec.n;
    header["n_bins"] = ds.spec.codec.n_bins;
    if (!run_id.empty()) header["run"] = run_id;

    std::string out = kDatasetMagic;
    const std::string htext = header.dump();
    put_u32(out, static_cast<std::uint32_t>(htext.size()));
    out += htext;

    for (const Spectrum& rec : ds.records) {
        if (!rec.label)
            throw std::invalid_argument("save_dataset: record without a label");
        if (rec.label->bits.size() != ds.spec.codec.n_bins)
            throw std::invalid_argument("save_dataset: label width mismatch");
        if (rec.samples.size() != ds.spec.n)
            throw std::invalid_argument("save_dataset: sample count mismatch");
        for (std::uint8_t b : rec.label->bits) out.push_back(static_cast<char>(b));
        for (double v : rec.samples) put_f32(out, static_cast<float>(v));
    }

    put_u32(out, crc32(out.data(), out.size()));
    write_file(path, out);
}

inline Dataset load_dataset(const std::string& path) {
    const std::string data = read_file(path);
    if (data.size() < 13 || data.compare(0, 5, kDatasetMagic) != 0)
        throw std::runtime_error("malformed file: bad dataset magic in " + path);

    ByteReader trailer(data, data.size() - 4);
    if (trailer.u32() != crc32(data.data(), data.size() - 4))
        throw std::runtime_error("malformed file: dataset checksum mismatch in " +
                                 path);

    ByteReader r(data, 5);
    const std::uint32_t hlen = r.u32();
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.bytes(hlen));
    } catch (const nlohmann::json::exception&) {
        throw std::runtime_error("malformed file: dataset header is not JSON");
    }

    Dataset ds;
    ds.spec = detail::spec_from_json(header.at("spec"));
    const std::size_t n_records = header.at("n_records").get<std::size_t>();
    const std::size_t n_samples = header.at("n_samples").get<std::size_t>();
    const std::size_t n_bins = header.at("n_bins").get<std::size_t>();
    if (n_samples != ds.spec.n || n_bins != ds.spec.codec.n_bins)
        throw std::runtime_error("malformed file: dataset header is inconsistent");

    ds.records.resize(n_records);
    for (std::size_t i = 0; i < n_records; ++i) {
        Spectrum& rec = ds.records[i];
        rec.dt = ds.spec.dt;
        PhaseLabel label;
        label.bits.resize(n_bins);
        for (std::size_t b = 0; b < n_bins; ++b) label.bits[b] = r.u8();
        label.validate();
        rec.label = std::move(label);
        rec.samples.resize(n_samples);
        for (std::size_t sIdx = 0; sIdx < n_samples; ++sIdx)
            rec.samples[sIdx] = static_cast<double>(r.f32());
    }
    if (r.remaining() != 4)
        throw std::runtime_error("malformed file: dataset has trailing bytes");
    return ds;
}

// ---------------------------------------------------------------------------
// CSV export: label bit columns, then the samples at 9 significant digits.

inline void export_dataset_csv(const Dataset& ds, const std::string& path) {
    std::string out;
    const std::size_t n_bins = ds.spec.codec.n_bins;
    for (std::size_t b = 0; b < n_bins; ++b) {
        out += "bit_" + std::to_string(b) + ",";
    }
    for (std::size_t i = 0; i < ds.spec.n; ++i) {
        out += "s_" + std::to_string(i);
        out += (i + 1 < ds.spec.n) ? ',' : '\n';
    }
    for (const Spectrum& rec : ds.records) {
        if (!rec.label)
            throw std::invalid_argument("export_dataset_csv: record without a label");
        for (std::uint8_t b : rec.label->bits) {
            out += std::to_string(static_cast<int>(b));
            out += ',';
        }
        for (std::size_t i = 0; i < rec.samples.size(); ++i) {
            out += fmt_g(rec.samples[i]);
            out += (i + 1 < rec.samples.size()) ? ',' : '\n';
        }
    }
    write_file(path, out);
}

}  // namespace rydfdm
