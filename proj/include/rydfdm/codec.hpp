#pragma once

// FDM-2PSK codec: message bits <-> per-bin phase assignments <-> fields.
//
// Each symbol interval carries one bit per message bin as a relative phase
// of 0 or pi against a strong reference bin.  The reference sits at the
// highest frequency slot, runs at `amplitude_ratio` times the message bin
// amplitude, and always has phase 0.  Bins are laid out symmetrically at
// odd multiples of delta_f/2 around the carrier, e.g. four bins at
// (-3, -1, +1, +3) kHz for delta_f = 2 kHz.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rydfdm/field.hpp"

namespace rydfdm {

/// Message bits for one symbol interval, one bit per non-reference bin.
struct Frame {
    std::vector<std::uint8_t> bits;

    Frame() = default;
    explicit Frame(std::vector<std::uint8_t> b) : bits(std::move(b)) {}

    bool operator==(const Frame& o) const { return bits == o.bits; }

    std::string to_string() const {
        std::string s;
        s.reserve(bits.size());
        for (auto b : bits) s.push_back(b ? '1' : '0');
        return s;
    }

    static Frame from_string(const std::string& s) {
        Frame f;
        f.bits.reserve(s.size());
        for (char c : s) {
            if (c == '0')
                f.bits.push_back(0);
            else if (c == '1')
                f.bits.push_back(1);
            else
                throw std::invalid_argument("Frame: bit string must be 0/1");
        }
        return f;
    }
};

/// Dense per-bin bit vector; the reference bin is the last entry and is
/// always 0.
struct PhaseLabel {
    std::vector<std::uint8_t> bits;

    bool operator==(const PhaseLabel& o) const { return bits == o.bits; }

    std::size_t n_bins() const { return bits.size(); }

    void validate() const {
        if (bits.size() < 2) throw std::invalid_argument("PhaseLabel: need >= 2 bins");
        for (auto b : bits)
            if (b > 1) throw std::invalid_argument("PhaseLabel: bits must be 0/1");
        if (bits.back() != 0)
            throw std::invalid_argument("PhaseLabel: reference entry must be 0");
    }

    /// Phase vector in radians (bit 1 -> pi).
    std::vector<double> phases() const {
        std::vector<double> out(bits.size());
        for (std::size_t i = 0; i < bits.size(); ++i)
            out[i] = bits[i] ? 0.5 * kTwoPi : 0.0;
        return out;
    }
};

struct CodecConfig {
    std::size_t n_bins = 4;
    double delta_f = 2e3;             // Hz between adjacent bins
    double center_hz = 17.62e9;       // nominal carrier
    double amplitude_ratio = 10.0;    // A_ref / A_i
    double ref_amplitude = kTwoPi * 2.0e6;  // rad/s Rabi amplitude of the reference

    void validate() const {
        if (n_bins < 2) throw std::invalid_argument("CodecConfig: n_bins must be >= 2");
        if (!(delta_f > 0.0))
            throw std::invalid_argument("CodecConfig: delta_f must be > 0");
        if (!(amplitude_ratio > 1.0))
            throw std::invalid_argument("CodecConfig: amplitude_ratio must be > 1");
        if (!(ref_amplitude > 0.0))
            throw std::invalid_argument("CodecConfig: ref_amplitude must be > 0");
    }
};

/// Map message bits to the dense per-bin label (reference appended as 0).
inline PhaseLabel encode_bits(const Frame& frame, const CodecConfig& cfg) {
    cfg.validate();
    if (frame.bits.size() != cfg.n_bins - 1)
        throw std::invalid_argument("encode_bits: frame length must be n_bins - 1");
    PhaseLabel label;
    label.bits = frame.bits;
    label.bits.push_back(0);
    label.validate();
    return label;
}

/// Bin offset (rad/s from carrier) for slot j of n: odd multiples of
/// delta_f/2, lowest to highest.
inline double bin_offset(std::size_t j, std::size_t n, double delta_f) {
    const double half = 0.5 * delta_f;
    return kTwoPi * half *
           (2.0 * static_cast<double>(j) - static_cast<double>(n - 1));
}

/// Build the drive field for one label: message bins at A_ref/ratio, the
/// reference at the highest frequency slot with phase 0.
inline MWField field_from_label(const PhaseLabel& label, const CodecConfig& cfg) {
    cfg.validate();
    label.validate();
    if (label.n_bins() != cfg.n_bins)
        throw std::invalid_argument("field_from_label: label/codec bin count mismatch");
    const double msg_amplitude = cfg.ref_amplitude / cfg.amplitude_ratio;
    const std::vector<double> phases = label.phases();
    std::vector<Bin> bins(cfg.n_bins);
    for (std::size_t j = 0; j < cfg.n_bins; ++j) {
        bins[j].offset = bin_offset(j, cfg.n_bins, cfg.delta_f);
        bins[j].amplitude = (j + 1 == cfg.n_bins) ? cfg.ref_amplitude : msg_amplitude;
        bins[j].phase = phases[j];
    }
    return MWField(std::move(bins), cfg.n_bins - 1, cfg.center_hz);
}

inline MWField field_from_frame(const Frame& frame, const CodecConfig& cfg) {
    return field_from_label(encode_bits(frame, cfg), cfg);
}

/// Threshold the raw per-bin outputs and drop the reference entry.  Ties at
/// exactly the threshold decode to 0.
inline Frame decode_label(const std::vector<double>& raw, double threshold) {
    if (raw.size() < 2)
        throw std::invalid_argument("decode_label: need >= 2 entries");
    Frame f;
    f.bits.reserve(raw.size() - 1);
    for (std::size_t i = 0; i + 1 < raw.size(); ++i)
        f.bits.push_back(raw[i] > threshold ? 1 : 0);
    return f;
}

/// Bits per second: (n_bins - 1) * delta_f.
inline double transmission_rate(std::size_t n_bins, double delta_f) {
    if (n_bins < 2)
        throw std::invalid_argument("transmission_rate: n_bins must be >= 2");
    return static_cast<double>(n_bins - 1) * delta_f;
}

// ---------------------------------------------------------------------------
// Payload framing.  A payload is an opaque byte string sent MSB-first in
// (n_bins - 1)-bit frames.  A 16-bit header holding the payload byte count
// leads in its own zero-padded frames, then the payload bits follow in
// theirs; a 55-byte payload at 4 bins is therefore 6 header frames plus
// ceil(440 / 3) = 147 message frames.  Carrying the byte count (rather than
// the frame count) keeps the inverse exact for frames wider than 8 bits,
// where the frame count alone cannot recover the payload length.

namespace detail {

/// Append `bits` chunked into k-wide frames, zero-padding the last one.
inline void chunk_bits(const std::vector<std::uint8_t>& bits, std::size_t k,
                       std::vector<Frame>& out) {
    for (std::size_t pos = 0; pos < bits.size(); pos += k) {
        Frame f;
        f.bits.resize(k, 0);
        for (std::size_t j = 0; j < k && pos + j < bits.size(); ++j)
            f.bits[j] = bits[pos + j];
        out.push_back(std::move(f));
    }
}

}  // namespace detail

inline std::vector<Frame> payload_to_frames(const std::vector<std::uint8_t>& payload,
                                            const CodecConfig& cfg) {
    cfg.validate();
    if (payload.size() > 0xFFFF)
        throw std::invalid_argument("payload_to_frames: payload exceeds 65535 bytes");
    const std::size_t k = cfg.n_bins - 1;

    std::vector<std::uint8_t> header_bits;
    header_bits.reserve(16);
    const std::uint16_t count = static_cast<std::uint16_t>(payload.size());
    for (int i = 15; i >= 0; --i) header_bits.push_back((count >> i) & 1);

    std::vector<std::uint8_t> payload_bits;
    payload_bits.reserve(payload.size() * 8);
    for (std::uint8_t byte : payload)
        for (int i = 7; i >= 0; --i) payload_bits.push_back((byte >> i) & 1);

    std::vector<Frame> frames;
    frames.reserve((16 + k - 1) / k + (payload_bits.size() + k - 1) / k);
    detail::chunk_bits(header_bits, k, frames);
    detail::chunk_bits(payload_bits, k, frames);
    return frames;
}

inline std::vector<std::uint8_t> frames_to_payload(const std::vector<Frame>& frames) {
    if (frames.empty())
        throw std::runtime_error("frames_to_payload: malformed header (no frames)");
    const std::size_t k = frames[0].bits.size();
    if (k == 0) throw std::runtime_error("frames_to_payload: malformed header");
    for (const Frame& f : frames)
        if (f.bits.size() != k)
            throw std::runtime_error("frames_to_payload: inconsistent frame widths");

    const std::size_t header_frames = (16 + k - 1) / k;
    if (frames.size() < header_frames)
        throw std::runtime_error("frames_to_payload: malformed header (truncated)");

    std::uint16_t count = 0;
    for (std::size_t i = 0; i < 16; ++i)
        count = static_cast<std::uint16_t>((count << 1) | frames[i / k].bits[i % k]);

    const std::size_t payload_bits = static_cast<std::size_t>(count) * 8;
    const std::size_t expect_frames = header_frames + (payload_bits + k - 1) / k;
    if (frames.size() != expect_frames)
        throw std::runtime_error("frames_to_payload: malformed header (frame count)");

    std::vector<std::uint8_t> payload(count, 0);
    for (std::size_t b = 0; b < payload_bits; ++b) {
        const std::uint8_t bit = frames[header_frames + b / k].bits[b % k];
        payload[b / 8] = static_cast<std::uint8_t>((payload[b / 8] << 1) | bit);
    }
    return payload;
}

}  // namespace rydfdm
