#pragma once

// Multifrequency microwave drive and its slowly varying Rabi envelope.
//
// A field is a set of tones ("bins") near a common carrier.  Each bin has a
// frequency offset from the carrier, a Rabi amplitude, and a phase; one bin
// is the reference whose phase anchors the others.  The atoms respond to the
// total field through its envelope
//
//     omega(t) = sqrt(E1^2 + E2^2),
//     E1 = sum_i A_i sin(w_i t + phi_i),   E2 = sum_i A_i cos(w_i t + phi_i),
//
// which beats at the pairwise offset differences.  When the reference bin
// dominates, the envelope linearizes to
//
//     omega(t) ~ A_ref + sum_{i != ref} A_i cos[(w_ref - w_i) t
//                                              + (phi_ref - phi_i)].
//
// All frequencies and amplitudes are angular (rad/s); phases are radians.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace rydfdm {

/// Conversion factor between cyclic frequency (Hz) and angular (rad/s).
inline constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Bin {
    double offset = 0.0;     // rad/s relative to the carrier
    double amplitude = 0.0;  // rad/s Rabi amplitude
    double phase = 0.0;      // radians
};

class MWField {
  public:
    MWField(std::vector<Bin> bins, std::size_t reference_index,
            double carrier_hz = 17.62e9)
        : bins_(std::move(bins)),
          reference_index_(reference_index),
          carrier_hz_(carrier_hz) {
        if (bins_.size() < 2)
            throw std::invalid_argument("MWField: need at least 2 bins");
        if (reference_index_ >= bins_.size())
            throw std::invalid_argument("MWField: reference index out of range");
        for (std::size_t i = 0; i < bins_.size(); ++i) {
            if (!(bins_[i].amplitude > 0.0))
                throw std::invalid_argument("MWField: amplitudes must be positive");
            for (std::size_t j = i + 1; j < bins_.size(); ++j)
                if (bins_[i].offset == bins_[j].offset)
                    throw std::invalid_argument("MWField: duplicate bin offsets");
        }
        if (bins_[reference_index_].phase != 0.0)
            throw std::invalid_argument("MWField: reference bin phase must be 0");
    }

    const std::vector<Bin>& bins() const { return bins_; }
    std::size_t reference_index() const { return reference_index_; }
    const Bin& reference() const { return bins_[reference_index_]; }
    double carrier_hz() const { return carrier_hz_; }

    /// Copy with one bin's phase replaced (reference must stay 0).
    MWField with_phase(std::size_t i, double phase) const {
        std::vector<Bin> b = bins_;
        b.at(i).phase = phase;
        return MWField(std::move(b), reference_index_, carrier_hz_);
    }

  private:
    std::vector<Bin> bins_;
    std::size_t reference_index_;
    double carrier_hz_;
};

/// Exact envelope sqrt(E1^2 + E2^2) at time t.
inline double rabi_envelope(const MWField& field, double t) {
    double e1 = 0.0, e2 = 0.0;
    for (const Bin& b : field.bins()) {
        const double arg = b.offset * t + b.phase;
        e1 += b.amplitude * std::sin(arg);
        e2 += b.amplitude * std::cos(arg);
    }
    return std::sqrt(e1 * e1 + e2 * e2);
}

/// First-order envelope around a dominant reference bin.  Valid only when
/// the reference amplitude strictly exceeds every other amplitude.
inline double envelope_approx(const MWField& field, double t) {
    const Bin& ref = field.reference();
    double out = ref.amplitude;
    for (std::size_t i = 0; i < field.bins().size(); ++i) {
        if (i == field.reference_index()) continue;
        const Bin& b = field.bins()[i];
        if (b.amplitude >= ref.amplitude)
            throw std::invalid_argument(
                "envelope_approx: reference amplitude must dominate");
        out += b.amplitude *
               std::cos((ref.offset - b.offset) * t + (ref.phase - b.phase));
    }
    return out;
}

}  // namespace rydfdm
