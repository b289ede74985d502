// FDM-2PSK codec: bit/phase mapping, bin geometry, rates, and payload
// framing round trips.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <catch_amalgamated.hpp>

#include "rydfdm/codec.hpp"
#include "rydfdm/rng.hpp"

using rydfdm::CodecConfig;
using rydfdm::Frame;
using rydfdm::kTwoPi;
using rydfdm::MWField;
using rydfdm::PhaseLabel;

namespace {
const double kPi = 0.5 * kTwoPi;
}

TEST_CASE("encode maps bits to 0/pi phases with a zero reference") {
    const CodecConfig cfg;  // 4 bins
    const PhaseLabel l = rydfdm::encode_bits(Frame::from_string("101"), cfg);
    REQUIRE(l.bits == std::vector<std::uint8_t>{1, 0, 1, 0});
    const std::vector<double> ph = l.phases();
    REQUIRE_THAT(ph[0], Catch::Matchers::WithinAbs(kPi, 1e-15));
    REQUIRE_THAT(ph[1], Catch::Matchers::WithinAbs(0.0, 1e-15));
    REQUIRE_THAT(ph[2], Catch::Matchers::WithinAbs(kPi, 1e-15));
    REQUIRE_THAT(ph[3], Catch::Matchers::WithinAbs(0.0, 1e-15));
}

TEST_CASE("encode/decode round trip over all 8 frames") {
    const CodecConfig cfg;
    for (int m = 0; m < 8; ++m) {
        Frame f;
        for (int j = 0; j < 3; ++j) f.bits.push_back((m >> j) & 1);
        const PhaseLabel l = rydfdm::encode_bits(f, cfg);
        std::vector<double> raw(l.bits.begin(), l.bits.end());
        REQUIRE(rydfdm::decode_label(raw, 0.5) == f);
    }
}

TEST_CASE("decode thresholds strictly, ties resolve to 0") {
    const Frame f = rydfdm::decode_label({0.9, 0.2, 0.7, 0.1}, 0.5);
    REQUIRE(f == Frame::from_string("101"));
    // Exactly-at-threshold entries decode to 0.
    REQUIRE(rydfdm::decode_label({0.5, 0.5, 0.5, 0.5}, 0.5) ==
            Frame::from_string("000"));
}

TEST_CASE("4-bin layout places offsets at (-3,-1,+1,+3) kHz") {
    CodecConfig cfg;
    cfg.delta_f = 2e3;
    const MWField field =
        rydfdm::field_from_label(rydfdm::encode_bits(Frame::from_string("110"), cfg), cfg);

    REQUIRE(field.bins().size() == 4);
    const double expect[4] = {-3e3, -1e3, 1e3, 3e3};
    for (int j = 0; j < 4; ++j)
        REQUIRE_THAT(field.bins()[j].offset,
                     Catch::Matchers::WithinRel(kTwoPi * expect[j], 1e-12));

    // Reference = highest-frequency bin, amplitude_ratio times the others.
    REQUIRE(field.reference_index() == 3);
    REQUIRE_THAT(field.reference().amplitude,
                 Catch::Matchers::WithinRel(cfg.ref_amplitude, 1e-15));
    for (int j = 0; j < 3; ++j)
        REQUIRE_THAT(field.bins()[j].amplitude,
                     Catch::Matchers::WithinRel(cfg.ref_amplitude / 10.0, 1e-12));

    // Phases follow the bits (1,1,0) -> (pi,pi,0), reference 0.
    REQUIRE_THAT(field.bins()[0].phase, Catch::Matchers::WithinAbs(kPi, 1e-15));
    REQUIRE_THAT(field.bins()[1].phase, Catch::Matchers::WithinAbs(kPi, 1e-15));
    REQUIRE(field.bins()[2].phase == 0.0);
    REQUIRE(field.bins()[3].phase == 0.0);
}

TEST_CASE("offset grid scales with delta_f and stays symmetric") {
    CodecConfig cfg;
    cfg.delta_f = 200e3;
    double sum = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
        sum += rydfdm::bin_offset(j, 4, cfg.delta_f);
    }
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(0.0, 1e-6));
    REQUIRE_THAT(rydfdm::bin_offset(3, 4, cfg.delta_f),
                 Catch::Matchers::WithinRel(kTwoPi * 300e3, 1e-12));
    // Adjacent spacing = delta_f.
    REQUIRE_THAT(rydfdm::bin_offset(2, 4, cfg.delta_f) -
                     rydfdm::bin_offset(1, 4, cfg.delta_f),
                 Catch::Matchers::WithinRel(kTwoPi * 200e3, 1e-12));
}

TEST_CASE("transmission rate follows (n_bins - 1) * delta_f") {
    REQUIRE(rydfdm::transmission_rate(4, 2e3) == 6e3);
    REQUIRE(rydfdm::transmission_rate(20, 2e3) == 38e3);
    REQUIRE(rydfdm::transmission_rate(4, 200e3) == 0.6e6);
    REQUIRE_THROWS_AS(rydfdm::transmission_rate(1, 2e3), std::invalid_argument);
}

TEST_CASE("20-bin codec builds a valid 20-tone field") {
    CodecConfig cfg;
    cfg.n_bins = 20;
    Frame f;
    f.bits.assign(19, 0);
    f.bits[0] = f.bits[2] = 1;
    const MWField field = rydfdm::field_from_frame(f, cfg);
    REQUIRE(field.bins().size() == 20);
    REQUIRE(field.reference_index() == 19);
    REQUIRE(field.bins()[19].offset > field.bins()[18].offset);
}

// ---------------------------------------------------------------------------
// Payload framing.

TEST_CASE("55-byte payload frames to 6 header + 147 message frames at 4 bins") {
    const CodecConfig cfg;  // k = 3
    std::vector<std::uint8_t> payload(55);
    for (std::size_t i = 0; i < payload.size(); ++i)
        payload[i] = static_cast<std::uint8_t>(37 * i + 11);

    const auto frames = rydfdm::payload_to_frames(payload, cfg);
    // 16 header bits -> 6 frames; 440 payload bits -> ceil(440/3) = 147.
    REQUIRE(frames.size() == 6 + 147);
    REQUIRE(rydfdm::frames_to_payload(frames) == payload);
}

TEST_CASE("payload framing round-trips random payloads at several widths") {
    rydfdm::Rng rng(2024);
    for (std::size_t n_bins : {2u, 4u, 9u, 20u}) {
        CodecConfig cfg;
        cfg.n_bins = n_bins;
        for (int rep = 0; rep < 5; ++rep) {
            std::vector<std::uint8_t> payload(rng.below(300));
            for (auto& b : payload) b = static_cast<std::uint8_t>(rng.below(256));
            const auto frames = rydfdm::payload_to_frames(payload, cfg);
            REQUIRE(rydfdm::frames_to_payload(frames) == payload);
        }
    }
}

TEST_CASE("empty payload is header frames only") {
    const CodecConfig cfg;  // k = 3
    const auto frames = rydfdm::payload_to_frames({}, cfg);
    REQUIRE(frames.size() == 6);  // ceil(16/3)
    REQUIRE(rydfdm::frames_to_payload(frames).empty());
}

TEST_CASE("corrupted frame streams raise malformed-header errors") {
    const CodecConfig cfg;
    std::vector<std::uint8_t> payload = {0xAB, 0xCD, 0xEF};
    auto frames = rydfdm::payload_to_frames(payload, cfg);

    auto truncated = frames;
    truncated.pop_back();
    REQUIRE_THROWS_WITH(rydfdm::frames_to_payload(truncated),
                        Catch::Matchers::ContainsSubstring("malformed"));

    auto extended = frames;
    extended.push_back(Frame::from_string("000"));
    REQUIRE_THROWS_WITH(rydfdm::frames_to_payload(extended),
                        Catch::Matchers::ContainsSubstring("malformed"));

    auto ragged = frames;
    ragged[2] = Frame::from_string("01");
    REQUIRE_THROWS_AS(rydfdm::frames_to_payload(ragged), std::runtime_error);

    REQUIRE_THROWS_WITH(rydfdm::frames_to_payload({}),
                        Catch::Matchers::ContainsSubstring("malformed"));
}

TEST_CASE("frame ASCII serialization round-trips") {
    const Frame f = Frame::from_string("0110");
    REQUIRE(f.to_string() == "0110");
    REQUIRE(Frame::from_string(f.to_string()) == f);
    REQUIRE_THROWS_AS(Frame::from_string("01x"), std::invalid_argument);
}

TEST_CASE("labels validate their invariants") {
    PhaseLabel bad_ref;
    bad_ref.bits = {0, 0, 0, 1};  // reference must be 0
    REQUIRE_THROWS_AS(bad_ref.validate(), std::invalid_argument);

    PhaseLabel bad_bit;
    bad_bit.bits = {0, 2, 0, 0};
    REQUIRE_THROWS_AS(bad_bit.validate(), std::invalid_argument);

    const CodecConfig cfg;
    REQUIRE_THROWS_AS(rydfdm::encode_bits(Frame::from_string("10"), cfg),
                      std::invalid_argument);
}
