// Random number generator tests: determinism, stream independence, and
// distribution sanity for the xoshiro256++ generator and its helpers.
//
// The statistical checks use wide tolerances (many standard errors) so they
// are deterministic in practice for any reasonable generator; they are meant
// to catch gross defects (stuck bits, wrong scaling), not to certify
// randomness quality.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <catch_amalgamated.hpp>

#include "rydfdm/rng.hpp"

using rydfdm::Rng;

TEST_CASE("identical seeds reproduce the identical stream") {
    Rng a(12345), b(12345);
    for (int i = 0; i < 64; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds give different streams") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += (a.next_u64() == b.next_u64());
    REQUIRE(same == 0);
}

TEST_CASE("child streams are deterministic and distinct") {
    Rng root(99);
    Rng c0 = root.child(0);
    Rng c0_again = Rng(99).child(0);
    Rng c1 = root.child(1);
    REQUIRE(c0.next_u64() == c0_again.next_u64());

    // Neither equal to each other nor to the parent stream.
    Rng parent(99);
    int same01 = 0, same0p = 0;
    Rng c0b = Rng(99).child(0), c1b = Rng(99).child(1);
    for (int i = 0; i < 64; ++i) {
        const std::uint64_t x0 = c0b.next_u64();
        const std::uint64_t x1 = c1b.next_u64();
        same01 += (x0 == x1);
        same0p += (x0 == parent.next_u64());
    }
    REQUIRE(same01 == 0);
    REQUIRE(same0p == 0);
}

TEST_CASE("uniform() stays in [0,1) with the expected moments") {
    Rng rng(7);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
        sumsq += u * u;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    // Standard error of the mean is 1/sqrt(12 n) ~ 6.5e-4; allow ~8 sigma.
    REQUIRE(std::abs(mean - 0.5) < 5e-3);
    REQUIRE(std::abs(var - 1.0 / 12.0) < 5e-3);
}

TEST_CASE("uniform(lo, hi) respects its bounds") {
    Rng rng(21);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform(-3.0, 5.0);
        REQUIRE(u >= -3.0);
        REQUIRE(u < 5.0);
    }
}

TEST_CASE("normal() has mean 0, variance 1, and uses both tails") {
    Rng rng(13);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    int above = 0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sumsq += x * x;
        above += (x > 0.0);
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    REQUIRE(std::abs(mean) < 0.02);
    REQUIRE(std::abs(var - 1.0) < 0.03);
    REQUIRE(std::abs(above / static_cast<double>(n) - 0.5) < 0.01);
}

TEST_CASE("normal(mean, stddev) rescales correctly") {
    Rng rng(17);
    const int n = 100000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal(5.0, 0.25);
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    REQUIRE(std::abs(mean - 5.0) < 0.01);
    REQUIRE(std::abs(std::sqrt(var) - 0.25) < 0.01);
}

TEST_CASE("below(n) is bounded and roughly uniform") {
    Rng rng(31);
    std::vector<int> counts(8, 0);
    const int n = 80000;
    for (int i = 0; i < n; ++i) {
        const std::uint64_t v = rng.below(8);
        REQUIRE(v < 8);
        ++counts[static_cast<std::size_t>(v)];
    }
    for (int c : counts) {
        // Expected 10000 per bucket, sigma ~ 94; allow ~8 sigma.
        REQUIRE(std::abs(c - n / 8) < 800);
    }
}

TEST_CASE("shuffle permutes without loss and is seed-deterministic") {
    std::vector<int> v(100);
    std::iota(v.begin(), v.end(), 0);
    std::vector<int> w = v;

    Rng r1(5), r2(5);
    rydfdm::shuffle(v, r1);
    rydfdm::shuffle(w, r2);
    REQUIRE(v == w);  // same seed, same permutation

    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expect(100);
    std::iota(expect.begin(), expect.end(), 0);
    REQUIRE(sorted == expect);  // a permutation, nothing lost

    // A fresh seed should (overwhelmingly) give a different order.
    std::vector<int> z(100);
    std::iota(z.begin(), z.end(), 0);
    Rng r3(6);
    rydfdm::shuffle(z, r3);
    REQUIRE(z != v);
}
