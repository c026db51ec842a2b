#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace flownp {

// Counter-based random stream (Philox4x32-10, Salmon et al. 2011).
//
// A stream is identified by (seed, stream_id); the draw sequence is a pure
// function of that identity and the draw counter, so replaying a pipeline
// with the same identifiers reproduces every draw bit-exactly on any
// platform. Distinct stream_ids give statistically independent streams.
class RngStream {
public:
    RngStream() : RngStream(0, 0) {}
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed), stream_id_(stream_id) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    /// Child stream with an independent identity. Children of distinct
    /// (stream, child_id) pairs land on distinct stream_ids via a SplitMix64
    /// finalizer, so hierarchical derivation (run -> task -> point) is stable.
    RngStream derive(std::uint64_t child_id) const {
        std::uint64_t mixed = mix64(stream_id_ ^ (0x9E3779B97F4A7C15ULL * (child_id + 1)));
        return RngStream(seed_, mixed);
    }

    std::uint32_t next_u32() {
        if (buf_pos_ == 4) {
            fill_block();
        }
        return buf_[buf_pos_++];
    }

    std::uint64_t next_u64() {
        std::uint64_t hi = next_u32();
        std::uint64_t lo = next_u32();
        return (hi << 32) | lo;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Log-uniform on [lo, hi), lo > 0.
    double log_uniform(double lo, double hi) {
        return std::exp(uniform(std::log(lo), std::log(hi)));
    }

    /// Unbiased integer in [0, bound). bound must be >= 1.
    std::uint64_t uniform_int(std::uint64_t bound) {
        std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) {
                return r % bound;
            }
        }
    }

    /// Inclusive integer range [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    /// Standard normal via Box-Muller; the spare value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0,1] so the log is finite.
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// +1 or -1 with equal probability.
    double rademacher() { return (next_u32() & 1u) ? 1.0 : -1.0; }

private:
    static std::uint64_t mix64(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static void philox_round(std::array<std::uint32_t, 4>& ctr, std::array<std::uint32_t, 2>& key) {
        constexpr std::uint32_t M0 = 0xD2511F53u;
        constexpr std::uint32_t M1 = 0xCD9E8D57u;
        std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
        std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
        std::array<std::uint32_t, 4> out;
        out[0] = static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0];
        out[1] = static_cast<std::uint32_t>(p1);
        out[2] = static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1];
        out[3] = static_cast<std::uint32_t>(p0);
        ctr = out;
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
    }

    void fill_block() {
        std::array<std::uint32_t, 4> ctr = {
            static_cast<std::uint32_t>(counter_),
            static_cast<std::uint32_t>(counter_ >> 32),
            static_cast<std::uint32_t>(stream_id_),
            static_cast<std::uint32_t>(stream_id_ >> 32)};
        std::array<std::uint32_t, 2> key = {
            static_cast<std::uint32_t>(seed_),
            static_cast<std::uint32_t>(seed_ >> 32)};
        for (int i = 0; i < 10; ++i) {
            philox_round(ctr, key);
        }
        buf_ = ctr;
        buf_pos_ = 0;
        ++counter_;
    }

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int buf_pos_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace flownp
