#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

namespace wallcast {

// Counter-based splittable RNG. A stream is (seed, stream id, counter);
// every draw is a pure hash of the triple, so substreams can be handed to
// parallel workers without coordination and replays are bit-identical.
class RngStream {
public:
    RngStream() : RngStream(0, 0) {}
    RngStream(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream), counter_(0) {}

    // Derives an independent stream; does not advance this one.
    RngStream substream(std::uint64_t id) const {
        return RngStream(seed_, mix(stream_ ^ mix(id ^ 0xb5026f5aa96619e9ULL)));
    }

    std::uint64_t next_u64() {
        return mix(seed_ ^ mix(stream_ ^ mix(counter_++)));
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; two uniforms per draw, no cached pair.
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double next_normal(double mean, double sd) {
        return mean + sd * next_normal();
    }

    // Uniform integer in [0, n).
    std::uint64_t next_index(std::uint64_t n) {
        // Rejection-free modulo is biased for huge n; all n used here are tiny.
        return next_u64() % n;
    }

    // Deterministic Fisher-Yates; never use std::shuffle (stdlib-dependent).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_;
};

} // namespace wallcast
