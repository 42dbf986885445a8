#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gantts/common.hpp"

namespace gantts {

// Counter-based splittable RNG.
//
// Each stream is identified by (seed, stream_id); the n-th draw is a pure
// function of (seed, stream_id, n).  Streams derived via split() are
// statistically independent of the parent and of each other, and the whole
// scheme is reproducible across platforms because it only uses 64-bit
// integer arithmetic.
//
// The mixing function is the splitmix64 finalizer, applied to a combination
// of the three fields.  It is invertible in its argument, so distinct
// (seed, stream, counter) triples never collide within a stream.

inline u64 mix64(u64 x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

class Rng {
public:
    Rng() : Rng(0, 0) {}
    Rng(u64 seed, u64 stream_id)
        : seed_(seed), stream_(stream_id), counter_(0),
          key_(mix64(mix64(seed) ^ mix64(stream_id ^ 0x5851f42d4c957f2dull))) {}

    u64 seed() const { return seed_; }
    u64 stream_id() const { return stream_; }
    u64 counter() const { return counter_; }

    // Raw 64 uniformly distributed bits.
    u64 next_u64() {
        u64 v = mix64(key_ ^ mix64(counter_));
        counter_ += 1;
        return v;
    }

    // Uniform double in [0, 1): 53 mantissa bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n).  Rejection sampling keeps the result exactly
    // uniform; each accepted value consumes at least one counter step.
    u64 next_below(u64 n) {
        check(n > 0, "rng: next_below needs n > 0");
        const u64 limit = ~u64(0) - (~u64(0) % n);  // multiple of n
        for (;;) {
            u64 v = next_u64();
            if (v < limit) return v % n;
        }
    }

    // Standard normal via Box-Muller.  Always consumes exactly two draws and
    // never caches the second deviate, so the counter position after k calls
    // is 2k regardless of call pattern.
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        // Guard the log: map u1 == 0 to the smallest representable draw.
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        return r * std::cos(theta);
    }

    void fill_normal(std::vector<double>& out) {
        for (double& v : out) v = next_normal();
    }

    // Derive a child stream.  The child id mixes the parent stream id with the
    // parent counter position, so successive splits from one parent, and
    // splits from different parents, all land on distinct streams.
    Rng split() {
        u64 child = mix64(stream_ ^ mix64(counter_ ^ 0xda942042e4dd58b5ull));
        counter_ += 1;
        return Rng(seed_, child);
    }

    // Deterministic stream for a named purpose; useful for keying streams by
    // (seed, purpose, step) without threading state through the call graph.
    static Rng for_purpose(u64 seed, const char* purpose, u64 a = 0, u64 b = 0) {
        u64 h = 1469598103934665603ull;  // FNV-1a over the purpose tag
        for (const char* p = purpose; *p; ++p) {
            h ^= static_cast<unsigned char>(*p);
            h *= 1099511628211ull;
        }
        u64 stream = mix64(h ^ mix64(a ^ 0x9e3779b97f4a7c15ull) ^ mix64(b ^ 0xc2b2ae3d27d4eb4full));
        return Rng(seed, stream);
    }

private:
    u64 seed_;
    u64 stream_;
    u64 counter_;
    u64 key_;
};

}  // namespace gantts
