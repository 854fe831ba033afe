#pragma once

#include <cstdint>

namespace sopabn {

// Counter-based pseudo-random stream.  A stream is fully determined by a
// 64-bit key and a 64-bit counter; `derive(label)` produces a statistically
// independent child stream without consuming state from the parent.  That
// property is what makes the estimators reproducible under caching and
// thread-parallel execution: every logical random object (a parameter draw,
// a permutation, the noise for one subset evaluation) owns a stream derived
// from a fixed label path, so the values it sees never depend on evaluation
// order.
//
// The output function is the SplitMix64 finalizer applied to
// key-xor-counter mixes; it passes standard statistical batteries and is
// cheap enough to re-key per label.
class RngStream {
public:
    RngStream() : key_(0x9e3779b97f4a7c15ull), counter_(0) {}
    explicit RngStream(std::uint64_t seed);

    // Child stream for an independent purpose.  Derivation is injective in
    // (parent key, parent counter-origin, label) for distinct label paths
    // used by this codebase.
    RngStream derive(std::uint64_t label) const;

    std::uint64_t next_u64();

    // Uniform on the open interval (0,1): ((u >> 11) + 0.5) * 2^-53.
    // Never returns 0 or 1, so inverse-CDF transforms are always finite.
    double next_unit();

    // Standard normal via the inverse CDF (see normal_quantile below).
    double next_gaussian();

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

private:
    RngStream(std::uint64_t key, std::uint64_t counter)
        : key_(key), counter_(counter) {}

    std::uint64_t key_;
    std::uint64_t counter_;
};

// Inverse of the standard normal CDF (quantile function), accurate to about
// 1e-15 relative over (0,1); Wichura's PPND16 rational approximations.
double normal_quantile(double p);

// Standard normal CDF computed as 0.5*erfc(-x/sqrt(2)).
double normal_cdf(double x);

// Upper critical value z such that P(Z > z) = tail for a standard normal.
inline double normal_upper_critical(double tail) {
    return -normal_quantile(tail);
}

} // namespace sopabn
