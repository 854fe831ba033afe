#include "sopabn/rng.hpp"

#include <cmath>

namespace sopabn {

namespace {

// SplitMix64 finalizer: a bijective mixer on 64-bit words.
inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

} // namespace

RngStream::RngStream(std::uint64_t seed)
    : key_(mix64(seed + kGolden)), counter_(0) {}

RngStream RngStream::derive(std::uint64_t label) const {
    // Fold the label into a fresh key.  The counter origin participates so
    // that deriving after consuming values yields a different child than
    // deriving first (we never rely on that, but it removes a foot-gun).
    std::uint64_t k = mix64(key_ ^ mix64(label + kGolden));
    std::uint64_t c = mix64(k + counter_ * kGolden);
    return RngStream(k ^ (c << 1 | 1), 0);
}

std::uint64_t RngStream::next_u64() {
    std::uint64_t v = mix64(key_ ^ (counter_ * kGolden + kGolden));
    ++counter_;
    return v;
}

double RngStream::next_unit() {
    // 53 random bits centered in their bucket: uniform on (0,1), symmetric,
    // and never exactly 0 or 1.
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
}

double RngStream::next_gaussian() {
    return normal_quantile(next_unit());
}

// Wichura (1988), algorithm AS 241, PPND16: minimax rational approximations
// on three regions.  |error| < 1e-15 relative for p in (0,1).
double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -HUGE_VAL;
        if (p == 1.0) return HUGE_VAL;
        return NAN;
    }
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                     6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                   1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
                 1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
               (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                     3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                   5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
                 4.2313330701600911252e+1) * r + 1.0);
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double v;
    if (r <= 5.0) {
        r -= 1.6;
        v = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
    } else {
        r -= 5.0;
        v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
    }
    return (q < 0.0) ? -v : v;
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.7071067811865475244);
}

} // namespace sopabn
