#include "sopabn/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "sopabn/errors.hpp"
#include "sopabn/numerics.hpp"

namespace sopabn {

GaussianSampler::GaussianSampler(Eigen::VectorXd mean,
                                 const Eigen::MatrixXd& covariance)
    : mean_(std::move(mean)) {
    if (covariance.rows() != mean_.size() || covariance.cols() != mean_.size()) {
        throw ConfigError("Gaussian sampler: covariance shape " +
                          std::to_string(covariance.rows()) + "x" +
                          std::to_string(covariance.cols()) +
                          " does not match mean dimension " +
                          std::to_string(mean_.size()));
    }
    factor_ = psd_sqrt_factor(covariance);
}

Eigen::VectorXd GaussianSampler::sample(RngStream& rng) const {
    Eigen::VectorXd z(mean_.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.next_gaussian();
    return from_normals(z);
}

Eigen::VectorXd GaussianSampler::from_normals(const Eigen::VectorXd& z) const {
    return mean_ + factor_ * z;
}

std::vector<int> permutation_from_uniforms(const double* u, int n) {
    if (n < 2) {
        throw ConfigError("permutation: need at least 2 elements");
    }
    std::vector<int> remaining(n);
    std::iota(remaining.begin(), remaining.end(), 0);
    std::vector<int> perm;
    perm.reserve(n);
    for (int k = 0; k < n - 1; ++k) {
        const int m = n - k;
        int idx = static_cast<int>(u[k] * m);
        if (idx >= m) idx = m - 1; // guard against u == 1 rounding
        if (idx < 0) idx = 0;
        perm.push_back(remaining[idx]);
        remaining.erase(remaining.begin() + idx);
    }
    perm.push_back(remaining.front());
    return perm;
}

std::vector<int> sample_permutation(RngStream& rng, int n) {
    std::vector<double> u(n > 1 ? n - 1 : 0);
    for (double& v : u) v = rng.next_unit();
    return permutation_from_uniforms(u.data(), n);
}

namespace {

std::vector<int> first_primes(int count) {
    std::vector<int> primes;
    primes.reserve(count);
    for (int candidate = 2; static_cast<int>(primes.size()) < count;
         ++candidate) {
        bool is_prime = true;
        for (int p : primes) {
            if (p * p > candidate) break;
            if (candidate % p == 0) {
                is_prime = false;
                break;
            }
        }
        if (is_prime) primes.push_back(candidate);
    }
    return primes;
}

} // namespace

HaltonSequence::HaltonSequence(int dimension, bool scramble,
                               std::uint64_t seed)
    : dimension_(dimension) {
    if (dimension < 1) {
        throw ConfigError("Halton sequence dimension must be positive, got " +
                          std::to_string(dimension));
    }
    bases_ = first_primes(dimension);
    perms_.resize(dimension);
    RngStream root(seed);
    for (int j = 0; j < dimension; ++j) {
        const int b = bases_[j];
        std::vector<int>& perm = perms_[j];
        perm.resize(b);
        std::iota(perm.begin(), perm.end(), 0);
        if (scramble) {
            RngStream stream = root.derive(static_cast<std::uint64_t>(j));
            for (int i = b - 1; i > 0; --i) {
                const int pick =
                    static_cast<int>(stream.next_u64() % (i + 1ull));
                std::swap(perm[i], perm[pick]);
            }
        }
    }
}

double HaltonSequence::coordinate(long long k, int j) const {
    const int base = bases_[j];
    const std::vector<int>& perm = perms_[j];
    // Skip index 0 so the first point is not the origin.
    std::uint64_t index = static_cast<std::uint64_t>(k) + 1;
    double inv = 0.0;
    double denom = 1.0;
    while (index > 0) {
        denom *= base;
        const int digit = static_cast<int>(index % base);
        inv += perm[digit] / denom;
        index /= base;
    }
    // Scrambled images of the trailing zero digits form a geometric series
    // summing to perm[0] / (base - 1) scaled past the consumed digits.
    inv += perm[0] / (base - 1.0) / denom;
    if (inv >= 1.0) inv = std::nextafter(1.0, 0.0);
    if (inv <= 0.0) inv = std::nextafter(0.0, 1.0);
    return inv;
}

void HaltonSequence::point(long long k, std::vector<double>& out) const {
    out.resize(dimension_);
    for (int j = 0; j < dimension_; ++j) out[j] = coordinate(k, j);
}

} // namespace sopabn
